"""Angular kernels and the closure coefficients of the macroscopic equations.

Three kernel families drive the model: the turn kernel (persistence of
heading across a reorientation), the alignment distribution (new heading
relative to the local mean direction), and the spatial interaction kernel
that weights neighbours in the alignment flux.  Every macroscopic closure
coefficient is an angular moment of one of these densities and is computed
here by numerical quadrature with doubling refinement; closed forms are used
only as independent oracles in the test suite.

Conventions.  On the unit circle a density of the separation angle s is
normalized as ``int_0^{2pi} k(s) ds = 1``; on the unit sphere as
``2 pi int_0^pi k(s) sin(s) ds = 1``.  Angular means over the sphere are
written ``<f> = (1/|S|) int_S f dtheta``; densities passed to the solvers are
scaled to mean one (``<k_hat> = 1``), which is the form that enters the
kinetic relaxation terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NormalizationError, QuadratureError

__all__ = [
    "surface_area",
    "TurnKernel",
    "AlignmentDistribution",
    "InteractionKernel",
    "AngularGrid",
    "CoefficientSet",
    "HyperbolicCorrections",
    "eigenvalue_nu1",
    "coefficient_z",
    "coefficients_a",
    "coefficients_inhomogeneous",
    "turn_operator_apply",
    "turn_matrix",
    "B0_moments",
    "hyperbolic_corrections",
    "closure_coefficients",
]

_MAX_NODES = 2 ** 16
_NORM_TOL = 1e-10


def surface_area(dimension: int) -> float:
    """Surface area |S| of the unit sphere in 2 or 3 dimensions."""
    if dimension == 2:
        return 2.0 * np.pi
    if dimension == 3:
        return 4.0 * np.pi
    raise ValueError(f"unsupported dimension {dimension}")


# ----------------------------------------------------------------------------
# quadrature helpers
# ----------------------------------------------------------------------------

def _moment_circle(density: Callable[[np.ndarray], np.ndarray],
                   weight: Callable[[np.ndarray], np.ndarray] | None,
                   m: int) -> float:
    """Periodic trapezoid of density(s) * weight(s) over s in [0, 2pi)."""
    s = 2.0 * np.pi * np.arange(m) / m
    vals = density(s)
    if weight is not None:
        vals = vals * weight(s)
    return float(np.sum(vals) * (2.0 * np.pi / m))


def _first_cosine_moment_circle(density: Callable[[np.ndarray], np.ndarray],
                                m: int) -> float:
    """First cosine moment with antipodal nodes paired explicitly.

    Pairing s and s + pi makes the moment of any reflection-symmetric
    density vanish identically in floating point, not just to rounding.
    """
    half = m // 2
    s = 2.0 * np.pi * np.arange(half) / m
    diff = density(s) - density(s + np.pi)
    return float(np.sum(diff * np.cos(s)) * (2.0 * np.pi / m))


@lru_cache(maxsize=32)
def _leggauss(m: int) -> tuple[np.ndarray, np.ndarray]:
    from scipy.special import roots_legendre

    nodes, w = roots_legendre(m)
    return nodes, w


def _moment_sphere(density: Callable[[np.ndarray], np.ndarray],
                   weight: Callable[[np.ndarray], np.ndarray] | None,
                   m: int) -> float:
    """Gauss-Legendre integral of 2pi * density(s) * weight(s) * sin(s) on [0, pi]."""
    nodes, w = _leggauss(m)
    s = 0.5 * np.pi * (nodes + 1.0)
    vals = density(s) * np.sin(s)
    if weight is not None:
        vals = vals * weight(s)
    return float(np.sum(vals * w) * 0.5 * np.pi * 2.0 * np.pi)


def _refine(evaluate: Callable[[int], float], tol: float,
            m0: int = 64, max_m: int = _MAX_NODES, what: str = "moment") -> float:
    """Double the node count until two successive values agree to tol."""
    prev = evaluate(m0)
    m = 2 * m0
    while m <= max_m:
        cur = evaluate(m)
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
        m *= 2
    raise QuadratureError(
        f"{what} did not converge to {tol:g} within {max_m} quadrature nodes")


# Gauss-Legendre node generation is quadratic in the node count, so the
# sphere quadrature refines within a smaller cap than the circle.
_MAX_NODES_SPHERE = 2 ** 12


def _angular_moment(dimension: int,
                    density: Callable[[np.ndarray], np.ndarray],
                    weight: Callable[[np.ndarray], np.ndarray] | None,
                    tol: float, what: str) -> float:
    if dimension == 2:
        if weight is np.cos:
            return _refine(lambda m: _first_cosine_moment_circle(density, m),
                           tol, what=what)
        return _refine(lambda m: _moment_circle(density, weight, m), tol, what=what)
    return _refine(lambda m: _moment_sphere(density, weight, m), tol,
                   max_m=_MAX_NODES_SPHERE, what=what)


# ----------------------------------------------------------------------------
# kernel families
# ----------------------------------------------------------------------------

def _interp_table(angles: np.ndarray, values: np.ndarray, s: np.ndarray) -> np.ndarray:
    # symmetric in the separation angle: fold onto [0, pi]
    folded = np.abs(np.mod(np.asarray(s) + np.pi, 2.0 * np.pi) - np.pi)
    return np.interp(folded, angles, values)


class _AngularDensityBase:
    """Shared machinery of symmetric densities on S^1 or S^2.

    Subclasses provide `_raw(s)`, the unnormalized profile as a function of
    the angle s to the symmetry axis; the normalization constant is fixed by
    quadrature at construction.
    """

    family: str
    concentration: float
    dimension: int

    def _raw(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _compute_norm(self) -> float:
        return _angular_moment(self.dimension, self._raw, None, 1e-13,
                               f"{self.family} normalizer")

    def density_angle(self, s) -> np.ndarray:
        """Density w.r.t. the surface measure at separation angle s."""
        return self._raw(np.asarray(s, dtype=float)) / self._norm

    def normalization_defect(self, m: int = 4096) -> float:
        """|integral - 1| of the density at m quadrature nodes."""
        cached = getattr(self, "_defect", None)
        if cached is not None and cached[0] == m:
            return cached[1]
        if self.dimension == 2:
            total = _moment_circle(self.density_angle, None, m)
        else:
            total = _moment_sphere(self.density_angle, None, m)
        defect = abs(total - 1.0)
        object.__setattr__(self, "_defect", (m, defect))
        return defect


def _check_normalized(kernel, tol: float = 1e-8) -> None:
    defect = kernel.normalization_defect()
    if defect > tol:
        raise NormalizationError(
            f"{kernel.family} kernel is not normalized: defect {defect:.3e}")


@dataclass(frozen=True, eq=False)
class TurnKernel(_AngularDensityBase):
    """Reorientation kernel k(|eta - theta|): density of the turn angle.

    Families: "uniform", "von-mises" (exp(kappa cos s) renormalized, with the
    sphere analogue for dimension 3), and "tabulated" (values on [0, pi],
    interpolated linearly and folded symmetrically).
    """

    family: str = "uniform"
    concentration: float = 0.0
    dimension: int = 2
    table: tuple | None = None
    renormalize: bool = True

    def __post_init__(self):
        if self.family not in ("uniform", "von-mises", "tabulated"):
            raise ValueError(f"unknown turn kernel family '{self.family}'")
        if self.concentration < 0.0:
            raise ValueError("concentration must be non-negative")
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.family == "tabulated":
            if self.table is None:
                raise ValueError("tabulated kernel requires a table")
            angles = np.asarray(self.table[0], dtype=float)
            values = np.asarray(self.table[1], dtype=float)
            if angles.ndim != 1 or angles.shape != values.shape or angles.size < 4:
                raise ValueError("table must be two matching 1-d arrays, >= 4 nodes")
            if np.any(values < 0.0):
                raise ValueError("tabulated kernel density must be non-negative")
            object.__setattr__(self, "table", (angles, values))
        norm = self._compute_norm() if self.renormalize else 1.0
        object.__setattr__(self, "_norm", norm)

    def _raw(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "uniform":
            return np.ones_like(s)
        if self.family == "von-mises":
            # exp(kappa (cos s - 1)) avoids overflow at large concentration
            return np.exp(self.concentration * (np.cos(s) - 1.0))
        return _interp_table(self.table[0], self.table[1], s)


@dataclass(frozen=True, eq=False)
class AlignmentDistribution(_AngularDensityBase):
    """Distribution of the aligned heading as a function of Lambda . eta.

    Families: "uniform", "von-mises", "delta" (perfect alignment; has moments
    and a sampler but no pointwise density), and "tabulated".
    """

    family: str = "von-mises"
    concentration: float = 0.0
    dimension: int = 2
    table: tuple | None = None

    def __post_init__(self):
        if self.family not in ("uniform", "von-mises", "delta", "tabulated"):
            raise ValueError(f"unknown alignment family '{self.family}'")
        if self.concentration < 0.0:
            raise ValueError("concentration must be non-negative")
        if self.dimension not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.family == "tabulated":
            if self.table is None:
                raise ValueError("tabulated alignment requires a table")
            angles = np.asarray(self.table[0], dtype=float)
            values = np.asarray(self.table[1], dtype=float)
            if angles.ndim != 1 or angles.shape != values.shape or angles.size < 4:
                raise ValueError("table must be two matching 1-d arrays, >= 4 nodes")
            if np.any(values < 0.0):
                raise ValueError("tabulated alignment density must be non-negative")
            object.__setattr__(self, "table", (angles, values))
        if self.family == "delta":
            object.__setattr__(self, "_norm", 1.0)
        else:
            object.__setattr__(self, "_norm", self._compute_norm())

    @property
    def is_delta(self) -> bool:
        return self.family == "delta"

    def _raw_of_arg(self, u) -> np.ndarray:
        """Unnormalized profile as a function of the raw scalar argument.

        The magnitude-carrying flux mode feeds arguments |Lambda*| cos(s)
        outside [-1, 1]; the analytic families extend naturally, tabulated
        profiles clamp to the table range.
        """
        u = np.asarray(u, dtype=float)
        if self.family == "uniform":
            return np.ones_like(u)
        if self.family == "von-mises":
            return np.exp(self.concentration * (u - 1.0))
        if self.family == "delta":
            raise ValueError("delta alignment has no pointwise density")
        folded = np.arccos(np.clip(u, -1.0, 1.0))
        return _interp_table(self.table[0], self.table[1], folded)

    def _raw(self, s):
        return self._raw_of_arg(np.cos(np.asarray(s, dtype=float)))

    def density_of_arg(self, u) -> np.ndarray:
        """Normalized density evaluated at the raw argument u = Lambda . eta."""
        return self._raw_of_arg(u) / self._norm

    def normalization_defect(self, m: int = 4096) -> float:
        if self.is_delta:
            return 0.0
        return super().normalization_defect(m)


@dataclass(frozen=True)
class InteractionKernel:
    """Radial spatial kernel K(|y - x|) weighting neighbours in the flux.

    Families: "top-hat" (uniform on a disc of the given radius) and
    "gaussian" (scale = radius, truncated at `cutoff`), plus "tabulated"
    radial profiles.  Profiles are normalized to unit plane integral so the
    zero-range limit of the alignment flux is the local flux density.
    """

    family: str = "top-hat"
    radius: float = 1.0
    cutoff: float = 0.0
    table: tuple | None = None

    def __post_init__(self):
        if self.family not in ("top-hat", "gaussian", "tabulated"):
            raise ValueError(f"unknown interaction kernel family '{self.family}'")
        if self.radius <= 0.0:
            raise ValueError("interaction radius/scale must be positive")
        if self.cutoff <= 0.0:
            default = self.radius if self.family == "top-hat" else 4.0 * self.radius
            object.__setattr__(self, "cutoff", default)
        if self.family == "tabulated":
            if self.table is None:
                raise ValueError("tabulated interaction kernel requires a table")
            r = np.asarray(self.table[0], dtype=float)
            v = np.asarray(self.table[1], dtype=float)
            if np.any(v < 0.0):
                raise ValueError("interaction kernel must be non-negative")
            object.__setattr__(self, "table", (r, v))

    def profile(self, r) -> np.ndarray:
        """Unnormalized radial profile at distance r (zero beyond cutoff)."""
        r = np.asarray(r, dtype=float)
        if self.family == "top-hat":
            return np.where(r <= self.radius, 1.0, 0.0)
        if self.family == "gaussian":
            vals = np.exp(-0.5 * (r / self.radius) ** 2)
            return np.where(r <= self.cutoff, vals, 0.0)
        vals = np.interp(r, self.table[0], self.table[1], right=0.0)
        return np.where(r <= self.cutoff, vals, 0.0)


# ----------------------------------------------------------------------------
# discrete angular grid and the turn operator
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AngularGrid:
    """Uniform discrete-ordinates grid on the unit circle."""

    m: int = 16

    def __post_init__(self):
        if self.m < 4:
            raise ValueError("angular grid needs at least 4 directions")
        thetas = 2.0 * np.pi * np.arange(self.m) / self.m
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "ex", np.cos(thetas))
        object.__setattr__(self, "ey", np.sin(thetas))

    @property
    def weight(self) -> float:
        return 2.0 * np.pi / self.m

    def mean(self, f: np.ndarray, axis: int = -1) -> np.ndarray:
        """Angular mean <f> = (1/|S|) int f dtheta."""
        return np.mean(f, axis=axis)


def turn_matrix(kernel: TurnKernel, grid: AngularGrid) -> np.ndarray:
    """Discrete turn operator: (T f)_i = w * sum_j M_ij f_j.

    The circulant matrix is renormalized on the grid so the discrete
    operator preserves the angular mass exactly, independent of m.
    """
    if kernel.dimension != 2:
        raise ValueError("the discrete turn operator lives on the circle")
    _check_normalized(kernel)
    col = kernel.density_angle(grid.thetas)
    total = float(np.sum(col)) * grid.weight
    col = col / total
    idx = (np.arange(grid.m)[:, None] - np.arange(grid.m)[None, :]) % grid.m
    return col[idx]


def turn_operator_apply(kernel: TurnKernel, f: np.ndarray,
                        grid: AngularGrid) -> np.ndarray:
    """Apply the turn operator to a tabulated angular function.

    `f` may carry leading axes (e.g. space); the angular axis is last and
    must match the grid.  The discrete operator preserves sum(f) exactly.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != grid.m:
        raise ValueError(
            f"angular grid mismatch: f has {f.shape[-1]} nodes, grid has {grid.m}")
    mat = turn_matrix(kernel, grid)
    return grid.weight * (f @ mat.T)


# ----------------------------------------------------------------------------
# closure coefficients
# ----------------------------------------------------------------------------

def eigenvalue_nu1(kernel: TurnKernel, tol: float = _NORM_TOL) -> float:
    """Second eigenvalue of the turn operator: the first cosine moment of k.

    Measures directional persistence; strictly below one for every
    normalized non-degenerate kernel.
    """
    _check_normalized(kernel)
    return _angular_moment(kernel.dimension, kernel.density_angle, np.cos,
                           tol, "nu1")


def coefficient_z(phi: AlignmentDistribution, tol: float = _NORM_TOL) -> float:
    """First cosine moment of the alignment distribution about its axis."""
    if phi.is_delta:
        return 1.0
    _check_normalized(phi)
    return _angular_moment(phi.dimension, phi.density_angle, np.cos, tol, "z")


def coefficients_a(phi: AlignmentDistribution, tol: float = _NORM_TOL,
                   n3_a1_weight: str = "sin3") -> tuple[float, float, float]:
    """Axis/transverse second moments (a0, a1) and their difference a3.

    For dimension 3 the transverse moment uses the sin^3 weight consistent
    with the surface element; `n3_a1_weight="sin4"` switches to the literal
    sin^4 variant for comparison.
    """
    if phi.is_delta:
        return 1.0, 0.0, 1.0
    _check_normalized(phi)
    if phi.dimension == 2:
        a0 = _angular_moment(2, phi.density_angle, lambda s: np.cos(s) ** 2,
                             tol, "a0")
        a1 = _angular_moment(2, phi.density_angle, lambda s: np.sin(s) ** 2,
                             tol, "a1")
    else:
        a0 = _angular_moment(3, phi.density_angle, lambda s: np.cos(s) ** 2,
                             tol, "a0")
        # _moment_sphere supplies 2pi * sin(s); the transverse moment carries
        # a total weight of pi * sin^3 (or the sin^4 variant)
        if n3_a1_weight == "sin3":
            extra = lambda s: 0.5 * np.sin(s) ** 2
        elif n3_a1_weight == "sin4":
            extra = lambda s: 0.5 * np.sin(s) ** 3
        else:
            raise ValueError("n3_a1_weight must be 'sin3' or 'sin4'")
        a1 = _angular_moment(3, phi.density_angle, extra, tol, "a1")
    return a0, a1, a0 - a1


def _renormalized_moments(phi: AlignmentDistribution, ell: float,
                          tol: float) -> tuple[float, float, float]:
    """Moments of phi(ell cos s) renormalized to unit circle integral."""

    def raw(s):
        return phi.density_of_arg(ell * np.cos(s))

    norm = _refine(lambda m: _moment_circle(raw, None, m), tol,
                   what="renormalizer")

    def bar(s):
        return raw(s) / norm

    c1 = _refine(lambda m: _moment_circle(bar, np.cos, m), tol, what="zbar")
    c2 = _refine(lambda m: _moment_circle(bar, lambda s: np.cos(s) ** 2, m),
                 tol, what="a0bar")
    return c1, c2, 1.0 - c2


def coefficients_inhomogeneous(phi: AlignmentDistribution, lambda_norm: float,
                               tol: float = _NORM_TOL
                               ) -> tuple[float, float, float, float]:
    """Magnitude-dependent coefficients (zbar, a0bar, a1bar, a3bar).

    The alignment distribution is renormalized at the local flux magnitude
    and its moments carry the |Lambda*| prefactors of the magnitude-carrying
    closure: zbar = |Lambda*| * <cos>, a0bar/a1bar = |Lambda*|^2 * <cos^2>/<sin^2>.
    Restricted to the planar case.
    """
    if phi.dimension != 2:
        raise ValueError("inhomogeneous coefficients are defined for dimension 2")
    if lambda_norm < 0.0:
        raise ValueError("lambda_norm must be non-negative")
    ell = float(lambda_norm)
    if phi.is_delta:
        return ell, ell * ell, 0.0, ell * ell
    _check_normalized(phi)
    if ell == 0.0:
        return 0.0, 0.0, 0.0, 0.0
    c1, c2, s2 = _renormalized_moments(phi, ell, tol)
    zbar = ell * c1
    a0bar = ell * ell * c2
    a1bar = ell * ell * s2
    return zbar, a0bar, a1bar, a0bar - a1bar


class InhomogeneousTable:
    """Dense tabulation of the |Lambda*|-dependent coefficients.

    Evaluating the renormalized quadrature per cell per step is wasteful;
    the coefficients are smooth in the flux magnitude, so a cached table
    with linear interpolation serves the field-level steppers.
    """

    def __init__(self, phi: AlignmentDistribution, ell_max: float = 4.0,
                 nodes: int = 257, tol: float = 1e-9):
        if phi.dimension != 2:
            raise ValueError("inhomogeneous coefficients are defined for dimension 2")
        if not phi.is_delta:
            _check_normalized(phi)
        self.phi = phi
        self.ell_max = float(ell_max)
        self._ell = np.linspace(0.0, self.ell_max, nodes)
        if phi.is_delta:
            self._z = self._ell.copy()
            self._a0 = self._ell ** 2
            self._a1 = np.zeros_like(self._ell)
            return
        z, a0 = self._moment_rows(512)
        m = 1024
        while m <= _MAX_NODES:
            z2, a02 = self._moment_rows(m)
            if (np.max(np.abs(z2 - z)) <= tol
                    and np.max(np.abs(a02 - a0)) <= tol):
                z, a0 = z2, a02
                break
            z, a0 = z2, a02
            m *= 2
        else:
            raise QuadratureError("inhomogeneous table did not converge")
        self._z = self._ell * z
        self._a0 = self._ell ** 2 * a0
        self._a1 = self._ell ** 2 * (1.0 - a0)

    def _moment_rows(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Renormalized <cos> and <cos^2> for every tabulated magnitude."""
        s = 2.0 * np.pi * np.arange(m) / m
        vals = self.phi.density_of_arg(self._ell[1:, None] * np.cos(s)[None, :])
        norm = np.sum(vals, axis=1)
        c1 = np.sum(vals * np.cos(s), axis=1) / norm
        c2 = np.sum(vals * np.cos(s) ** 2, axis=1) / norm
        return (np.concatenate(([0.0], c1)),
                np.concatenate(([0.5], c2)))

    def _extend(self, ell: np.ndarray) -> None:
        top = float(np.max(ell))
        if top > self.ell_max:
            fresh = InhomogeneousTable(self.phi, ell_max=2.0 * top,
                                       nodes=self._ell.size)
            self.__dict__.update(fresh.__dict__)

    def zbar(self, ell) -> np.ndarray:
        ell = np.asarray(ell, dtype=float)
        self._extend(ell)
        return np.interp(ell, self._ell, self._z)

    def abar(self, ell) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ell = np.asarray(ell, dtype=float)
        self._extend(ell)
        a0 = np.interp(ell, self._ell, self._a0)
        a1 = np.interp(ell, self._ell, self._a1)
        return a0, a1, a0 - a1


def B0_moments(b0: AlignmentDistribution | TurnKernel, c_p: float, beta: float,
               axis: Sequence[float] = (1.0, 0.0)
               ) -> tuple[np.ndarray, np.ndarray]:
    """First and second angular moments of the passive-leader base kernel.

    Returns the mean heading ``<theta B_hat>`` (a vector along `axis` with
    magnitude at most one) and the diffusion tensor
    ``D = (c_p / beta) <theta theta^T B_hat>`` where B_hat is the mean-one
    density; for the uniform kernel D = c_p/(2 beta) * Id.
    """
    if getattr(b0, "dimension", 2) != 2:
        raise ValueError("passive-leader moments are evaluated on the circle")
    _check_normalized(b0)
    axis = np.asarray(axis, dtype=float)
    norm = np.hypot(axis[0], axis[1])
    if norm == 0.0:
        raise ValueError("axis must be a nonzero vector")
    axis = axis / norm
    mean_mag = _angular_moment(2, b0.density_angle, np.cos, _NORM_TOL, "B0 mean")
    m_par = _angular_moment(2, b0.density_angle, lambda s: np.cos(s) ** 2,
                            _NORM_TOL, "B0 second moment")
    mean = mean_mag * axis
    # second moment diagonal in the (axis, axis_perp) frame
    perp = np.array([-axis[1], axis[0]])
    second = m_par * np.outer(axis, axis) + (1.0 - m_par) * np.outer(perp, perp)
    d_tensor = (c_p / beta) * second
    return mean, d_tensor


@dataclass(frozen=True)
class HyperbolicCorrections:
    """Order-epsilon correction coefficients of the passive-leader equation.

    `q1_tensor` is the full first-moment tensor (1/beta) <theta x q1> whose
    trace is `q1_scalar`; `q2` vanishes identically for a spatially
    homogeneous stationary base kernel; `streaker_coeff` multiplies the
    conversion rate times the streaker density, per unit rate.
    """

    q1_scalar: float
    q1_tensor: np.ndarray
    q2: np.ndarray
    streaker_coeff: np.ndarray


def hyperbolic_corrections(b0: AlignmentDistribution | TurnKernel,
                           c_p: float, beta: float,
                           rate_angular_mean: Sequence[float] = (0.0, 0.0),
                           axis: Sequence[float] = (1.0, 0.0),
                           dimension: int = 2) -> HyperbolicCorrections:
    """Correction coefficients for a homogeneous, stationary base kernel.

    With q1 = c_p B_hat (theta - n <theta B_hat>) the scalar coefficient is
    Q1 = (c_p/beta)(1 - n |mean|^2) and the tensor (c_p/beta)(<theta theta^T
    B_hat> - n mean mean^T).  All gradient and time-derivative terms of the
    base kernel vanish, so Q2 = 0.  `rate_angular_mean` is the first moment
    of the mean-one angular factor of the conversion rate.
    """
    mean, d_tensor = B0_moments(b0, c_p, beta, axis=axis)
    second = d_tensor * (beta / c_p)
    n = dimension
    q1_tensor = (c_p / beta) * (second - n * np.outer(mean, mean))
    q1_scalar = float(np.trace(q1_tensor))
    m_r = np.asarray(rate_angular_mean, dtype=float)
    streaker = surface_area(2) * mean - m_r
    return HyperbolicCorrections(
        q1_scalar=q1_scalar,
        q1_tensor=q1_tensor,
        q2=np.zeros(2),
        streaker_coeff=streaker,
    )


# ----------------------------------------------------------------------------
# bundled coefficient set
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Every closure coefficient used by the macroscopic steppers."""

    nu1: float
    z: float
    a0: float
    a1: float
    a3: float
    d_align: float
    c_f_coeff: float
    c1: float
    c2: float
    b0_mean: np.ndarray
    d_tensor: np.ndarray
    corrections: HyperbolicCorrections
    diffusion_convention: str
    inhomogeneous: InhomogeneousTable | None = None
    vj_diffusion: float = 0.0

    def dbar(self, ell, zeta: float, dimension: int = 2) -> np.ndarray:
        """Magnitude-dependent parabolic drift coefficient zbar(1-z)/(n(1-z nu1))."""
        if self.inhomogeneous is None:
            raise ValueError("coefficient set built without inhomogeneous table")
        zbar = self.inhomogeneous.zbar(ell)
        return zbar * (1.0 - zeta) / (dimension * (1.0 - zeta * self.nu1))


def closure_coefficients(turn: TurnKernel, align: AlignmentDistribution,
                         b0: AlignmentDistribution, params,
                         diffusion_convention: str = "final-system",
                         rate_angular_mean: Sequence[float] = (0.0, 0.0),
                         b0_axis: Sequence[float] = (1.0, 0.0),
                         with_inhomogeneous: bool = False) -> CoefficientSet:
    """Evaluate the full coefficient set for one model configuration.

    `diffusion_convention` selects the follower flux coefficient
    C_f = c_f / (beta (1 - zeta nu1)) ("final-system", the default) or the
    kinetic-consistent variant with the extra 1/n ("mean-direction"), which
    matches the diffusion constant of the underlying velocity-jump process.
    """
    if diffusion_convention not in ("final-system", "mean-direction"):
        raise ValueError("diffusion_convention must be 'final-system' or"
                         " 'mean-direction'")
    if params.beta <= 0.0:
        raise ValueError("closure coefficients need a positive stopping rate")
    n = params.dimension
    zeta = params.zeta
    nu1 = eigenvalue_nu1(turn)
    z = coefficient_z(align)
    a0, a1, a3 = coefficients_a(align)
    denom = 1.0 - zeta * nu1
    d_align = z * (1.0 - zeta) / denom
    c_f_coeff = params.c_f / (params.beta * denom)
    if diffusion_convention == "mean-direction":
        c_f_coeff /= n
    c1 = params.c_f * (1.0 - zeta) * a3
    c2 = params.c_f * (1.0 - zeta) * a1 + params.c_f * np.pi * zeta
    b0_mean, d_tensor = B0_moments(b0, params.c_p, params.beta, axis=b0_axis)
    corr = hyperbolic_corrections(b0, params.c_p, params.beta,
                                  rate_angular_mean=rate_angular_mean,
                                  axis=b0_axis, dimension=n)
    table = InhomogeneousTable(align) if with_inhomogeneous else None
    vj = params.c_f ** 2 / (n * params.beta * (1.0 - nu1))
    return CoefficientSet(
        nu1=nu1, z=z, a0=a0, a1=a1, a3=a3,
        d_align=d_align, c_f_coeff=c_f_coeff, c1=c1, c2=c2,
        b0_mean=b0_mean, d_tensor=d_tensor, corrections=corr,
        diffusion_convention=diffusion_convention,
        inhomogeneous=table, vj_diffusion=vj,
    )


def kernel_from_spec(spec: str, dimension: int = 2,
                     kind: str = "turn") -> TurnKernel | AlignmentDistribution:
    """Build a kernel from a "family" or "family:kappa" string."""
    name, _, arg = spec.partition(":")
    name = name.strip().lower()
    kappa = float(arg) if arg else 0.0
    if kind == "turn":
        return TurnKernel(family=name, concentration=kappa, dimension=dimension)
    if kind == "alignment":
        return AlignmentDistribution(family=name, concentration=kappa,
                                     dimension=dimension)
    if kind == "interaction":
        return InteractionKernel(family=name, radius=kappa if kappa > 0 else 1.0)
    raise ValueError(f"unknown kernel kind '{kind}'")
