"""Spatial discretization: grids, the nest guidance field, kernel density
estimation, finite-difference gradients, and the nonlocal alignment flux."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import convolve1d

from .errors import GridError
from .kernels import InteractionKernel, surface_area

__all__ = [
    "Grid",
    "NestField",
    "FieldSet",
    "build_nest_field",
    "uniform_nest_field",
    "kde_density",
    "gradient",
    "divergence",
    "alignment_flux",
    "field_to_csv",
    "field_to_binary",
    "field_from_binary",
]


@dataclass(frozen=True)
class Grid:
    """Rectangular cell-centred grid; periodic or outflow boundaries.

    `boundary` applies to both axes unless `boundary_y` overrides it, the
    latter serving quasi-1D slice setups (outflow in x, periodic in y).
    """

    nx: int
    ny: int
    xmin: float = 0.0
    xmax: float = 1.0
    ymin: float = 0.0
    ymax: float = 1.0
    boundary: str = "periodic"
    boundary_y: str | None = None

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise GridError("resolution must be at least 4 cells per axis")
        if self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise GridError("grid extents must be increasing")
        for mode in (self.boundary, self.boundary_y):
            if mode is not None and mode not in ("periodic", "outflow"):
                raise GridError(f"unknown boundary mode '{mode}'")

    def boundary_of(self, axis: int) -> str:
        if axis == 1 and self.boundary_y is not None:
            return self.boundary_y
        return self.boundary

    @property
    def dx(self) -> float:
        return (self.xmax - self.xmin) / self.nx

    @property
    def dy(self) -> float:
        return (self.ymax - self.ymin) / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def xc(self) -> np.ndarray:
        return self.xmin + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def yc(self) -> np.ndarray:
        return self.ymin + (np.arange(self.ny) + 0.5) * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xc, self.yc, indexing="ij")

    def zeros(self) -> np.ndarray:
        return np.zeros((self.nx, self.ny))

    def cell_of(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cell indices of points (n, 2); periodic axes wrap."""
        i = np.floor((points[:, 0] - self.xmin) / self.dx).astype(np.int64)
        j = np.floor((points[:, 1] - self.ymin) / self.dy).astype(np.int64)
        if self.boundary_of(0) == "periodic":
            i %= self.nx
        if self.boundary_of(1) == "periodic":
            j %= self.ny
        return i, j

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map positions into the domain along periodic axes."""
        out = points.copy()
        if self.boundary_of(0) == "periodic":
            out[:, 0] = self.xmin + np.mod(out[:, 0] - self.xmin,
                                           self.xmax - self.xmin)
        if self.boundary_of(1) == "periodic":
            out[:, 1] = self.ymin + np.mod(out[:, 1] - self.ymin,
                                           self.ymax - self.ymin)
        return out


# ----------------------------------------------------------------------------
# nest guidance field
# ----------------------------------------------------------------------------

def _quintic_ramp(t: np.ndarray) -> np.ndarray:
    """C^1 ramp with zero slope at both ends: t^3 (10 - 15 t + 6 t^2)."""
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)


def _nest_magnitude(r: np.ndarray, r_excl: float) -> np.ndarray:
    """Radial magnitude profile: zero on the inner half of the exclusion
    disc (so the discrete divergence vanishes identically on the core),
    C^1 quintic ramp on the outer half, unit beyond."""
    r_core = 0.5 * r_excl
    return _quintic_ramp((r - r_core) / (r_excl - r_core))


@dataclass(frozen=True, eq=False)
class NestField:
    """Unit guidance field b pointing away from the nest.

    Streakers fly along -b; the radial construction is mollified inside the
    exclusion radius (magnitude ramping to zero at the nest, so the discrete
    divergence vanishes at the nest cell by symmetry) and matches the unit
    radial field outside it.  `kind` is "radial" or "uniform"; the uniform
    variant is exactly divergence free and serves flat-guidance scenarios.
    """

    grid: Grid
    kind: str
    x_nest: np.ndarray
    exclusion_radius: float
    bx: np.ndarray
    by: np.ndarray
    direction: np.ndarray | None = None

    def vectors(self) -> np.ndarray:
        return np.stack([self.bx, self.by], axis=-1)

    def at(self, points: np.ndarray) -> np.ndarray:
        """Analytic evaluation at arbitrary positions (n, 2)."""
        points = np.atleast_2d(points)
        if self.kind == "uniform":
            return np.broadcast_to(self.direction, (points.shape[0], 2)).copy()
        rel = points - self.x_nest
        r = np.hypot(rel[:, 0], rel[:, 1])
        safe = np.maximum(r, 1e-300)
        mag = _nest_magnitude(r, self.exclusion_radius)
        return rel / safe[:, None] * mag[:, None]

    def max_divergence_at_core(self, radius: float | None = None) -> float:
        """Largest |div b| over cells within `radius` of the nest."""
        if self.kind == "uniform":
            return 0.0
        radius = 0.25 * self.exclusion_radius if radius is None else radius
        div = divergence(self.bx, self.by, self.grid)
        xg, yg = self.grid.mesh()
        r = np.hypot(xg - self.x_nest[0], yg - self.x_nest[1])
        mask = r <= radius
        if not np.any(mask):
            return 0.0
        return float(np.max(np.abs(div[mask])))


def build_nest_field(grid: Grid, x_nest: Sequence[float],
                     exclusion_radius: float | None = None) -> NestField:
    """Construct the radial guidance field on a grid.

    The default exclusion radius is three cells.  Outflow grids get the
    field projected tangent to the boundary on the outermost cell ring.
    """
    x_nest = np.asarray(x_nest, dtype=float)
    h = max(grid.dx, grid.dy)
    r_excl = 3.0 * h if exclusion_radius is None else float(exclusion_radius)
    if r_excl <= 0.0:
        raise GridError("exclusion radius must be positive")
    if (r_excl >= (grid.xmax - grid.xmin)
            or r_excl >= (grid.ymax - grid.ymin)):
        raise GridError("exclusion radius exceeds the domain size")
    xg, yg = grid.mesh()
    relx = xg - x_nest[0]
    rely = yg - x_nest[1]
    r = np.hypot(relx, rely)
    safe = np.maximum(r, 1e-300)
    mag = _nest_magnitude(r, r_excl)
    bx = relx / safe * mag
    by = rely / safe * mag
    edge = np.zeros_like(bx, dtype=bool)
    if grid.boundary_of(0) == "outflow":
        # tangent to the domain boundary: drop the normal component on the
        # outer cell ring, keeping unit length where a tangent part remains
        bx[0, :] = 0.0
        bx[-1, :] = 0.0
        edge[0, :] = edge[-1, :] = True
    if grid.boundary_of(1) == "outflow":
        by[:, 0] = 0.0
        by[:, -1] = 0.0
        edge[:, 0] = edge[:, -1] = True
    if np.any(edge):
        norm = np.hypot(bx, by)
        fix = edge & (norm > 1e-12)
        bx[fix] /= norm[fix]
        by[fix] /= norm[fix]
    return NestField(grid=grid, kind="radial", x_nest=x_nest,
                     exclusion_radius=r_excl, bx=bx, by=by)


def uniform_nest_field(grid: Grid, direction: Sequence[float]) -> NestField:
    """Constant unit guidance field (nest at infinity along -direction)."""
    d = np.asarray(direction, dtype=float)
    norm = np.hypot(d[0], d[1])
    if norm == 0.0:
        raise GridError("direction must be nonzero")
    d = d / norm
    bx = np.full((grid.nx, grid.ny), d[0])
    by = np.full((grid.nx, grid.ny), d[1])
    far = np.array([-1e12 * d[0], -1e12 * d[1]])
    return NestField(grid=grid, kind="uniform", x_nest=far,
                     exclusion_radius=max(grid.dx, grid.dy),
                     bx=bx, by=by, direction=d)


# ----------------------------------------------------------------------------
# finite differences
# ----------------------------------------------------------------------------

def _centered(f: np.ndarray, h: float, axis: int, boundary: str) -> np.ndarray:
    if boundary == "periodic":
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)
    return np.gradient(f, h, axis=axis)


def gradient(f: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Second-order centred gradient; one-sided at outflow boundaries."""
    if f.shape != (grid.nx, grid.ny):
        raise GridError("field shape does not match the grid")
    gx = _centered(f, grid.dx, 0, grid.boundary_of(0))
    gy = _centered(f, grid.dy, 1, grid.boundary_of(1))
    return gx, gy


def divergence(fx: np.ndarray, fy: np.ndarray, grid: Grid) -> np.ndarray:
    """Centred divergence with the same stencils as `gradient`."""
    return (_centered(fx, grid.dx, 0, grid.boundary_of(0))
            + _centered(fy, grid.dy, 1, grid.boundary_of(1)))


# ----------------------------------------------------------------------------
# kernel density estimation
# ----------------------------------------------------------------------------

def _gaussian_taps(bandwidth: float, h: float) -> np.ndarray:
    reach = int(np.ceil(4.0 * bandwidth / h))
    k = np.arange(-reach, reach + 1)
    taps = np.exp(-0.5 * (k * h / bandwidth) ** 2)
    return taps / np.sum(taps)


def kde_density(positions: np.ndarray, bandwidth: float, grid: Grid) -> np.ndarray:
    """Smooth non-negative density whose integral equals the particle count.

    Particles are binned to cells and smoothed with a discretely normalized
    separable Gaussian (truncated at four bandwidths).  Periodic grids wrap;
    outflow grids apply the per-cell boundary renormalization, so mass is
    exact in both modes.  Particles outside an outflow grid are ignored.
    """
    if bandwidth < 2.0 * min(grid.dx, grid.dy):
        raise GridError(
            f"bandwidth {bandwidth:g} is below the resolution floor "
            f"(2 cells = {2.0 * min(grid.dx, grid.dy):g})")
    rho = grid.zeros()
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.size == 0:
        return rho
    i, j = grid.cell_of(positions)
    keep = np.ones(i.shape, dtype=bool)
    if grid.boundary_of(0) == "outflow":
        keep &= (i >= 0) & (i < grid.nx)
    if grid.boundary_of(1) == "outflow":
        keep &= (j >= 0) & (j < grid.ny)
    i, j = i[keep], j[keep]
    if i.size == 0:
        return rho
    counts = np.bincount(i * grid.ny + j, minlength=grid.nx * grid.ny)
    hist = counts.reshape(grid.nx, grid.ny).astype(float)
    taps_x = _gaussian_taps(bandwidth, grid.dx)
    taps_y = _gaussian_taps(bandwidth, grid.dy)
    # boundary-corrected on outflow axes: divide each deposit by the kernel
    # mass that stays inside the domain before smoothing
    if grid.boundary_of(0) == "outflow":
        sx = convolve1d(np.ones(grid.nx), taps_x, mode="constant")
        hist = hist / sx[:, None]
    if grid.boundary_of(1) == "outflow":
        sy = convolve1d(np.ones(grid.ny), taps_y, mode="constant")
        hist = hist / sy[None, :]
    mode_x = "wrap" if grid.boundary_of(0) == "periodic" else "constant"
    mode_y = "wrap" if grid.boundary_of(1) == "periodic" else "constant"
    sm = convolve1d(hist, taps_x, axis=0, mode=mode_x)
    sm = convolve1d(sm, taps_y, axis=1, mode=mode_y)
    return sm / grid.cell_area


# ----------------------------------------------------------------------------
# macroscopic field bundle and the alignment flux
# ----------------------------------------------------------------------------

@dataclass(eq=False)
class FieldSet:
    """Gridded macroscopic densities and mean directions.

    `w_f` and `w_p` follow the moment convention w = (1/(n|S|)) int theta
    sigma dtheta; the streaker density is concentrated on -b.  `lambda_dir`
    holds the latest alignment direction (unit vectors in homogeneous mode,
    the nu-scaled flux in magnitude-carrying mode).
    """

    grid: Grid
    rho_f: np.ndarray
    rho_p: np.ndarray
    rho_s: np.ndarray
    w_f: np.ndarray
    w_p: np.ndarray
    lambda_dir: np.ndarray | None = None

    @classmethod
    def zeros(cls, grid: Grid) -> "FieldSet":
        return cls(grid=grid, rho_f=grid.zeros(), rho_p=grid.zeros(),
                   rho_s=grid.zeros(),
                   w_f=np.zeros((grid.nx, grid.ny, 2)),
                   w_p=np.zeros((grid.nx, grid.ny, 2)))

    @property
    def rho_ell(self) -> np.ndarray:
        return self.rho_p + self.rho_s

    def total_mean_direction(self, nest: NestField) -> np.ndarray:
        """Population mean direction W summed over species."""
        n = 2
        s = surface_area(n)
        flux = n * s * (self.w_f + self.w_p)
        flux[..., 0] -= self.rho_s * nest.bx
        flux[..., 1] -= self.rho_s * nest.by
        return flux


def _kernel_taps_2d(kernel: InteractionKernel, grid: Grid) -> np.ndarray:
    """Discrete interaction stencil normalized to unit plane integral."""
    rx = int(np.ceil(kernel.cutoff / grid.dx))
    ry = int(np.ceil(kernel.cutoff / grid.dy))
    ox = np.arange(-rx, rx + 1) * grid.dx
    oy = np.arange(-ry, ry + 1) * grid.dy
    r = np.hypot(ox[:, None], oy[None, :])
    taps = kernel.profile(r)
    total = taps.sum() * grid.cell_area
    if total <= 0.0:
        raise GridError("interaction kernel has empty support on this grid")
    return taps / total * grid.cell_area


def _convolve2(fieldv: np.ndarray, taps: np.ndarray, grid: Grid) -> np.ndarray:
    from scipy.ndimage import convolve

    mx = grid.boundary_of(0)
    my = grid.boundary_of(1)
    if mx == my:
        mode = "wrap" if mx == "periodic" else "constant"
        return convolve(fieldv, taps, mode=mode, cval=0.0)
    # mixed boundaries: pad the periodic axis by the stencil reach, convolve
    # with zero fill, then crop
    rx = taps.shape[0] // 2
    ry = taps.shape[1] // 2
    pad = [(rx, rx) if mx == "periodic" else (0, 0),
           (ry, ry) if my == "periodic" else (0, 0)]
    padded = np.pad(fieldv, pad, mode="wrap")
    out = convolve(padded, taps, mode="constant", cval=0.0)
    sx = slice(rx, rx + fieldv.shape[0]) if mx == "periodic" else slice(None)
    sy = slice(ry, ry + fieldv.shape[1]) if my == "periodic" else slice(None)
    return out[sx, sy]


def alignment_flux(fields: FieldSet, kernel: InteractionKernel | None,
                   lam: float, nest: NestField, mode: str = "total",
                   normalized: bool = True, nu: float = 1.0,
                   jtol: float = 1e-14
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Kernel-weighted mean-direction flux J and the alignment field.

    Returns (J, Lambda, fallback) where Lambda = J/|J| in normalized mode
    (zero where |J| <= jtol, flagged in `fallback` so callers can keep the
    incoming heading) or Lambda* = nu J in magnitude-carrying mode.  With
    `kernel=None` the zero-range limit is used: J is the local flux density.
    `mode` is "total" (followers + passive + lam * streakers) or
    "streaker-weighted" (streakers only).
    """
    if lam < 0.0:
        raise ValueError("streaker weight lam must be non-negative")
    grid = fields.grid
    n = 2
    s = surface_area(n)
    if mode == "total":
        u = n * s * (fields.w_f + fields.w_p)
    elif mode == "streaker-weighted":
        u = np.zeros((grid.nx, grid.ny, 2))
    else:
        raise ValueError(f"unknown alignment mode '{mode}'")
    u = u.copy()
    u[..., 0] -= lam * fields.rho_s * nest.bx
    u[..., 1] -= lam * fields.rho_s * nest.by
    if kernel is None:
        j = u
    else:
        taps = _kernel_taps_2d(kernel, grid)
        j = np.stack([_convolve2(u[..., 0], taps, grid),
                      _convolve2(u[..., 1], taps, grid)], axis=-1)
    mag = np.hypot(j[..., 0], j[..., 1])
    fallback = mag <= jtol
    if not normalized:
        return j, nu * j, fallback
    lam_dir = np.zeros_like(j)
    good = ~fallback
    lam_dir[good] = j[good] / mag[good, None]
    return j, lam_dir, fallback


# ----------------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------------

def field_to_csv(path, grid: Grid, fieldv: np.ndarray) -> None:
    """Write (x, y, value) rows for every cell."""
    xg, yg = grid.mesh()
    data = np.column_stack([xg.ravel(), yg.ravel(), fieldv.ravel()])
    np.savetxt(path, data, delimiter=",", header="x,y,value", comments="")


_BIN_HEADER = struct.Struct("<qqdddd")


def field_to_binary(path, grid: Grid, fieldv: np.ndarray) -> None:
    """Dump a field: int64 dims, float64 extents, then row-major float64."""
    with open(path, "wb") as fh:
        fh.write(_BIN_HEADER.pack(grid.nx, grid.ny, grid.xmin, grid.xmax,
                                  grid.ymin, grid.ymax))
        fh.write(np.ascontiguousarray(fieldv, dtype=np.float64).tobytes())


def field_from_binary(path) -> tuple[Grid, np.ndarray]:
    with open(path, "rb") as fh:
        nx, ny, xmin, xmax, ymin, ymax = _BIN_HEADER.unpack(
            fh.read(_BIN_HEADER.size))
        data = np.frombuffer(fh.read(), dtype=np.float64).reshape(nx, ny)
    grid = Grid(nx=nx, ny=ny, xmin=xmin, xmax=xmax, ymin=ymin, ymax=ymax)
    return grid, data.copy()
