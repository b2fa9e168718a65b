"""Stochastic agent-based simulation of the microscopic swarm rules.

Followers perform a velocity-jump process whose reorientations mix a
persistence kernel with alignment to the local population flux; passive
leaders reorient from a rearward-biased base distribution tilted by the
follower density gradient; streakers fly ballistically toward the nest and
trade roles with passive leaders at rates localized to the swarm edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import SolverError
from .fields import Grid, NestField, alignment_flux, FieldSet, gradient, kde_density
from .kernels import (
    AlignmentDistribution,
    AngularGrid,
    InteractionKernel,
    TurnKernel,
)
from .params import ModelParams, RateShape

__all__ = [
    "FOLLOWER",
    "PASSIVE",
    "STREAKER",
    "AgentState",
    "Ensemble",
    "SimParams",
    "SwitchRates",
    "MicroFields",
    "build_switch_rates",
    "follower_reorient",
    "passive_reorient",
    "refresh_fields",
    "step",
    "step_rng",
]

FOLLOWER, PASSIVE, STREAKER = 0, 1, 2


class AgentState(NamedTuple):
    """Single-agent view: position, unit heading, species code."""

    position: np.ndarray
    heading: np.ndarray
    species: int


@dataclass
class Ensemble:
    """Vectorized agent storage: positions, heading angles, species codes."""

    x: np.ndarray          # (n, 2) float64
    alpha: np.ndarray      # (n,) heading angle; unused while streaking
    species: np.ndarray    # (n,) int8

    def __post_init__(self):
        n = self.x.shape[0]
        if self.alpha.shape != (n,) or self.species.shape != (n,):
            raise ValueError("ensemble arrays must share their leading size")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def headings(self) -> np.ndarray:
        return np.column_stack([np.cos(self.alpha), np.sin(self.alpha)])

    def counts(self) -> tuple[int, int, int]:
        return (int(np.sum(self.species == FOLLOWER)),
                int(np.sum(self.species == PASSIVE)),
                int(np.sum(self.species == STREAKER)))

    def agent(self, i: int) -> AgentState:
        return AgentState(self.x[i].copy(),
                          np.array([np.cos(self.alpha[i]),
                                    np.sin(self.alpha[i])]),
                          int(self.species[i]))

    def copy(self) -> "Ensemble":
        return Ensemble(self.x.copy(), self.alpha.copy(), self.species.copy())


@dataclass(frozen=True)
class SimParams:
    """Micro-simulation controls wrapped around the shared model constants."""

    model: ModelParams = field(default_factory=ModelParams)
    rate_shape: RateShape = field(default_factory=RateShape)
    dt: float = 0.05
    seed: int = 0
    tilt_weight: float = 0.0
    kde_bandwidth_cells: float = 3.0
    refresh_stride: int = 1
    kernel_mode: str = "homogeneous"

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.model.beta * self.dt > 0.2:
            raise ValueError(
                f"beta*dt = {self.model.beta * self.dt:g} exceeds the 0.2 "
                "jump-probability accuracy guard")
        if self.refresh_stride < 1:
            raise ValueError("refresh_stride must be >= 1")
        if self.kernel_mode not in ("homogeneous", "inhomogeneous"):
            raise ValueError("kernel_mode must be homogeneous or inhomogeneous")


@dataclass
class SwitchRates:
    """Space-dependent streaker/passive conversion rates.

    `angular` names the re-entry heading factor of a streaker-to-passive
    switch ("uniform" or "von-mises:<kappa>", centred on the rearward axis);
    its first angular moment is exposed for the macroscopic corrections.
    """

    r_sp: np.ndarray
    r_ps: np.ndarray
    angular: str = "uniform"

    def angular_kappa(self) -> float:
        name, _, arg = self.angular.partition(":")
        if name == "uniform":
            return 0.0
        if name == "von-mises":
            return float(arg) if arg else 1.0
        raise ValueError(f"unknown angular rate factor '{self.angular}'")

    def angular_shape(self, agrid: AngularGrid) -> np.ndarray:
        """Mean-one angular factor on the grid, centred on angle zero."""
        kappa = self.angular_kappa()
        if kappa == 0.0:
            return np.ones(agrid.m)
        vals = np.exp(kappa * (np.cos(agrid.thetas) - 1.0))
        return vals / np.mean(vals)

    def angular_mean(self, agrid: AngularGrid | None = None) -> np.ndarray:
        """First moment <theta r_hat> in the frame whose x-axis is +b."""
        agrid = agrid or AngularGrid(m=256)
        shape = self.angular_shape(agrid)
        return np.array([np.mean(shape * agrid.ex), np.mean(shape * agrid.ey)])


def build_switch_rates(rho_f: np.ndarray, nest: NestField, shape: RateShape,
                       r0: float, grid: Grid) -> SwitchRates:
    """Edge-localized conversion rates floored at r0 outside the swarm.

    Inside the swarm (follower density above the threshold fraction of its
    maximum) the streaker-to-passive rate ramps with the front-edge signal
    (grad rho_f . b)+ and the reverse rate with its negative part; outside,
    both rates sit at the minimal conversion rate.
    """
    gx, gy = gradient(rho_f, grid)
    g = gx * nest.bx + gy * nest.by
    peak = float(np.max(rho_f)) if rho_f.size else 0.0
    inside = rho_f >= shape.rho_threshold_frac * peak if peak > 0.0 \
        else np.zeros_like(rho_f, dtype=bool)
    scale = shape.grad_scale
    if scale <= 0.0:
        scale = float(np.max(np.abs(g))) if np.any(inside) else 1.0
        scale = scale if scale > 0.0 else 1.0
    ramp_front = np.clip(g / scale, 0.0, 1.0)
    ramp_rear = np.clip(-g / scale, 0.0, 1.0)
    r_sp = shape.r_peak * ramp_front * inside + r0 * (~inside)
    r_ps = shape.r_peak * ramp_rear * inside + r0 * (~inside)
    return SwitchRates(r_sp=r_sp, r_ps=r_ps, angular=shape.angular)


# ----------------------------------------------------------------------------
# angular sampling
# ----------------------------------------------------------------------------

def _sample_offsets(rng: np.random.Generator, kernel: TurnKernel,
                    size: int) -> np.ndarray:
    """Turn-angle offsets distributed like the kernel, symmetric about 0."""
    if kernel.family == "uniform":
        return rng.uniform(-np.pi, np.pi, size=size)
    if kernel.family == "von-mises":
        return rng.vonmises(0.0, kernel.concentration, size=size)
    # tabulated: inverse CDF on a dense symmetric grid
    s = np.linspace(-np.pi, np.pi, 2049)
    pdf = kernel.density_angle(s)
    cdf = np.cumsum(pdf)
    cdf /= cdf[-1]
    u = rng.random(size)
    return np.interp(u, cdf, s)


def _sample_alignment(rng: np.random.Generator, align: AlignmentDistribution,
                      kappa_scale: np.ndarray | float, size: int) -> np.ndarray:
    """Angular offsets about the flux direction; `kappa_scale` rescales the
    concentration per sample in magnitude-carrying mode."""
    if align.is_delta:
        return np.zeros(size)
    if align.family == "uniform":
        return rng.uniform(-np.pi, np.pi, size=size)
    if align.family == "von-mises":
        kappa = align.concentration * np.asarray(kappa_scale, dtype=float)
        kappa = np.broadcast_to(kappa, (size,))
        return rng.vonmises(np.zeros(size), kappa)
    # tabulated: per-sample inverse CDF with the magnitude folded into the
    # argument of the renormalized density
    s = np.linspace(-np.pi, np.pi, 1025)
    ell = np.broadcast_to(np.asarray(kappa_scale, dtype=float), (size,))
    dens = align.density_of_arg(ell[:, None] * np.cos(s)[None, :])
    cdf = np.cumsum(dens, axis=1)
    u = rng.random(size) * cdf[:, -1]
    idx = np.minimum((cdf < u[:, None]).sum(axis=1), s.size - 1)
    return s[idx]


def follower_reorient(alpha: np.ndarray, lam_vec: np.ndarray,
                      fallback: np.ndarray, turn: TurnKernel,
                      align: AlignmentDistribution, zeta: float,
                      rng: np.random.Generator,
                      kappa_scale: np.ndarray | float = 1.0) -> np.ndarray:
    """New heading angles for reorienting followers.

    With probability zeta the heading turns by a kernel offset from the old
    one; otherwise it aligns to the local flux direction `lam_vec`.  Where
    the flux vanishes (`fallback`), the alignment branch keeps the old
    heading.
    """
    n = alpha.shape[0]
    out = alpha.copy()
    branch_turn = rng.random(n) < zeta
    n_turn = int(np.sum(branch_turn))
    if n_turn:
        out[branch_turn] = alpha[branch_turn] + _sample_offsets(rng, turn, n_turn)
    align_mask = ~branch_turn & ~fallback
    n_align = int(np.sum(align_mask))
    if n_align:
        base = np.arctan2(lam_vec[align_mask, 1], lam_vec[align_mask, 0])
        scale = kappa_scale[align_mask] if np.ndim(kappa_scale) else kappa_scale
        out[align_mask] = base + _sample_alignment(rng, align, scale, n_align)
    return np.mod(out + np.pi, 2.0 * np.pi) - np.pi


def passive_reorient(b_angle: np.ndarray, g_dot_b: np.ndarray,
                     grad: np.ndarray, b0: AlignmentDistribution,
                     tilt_weight: float, agrid: AngularGrid,
                     rng: np.random.Generator) -> np.ndarray:
    """Sample new passive-leader headings from the tilted base mixture.

    The density is the rearward base kernel plus a clipped rank-one tilt
    (b . grad rho_f)(grad rho_f . theta), renormalized per agent; it does
    not depend on the incoming direction.  A vanishing mixture falls back
    to the base kernel alone.
    """
    n = b_angle.shape[0]
    rel = agrid.thetas[None, :] - b_angle[:, None]
    base = b0.density_of_arg(np.cos(rel))
    tilt = tilt_weight * g_dot_b[:, None] * (
        grad[:, 0][:, None] * agrid.ex[None, :]
        + grad[:, 1][:, None] * agrid.ey[None, :])
    dens = np.maximum(base + tilt, 0.0)
    dead = dens.sum(axis=1) <= 0.0
    if np.any(dead):
        dens[dead] = base[dead]
    cdf = np.cumsum(dens, axis=1)
    u = rng.random(n) * cdf[:, -1]
    idx = np.minimum((cdf < u[:, None]).sum(axis=1), agrid.m - 1)
    prev = np.where(idx > 0, np.take_along_axis(cdf, (idx - 1)[:, None],
                                                axis=1)[:, 0], 0.0)
    width = 2.0 * np.pi / agrid.m
    cur = np.take_along_axis(cdf, idx[:, None], axis=1)[:, 0]
    frac = np.where(cur > prev, (u - prev) / np.where(cur > prev, cur - prev, 1.0),
                    0.5)
    angles = agrid.thetas[idx] - 0.5 * width + frac * width
    return np.mod(angles + np.pi, 2.0 * np.pi) - np.pi


# ----------------------------------------------------------------------------
# per-step field snapshot
# ----------------------------------------------------------------------------

@dataclass
class MicroFields:
    """Frozen field snapshot the agents read during one step."""

    grid: Grid
    nest: NestField
    rho_f: np.ndarray
    grad_x: np.ndarray
    grad_y: np.ndarray
    g_dot_b: np.ndarray
    rates: SwitchRates
    lam: np.ndarray           # (nx, ny, 2) direction (or nu J)
    fallback: np.ndarray      # (nx, ny) bool, zero-flux cells
    jmag: np.ndarray          # (nx, ny) |nu J| for magnitude-carrying mode

    def cell_lookup(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        i, j = self.grid.cell_of(points)
        return (np.clip(i, 0, self.grid.nx - 1),
                np.clip(j, 0, self.grid.ny - 1))


def refresh_fields(ens: Ensemble, grid: Grid, nest: NestField,
                   sp: SimParams, interaction: InteractionKernel | None,
                   frozen_rho_f: np.ndarray | None = None) -> MicroFields:
    """Rebuild the density, gradient, rate, and flux fields from agents."""
    model = sp.model
    bandwidth = sp.kde_bandwidth_cells * max(grid.dx, grid.dy)
    if frozen_rho_f is not None:
        rho_f = frozen_rho_f
    else:
        rho_f = kde_density(ens.x[ens.species == FOLLOWER], bandwidth, grid)
    gx, gy = gradient(rho_f, grid)
    g = gx * nest.bx + gy * nest.by
    rates = build_switch_rates(rho_f, nest, sp.rate_shape, model.r0, grid)

    # heading-flux deposition: followers and passive leaders carry their
    # headings, streakers enter as density on -b weighted by visibility
    u = np.zeros((grid.nx, grid.ny, 2))
    moving = ens.species != STREAKER
    if np.any(moving):
        i, j = grid.cell_of(ens.x[moving])
        ok = (i >= 0) & (i < grid.nx) & (j >= 0) & (j < grid.ny)
        flat = i[ok] * grid.ny + j[ok]
        ncell = grid.nx * grid.ny
        ca = np.cos(ens.alpha[moving][ok])
        sa = np.sin(ens.alpha[moving][ok])
        u[..., 0] = np.bincount(flat, weights=ca, minlength=ncell).reshape(
            grid.nx, grid.ny) / grid.cell_area
        u[..., 1] = np.bincount(flat, weights=sa, minlength=ncell).reshape(
            grid.nx, grid.ny) / grid.cell_area
    streak = ens.species == STREAKER
    if np.any(streak):
        i, j = grid.cell_of(ens.x[streak])
        ok = (i >= 0) & (i < grid.nx) & (j >= 0) & (j < grid.ny)
        flat = i[ok] * grid.ny + j[ok]
        ncell = grid.nx * grid.ny
        rho_s = np.bincount(flat, minlength=ncell).reshape(
            grid.nx, grid.ny) / grid.cell_area
    else:
        rho_s = grid.zeros()

    fs = FieldSet(grid=grid, rho_f=grid.zeros(), rho_p=grid.zeros(),
                  rho_s=rho_s, w_f=u / (2.0 * 2.0 * np.pi),
                  w_p=np.zeros_like(u))
    normalized = sp.kernel_mode == "homogeneous"
    j_raw, lam, fallback = alignment_flux(
        fs, interaction, lam=model.lam, nest=nest,
        normalized=normalized, nu=model.nu)
    jmag = np.hypot(lam[..., 0], lam[..., 1]) if not normalized \
        else np.hypot(j_raw[..., 0], j_raw[..., 1])
    return MicroFields(grid=grid, nest=nest, rho_f=rho_f, grad_x=gx,
                       grad_y=gy, g_dot_b=g, rates=rates, lam=lam,
                       fallback=fallback, jmag=jmag)


# ----------------------------------------------------------------------------
# the step
# ----------------------------------------------------------------------------

def step_rng(seed: int, step_index: int) -> np.random.Generator:
    """Counter-based per-step stream: (seed, step) keys a Philox generator."""
    key = np.array([np.uint64(seed), np.uint64(step_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def step(ens: Ensemble, mf: MicroFields, sp: SimParams,
         turn: TurnKernel, align: AlignmentDistribution,
         b0: AlignmentDistribution, agrid: AngularGrid,
         rng: np.random.Generator) -> Ensemble:
    """Advance every agent one time step against a frozen field snapshot.

    Streakers move ballistically along -b; followers and passive leaders
    fire reorientation events with the exact exponential probability and
    then translate; role switches fire last at the post-move positions.
    Follower and leader counts are conserved exactly.
    """
    model = sp.model
    dt = sp.dt
    if model.beta * dt > 0.2:
        raise SolverError("beta*dt guard violated")
    out = ens.copy()
    grid = mf.grid

    followers = ens.species == FOLLOWER
    passives = ens.species == PASSIVE
    streakers = ens.species == STREAKER

    # (i) ballistic streakers
    if np.any(streakers):
        b_here = mf.nest.at(ens.x[streakers])
        out.x[streakers] -= model.c_s * b_here * dt

    p_turn = -np.expm1(-model.beta * dt)

    # (ii) follower reorientation then translation
    idx_f = np.flatnonzero(followers)
    if idx_f.size:
        events = rng.random(idx_f.size) < p_turn
        hot = idx_f[events]
        if hot.size:
            ci, cj = mf.cell_lookup(ens.x[hot])
            lam_vec = mf.lam[ci, cj]
            fallback = mf.fallback[ci, cj]
            scale = mf.jmag[ci, cj] if sp.kernel_mode == "inhomogeneous" else 1.0
            out.alpha[hot] = follower_reorient(
                ens.alpha[hot], lam_vec, fallback, turn, align, model.zeta,
                rng, kappa_scale=scale)
        out.x[idx_f, 0] += model.c_f * np.cos(out.alpha[idx_f]) * dt
        out.x[idx_f, 1] += model.c_f * np.sin(out.alpha[idx_f]) * dt

    # passive reorientation then translation
    idx_p = np.flatnonzero(passives)
    if idx_p.size:
        events = rng.random(idx_p.size) < p_turn
        hot = idx_p[events]
        if hot.size:
            ci, cj = mf.cell_lookup(ens.x[hot])
            b_here = mf.nest.at(ens.x[hot])
            b_angle = np.arctan2(b_here[:, 1], b_here[:, 0])
            grad = np.column_stack([mf.grad_x[ci, cj], mf.grad_y[ci, cj]])
            out.alpha[hot] = passive_reorient(
                b_angle, mf.g_dot_b[ci, cj], grad, b0, sp.tilt_weight,
                agrid, rng)
        out.x[idx_p, 0] += model.c_p * np.cos(out.alpha[idx_p]) * dt
        out.x[idx_p, 1] += model.c_p * np.sin(out.alpha[idx_p]) * dt

    out.x = grid.wrap(out.x)
    if not np.all(np.isfinite(out.x)):
        raise SolverError("non-finite agent position")

    # (iii) role switches at the post-move positions
    idx_s = np.flatnonzero(streakers)
    if idx_s.size:
        ci, cj = mf.cell_lookup(out.x[idx_s])
        p_sw = -np.expm1(-mf.rates.r_sp[ci, cj] * dt)
        fire = rng.random(idx_s.size) < p_sw
        hot = idx_s[fire]
        if hot.size:
            out.species[hot] = PASSIVE
            kappa = mf.rates.angular_kappa()
            b_here = mf.nest.at(out.x[hot])
            b_angle = np.arctan2(b_here[:, 1], b_here[:, 0])
            if kappa == 0.0:
                out.alpha[hot] = rng.uniform(-np.pi, np.pi, size=hot.size)
            else:
                out.alpha[hot] = rng.vonmises(b_angle, kappa)
    if idx_p.size:
        ci, cj = mf.cell_lookup(out.x[idx_p])
        p_sw = -np.expm1(-mf.rates.r_ps[ci, cj] * dt)
        fire = rng.random(idx_p.size) < p_sw
        out.species[idx_p[fire]] = STREAKER
    return out
