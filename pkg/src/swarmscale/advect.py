"""Conservative finite-volume building blocks shared by the solvers.

All divergence operators difference face fluxes, so on periodic grids the
cell sums telescope and mass is conserved to machine precision.  Outflow
grids advect mass out through the boundary faces (no inflow) and apply
zero-flux boundaries to diffusion.
"""

from __future__ import annotations

import numpy as np

from .errors import CFLError
from .fields import Grid

__all__ = [
    "advective_divergence",
    "diffusive_divergence",
    "check_advective_cfl",
    "check_diffusive_cfl",
]


def _pad(f: np.ndarray, axis: int, boundary: str, edge: bool,
         layers: int = 1) -> np.ndarray:
    """Ghost layers per side along one axis: wrap, edge-replicate, or zero."""
    width = [(0, 0), (0, 0)]
    width[axis] = (layers, layers)
    if boundary == "periodic":
        return np.pad(f, width, mode="wrap")
    return np.pad(f, width, mode="edge" if edge else "constant")


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0.0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


def _face_flux_1d(f: np.ndarray, v: np.ndarray, axis: int, boundary: str,
                  muscl: bool) -> np.ndarray:
    """Upwind flux on the nx+1 faces along `axis` for velocity field v."""
    fp = _pad(f, axis, boundary, edge=False)
    vp = _pad(v, axis, boundary, edge=True)
    sl = [slice(None), slice(None)]

    def take(arr, lo, hi):
        s = list(sl)
        s[axis] = slice(lo, hi if hi != 0 else None)
        return arr[tuple(s)]

    f_lo = take(fp, 0, -1)       # cell left of each face
    f_hi = take(fp, 1, 0)        # cell right of each face
    v_face = 0.5 * (take(vp, 0, -1) + take(vp, 1, 0))
    if muscl:
        fpp = _pad(f, axis, boundary, edge=False, layers=2)
        fm = take(fpp, 0, -2)
        f0 = take(fpp, 1, -1)
        f1 = take(fpp, 2, 0)
        slope = _minmod(f0 - fm, f1 - f0)
        # left/right states reconstructed toward the face
        sL = list(sl)
        sL[axis] = slice(0, -1)
        sR = list(sl)
        sR[axis] = slice(1, None)
        f_lo = f_lo + 0.5 * slope[tuple(sL)]
        f_hi = f_hi - 0.5 * slope[tuple(sR)]
    return np.maximum(v_face, 0.0) * f_lo + np.minimum(v_face, 0.0) * f_hi


def advective_divergence(f: np.ndarray, vx: np.ndarray | float,
                         vy: np.ndarray | float, grid: Grid,
                         muscl: bool = False) -> np.ndarray:
    """div(v f) with face-upwind fluxes; v may be constant or a field."""
    shape = (grid.nx, grid.ny)
    vx = np.broadcast_to(np.asarray(vx, dtype=float), shape)
    vy = np.broadcast_to(np.asarray(vy, dtype=float), shape)
    fx = _face_flux_1d(f, vx, 0, grid.boundary_of(0), muscl)
    fy = _face_flux_1d(f, vy, 1, grid.boundary_of(1), muscl)
    div = (fx[1:, :] - fx[:-1, :]) / grid.dx
    div += (fy[:, 1:] - fy[:, :-1]) / grid.dy
    return div


def diffusive_divergence(f: np.ndarray, d_tensor: np.ndarray,
                         grid: Grid) -> np.ndarray:
    """Conservative discretization of Delta(D f) for a constant tensor D.

    Read as div(grad . (D f)) componentwise; the flux through an x-face is
    d_xx df/dx + d_xy df/dy with centred face averages, so cell sums
    telescope on periodic grids.  Outflow grids use zero-flux boundaries.
    """
    d = np.asarray(d_tensor, dtype=float)
    if d.shape == ():
        d = d * np.eye(2)
    bx = grid.boundary_of(0)
    by = grid.boundary_of(1)

    fpx = _pad(f, 0, bx, edge=True)
    fpy = _pad(f, 1, by, edge=True)

    # normal derivative at faces
    dfdx_face = (fpx[1:, :] - fpx[:-1, :]) / grid.dx          # (nx+1, ny)
    dfdy_face = (fpy[:, 1:] - fpy[:, :-1]) / grid.dy          # (nx, ny+1)

    flux_x = d[0, 0] * dfdx_face
    flux_y = d[1, 1] * dfdy_face
    if d[0, 1] != 0.0 or d[1, 0] != 0.0:
        # transverse derivative averaged to the face
        gy = (np.roll(f, -1, 1) - np.roll(f, 1, 1)) / (2.0 * grid.dy) \
            if by == "periodic" else np.gradient(f, grid.dy, axis=1)
        gx = (np.roll(f, -1, 0) - np.roll(f, 1, 0)) / (2.0 * grid.dx) \
            if bx == "periodic" else np.gradient(f, grid.dx, axis=0)
        gyp = _pad(gy, 0, bx, edge=True)
        gxp = _pad(gx, 1, by, edge=True)
        flux_x = flux_x + d[0, 1] * 0.5 * (gyp[1:, :] + gyp[:-1, :])
        flux_y = flux_y + d[1, 0] * 0.5 * (gxp[:, 1:] + gxp[:, :-1])
    if bx == "outflow":
        flux_x[0, :] = 0.0
        flux_x[-1, :] = 0.0
    if by == "outflow":
        flux_y[:, 0] = 0.0
        flux_y[:, -1] = 0.0
    div = (flux_x[1:, :] - flux_x[:-1, :]) / grid.dx
    div += (flux_y[:, 1:] - flux_y[:, :-1]) / grid.dy
    return div


def check_advective_cfl(max_speed: float, dt: float, grid: Grid,
                        limit: float = 0.9, label: str = "advection") -> None:
    h = min(grid.dx, grid.dy)
    if max_speed * dt > limit * h:
        raise CFLError(
            f"{label}: speed {max_speed:g} * dt {dt:g} exceeds "
            f"{limit:g} * h = {limit * h:g}")


def check_diffusive_cfl(diffusivity: float, dt: float, grid: Grid,
                        limit: float = 0.4, label: str = "diffusion") -> None:
    h = min(grid.dx, grid.dy)
    if diffusivity * dt > limit * h * h:
        raise CFLError(
            f"{label}: diffusivity {diffusivity:g} * dt {dt:g} exceeds "
            f"{limit:g} * h^2 = {limit * h * h:g}")
