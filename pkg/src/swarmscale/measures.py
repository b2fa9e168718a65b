"""Diagnostics: norms, fits, pulse speeds, and peak counting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d
from scipy.signal import find_peaks
from scipy.stats import linregress

from .fields import Grid

__all__ = [
    "l1_error",
    "linf_error",
    "DecayFit",
    "exp_decay_fit",
    "center_of_mass",
    "SpeedFit",
    "speed_fit",
    "count_profile_peaks",
    "field_variance",
    "smooth_like_kde",
]


def l1_error(a: np.ndarray, b: np.ndarray, grid: Grid,
             relative: bool = True) -> float:
    err = float(np.sum(np.abs(a - b))) * grid.cell_area
    if not relative:
        return err
    norm = float(np.sum(np.abs(b))) * grid.cell_area
    return err / norm if norm > 0.0 else err


def linf_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)))


@dataclass(frozen=True)
class DecayFit:
    """Log-linear fit of an exponential profile: rate and 95% interval."""

    rate: float
    stderr: float
    points: int

    @property
    def ci95(self) -> tuple[float, float]:
        half = 1.96 * self.stderr
        return (self.rate - half, self.rate + half)


def exp_decay_fit(x: np.ndarray, profile: np.ndarray,
                  lo: float, hi: float, floor: float = 0.0) -> DecayFit:
    """Fit profile ~ exp(rate * x) over x in [lo, hi].

    Returns the signed rate of growth along +x; a profile decaying away
    from the swarm along -x fits a positive rate.
    """
    mask = (x >= lo) & (x <= hi) & (profile > floor)
    if int(mask.sum()) < 3:
        raise ValueError("decay fit needs at least three positive samples")
    res = linregress(x[mask], np.log(profile[mask]))
    return DecayFit(rate=float(res.slope), stderr=float(res.stderr),
                    points=int(mask.sum()))


def center_of_mass(field: np.ndarray, grid: Grid) -> np.ndarray:
    total = field.sum()
    if total <= 0.0:
        return np.array([np.nan, np.nan])
    xg, yg = grid.mesh()
    return np.array([float((field * xg).sum() / total),
                     float((field * yg).sum() / total)])


@dataclass(frozen=True)
class SpeedFit:
    speed: float
    stderr: float

    @property
    def ci95(self) -> tuple[float, float]:
        half = 1.96 * self.stderr
        return (self.speed - half, self.speed + half)


def speed_fit(times: np.ndarray, positions: np.ndarray) -> SpeedFit:
    """Linear drift speed of a trajectory of scalar positions."""
    res = linregress(np.asarray(times, dtype=float),
                     np.asarray(positions, dtype=float))
    return SpeedFit(speed=float(res.slope), stderr=float(res.stderr))


def count_profile_peaks(profile: np.ndarray,
                        prominence_frac: float = 0.1) -> int:
    """Local maxima of a 1-d profile above a prominence threshold."""
    top = float(np.max(profile))
    if top <= 0.0:
        return 0
    peaks, _ = find_peaks(profile, prominence=prominence_frac * top)
    # an end sample higher than everything inside counts as a peak too
    inner_top = profile[peaks].max() if peaks.size else 0.0
    for edge in (0, profile.size - 1):
        neighbour = profile[1] if edge == 0 else profile[-2]
        if profile[edge] > neighbour and profile[edge] > prominence_frac * top \
                and profile[edge] > inner_top:
            peaks = np.append(peaks, edge)
    return int(len(peaks))


def field_variance(field: np.ndarray, grid: Grid) -> tuple[float, float]:
    """Second central moments of a density field along each axis."""
    total = field.sum()
    xg, yg = grid.mesh()
    mx = float((field * xg).sum() / total)
    my = float((field * yg).sum() / total)
    vx = float((field * (xg - mx) ** 2).sum() / total)
    vy = float((field * (yg - my) ** 2).sum() / total)
    return vx, vy


def smooth_like_kde(field: np.ndarray, bandwidth: float,
                    grid: Grid) -> np.ndarray:
    """Apply the same discrete Gaussian smoothing the KDE uses.

    Used to compare particle estimates against solver fields on equal
    footing (both carry the kernel bias).
    """
    reach = int(np.ceil(4.0 * bandwidth / grid.dx))
    k = np.arange(-reach, reach + 1)
    taps_x = np.exp(-0.5 * (k * grid.dx / bandwidth) ** 2)
    taps_x /= taps_x.sum()
    reach = int(np.ceil(4.0 * bandwidth / grid.dy))
    k = np.arange(-reach, reach + 1)
    taps_y = np.exp(-0.5 * (k * grid.dy / bandwidth) ** 2)
    taps_y /= taps_y.sum()
    mode_x = "wrap" if grid.boundary_of(0) == "periodic" else "nearest"
    mode_y = "wrap" if grid.boundary_of(1) == "periodic" else "nearest"
    sm = convolve1d(field, taps_x, axis=0, mode=mode_x)
    return convolve1d(sm, taps_y, axis=1, mode=mode_y)
