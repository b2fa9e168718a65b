"""Scalar model constants shared by every simulation level."""

from __future__ import annotations

from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class ModelParams:
    """All scalar constants of the follower-leader model.

    Speeds are in length/time, rates in 1/time.  `beta` is the stopping
    (reorientation) rate of followers and passive leaders, `zeta` the
    probability that a reorienting follower draws its new heading from the
    persistence kernel instead of aligning, `lam` the extra visibility weight
    of streakers in the alignment flux, and `r0` the minimal streaker/passive
    conversion rate outside the swarm.  `nu` is the relaxation frequency used
    by the magnitude-carrying alignment mode and `epsilon` the scale
    separation parameter of the macroscopic limits.
    """

    beta: float = 1.0
    zeta: float = 0.3
    c_f: float = 0.7
    c_p: float = 0.7
    c_s: float = 1.0
    lam: float = 2.0
    nu: float = 1.0
    r0: float = 0.25
    epsilon: float = 1.0
    dimension: int = 2

    def __post_init__(self) -> None:
        # zero rate/speed values describe degenerate test dynamics (no
        # jumps, relaxation only); the config layer enforces positivity
        if self.beta < 0.0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError(f"zeta must lie in [0, 1], got {self.zeta}")
        for name in ("c_f", "c_p", "c_s"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.lam < 0.0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if self.nu <= 0.0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.r0 <= 0.0:
            raise ValueError(f"r0 must be positive, got {self.r0}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dimension}")

    def with_(self, **kwargs) -> "ModelParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class RateShape:
    """Shape parameters of the streaker/passive switching rates.

    `r_peak` is the edge conversion rate inside the swarm, `grad_scale` the
    gradient magnitude at which the clamped-linear ramp saturates (estimated
    from the field when zero), and `rho_threshold_frac` the fraction of the
    follower density maximum that separates "inside" from "outside".
    `angular` is the angular factor of the streaker-to-passive re-entry
    heading: "uniform" or "von-mises:<kappa>" centred on the rearward axis.
    """

    r_peak: float = 5.0
    grad_scale: float = 0.0
    rho_threshold_frac: float = 0.05
    angular: str = "uniform"

    def __post_init__(self) -> None:
        if self.r_peak < 0.0:
            raise ValueError("r_peak must be non-negative")
        if self.grad_scale < 0.0:
            raise ValueError("grad_scale must be non-negative")
        if not 0.0 < self.rho_threshold_frac < 1.0:
            raise ValueError("rho_threshold_frac must lie in (0, 1)")
