"""Scenario configuration: strict INI-style parsing, defaults, echoing.

Every key is validated against the schema below; unknown sections or keys
are hard errors, range violations raise, and the speed-ordering guidance
(c_f and c_p not exceeding c_s) produces warnings rather than errors.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields as dc_fields

from .errors import ConfigError
from .kernels import AlignmentDistribution, InteractionKernel, TurnKernel
from .params import ModelParams, RateShape

__all__ = ["Scenario", "parse_config", "echo_config", "DEFAULTS"]

_SCENARIO_NAMES = ("gaussian-blob", "dual-blob", "uniform-disk")
_LEVELS = ("micro", "kinetic", "parabolic", "hyperbolic")


@dataclass(frozen=True)
class Scenario:
    """Fully resolved run description; every field has a bound value."""

    # [scenario]
    name: str = "gaussian-blob"
    n_agents: int = 1000
    leader_fraction: float = 0.04
    leader_split: float = 0.5
    center_x: float = 0.0
    center_y: float = 0.0
    sigma: float = 2.0
    separation: float = 8.0
    disk_radius: float = 3.0
    t_end: float = 10.0
    seed: int = 0
    dt: float = 0.0
    # [model]
    beta: float = 1.0
    zeta: float = 0.3
    c_f: float = 0.7
    c_p: float = 0.7
    c_s: float = 1.0
    lam: float = 2.0
    nu: float = 1.0
    r0: float = 0.25
    epsilon: float = 1.0
    # [grid]
    nx: int = 64
    ny: int = 64
    xmin: float = -12.0
    xmax: float = 12.0
    ymin: float = -12.0
    ymax: float = 12.0
    boundary: str = "periodic"
    boundary_y: str = ""
    # [kernels]
    turn: str = "von-mises:1.0"
    alignment: str = "von-mises:4.0"
    interaction: str = "top-hat:2.0"
    base: str = "von-mises:2.0"
    angular_m: int = 16
    # [rates]
    r_peak: float = 5.0
    grad_scale: float = 0.0
    rho_threshold_frac: float = 0.05
    rate_angular: str = "uniform"
    # [scaling]
    kernel_mode: str = "homogeneous"
    include_epsilon_corrections: bool = False
    diffusion_convention: str = "final-system"
    # [output]
    stride: int = 10
    write_fields: bool = True
    write_binary: bool = False
    write_trajectory: bool = True
    # non-compared metadata
    warnings: tuple = field(default=(), compare=False)

    def model_params(self) -> ModelParams:
        return ModelParams(beta=self.beta, zeta=self.zeta, c_f=self.c_f,
                           c_p=self.c_p, c_s=self.c_s, lam=self.lam,
                           nu=self.nu, r0=self.r0, epsilon=self.epsilon)

    def rate_shape(self) -> RateShape:
        return RateShape(r_peak=self.r_peak, grad_scale=self.grad_scale,
                         rho_threshold_frac=self.rho_threshold_frac,
                         angular=self.rate_angular)


# section -> key -> (scenario attribute, parser)
def _float(lo=None, hi=None, lo_open=False, hi_open=False):
    def parse(s: str) -> float:
        v = float(s)
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ConfigError(f"value {v} below {'open ' if lo_open else ''}"
                              f"bound {lo}")
        if hi is not None and (v >= hi if hi_open else v > hi):
            raise ConfigError(f"value {v} above {'open ' if hi_open else ''}"
                              f"bound {hi}")
        return v
    return parse


def _int(lo=None):
    def parse(s: str) -> int:
        v = int(s)
        if lo is not None and v < lo:
            raise ConfigError(f"value {v} below bound {lo}")
        return v
    return parse


def _choice(*names):
    def parse(s: str) -> str:
        if s not in names:
            raise ConfigError(f"'{s}' is not one of {names}")
        return s
    return parse


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"'{s}' is not a boolean")


def _kernel(kind):
    def parse(s: str) -> str:
        from .kernels import kernel_from_spec
        try:
            kernel_from_spec(s, kind=kind)
        except Exception as exc:
            raise ConfigError(f"invalid {kind} kernel '{s}': {exc}") from exc
        return s
    return parse


def _rate_angular(s: str) -> str:
    name, _, arg = s.partition(":")
    if name == "uniform":
        return s
    if name == "von-mises":
        if arg:
            float(arg)
        return s
    raise ConfigError(f"'{s}' is not a rate angular factor")


_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "scenario": {
        "name": ("name", _choice(*_SCENARIO_NAMES)),
        "n_agents": ("n_agents", _int(lo=1)),
        "leader_fraction": ("leader_fraction",
                            _float(lo=0.0, hi=0.5, lo_open=True, hi_open=True)),
        "leader_split": ("leader_split", _float(lo=0.0, hi=1.0)),
        "center_x": ("center_x", float),
        "center_y": ("center_y", float),
        "sigma": ("sigma", _float(lo=0.0, lo_open=True)),
        "separation": ("separation", _float(lo=0.0)),
        "disk_radius": ("disk_radius", _float(lo=0.0, lo_open=True)),
        "t_end": ("t_end", _float(lo=0.0, lo_open=True)),
        "seed": ("seed", _int(lo=0)),
        "dt": ("dt", _float(lo=0.0)),
    },
    "model": {
        "beta": ("beta", _float(lo=0.0, lo_open=True)),
        "zeta": ("zeta", _float(lo=0.0, hi=1.0, lo_open=True, hi_open=True)),
        "c_f": ("c_f", _float(lo=0.0, lo_open=True)),
        "c_p": ("c_p", _float(lo=0.0, lo_open=True)),
        "c_s": ("c_s", _float(lo=0.0, lo_open=True)),
        "lambda": ("lam", _float(lo=0.0)),
        "nu": ("nu", _float(lo=0.0, lo_open=True)),
        "r0": ("r0", _float(lo=0.0, lo_open=True)),
        "epsilon": ("epsilon", _float(lo=0.0, hi=1.0, lo_open=True)),
    },
    "grid": {
        "nx": ("nx", _int(lo=4)),
        "ny": ("ny", _int(lo=4)),
        "xmin": ("xmin", float),
        "xmax": ("xmax", float),
        "ymin": ("ymin", float),
        "ymax": ("ymax", float),
        "boundary": ("boundary", _choice("periodic", "outflow")),
        "boundary_y": ("boundary_y", _choice("periodic", "outflow", "")),
    },
    "kernels": {
        "turn": ("turn", _kernel("turn")),
        "alignment": ("alignment", _kernel("alignment")),
        "interaction": ("interaction", _kernel("interaction")),
        "base": ("base", _kernel("alignment")),
        "angular_m": ("angular_m", _int(lo=8)),
    },
    "rates": {
        "r_peak": ("r_peak", _float(lo=0.0)),
        "grad_scale": ("grad_scale", _float(lo=0.0)),
        "rho_threshold_frac": ("rho_threshold_frac",
                               _float(lo=0.0, hi=1.0, lo_open=True,
                                      hi_open=True)),
        "angular": ("rate_angular", _rate_angular),
    },
    "scaling": {
        "kernel_mode": ("kernel_mode",
                        _choice("homogeneous", "inhomogeneous")),
        "include_epsilon_corrections": ("include_epsilon_corrections", _bool),
        "diffusion_convention": ("diffusion_convention",
                                 _choice("final-system", "mean-direction")),
    },
    "output": {
        "stride": ("stride", _int(lo=1)),
        "fields": ("write_fields", _bool),
        "binary": ("write_binary", _bool),
        "trajectory": ("write_trajectory", _bool),
    },
}

DEFAULTS = Scenario()


def parse_config(text: str) -> Scenario:
    """Parse and validate a configuration; unknown keys are hard errors."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    values: dict[str, object] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            attr, conv = _SCHEMA[section][key]
            try:
                values[attr] = conv(raw)
            except ConfigError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    scenario = Scenario(**values)
    _cross_validate(scenario)
    warnings = _soft_warnings(scenario)
    if warnings:
        scenario = Scenario(**{**values, "warnings": tuple(warnings)})
        _cross_validate(scenario)
    return scenario


def _cross_validate(s: Scenario) -> None:
    if s.xmax <= s.xmin or s.ymax <= s.ymin:
        raise ConfigError("grid extents must be increasing")
    if s.name == "dual-blob" and s.separation <= 0.0:
        raise ConfigError("dual-blob scenario needs a positive separation")
    if s.angular_m % 2:
        raise ConfigError("angular_m must be even (antipodal symmetry)")
    try:
        s.model_params()
        s.rate_shape()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _soft_warnings(s: Scenario) -> list[str]:
    out = []
    if s.c_f > s.c_s:
        out.append(f"c_f = {s.c_f:g} exceeds c_s = {s.c_s:g}; followers are"
                   " expected to fly no faster than streakers")
    if s.c_p > s.c_s:
        out.append(f"c_p = {s.c_p:g} exceeds c_s = {s.c_s:g}; passive leaders"
                   " are expected to fly no faster than streakers")
    if s.lam < 1.0:
        out.append(f"lambda = {s.lam:g} below one weakens streakers below"
                   " ordinary neighbours")
    return out


_ATTR_TO_KEY = {attr: (section, key)
                for section, keys in _SCHEMA.items()
                for key, (attr, _) in keys.items()}


def echo_config(s: Scenario) -> str:
    """Canonical text with every key bound (defaults included)."""
    buf = io.StringIO()
    for section in _SCHEMA:
        buf.write(f"[{section}]\n")
        for key, (attr, _) in _SCHEMA[section].items():
            value = getattr(s, attr)
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            buf.write(f"{key} = {text}\n")
        buf.write("\n")
    return buf.getvalue()
