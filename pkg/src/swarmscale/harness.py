"""Experiment orchestration: scenario setup, level runs, comparisons,
report and audit emission."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .config import Scenario, echo_config
from .errors import AuditError, ConfigError, SolverError
from .fields import (
    FieldSet,
    Grid,
    NestField,
    build_nest_field,
    field_to_binary,
    field_to_csv,
    kde_density,
    uniform_nest_field,
)
from .kernels import (
    AlignmentDistribution,
    AngularGrid,
    InteractionKernel,
    TurnKernel,
    closure_coefficients,
    coefficient_z,
    coefficients_a,
    eigenvalue_nu1,
    kernel_from_spec,
)
from .macrosolvers import (
    HyperbolicSolver,
    KineticSolver,
    KineticState,
    MacroState,
    ParabolicSolver,
    ScalingParams,
    dual_blob,
    gaussian_blob,
    moments,
    uniform_disk,
)
from .measures import (
    DecayFit,
    SpeedFit,
    center_of_mass,
    count_profile_peaks,
    exp_decay_fit,
    l1_error,
    linf_error,
    speed_fit,
)
from .microsim import (
    FOLLOWER,
    PASSIVE,
    STREAKER,
    Ensemble,
    SimParams,
    refresh_fields,
    step,
    step_rng,
)

__all__ = ["Setup", "RunReport", "build_setup", "run", "compare",
           "coefficient_table", "coefficient_csv_text",
           "write_coefficient_csv"]

LEVELS = ("micro", "kinetic", "parabolic", "hyperbolic")


@dataclass
class Setup:
    """Resolved scenario objects shared by every level."""

    scenario: Scenario
    grid: Grid
    nest: NestField
    agrid: AngularGrid
    turn: TurnKernel
    align: AlignmentDistribution
    b0: AlignmentDistribution
    interaction: InteractionKernel
    params: object
    rate_shape: object
    scaling: ScalingParams
    rho_f0: np.ndarray
    follower_mass: float
    leader_mass: float


@dataclass
class RunReport:
    """Per-run diagnostics: frame table, audits, and fitted observables."""

    level: str
    frames: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    front_decay: DecayFit | None = None
    pulse_speed: SpeedFit | None = None
    conversion_peaks: int | None = None

    def frame_times(self) -> np.ndarray:
        return np.array([f["t"] for f in self.frames])


def build_setup(scenario: Scenario) -> Setup:
    grid = Grid(nx=scenario.nx, ny=scenario.ny, xmin=scenario.xmin,
                xmax=scenario.xmax, ymin=scenario.ymin, ymax=scenario.ymax,
                boundary=scenario.boundary,
                boundary_y=scenario.boundary_y or None)
    nest = uniform_nest_field(grid, (1.0, 0.0))
    agrid = AngularGrid(m=scenario.angular_m)
    turn = kernel_from_spec(scenario.turn, kind="turn")
    align = kernel_from_spec(scenario.alignment, kind="alignment")
    b0 = kernel_from_spec(scenario.base, kind="alignment")
    interaction = kernel_from_spec(scenario.interaction, kind="interaction")
    params = scenario.model_params()
    shape = scenario.rate_shape()
    scaling = ScalingParams(epsilon=scenario.epsilon, limit="kinetic",
                            kernel_mode=scenario.kernel_mode, nu=scenario.nu,
                            include_epsilon_corrections=(
                                scenario.include_epsilon_corrections))
    follower_mass = scenario.n_agents * (1.0 - scenario.leader_fraction)
    leader_mass = scenario.n_agents * scenario.leader_fraction
    center = (scenario.center_x, scenario.center_y)
    if scenario.name == "gaussian-blob":
        rho = gaussian_blob(grid, center, scenario.sigma, follower_mass)
    elif scenario.name == "dual-blob":
        rho = dual_blob(grid, center, scenario.separation, scenario.sigma,
                        follower_mass)
    else:
        rho = uniform_disk(grid, center, scenario.disk_radius, follower_mass)
    return Setup(scenario=scenario, grid=grid, nest=nest, agrid=agrid,
                 turn=turn, align=align, b0=b0, interaction=interaction,
                 params=params, rate_shape=shape, scaling=scaling,
                 rho_f0=rho, follower_mass=follower_mass,
                 leader_mass=leader_mass)


def _leader_density(setup: Setup, share: float) -> np.ndarray:
    total = setup.rho_f0.sum() * setup.grid.cell_area
    if total <= 0.0:
        return setup.grid.zeros()
    return setup.rho_f0 * (setup.leader_mass * share / total)


def _sample_positions(setup: Setup, n: int,
                      rng: np.random.Generator) -> np.ndarray:
    s = setup.scenario
    center = np.array([s.center_x, s.center_y])
    if s.name == "gaussian-blob":
        return center + s.sigma * rng.normal(size=(n, 2))
    if s.name == "dual-blob":
        offs = np.where(rng.random(n) < 0.5, -0.5, 0.5) * s.separation
        pts = center + s.sigma * rng.normal(size=(n, 2))
        pts[:, 0] += offs
        return pts
    radii = s.disk_radius * np.sqrt(rng.random(n))
    ang = rng.uniform(-np.pi, np.pi, n)
    return center + np.column_stack([radii * np.cos(ang),
                                     radii * np.sin(ang)])


def initial_ensemble(setup: Setup, seed: int) -> Ensemble:
    s = setup.scenario
    n = s.n_agents
    n_lead = int(round(n * s.leader_fraction))
    n_streak = int(round(n_lead * s.leader_split))
    rng = step_rng(seed, 2 ** 48)
    x = setup.grid.wrap(_sample_positions(setup, n, rng))
    alpha = rng.uniform(-np.pi, np.pi, n)
    species = np.full(n, FOLLOWER, dtype=np.int8)
    species[:n_lead] = PASSIVE
    species[:n_streak] = STREAKER
    return Ensemble(x=x, alpha=alpha, species=species)


def initial_kinetic_state(setup: Setup) -> KineticState:
    st = KineticState.zeros(setup.grid, setup.agrid)
    st.sigma_f = np.broadcast_to(setup.rho_f0[..., None],
                                 st.sigma_f.shape).copy()
    rho_p = _leader_density(setup, 1.0 - setup.scenario.leader_split)
    b_hat = _passive_equilibrium(setup)
    st.sigma_p = b_hat * rho_p[..., None]
    st.rho_s = _leader_density(setup, setup.scenario.leader_split)
    return st


def _passive_equilibrium(setup: Setup) -> np.ndarray:
    rel = setup.agrid.thetas[None, None, :] \
        - np.arctan2(setup.nest.by, setup.nest.bx)[..., None]
    base = setup.b0.density_of_arg(np.cos(rel))
    return base / np.mean(base, axis=-1, keepdims=True)


def initial_macro_state(setup: Setup, level: str = "hyperbolic") -> MacroState:
    ms = MacroState.zeros(setup.grid)
    ms.rho_f = setup.rho_f0.copy()
    if level == "parabolic":
        # the streaker field is slaved to the stationary constraint, so the
        # whole leader population enters through the passive density
        ms.rho_p = _leader_density(setup, 1.0)
    else:
        ms.rho_p = _leader_density(setup, 1.0 - setup.scenario.leader_split)
        ms.rho_s = _leader_density(setup, setup.scenario.leader_split)
    ms.lam[..., 0] = -setup.nest.bx
    ms.lam[..., 1] = -setup.nest.by
    return ms


# ----------------------------------------------------------------------------
# level drivers
# ----------------------------------------------------------------------------

def _choose_dt(setup: Setup, level: str, solver) -> float:
    if setup.scenario.dt > 0.0:
        return setup.scenario.dt
    if level == "micro":
        p = setup.params
        cmax = max(p.c_f, p.c_p, p.c_s)
        bandwidth = 3.0 * max(setup.grid.dx, setup.grid.dy)
        dt = min(0.2 / max(p.beta, 1e-12), 0.5 * bandwidth / cmax)
        rmax = setup.rate_shape.r_peak + p.r0
        return min(dt, 0.2 / rmax)
    return solver.stable_dt()


def _frame_micro(t, ens: Ensemble, grid: Grid, nest: NestField) -> dict:
    f, p, s = ens.counts()
    moving = ens.species != STREAKER
    order = 0.0
    if np.any(moving):
        b_here = nest.at(ens.x[moving])
        head = np.column_stack([np.cos(ens.alpha[moving]),
                                np.sin(ens.alpha[moving])])
        order = float(np.mean(-np.sum(head * b_here, axis=1)))
    com = ens.x.mean(axis=0)
    return {"t": t, "com_x": float(com[0]), "com_y": float(com[1]),
            "order_parameter": order, "n_followers": f, "n_passive": p,
            "n_streakers": s}


def run(scenario: Scenario, level: str, out_dir: str | None = None,
        snap_times: tuple = (), collect_fields: bool = False) -> RunReport:
    """Execute one level of the scenario; write outputs when out_dir given."""
    if level not in LEVELS:
        raise ConfigError(f"unknown level '{level}'")
    setup = build_setup(scenario)
    report = RunReport(level=level)
    if level == "micro":
        _run_micro(setup, report, snap_times)
    elif level == "kinetic":
        _run_kinetic(setup, report, snap_times)
    else:
        _run_macro(setup, report, level, snap_times)
    _audit(report, setup, level)
    if out_dir is not None:
        _write_outputs(setup, report, out_dir, collect_fields)
    return report


def _run_micro(setup: Setup, report: RunReport, snap_times) -> None:
    s = setup.scenario
    sp = SimParams(model=setup.params, rate_shape=setup.rate_shape,
                   dt=_choose_dt(setup, "micro", None), seed=s.seed,
                   kernel_mode=s.kernel_mode)
    ens = initial_ensemble(setup, s.seed)
    nsteps = max(1, int(np.ceil(s.t_end / sp.dt)))
    sp = replace(sp, dt=s.t_end / nsteps)
    bandwidth = 3.0 * max(setup.grid.dx, setup.grid.dy)
    snap_iter = list(snap_times)
    traj = []
    f0, p0, s0 = ens.counts()
    report.audit["followers_initial"] = f0
    report.audit["leaders_initial"] = p0 + s0
    mf = refresh_fields(ens, setup.grid, setup.nest, sp, setup.interaction)
    t = 0.0
    report.frames.append(_frame_micro(t, ens, setup.grid, setup.nest))
    _snap_micro(report, snap_iter, t, ens, setup, bandwidth)
    for k in range(nsteps):
        if k % sp.refresh_stride == 0:
            mf = refresh_fields(ens, setup.grid, setup.nest, sp,
                                setup.interaction)
        ens = step(ens, mf, sp, setup.turn, setup.align, setup.b0,
                   setup.agrid, step_rng(s.seed, k))
        t = (k + 1) * sp.dt
        if (k + 1) % s.stride == 0 or k + 1 == nsteps:
            report.frames.append(_frame_micro(t, ens, setup.grid, setup.nest))
            if s.write_trajectory:
                head = ens.headings()
                for i in range(ens.n):
                    traj.append((t, i, int(ens.species[i]), ens.x[i, 0],
                                 ens.x[i, 1], head[i, 0], head[i, 1]))
        _snap_micro(report, snap_iter, t, ens, setup, bandwidth)
    f1, p1, s1 = ens.counts()
    report.audit["followers_final"] = f1
    report.audit["leaders_final"] = p1 + s1
    report.audit["follower_residual"] = abs(f1 - f0)
    report.audit["leader_residual"] = abs(p1 + s1 - (p0 + s0))
    report.snapshots.setdefault("trajectory", traj)
    rho = kde_density(ens.x[ens.species == FOLLOWER], bandwidth, setup.grid)
    report.snapshots["rho_f_final"] = rho
    streak = ens.x[ens.species == STREAKER]
    report.snapshots["streaker_positions"] = streak


def _snap_micro(report, snap_iter, t, ens, setup, bandwidth) -> None:
    while snap_iter and t >= snap_iter[0] - 1e-12:
        t_snap = snap_iter.pop(0)
        rho = kde_density(ens.x[ens.species == FOLLOWER], bandwidth,
                          setup.grid)
        report.snapshots[("rho_f", round(t_snap, 9))] = rho


def _frame_field(t, mass_f, mass_l, min_density, cfl) -> dict:
    return {"t": t, "mass_f": mass_f, "mass_leaders": mass_l,
            "min_density": min_density, "cfl_number": cfl}


def _run_kinetic(setup: Setup, report: RunReport, snap_times) -> None:
    s = setup.scenario
    ks = KineticSolver(setup.grid, setup.agrid, setup.params, setup.turn,
                       setup.align, setup.b0, setup.nest,
                       rate_shape=setup.rate_shape,
                       interaction=setup.interaction,
                       kernel_mode=s.kernel_mode)
    st = initial_kinetic_state(setup)
    dt = _choose_dt(setup, "kinetic", ks)
    nsteps = max(1, int(np.ceil(s.t_end / dt)))
    dt = s.t_end / nsteps
    p = setup.params
    cfl = max(p.c_f, p.c_p, p.c_s) * dt / min(setup.grid.dx, setup.grid.dy)
    m0f, m0l = st.mass_followers(), st.mass_leaders()
    report.audit["mass_f_initial"] = m0f
    report.audit["mass_leaders_initial"] = m0l
    snap_iter = list(snap_times)
    t = 0.0
    coms = [(t, center_of_mass(st.rho_f(), setup.grid)[0])]
    report.frames.append(_frame_field(t, m0f, m0l,
                                      float(st.sigma_f.min()), cfl))
    for k in range(nsteps):
        st = ks.step(st, dt)
        t = (k + 1) * dt
        if (k + 1) % s.stride == 0 or k + 1 == nsteps:
            report.frames.append(_frame_field(
                t, st.mass_followers(), st.mass_leaders(),
                float(min(st.sigma_f.min(), st.sigma_p.min(),
                          st.rho_s.min())), cfl))
            coms.append((t, center_of_mass(st.rho_f(), setup.grid)[0]))
            if s.write_fields:
                report.snapshots[("frame_rho_f", round(t, 9))] = \
                    st.rho_f().copy()
        while snap_iter and t >= snap_iter[0] - 1e-12:
            report.snapshots[("rho_f", round(snap_iter.pop(0), 9))] = \
                st.rho_f().copy()
    report.audit["mass_f_final"] = st.mass_followers()
    report.audit["mass_leaders_final"] = st.mass_leaders()
    report.snapshots["rho_f_final"] = st.rho_f()
    report.snapshots["rho_s_final"] = st.rho_s.copy()
    rates = ks.rates_for(st.rho_f())
    report.snapshots["conversion_flux"] = rates.r_sp * st.rho_s
    _common_fits(report, setup, coms)


def _run_macro(setup: Setup, report: RunReport, level: str,
               snap_times) -> None:
    s = setup.scenario
    coeffs = closure_coefficients(
        setup.turn, setup.align, setup.b0, setup.params,
        diffusion_convention=s.diffusion_convention,
        with_inhomogeneous=(s.kernel_mode == "inhomogeneous"))
    scaling = replace(setup.scaling, limit=level)
    if level == "parabolic":
        solver = ParabolicSolver(setup.grid, setup.params, coeffs, setup.nest,
                                 rate_shape=setup.rate_shape,
                                 interaction=setup.interaction,
                                 scaling=scaling)
    else:
        solver = HyperbolicSolver(setup.grid, setup.params, coeffs,
                                  setup.nest, rate_shape=setup.rate_shape,
                                  scaling=scaling)
    st = initial_macro_state(setup, level)
    dt = _choose_dt(setup, level, solver)
    if level == "parabolic":
        dt = min(dt, solver.suggest_dt(st))
    nsteps = max(1, int(np.ceil(s.t_end / dt)))
    dt = s.t_end / nsteps
    h = min(setup.grid.dx, setup.grid.dy)
    cfl = max(setup.params.c_f, setup.params.c_p, setup.params.c_s) * dt / h
    mass_l = st.mass_passive if level == "parabolic" else st.mass_leaders
    m0f, m0l = st.mass_followers(), mass_l()
    report.audit["mass_f_initial"] = m0f
    report.audit["mass_leaders_initial"] = m0l
    snap_iter = list(snap_times)
    t = 0.0
    coms = [(t, center_of_mass(st.rho_f, setup.grid)[0])]
    report.frames.append(_frame_field(t, m0f, m0l, float(st.rho_f.min()), cfl))
    for k in range(nsteps):
        st = solver.step(st, dt)
        t = (k + 1) * dt
        if (k + 1) % s.stride == 0 or k + 1 == nsteps:
            mass_l = (st.mass_passive if level == "parabolic"
                      else st.mass_leaders)
            report.frames.append(_frame_field(
                t, st.mass_followers(), mass_l(),
                float(min(st.rho_f.min(), st.rho_p.min(), st.rho_s.min())),
                cfl))
            coms.append((t, center_of_mass(st.rho_f, setup.grid)[0]))
            if s.write_fields:
                report.snapshots[("frame_rho_f", round(t, 9))] = \
                    st.rho_f.copy()
        while snap_iter and t >= snap_iter[0] - 1e-12:
            report.snapshots[("rho_f", round(snap_iter.pop(0), 9))] = \
                st.rho_f.copy()
    report.audit["mass_f_final"] = st.mass_followers()
    final_mass_l = (st.mass_passive if level == "parabolic"
                    else st.mass_leaders)
    report.audit["mass_leaders_final"] = final_mass_l()
    report.snapshots["rho_f_final"] = st.rho_f.copy()
    report.snapshots["rho_s_final"] = st.rho_s.copy()
    rates = solver.rates_for(st.rho_f)
    report.snapshots["conversion_flux"] = rates.r_sp * st.rho_s
    _common_fits(report, setup, coms)


def _common_fits(report: RunReport, setup: Setup, coms) -> None:
    ts = np.array([c[0] for c in coms])
    xs = np.array([c[1] for c in coms])
    if ts.size >= 3 and np.all(np.isfinite(xs)):
        report.pulse_speed = speed_fit(ts, xs)
    rho_s = report.snapshots.get("rho_s_final")
    if rho_s is not None and float(rho_s.max()) > 0.0:
        profile = rho_s.mean(axis=1)
        rho_f = report.snapshots["rho_f_final"].mean(axis=1)
        thr = 0.05 * float(rho_f.max())
        above = np.flatnonzero(rho_f > thr)
        if above.size:
            edge = setup.grid.xc[above[0]]
            scale = setup.params.c_s / setup.params.r0
            try:
                report.front_decay = exp_decay_fit(
                    setup.grid.xc, profile, edge - 2.5 * scale,
                    edge - 0.5 * scale)
            except ValueError:
                report.front_decay = None
    flux = report.snapshots.get("conversion_flux")
    if flux is not None:
        report.conversion_peaks = count_profile_peaks(flux.mean(axis=1))


def _audit(report: RunReport, setup: Setup, level: str) -> None:
    a = report.audit
    if level == "micro":
        a["clean"] = (a["follower_residual"] == 0
                      and a["leader_residual"] == 0)
    else:
        denom_f = max(abs(a["mass_f_initial"]), 1e-300)
        denom_l = max(abs(a["mass_leaders_initial"]), 1e-300)
        a["follower_residual"] = abs(a["mass_f_final"]
                                     - a["mass_f_initial"]) / denom_f
        a["leader_residual"] = abs(a["mass_leaders_final"]
                                   - a["mass_leaders_initial"]) / denom_l
        boundary_open = (setup.grid.boundary_of(0) == "outflow"
                         or setup.grid.boundary_of(1) == "outflow")
        tol = np.inf if boundary_open else 1e-10
        a["clean"] = (a["follower_residual"] <= tol
                      and a["leader_residual"] <= tol)
    if not a["clean"]:
        raise AuditError(
            f"conservation audit failed: follower residual "
            f"{a['follower_residual']}, leader residual {a['leader_residual']}")


# ----------------------------------------------------------------------------
# output writers
# ----------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_outputs(setup: Setup, report: RunReport, out_dir: str,
                   collect_fields: bool) -> None:
    os.makedirs(out_dir, exist_ok=True)
    s = setup.scenario
    with open(os.path.join(out_dir, "config_echo.ini"), "w") as fh:
        fh.write(echo_config(s))
    frames = report.frames
    if frames:
        keys = list(frames[0].keys())
        with open(os.path.join(out_dir, "report.csv"), "w") as fh:
            fh.write(",".join(keys) + "\n")
            for fr in frames:
                fh.write(",".join(_fmt(fr[k]) for k in keys) + "\n")
    with open(os.path.join(out_dir, "audit.txt"), "w") as fh:
        for k, v in sorted(report.audit.items()):
            fh.write(f"{k}={_fmt(v)}\n")
        if report.front_decay is not None:
            fh.write(f"front_decay_rate={report.front_decay.rate!r}\n")
            fh.write(f"front_decay_ci={report.front_decay.ci95!r}\n")
        if report.pulse_speed is not None:
            fh.write(f"pulse_speed={report.pulse_speed.speed!r}\n")
            fh.write(f"pulse_speed_ci={report.pulse_speed.ci95!r}\n")
        if report.conversion_peaks is not None:
            fh.write(f"conversion_peaks={report.conversion_peaks}\n")
        for w in s.warnings:
            fh.write(f"warning={w}\n")
    if s.write_fields or collect_fields:
        final = report.snapshots.get("rho_f_final")
        if final is not None:
            field_to_csv(os.path.join(out_dir, "fields_final.csv"),
                         setup.grid, final)
            if s.write_binary:
                field_to_binary(os.path.join(out_dir, "fields_final.bin"),
                                setup.grid, final)
        for key, snap in report.snapshots.items():
            if isinstance(key, tuple) and key[0] == "frame_rho_f":
                tag = f"{key[1]:g}"
                field_to_csv(os.path.join(out_dir, f"fields_{tag}.csv"),
                             setup.grid, snap)
                if s.write_binary:
                    field_to_binary(
                        os.path.join(out_dir, f"fields_{tag}.bin"),
                        setup.grid, snap)
    traj = report.snapshots.get("trajectory")
    if traj and s.write_trajectory:
        with open(os.path.join(out_dir, "trajectory.csv"), "w") as fh:
            fh.write("t,id,species,x,y,theta_x,theta_y\n")
            for row in traj:
                fh.write(",".join(_fmt(v) for v in row) + "\n")


# ----------------------------------------------------------------------------
# comparisons
# ----------------------------------------------------------------------------

def compare(scenario: Scenario, level_a: str, level_b: str,
            out_dir: str | None = None, n_snaps: int = 4) -> dict:
    """Run two levels from the shared initial condition and tabulate
    density errors on common frames."""
    snap_times = tuple(scenario.t_end * (j + 1) / n_snaps
                       for j in range(n_snaps))
    rep_a = run(scenario, level_a, snap_times=snap_times)
    rep_b = run(scenario, level_b, snap_times=snap_times)
    setup = build_setup(scenario)
    rows = []
    for t in snap_times:
        key = ("rho_f", round(t, 9))
        fa = rep_a.snapshots.get(key)
        fb = rep_b.snapshots.get(key)
        if fa is None or fb is None:
            continue
        if fa.shape != fb.shape:
            raise ConfigError("levels produced incompatible grids")
        rows.append({"t": t, "l1": l1_error(fa, fb, setup.grid),
                     "linf": linf_error(fa, fb)})
    result = {
        "levels": (level_a, level_b),
        "rows": rows,
        "pulse_speed_delta": _delta(rep_a.pulse_speed, rep_b.pulse_speed),
        "front_decay_delta": _delta(rep_a.front_decay, rep_b.front_decay),
        "reports": (rep_a, rep_b),
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "compare.csv"), "w") as fh:
            fh.write("t,l1,linf\n")
            for r in rows:
                fh.write(f"{_fmt(r['t'])},{_fmt(r['l1'])},{_fmt(r['linf'])}\n")
    return result


def _delta(a, b) -> float | None:
    if a is None or b is None:
        return None
    va = a.speed if isinstance(a, SpeedFit) else a.rate
    vb = b.speed if isinstance(b, SpeedFit) else b.rate
    return abs(va - vb)


# ----------------------------------------------------------------------------
# coefficient tables
# ----------------------------------------------------------------------------

def coefficient_table(kappas=(0.0, 0.5, 1.0, 2.0, 4.0, 5.0, 10.0),
                      dimensions=(2, 3)) -> list[dict]:
    rows = []
    for n in dimensions:
        for kappa in kappas:
            family = "uniform" if kappa == 0.0 else "von-mises"
            turn = TurnKernel(family=family, concentration=kappa, dimension=n)
            align = AlignmentDistribution(family=family, concentration=kappa,
                                          dimension=n)
            nu1 = eigenvalue_nu1(turn)
            z = coefficient_z(align)
            a0, a1, a3 = coefficients_a(align)
            rows.append({"family": family, "n": n, "kappa": kappa,
                         "nu1": nu1, "z": z, "a0": a0, "a1": a1, "a3": a3})
    return rows


def coefficient_csv_text(rows) -> str:
    cols = ("family", "n", "kappa", "nu1", "z", "a0", "a1", "a3")
    lines = [",".join(cols)]
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(f"{v:.12g}" if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_coefficient_csv(path, rows) -> None:
    with open(path, "w") as fh:
        fh.write(coefficient_csv_text(rows))
