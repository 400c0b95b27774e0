"""Config-driven experiment presets composing the oracle, particle and grid
engines, with deterministic CSV / JSON / SVG outputs.

Presets
    acceleration_sweep   rate-vs-curvature sweep for both dynamics
    theorem_bound        pointwise kinetic free-energy decay bound check
    oracle_crosscheck    particles vs grid vs moment ODEs on matched settings
    chaos_scan           1-particle marginal error and Gibbs residual vs N
    inequality_suite     LSI / Talagrand / HWI / PL-band slacks on random Gaussians
    talagrand_residual   Gibbs-measure Talagrand residual per particle vs N

Every preset is a pure function of (config, seed); reruns with the same
config and seed produce byte-identical CSV files and an identical
report.json apart from the separate timestamp field.
"""

from __future__ import annotations

import dataclasses
import json
import os
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from . import __version__
from .dynamics import SimParams, init_product
from .energy import free_energy, kinetic_free_energy
from .errors import ConfigError
from .metrics import DecaySeries, fit_rate, w2_1d
from .oracle import (GaussianMoments, QuadraticSpec, approx_talagrand_residual,
                     evolve_kinetic, evolve_overdamped, gibbs_kinetic_flow,
                     gibbs_n_particle, inequality_suite, pl_constant,
                     quadratic_free_energy_gap, quadratic_kinetic_free_energy_gap,
                     stationary_law)
from .pde import (GridDensity, discrete_stationary, grid_functionals,
                  stationary_phase_grid, step_gradient_flow, step_vfp)

__all__ = [
    "PRESETS",
    "ExperimentConfig",
    "default_config",
    "run_preset",
    "emit_outputs",
    "emit_toml",
    "parse_toml_text",
    "run_acceleration_sweep",
    "run_theorem_bound",
    "run_oracle_crosscheck",
    "run_chaos_scan",
    "run_inequality_suite",
    "run_talagrand_residual",
]

PRESETS = (
    "acceleration_sweep",
    "theorem_bound",
    "oracle_crosscheck",
    "chaos_scan",
    "inequality_suite",
    "talagrand_residual",
)

THREADS_ENV = "MFLANGEVIN_THREADS"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Flat description of one preset run (TOML-compatible key/value set)."""

    preset: str = "acceleration_sweep"
    seed: int = 0
    output_dir: str = "out"
    threads: int = 0  # 0: use MFLANGEVIN_THREADS or a small default

    # energy family
    confinement: str = "quadratic"
    c: float = 1.0
    q: float = 0.0
    alpha: float = 0.0
    reg_strength: float = 0.0

    # sweep / kinetic parameters
    lambda_grid: List[float] = field(default_factory=lambda: [0.1, 0.01, 0.001])
    big_gamma: float = 2.0
    theta: Optional[float] = None  # default: min(big_gamma/12, 1/(4 big_gamma))
    gamma: Optional[float] = None  # explicit friction; must equal big_gamma*sqrt(lambda*)

    # particle dynamics
    step: float = 0.005
    horizon: Optional[float] = None  # presets choose a scale when unset
    n_particles: int = 4096
    record_every: int = 40

    # grid (x axis, and v axis for phase-space runs)
    grid_lo: float = -8.0
    grid_hi: float = 8.0
    grid_cells: int = 160
    v_lo: float = -8.0
    v_hi: float = 8.0
    v_cells: int = 160

    # initial condition rho_0 = N(init_mean, init_cov_scale * stationary variance)
    init_mean: float = 2.0
    init_cov_scale: float = 4.0

    @property
    def theta_max(self) -> float:
        return min(self.big_gamma / 12.0, 1.0 / (4.0 * self.big_gamma))

    @property
    def theta_resolved(self) -> float:
        return self.theta_max if self.theta is None else self.theta

    @property
    def eta(self) -> float:
        th = self.theta_resolved
        return th / (2.0 * (1.0 + th))

    def quadratic_spec(self) -> QuadraticSpec:
        if self.confinement != "quadratic":
            raise ConfigError("this preset needs the quadratic confinement family")
        return QuadraticSpec(c=self.c, alpha=self.alpha, r=self.reg_strength)

    def lambda_star(self) -> float:
        return pl_constant(self.quadratic_spec())

    def resolved_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get(THREADS_ENV)
        if env is not None:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}")
            if n > 0:
                return n
        return min(8, os.cpu_count() or 1)

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if self.confinement not in ("quadratic", "quartic"):
            raise ConfigError(f"unknown confinement {self.confinement!r}")
        if self.c + 2.0 * self.reg_strength <= 0 or self.alpha < 0:
            raise ConfigError("need c + 2*reg_strength > 0 and alpha >= 0")
        if self.big_gamma <= 0:
            raise ConfigError("big_gamma must be positive")
        if self.theta is not None and not (0.0 < self.theta <= self.theta_max):
            raise ConfigError(
                f"theta = {self.theta} outside the admissible window "
                f"(0, {self.theta_max:g}] = (0, min(big_gamma/12, 1/(4*big_gamma))]")
        if self.step <= 0 or (self.horizon is not None and self.horizon <= 0):
            raise ConfigError("step and horizon must be positive")
        if self.n_particles < 2 or self.record_every < 1:
            raise ConfigError("need n_particles >= 2 and record_every >= 1")
        if not self.lambda_grid or any(l <= 0 for l in self.lambda_grid):
            raise ConfigError("lambda_grid must be non-empty and positive")
        if self.grid_lo >= self.grid_hi or self.v_lo >= self.v_hi:
            raise ConfigError("grid bounds must satisfy lo < hi")
        if self.grid_cells < 8 or self.v_cells < 8:
            raise ConfigError("grids need at least 8 cells per axis")
        if self.init_cov_scale <= 0:
            raise ConfigError("init_cov_scale must be positive")
        if self.gamma is not None:
            if self.confinement != "quadratic":
                raise ConfigError("explicit gamma requires the quadratic family")
            expected = self.big_gamma * np.sqrt(self.lambda_star())
            if abs(self.gamma - expected) > 1e-12 * max(1.0, expected):
                raise ConfigError(
                    f"gamma = {self.gamma} inconsistent with big_gamma*sqrt(lambda*) "
                    f"= {expected!r}; drop one of the two keys")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def default_config(preset: str) -> ExperimentConfig:
    """Bundled defaults: every preset finishes in minutes on one workstation."""
    if preset == "acceleration_sweep":
        return ExperimentConfig(preset=preset)
    if preset == "theorem_bound":
        return ExperimentConfig(preset=preset, lambda_grid=[1.0, 2.0, 4.0],
                                step=0.002, record_every=25,
                                grid_lo=-10.0, grid_hi=10.0, grid_cells=200,
                                init_mean=1.0, init_cov_scale=2.0)
    if preset == "oracle_crosscheck":
        return ExperimentConfig(preset=preset, lambda_grid=[1.0], horizon=2.0,
                                grid_lo=-12.0, grid_hi=14.0, grid_cells=512)
    if preset == "chaos_scan":
        return ExperimentConfig(preset=preset, alpha=1.0, horizon=1.0,
                                lambda_grid=[1.0])
    if preset == "inequality_suite":
        return ExperimentConfig(preset=preset, lambda_grid=[1.0])
    if preset == "talagrand_residual":
        return ExperimentConfig(preset=preset, alpha=1.0, horizon=1.0,
                                lambda_grid=[1.0])
    raise ConfigError(f"unknown preset {preset!r}; choose from {PRESETS}")


def emit_toml(cfg: ExperimentConfig) -> str:
    """Serialize a config to flat TOML; parse(emit(cfg)) round-trips exactly."""
    lines = []
    for f in dataclasses.fields(cfg):
        val = getattr(cfg, f.name)
        if val is None:
            continue
        if isinstance(val, str):
            lines.append(f'{f.name} = "{val}"')
        elif isinstance(val, bool):
            lines.append(f"{f.name} = {str(val).lower()}")
        elif isinstance(val, list):
            lines.append(f"{f.name} = [{', '.join(repr(float(v)) for v in val)}]")
        elif isinstance(val, int):
            lines.append(f"{f.name} = {val}")
        else:
            lines.append(f"{f.name} = {float(val)!r}")
    return "\n".join(lines) + "\n"


def parse_toml_text(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    int_fields = {"seed", "threads", "n_particles", "record_every",
                  "grid_cells", "v_cells"}
    kwargs = {}
    for key, val in data.items():
        if key in int_fields:
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"config key {key} must be an integer")
            kwargs[key] = val
        elif key == "lambda_grid":
            kwargs[key] = [float(v) for v in val]
        elif key in ("preset", "confinement", "output_dir"):
            kwargs[key] = str(val)
        else:
            kwargs[key] = float(val)
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_toml_text(text)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _pool_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _oracle_series(q: QuadraticSpec, g0: GaussianMoments, horizon: float,
                   n_rec: int, kinetic_gamma: Optional[float] = None,
                   label: str = "") -> DecaySeries:
    """Free-energy (or kinetic free-energy) gap along the exact moment flow."""
    times = np.linspace(0.0, horizon, n_rec + 1)
    if kinetic_gamma is None:
        vals = [quadratic_free_energy_gap(q, evolve_overdamped(q, g0, t))
                for t in times]
    else:
        vals = [quadratic_kinetic_free_energy_gap(
            q, evolve_kinetic(q, g0, t, kinetic_gamma)) for t in times]
    return DecaySeries(times, np.array(vals), label=label)


def _bound_min_slack(series: DecaySeries, lam_star: float, theta: float) -> float:
    """Smallest relative slack of the kinetic decay bound along a gap series."""
    pref = (1.0 + theta) / (1.0 - theta)
    rate = theta * np.sqrt(lam_star) / (2.0 * (1.0 + theta))
    g0 = series.values[0]
    bound = pref * np.exp(-rate * series.times) * g0
    return float(np.min((bound - series.values) / g0))


def _table(columns, rows) -> dict:
    return {"columns": list(columns), "rows": [list(map(float, r)) for r in rows]}


# ---------------------------------------------------------------------------
# Preset: acceleration_sweep
# ---------------------------------------------------------------------------

def run_acceleration_sweep(cfg: ExperimentConfig) -> dict:
    """Fit functional decay rates for both dynamics over the curvature grid.

    Uses the exact moment flow (noise-free) with a mean-shifted initial law,
    gamma = big_gamma * sqrt(lambda) per point, horizons 10/lambda and
    10/sqrt(lambda); reports the two log-log slopes against the curvature.
    """
    Gam = cfg.big_gamma
    n_rec = 200

    def point(lam: float):
        q = QuadraticSpec(c=lam)
        s2 = 1.0 / lam
        shift = cfg.init_mean * np.sqrt(s2)
        g0 = GaussianMoments([shift], [[s2]])
        so = _oracle_series(q, g0, 10.0 / lam, n_rec, label=f"F_gap_lam={lam:g}")
        fo = fit_rate(so)
        gam = Gam * np.sqrt(lam)
        nu0 = GaussianMoments([shift, 0.0], np.diag([s2, 1.0]))
        sk = _oracle_series(q, nu0, 10.0 / np.sqrt(lam), n_rec,
                            kinetic_gamma=gam, label=f"Fk_gap_lam={lam:g}")
        fk = fit_rate(sk)
        return lam, fo, fk, so, sk

    points = _pool_map(point, list(cfg.lambda_grid), cfg.resolved_threads())
    rows, series, fits = [], {}, {}
    for lam, fo, fk, so, sk in points:
        rows.append((lam, fo.rate, fk.rate, fk.rate / fo.rate))
        series[so.label] = so
        series[sk.label] = sk
        fits[f"rate_overdamped_lam={lam:g}"] = fo.to_dict()
        fits[f"rate_kinetic_lam={lam:g}"] = fk.to_dict()

    lams = np.array([r[0] for r in rows])
    slope_o = slope_k = float("nan")
    verdicts = {}
    if len(rows) >= 2:
        slope_o = float(np.polyfit(np.log(lams), np.log([r[1] for r in rows]), 1)[0])
        slope_k = float(np.polyfit(np.log(lams), np.log([r[2] for r in rows]), 1)[0])
        verdicts["overdamped_slope_near_1"] = bool(abs(slope_o - 1.0) <= 0.05)
        verdicts["kinetic_slope_near_half"] = bool(abs(slope_k - 0.5) <= 0.05)
    return {
        "preset": cfg.preset,
        "tables": {"acceleration": _table(
            ("lambda_star", "rate_overdamped", "rate_kinetic", "ratio"), rows)},
        "series": series,
        "fits": fits,
        "scalars": {"slope_overdamped": slope_o, "slope_kinetic": slope_k,
                    "big_gamma": Gam},
        "verdicts": verdicts,
        "notes": ["rates are functional decay rates (free energy, kinetic "
                  "free energy), not trajectory rates"],
    }


# ---------------------------------------------------------------------------
# Preset: theorem_bound
# ---------------------------------------------------------------------------

def _vfp_gap_series(q: QuadraticSpec, cfg: ExperimentConfig, gamma: float,
                    horizon: float, label: str) -> DecaySeries:
    spec = q.to_energy_spec()
    axes = ((cfg.grid_lo, cfg.grid_hi, cfg.grid_cells),
            (cfg.v_lo, cfg.v_hi, cfg.v_cells))
    var0 = cfg.init_cov_scale / q.kappa_dev
    m0 = cfg.init_mean
    nu = GridDensity.from_function(
        lambda p: np.exp(-0.5 * (p[:, 0] - m0) ** 2 / var0 - 0.5 * p[:, 1] ** 2),
        axes)
    fk_star = kinetic_free_energy(spec, stationary_phase_grid(spec, axes))
    h = cfg.step
    n_steps = int(round(horizon / h))
    times = [0.0]
    gaps = [grid_functionals(spec, nu)["kinetic_free_energy"] - fk_star]
    for k in range(1, n_steps + 1):
        nu = step_vfp(spec, nu, h, gamma)
        if k % cfg.record_every == 0:
            times.append(nu.time)
            gaps.append(grid_functionals(spec, nu)["kinetic_free_energy"] - fk_star)
    return DecaySeries(np.array(times), np.array(gaps), label=label)


def run_theorem_bound(cfg: ExperimentConfig) -> dict:
    """Check the explicit kinetic decay bound pointwise on noise-free runs.

    For each curvature in lambda_grid: the exact moment flow and the
    phase-space grid solver are both checked against
    gap(t) <= (1+theta)/(1-theta) * exp(-theta*sqrt(lambda)*t/(2(1+theta))) * gap(0).
    """
    theta = cfg.theta_resolved
    Gam = cfg.big_gamma
    rows, series = [], {}

    def point(lam: float):
        q = QuadraticSpec(c=lam)
        gam = Gam * np.sqrt(lam)
        s2 = 1.0 / lam
        horizon = cfg.horizon if cfg.horizon is not None else 6.0 / np.sqrt(lam)
        nu0 = GaussianMoments([cfg.init_mean, 0.0],
                              np.diag([cfg.init_cov_scale * s2, 1.0]))
        so = _oracle_series(q, nu0, horizon, 120, kinetic_gamma=gam,
                            label=f"Fk_gap_oracle_lam={lam:g}")
        sp = _vfp_gap_series(q, cfg, gam, horizon, f"Fk_gap_pde_lam={lam:g}")
        return lam, so, sp

    points = _pool_map(point, list(cfg.lambda_grid), cfg.resolved_threads())
    worst = -np.inf
    for lam, so, sp in points:
        slack_o = _bound_min_slack(so, lam, theta)
        slack_p = _bound_min_slack(sp, lam, theta)
        rows.append((lam, slack_o, slack_p))
        series[so.label] = so
        series[sp.label] = sp
        worst = max(worst, -slack_o, -slack_p)
    verdict = bool(all(s_o >= -1e-10 and s_p >= -1e-10 for _, s_o, s_p in rows))
    return {
        "preset": cfg.preset,
        "tables": {"bound_slack": _table(
            ("lambda_star", "min_slack_oracle", "min_slack_pde"), rows)},
        "series": series,
        "fits": {},
        "scalars": {"theta": theta, "eta": cfg.eta,
                    "prefactor": (1.0 + theta) / (1.0 - theta),
                    "max_violation": float(max(worst, 0.0))},
        "verdicts": {"bound_holds_everywhere": verdict},
        "notes": ["slack is (bound - gap)/gap(0); the bound rate is far below "
                  "the observed spectral rate, so large slack is expected"],
    }


# ---------------------------------------------------------------------------
# Preset: oracle_crosscheck
# ---------------------------------------------------------------------------

def _particle_moments(cfg: ExperimentConfig, q: QuadraticSpec, kinetic: bool,
                      seed_offset: int):
    spec = q.to_energy_spec()
    lam = pl_constant(q)
    horizon = cfg.horizon if cfg.horizon is not None else 2.0
    gam = cfg.big_gamma * np.sqrt(lam) if kinetic else None
    params = SimParams(step=cfg.step, horizon=horizon,
                       n_particles=cfg.n_particles, dim=1,
                       scheme="kinetic-BAOAB" if kinetic else "overdamped-EM",
                       gamma=gam, record_every=cfg.record_every,
                       seed=cfg.seed + seed_offset)
    var0 = cfg.init_cov_scale / q.kappa_dev
    ens = init_product(GaussianMoments([cfg.init_mean], [[var0]]), params)
    from .dynamics import step_kinetic, step_overdamped
    step = step_kinetic if kinetic else step_overdamped
    times, means, variances, fgaps = [], [], [], []
    f_star = free_energy(spec, stationary_law(q))

    def record():
        times.append(ens.time)
        means.append(float(np.mean(ens.positions)))
        variances.append(float(np.var(ens.positions, ddof=1)))
        fgaps.append(free_energy(spec, ens.positions) - f_star)

    record()
    for k in range(1, params.n_steps + 1):
        step(spec, ens, params)
        if k % cfg.record_every == 0:
            record()
    return (np.array(times), np.array(means), np.array(variances),
            np.array(fgaps))


def _grid_moments(cfg: ExperimentConfig, q: QuadraticSpec, cells: int):
    spec = q.to_energy_spec()
    axis = (cfg.grid_lo, cfg.grid_hi, cells)
    var0 = cfg.init_cov_scale / q.kappa_dev
    rho = GridDensity.gaussian(cfg.init_mean, var0, axis)
    f_star = grid_functionals(spec, discrete_stationary(spec, axis))["free_energy"]
    horizon = cfg.horizon if cfg.horizon is not None else 2.0
    h = cfg.step
    n_steps = int(round(horizon / h))
    times, means, variances, fgaps = [], [], [], []

    def record(g):
        x = g.centers(0)
        w = g.masses()
        m = float(w @ x)
        times.append(g.time)
        means.append(m)
        variances.append(float(w @ np.square(x - m)))
        fgaps.append(grid_functionals(spec, g)["free_energy"] - f_star)

    record(rho)
    for k in range(1, n_steps + 1):
        rho = step_gradient_flow(spec, rho, h)
        if k % cfg.record_every == 0:
            record(rho)
    return np.array(times), np.array(means), np.array(variances), np.array(fgaps)


def _oracle_moments(q: QuadraticSpec, cfg: ExperimentConfig, times: np.ndarray,
                    kinetic: bool):
    s2 = cfg.init_cov_scale / q.kappa_dev
    if kinetic:
        gam = cfg.big_gamma * np.sqrt(pl_constant(q))
        g0 = GaussianMoments([cfg.init_mean, 0.0], np.diag([s2, 1.0]))
        laws = [evolve_kinetic(q, g0, t, gam) for t in times]
        means = np.array([g.mean[0] for g in laws])
        variances = np.array([g.cov[0, 0] for g in laws])
        # compare position-marginal free energies (the particle side records
        # the same quantity from the sample cloud)
        fgaps = np.array([quadratic_free_energy_gap(
            q, GaussianMoments(g.mean[:1], g.cov[:1, :1])) for g in laws])
    else:
        g0 = GaussianMoments([cfg.init_mean], [[s2]])
        laws = [evolve_overdamped(q, g0, t) for t in times]
        means = np.array([g.mean[0] for g in laws])
        variances = np.array([g.cov[0, 0] for g in laws])
        fgaps = np.array([quadratic_free_energy_gap(q, g) for g in laws])
    return means, variances, fgaps


def run_oracle_crosscheck(cfg: ExperimentConfig) -> dict:
    """Compare particles, grid solver and moment ODEs on matched settings."""
    q = cfg.quadratic_spec()
    tol_particles = 5.0 * np.sqrt(2.0 / cfg.n_particles)
    tol_pde = 0.01
    rows, verdicts, scalars = [], {}, {}

    # particles (both schemes) against the moment ODEs
    for kinetic, tag in ((False, "overdamped"), (True, "kinetic")):
        times, means, variances, fgaps = _particle_moments(cfg, q, kinetic, 17 if kinetic else 3)
        o_means, o_vars, o_fgaps = _oracle_moments(q, cfg, times, kinetic)
        d_mean = float(np.max(np.abs(means - o_means) / np.sqrt(o_vars)))
        d_var = float(np.max(np.abs(variances / o_vars - 1.0)))
        d_f = float(np.max(np.abs(fgaps - o_fgaps)) / max(o_fgaps[0], 1e-300))
        ok = d_mean <= tol_particles and d_var <= tol_particles and d_f <= tol_particles
        rows.append((0.0 if not kinetic else 1.0, cfg.n_particles, d_mean, d_var, d_f))
        verdicts[f"particles_{tag}_match_oracle"] = bool(ok)

    # grid solver at two resolutions against the overdamped moment ODEs
    grid_errs = {}
    for cells in (cfg.grid_cells, 2 * cfg.grid_cells):
        times, means, variances, fgaps = _grid_moments(cfg, q, cells)
        o_means, o_vars, o_fgaps = _oracle_moments(q, cfg, times, kinetic=False)
        scale = np.sqrt(o_vars)
        err = max(float(np.max(np.abs(means - o_means) / scale)),
                  float(np.max(np.abs(variances / o_vars - 1.0))))
        d_f = float(np.max(np.abs(fgaps - o_fgaps)) / max(o_fgaps[0], 1e-300))
        grid_errs[cells] = err
        verdicts[f"pde_{cells}_match_oracle"] = bool(err <= tol_pde and d_f <= tol_pde)
        rows.append((2.0, cells, err, err, d_f))

    coarse, fine = cfg.grid_cells, 2 * cfg.grid_cells
    ratio = grid_errs[coarse] / max(grid_errs[fine], 1e-300)
    verdicts["grid_refinement_reduces_error_3x"] = bool(ratio >= 3.0)
    scalars.update({"tol_particles": tol_particles, "tol_pde": tol_pde,
                    "refinement_ratio": float(ratio)})
    return {
        "preset": cfg.preset,
        "tables": {"crosscheck": _table(
            ("kind", "size", "disc_mean", "disc_var", "disc_free_energy"), rows)},
        "series": {},
        "fits": {},
        "scalars": scalars,
        "verdicts": verdicts,
        "notes": ["kind: 0 overdamped particles, 1 kinetic particles, 2 grid; "
                  "mean discrepancies are scaled by the exact standard deviation"],
    }


# ---------------------------------------------------------------------------
# Preset: chaos_scan
# ---------------------------------------------------------------------------

def run_chaos_scan(cfg: ExperimentConfig) -> dict:
    """1-particle marginal error vs N, plus the Gibbs Talagrand residual."""
    q = cfg.quadratic_spec()
    spec = q.to_energy_spec()
    lam = pl_constant(q)
    horizon = cfg.horizon if cfg.horizon is not None else 1.0
    t_final = horizon
    s2 = cfg.init_cov_scale / q.kappa_dev
    g0 = GaussianMoments([cfg.init_mean], [[s2]])
    law_t = evolve_overdamped(q, g0, t_final)
    m_ref = max(4096, 2 * cfg.n_particles)
    from scipy.special import ndtri
    u = (np.arange(m_ref) + 0.5) / m_ref
    ref = float(law_t.mean[0]) + np.sqrt(float(law_t.cov[0, 0])) * ndtri(u)

    ns = []
    n = 64
    while n <= cfg.n_particles:
        ns.append(n)
        n *= 2

    def point(args):
        idx, n = args
        params = SimParams(step=cfg.step, horizon=horizon, n_particles=n, dim=1,
                           scheme="overdamped-EM", record_every=max(1, int(round(
                               horizon / cfg.step))), seed=cfg.seed + 1000 + idx)
        ens = init_product(g0, params)
        from .dynamics import step_overdamped
        for _ in range(params.n_steps):
            step_overdamped(spec, ens, params)
        x = ens.positions[:, 0]
        w2 = w2_1d(x, ref)
        folds = np.array([w2_1d(x[j::4], ref) for j in range(4)])
        se = float(np.std(folds, ddof=1) / 2.0)  # fluctuation halves at 4x size
        return n, w2, se

    points = _pool_map(point, list(enumerate(ns)), cfg.resolved_threads())

    g0k = GaussianMoments([cfg.init_mean, 0.0], np.diag([s2, 1.0]))
    gam = cfg.big_gamma * np.sqrt(lam)
    rows = []
    for n, w2, se in points:
        if n <= 512:
            rho_n = gibbs_kinetic_flow(q, n, g0k, t_final, gam)
            res = approx_talagrand_residual(q, n, rho_n, lam) / n
        else:
            res = float("nan")
        rows.append((n, w2, se, res))

    w2s = [r[1] for r in rows]
    ses = [r[2] for r in rows]
    decreasing = all(w2s[i + 1] <= w2s[i] + 2.0 * (ses[i] + ses[i + 1])
                     for i in range(len(w2s) - 1))
    res_vals = [r[3] for r in rows if np.isfinite(r[3])]
    res_mono = all(res_vals[i + 1] <= res_vals[i] + 1e-10
                   for i in range(len(res_vals) - 1))
    return {
        "preset": cfg.preset,
        "tables": {"chaos": _table(
            ("N", "w2_marginal_to_oracle", "w2_std_error", "residual_per_particle"),
            rows)},
        "series": {},
        "fits": {},
        "scalars": {"t_final": t_final, "lambda_star": lam},
        "verdicts": {"w2_decreasing_in_N": bool(decreasing),
                     "residual_non_increasing": bool(res_mono),
                     "residual_nonpositive": bool(all(v <= 0 for v in res_vals))},
        "notes": ["residual_per_particle uses the exact Gaussian N-particle "
                  "kinetic flow; entries above N=512 are omitted (dense caps)"],
    }


# ---------------------------------------------------------------------------
# Preset: inequality_suite
# ---------------------------------------------------------------------------

def run_inequality_suite(cfg: ExperimentConfig, n_draws: int = 100) -> dict:
    """Slack sweep for LSI / Talagrand / HWI / PL-band over random Gaussians."""
    variants = [(cfg.c, cfg.alpha, cfg.reg_strength), (1.0, 1.0, 0.0),
                (0.5, 0.0, 0.25)]
    seen, specs = set(), []
    for v in variants:
        if v not in seen:
            seen.add(v)
            specs.append(v)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    rows = []
    all_hold = True
    for c, alpha, r in specs:
        q = QuadraticSpec(c=c, alpha=alpha, r=r)
        lam = pl_constant(q)
        b = stationary_law(q)
        mins = {k: np.inf for k in ("lsi", "talagrand", "hwi", "pl_band")}
        for _ in range(n_draws):
            mean = rng.uniform(-3.0, 3.0)
            var = float(b.cov[0, 0]) * np.exp(rng.uniform(-1.5, 1.5))
            rec = inequality_suite(GaussianMoments([mean], [[var]]), b, lam)
            for k, v in rec["slacks"].items():
                mins[k] = min(mins[k], v)
            all_hold = all_hold and all(rec["holds"].values())
        rows.append((c, alpha, r, lam, mins["lsi"], mins["talagrand"],
                     mins["hwi"], mins["pl_band"]))
    return {
        "preset": cfg.preset,
        "tables": {"inequality_slacks": _table(
            ("c", "alpha", "reg_strength", "lambda_star", "min_lsi",
             "min_talagrand", "min_hwi", "min_pl_band"), rows)},
        "series": {},
        "fits": {},
        "scalars": {"n_draws": float(n_draws)},
        "verdicts": {"all_inequalities_hold": bool(all_hold)},
        "notes": [],
    }


# ---------------------------------------------------------------------------
# Preset: talagrand_residual
# ---------------------------------------------------------------------------

def run_talagrand_residual(cfg: ExperimentConfig) -> dict:
    """Gibbs-measure Talagrand residual per particle over a doubling N grid."""
    q = cfg.quadratic_spec()
    lam = pl_constant(q)
    t_final = cfg.horizon if cfg.horizon is not None else 1.0
    gam = cfg.big_gamma * np.sqrt(lam)
    s2 = cfg.init_cov_scale / q.kappa_dev
    g0 = GaussianMoments([cfg.init_mean, 0.0], np.diag([s2, 1.0]))
    ns = [2, 4, 8, 16, 32, 64, 128, 256, 512]

    def point(n):
        rho_n = gibbs_kinetic_flow(q, n, g0, t_final, gam)
        lam_n = gibbs_n_particle(q, n)[1]
        return n, approx_talagrand_residual(q, n, rho_n, lam) / n, lam_n

    points = _pool_map(point, ns, cfg.resolved_threads())
    rows = [(n, res, lam_n) for n, res, lam_n in points]
    res_vals = [r[1] for r in rows]
    mono = all(res_vals[i + 1] <= res_vals[i] + 1e-10
               for i in range(len(res_vals) - 1))
    return {
        "preset": cfg.preset,
        "tables": {"residual": _table(("N", "residual_per_particle", "lambda_N"),
                                      rows)},
        "series": {},
        "fits": {},
        "scalars": {"t_final": t_final, "lambda_star": lam},
        "verdicts": {"residual_non_increasing": bool(mono),
                     "residual_nonpositive": bool(all(v <= 1e-10 for v in res_vals)),
                     "lambda_N_below_lambda_star": bool(all(
                         r[2] <= lam + 1e-10 for r in rows))},
        "notes": [],
    }


# ---------------------------------------------------------------------------
# Dispatch and output
# ---------------------------------------------------------------------------

_RUNNERS = {
    "acceleration_sweep": run_acceleration_sweep,
    "theorem_bound": run_theorem_bound,
    "oracle_crosscheck": run_oracle_crosscheck,
    "chaos_scan": run_chaos_scan,
    "inequality_suite": run_inequality_suite,
    "talagrand_residual": run_talagrand_residual,
}


def run_preset(cfg: ExperimentConfig) -> dict:
    cfg.validate()
    return _RUNNERS[cfg.preset](cfg)


def _write_table_csv(path: Path, table: dict) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(table["columns"]) + "\n")
        for row in table["rows"]:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _plot_outputs(results: dict, cfg: ExperimentConfig, plots_dir: Path) -> List[str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = str(cfg.seed)
    written = []

    if results.get("series"):
        fig, ax = plt.subplots(figsize=(7, 5))
        for name, s in sorted(results["series"].items()):
            pos = s.values > 0
            ax.semilogy(s.times[pos], s.values[pos], label=name)
        ax.set_xlabel("time")
        ax.set_ylabel("free-energy gap")
        ax.legend(fontsize=7)
        ax.set_title(results["preset"])
        path = plots_dir / "decay.svg"
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(str(path))

    if results["preset"] == "acceleration_sweep":
        tab = results["tables"]["acceleration"]
        lams = np.array([r[0] for r in tab["rows"]])
        ro = np.array([r[1] for r in tab["rows"]])
        rk = np.array([r[2] for r in tab["rows"]])
        fig, ax = plt.subplots(figsize=(6, 5))
        ax.loglog(lams, ro, "o-", label="overdamped rate")
        ax.loglog(lams, rk, "s-", label="kinetic rate")
        ax.loglog(lams, 2.0 * lams, "--", label="slope 1 reference (2*lambda)")
        ax.loglog(lams, 2.0 * np.sqrt(lams), ":",
                  label="slope 1/2 reference (2*sqrt(lambda))")
        ax.set_xlabel("lambda_star")
        ax.set_ylabel("fitted functional rate")
        ax.legend(fontsize=8)
        path = plots_dir / "rates_vs_lambda.svg"
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(str(path))
    return written


def emit_outputs(results: dict, cfg: ExperimentConfig) -> dict:
    """Write series/*.csv, tables/*.csv, plots/*.svg and report.json.

    Everything except the separate timestamp field is a pure function of
    (config, seed), so reruns are byte-identical on the CSV side.
    """
    out = Path(cfg.output_dir)
    try:
        for sub in ("series", "tables", "plots"):
            (out / sub).mkdir(parents=True, exist_ok=True)
        for name, series in sorted(results.get("series", {}).items()):
            series.to_csv(out / "series" / f"{name}.csv")
        for name, table in sorted(results.get("tables", {}).items()):
            _write_table_csv(out / "tables" / f"{name}.csv", table)
        plot_files = _plot_outputs(results, cfg, out / "plots")
        report = {
            "preset": results["preset"],
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "mflangevin": __version__,
            },
            "fits": results.get("fits", {}),
            "scalars": results.get("scalars", {}),
            "verdicts": results.get("verdicts", {}),
            "tables": results.get("tables", {}),
            "notes": results.get("notes", []),
            "plots": [Path(p).name for p in plot_files],
            "timestamps": {"written_at": datetime.now(timezone.utc).isoformat()},
        }
        with open(out / "report.json", "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        raise ConfigError(f"cannot write outputs under {out}: {exc}") from exc
    return report
