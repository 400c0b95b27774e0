"""End-to-end acceptance gate.

Each test prints a single PASS/FAIL line naming the behavior it certifies,
then asserts it.  Run with `pytest -s tests/test_acceptance.py` to see the
lines as they happen; without -s they appear in captured output on failure.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from mflangevin.dynamics import (SimParams, init_product, step_kinetic,
                                 step_overdamped)
from mflangevin.harness import default_config, emit_outputs, run_preset
from mflangevin.metrics import DecaySeries, entropy_knn, fit_rate, w2_1d
from mflangevin.oracle import (GaussianMoments, QuadraticSpec,
                               evolve_overdamped, gibbs_n_particle,
                               heavy_ball_rate, pl_constant,
                               quadratic_free_energy_gap, stationary_law,
                               stationary_phase_law)
from mflangevin.pde import (GridDensity, discrete_stationary, grid_functionals,
                            stationary_phase_grid, step_gradient_flow,
                            step_vfp)

HALF_LN_2PIE = 0.5 * np.log(2.0 * np.pi * np.e)


def _report(ok: bool, line: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {line}")
    assert ok, line


class TestAcceptance:
    def test_rate_slopes_one_and_one_half_across_curvature_sweep(self):
        t0 = time.perf_counter()
        cfg = default_config("acceleration_sweep")
        results = run_preset(cfg)
        elapsed = time.perf_counter() - t0
        so = results["scalars"]["slope_overdamped"]
        sk = results["scalars"]["slope_kinetic"]
        ok = (abs(so - 1.0) <= 0.05 and abs(sk - 0.5) <= 0.05
              and all(results["verdicts"].values()) and elapsed <= 300.0)
        _report(ok, "curvature sweep: overdamped rate slope "
                    f"{so:.4f} in 1.00+-0.05, kinetic rate slope {sk:.4f} "
                    f"in 0.50+-0.05, finished in {elapsed:.1f}s <= 300s")

    def test_kinetic_decay_bound_holds_pointwise_at_window_edge_damping(self):
        cfg = default_config("theorem_bound")
        assert cfg.theta is None  # default damping is the window edge
        results = run_preset(cfg)
        rows = results["tables"]["bound_slack"]["rows"]
        min_slack = min(min(r[1], r[2]) for r in rows)
        ok = (results["verdicts"]["bound_holds_everywhere"]
              and min_slack >= -1e-10
              and results["scalars"]["theta"] == pytest.approx(cfg.theta_max))
        _report(ok, "explicit decay bound holds pointwise for oracle and "
                    f"phase-space grid runs at all curvatures (min slack "
                    f"{min_slack:.3f} >= -1e-10, damping at window edge "
                    f"{results['scalars']['theta']:.4g})")

    def test_mean_shift_relaxation_rate_is_twice_the_curvature_constant(self):
        q = QuadraticSpec(c=0.5, alpha=1.0, r=0.1)
        lam = pl_constant(q)
        star = stationary_law(q)
        g0 = GaussianMoments([2.0 * np.sqrt(star.cov[0, 0])], star.cov)
        times = np.linspace(0.0, 3.0, 61)
        gaps = np.array([quadratic_free_energy_gap(q, evolve_overdamped(q, g0, t))
                         for t in times])
        rate_o = fit_rate(DecaySeries(times, gaps), burn_in=0.0).rate
        err_o = abs(rate_o / (2.0 * lam) - 1.0)

        spec2 = QuadraticSpec(c=1.0).to_energy_spec()
        axis = (-12.0, 14.0, 512)
        rho = GridDensity.gaussian(2.0, 1.0, axis)
        f_star = grid_functionals(spec2, discrete_stationary(spec2, axis))[
            "free_energy"]
        h = 1e-3
        ts, gs = [0.0], [grid_functionals(spec2, rho)["free_energy"] - f_star]
        for k in range(1, 2001):
            rho = step_gradient_flow(spec2, rho, h)
            if k % 50 == 0:
                ts.append(rho.time)
                gs.append(grid_functionals(spec2, rho)["free_energy"] - f_star)
        rate_p = fit_rate(DecaySeries(np.array(ts), np.array(gs)),
                          burn_in=0.0).rate
        err_p = abs(rate_p / 2.0 - 1.0)
        ok = err_o <= 1e-4 and err_p <= 0.01
        _report(ok, "mean-shift free-energy decay rate equals twice the "
                    f"curvature constant: oracle rel err {err_o:.2e} <= 1e-4, "
                    f"512-cell grid rel err {err_p:.2e} <= 1%")

    def test_damped_oscillator_rate_identity_at_critical_damping(self):
        worst = 0.0
        for lam in np.logspace(-3.0, 3.0, 20):
            gamma = 2.0 * np.sqrt(lam)
            worst = max(worst, abs(heavy_ball_rate(lam, gamma) - 0.5 * gamma))
        ok = worst <= 1e-12
        _report(ok, "critically damped oscillator rate equals gamma/2 over 20 "
                    f"log-spaced curvatures (max abs err {worst:.2e} <= 1e-12)")

    def test_particles_grid_and_moment_odes_agree_on_matched_settings(self):
        results = run_preset(default_config("oracle_crosscheck"))
        ratio = results["scalars"]["refinement_ratio"]
        ok = all(results["verdicts"].values())
        _report(ok, "particles (both schemes) and the grid solver match the "
                    "moment ODEs within statistical / 1% tolerances; halving "
                    f"the cell size cuts the grid error {ratio:.1f}x >= 3x")

    def test_stationary_laws_are_preserved_by_every_engine(self):
        # gradient-flow grid: its discrete equilibrium profile is a fixed point
        spec = QuadraticSpec(c=1.0, alpha=1.0).to_energy_spec()
        rho0 = discrete_stationary(spec, (-8.0, 8.0, 256))
        rho = rho0
        for _ in range(100):
            rho = step_gradient_flow(spec, rho, 1e-3)
        drift_gf = float(np.abs(rho.values - rho0.values).sum()
                         * rho.cell_volume()) / 0.1

        # phase-space grid at h = 1e-4
        spec1 = QuadraticSpec(c=1.0).to_energy_spec()
        nu0 = stationary_phase_grid(spec1, ((-8.0, 8.0, 160), (-8.0, 8.0, 160)))
        nu = nu0
        for _ in range(100):
            nu = step_vfp(spec1, nu, 1e-4, gamma=2.0)
        drift_vfp = float(np.abs(nu.values - nu0.values).sum()
                          * nu.cell_volume()) / 0.01

        # particles at h = 0.01, both schemes, started at equilibrium
        q = QuadraticSpec(c=1.0)
        po = SimParams(step=0.01, horizon=5.0, n_particles=20_000, seed=101)
        ens = init_product(stationary_law(q), po)
        for _ in range(po.n_steps):
            step_overdamped(spec1, ens, po)
        var_o = float(np.var(ens.positions))
        pk = SimParams(step=0.01, horizon=5.0, n_particles=20_000, seed=102,
                       scheme="kinetic-BAOAB", gamma=2.0, dim=1)
        nu_star = stationary_phase_law(q)
        ensk = init_product(GaussianMoments(nu_star.mean[:1],
                                            nu_star.cov[:1, :1]), pk)
        for _ in range(pk.n_steps):
            step_kinetic(spec1, ensk, pk)
        var_k = float(np.var(ensk.positions))

        ok = (drift_gf <= 1e-8 and drift_vfp <= 1e-8
              and abs(var_o - 1.0) <= 0.03 and abs(var_k - 1.0) <= 0.03)
        _report(ok, "equilibrium is preserved: grid drift "
                    f"{drift_gf:.1e}/unit time, phase-space drift "
                    f"{drift_vfp:.1e}/unit time (both <= 1e-8); particle "
                    f"variances {var_o:.4f} / {var_k:.4f} within 3% at h=0.01")

    def test_entropy_transport_inequalities_hold_on_random_gaussians(self):
        results = run_preset(default_config("inequality_suite"))
        rows = results["tables"]["inequality_slacks"]["rows"]
        min_slack = min(min(r[4:]) for r in rows)
        ok = results["verdicts"]["all_inequalities_hold"] and min_slack >= -1e-10
        _report(ok, "log-Sobolev / Talagrand / HWI / gradient-domination "
                    f"inequalities hold on 100 random Gaussians per family "
                    f"(min slack {min_slack:.3e} >= -1e-10)")

    def test_n_particle_gap_never_exceeds_mean_field_constant(self):
        q = QuadraticSpec(c=1.0, alpha=1.0)
        lam = pl_constant(q)
        worst = -np.inf
        for n in range(2, 513):
            _, lam_n = gibbs_n_particle(q, n)
            worst = max(worst, lam_n - lam)
        ok = worst <= 1e-10
        _report(ok, "N-particle equilibrium spectral gap stays at or below the "
                    f"mean-field constant for every N in 2..512 (max excess "
                    f"{worst:.2e} <= 1e-10)")

    def test_transport_entropy_residual_shrinks_per_particle(self):
        results = run_preset(default_config("talagrand_residual"))
        rows = results["tables"]["residual"]["rows"]
        ok = (results["verdicts"]["residual_non_increasing"]
              and results["verdicts"]["residual_nonpositive"]
              and results["verdicts"]["lambda_N_below_lambda_star"])
        _report(ok, "transport-entropy residual per particle is nonpositive "
                    f"and non-increasing in N ({rows[0][1]:.4f} at N=2 down to "
                    f"{rows[-1][1]:.4f} at N=512)")

    def test_estimators_hit_closed_form_targets(self):
        rng = np.random.Generator(np.random.Philox(key=2024))
        x = rng.standard_normal((100_000, 1))
        ent_err = abs(entropy_knn(x) - HALF_LN_2PIE)
        z = rng.standard_normal(4096)
        a, b = 1.0 * z, 1.5 * z
        w2_err = abs(w2_1d(a, b) - 0.5)
        ok = ent_err <= 0.01 and w2_err <= 0.02
        _report(ok, "entropy estimate within 0.01 of the Gaussian value at "
                    f"1e5 samples (err {ent_err:.4f}); 1D transport distance "
                    f"of matched clouds within 0.02 of the scale gap "
                    f"(err {w2_err:.4f})")

    def test_rerun_with_same_config_is_byte_identical(self, tmp_path):
        digests = []
        for sub in ("first", "second"):
            cfg = default_config("acceleration_sweep")
            cfg.output_dir = str(tmp_path / sub)
            emit_outputs(run_preset(cfg), cfg)
            out = Path(cfg.output_dir)
            files = sorted(p.relative_to(out) for p in out.rglob("*.csv"))
            digests.append({str(p): (out / p).read_bytes() for p in files})
        ok = (digests[0].keys() == digests[1].keys() and len(digests[0]) > 0
              and all(digests[0][k] == digests[1][k] for k in digests[0]))
        _report(ok, "rerunning a preset with the same config and seed "
                    f"reproduces all {len(digests[0])} CSV outputs "
                    "byte-for-byte")
