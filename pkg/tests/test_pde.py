import numpy as np
import pytest

from mflangevin.energy import EnergySpec, free_energy, quadratic, quadratic_pair
from mflangevin.errors import DivergenceError, ValidationError
from mflangevin.metrics import w2_1d_weighted
from mflangevin.oracle import (GaussianMoments, QuadraticSpec, evolve_kinetic,
                               evolve_overdamped)
from mflangevin.pde import (GridDensity, discrete_stationary, grid_functionals,
                            stationary_phase_grid, step_gradient_flow, step_vfp)


def spec_quadratic(c=1.0):
    return EnergySpec(confinement=quadratic(c))


class TestGridDensity:
    def test_geometry(self):
        g = GridDensity(((0.0, 1.0, 4),), np.full(4, 1.0))
        assert g.spacing(0) == pytest.approx(0.25)
        assert g.centers(0) == pytest.approx([0.125, 0.375, 0.625, 0.875])
        assert g.mass() == pytest.approx(1.0)
        g.validate()

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            GridDensity(((0.0, 1.0, 4),), np.zeros(5))

    def test_validate_flags_negative_and_unnormalized(self):
        bad = GridDensity(((0.0, 1.0, 4),), np.array([2.0, 2.0, 1.0, -1.0]))
        with pytest.raises(ValidationError):
            bad.validate()
        off = GridDensity(((0.0, 1.0, 4),), np.full(4, 2.0))
        with pytest.raises(ValidationError):
            off.validate()
        off.normalized().validate()

    def test_marginal_of_product_grid(self):
        axes = ((-5.0, 5.0, 64), (-4.0, 4.0, 32))
        g = GridDensity.from_function(
            lambda p: np.exp(-0.5 * p[:, 0] ** 2 - 0.5 * p[:, 1] ** 2), axes)
        m = g.marginal(axis=0)
        ref = GridDensity.gaussian(0.0, 1.0, axes[0])
        assert np.allclose(m.values, ref.values, atol=1e-8)
        assert m.mass() == pytest.approx(1.0, abs=1e-12)

    def test_csv_export(self, tmp_path):
        g = GridDensity.gaussian(0.0, 1.0, (-5.0, 5.0, 32))
        path = tmp_path / "grid.csv"
        g.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,density"
        assert len(lines) == 33


class TestGradientFlow:
    def test_discrete_stationary_profile_is_fixed(self):
        spec = spec_quadratic()
        rho = discrete_stationary(spec, (-8.0, 8.0, 128))
        out = rho
        for _ in range(20):
            out = step_gradient_flow(spec, out, 1e-3)
        assert np.max(np.abs(out.values - rho.values)) < 1e-12

    def test_self_consistent_stationary_with_interaction(self):
        spec = EnergySpec(confinement=quadratic(1.0),
                          interaction=quadratic_pair(1.0))
        rho = discrete_stationary(spec, (-8.0, 8.0, 256))
        out = step_gradient_flow(spec, rho, 1e-3)
        assert np.max(np.abs(out.values - rho.values)) < 1e-11
        # stationary variance 1/(c + alpha)
        x = rho.centers(0)
        var = float(rho.masses() @ x**2)
        assert var == pytest.approx(0.5, rel=1e-6)

    def test_mass_conserved_over_many_steps(self):
        spec = spec_quadratic()
        rho = GridDensity.gaussian(0.0, 4.0, (-8.0, 8.0, 128))
        for _ in range(10_000):
            rho = step_gradient_flow(spec, rho, 1e-3)
        assert abs(rho.mass() - 1.0) < 1e-12

    def test_variance_trajectory_matches_moment_ode(self):
        spec = spec_quadratic()
        q = QuadraticSpec(c=1.0)
        rho = GridDensity.gaussian(0.0, 4.0, (-8.0, 8.0, 512))
        h = 1e-4
        for _ in range(10_000):
            rho = step_gradient_flow(spec, rho, h)
        x = rho.centers(0)
        var = float(rho.masses() @ x**2)
        exact = evolve_overdamped(q, GaussianMoments([0.0], [[4.0]]),
                                  1.0).cov[0, 0]
        assert var == pytest.approx(exact, rel=0.01)

    def test_free_energy_dissipates(self):
        spec = spec_quadratic()
        rho = GridDensity.gaussian(1.5, 3.0, (-9.0, 9.0, 128))
        prev = grid_functionals(spec, rho)["free_energy"]
        for _ in range(40):
            for _ in range(5):
                rho = step_gradient_flow(spec, rho, 2e-3)
            cur = grid_functionals(spec, rho)["free_energy"]
            assert cur <= prev + 1e-8
            prev = cur

    def test_oversized_step_rejected_with_suggestion(self):
        spec = spec_quadratic(c=50.0)
        rho = GridDensity.gaussian(1.5, 0.005, (-2.0, 2.0, 256))
        with pytest.raises(DivergenceError, match="h <="):
            out = rho
            for _ in range(50):
                out = step_gradient_flow(spec, out, 0.5)

    def test_only_one_axis_supported(self):
        g = GridDensity.from_function(
            lambda p: np.exp(-p[:, 0] ** 2 - p[:, 1] ** 2),
            ((-4.0, 4.0, 16), (-4.0, 4.0, 16)))
        with pytest.raises(ValidationError):
            step_gradient_flow(spec_quadratic(), g, 1e-3)


class TestVFP:
    AXES = ((-8.0, 8.0, 160), (-8.0, 8.0, 160))

    def test_stationary_product_profile_is_fixed_to_scheme_order(self):
        spec = spec_quadratic()
        nu = stationary_phase_grid(spec, self.AXES)
        out = nu
        h = 1e-3
        for _ in range(100):
            out = step_vfp(spec, out, h, gamma=2.0)
        drift = np.abs(out.values - nu.values).sum() * nu.cell_volume()
        assert drift / (100 * h) < 1e-6

    def test_covariance_trajectory_matches_moment_ode(self):
        spec = spec_quadratic()
        q = QuadraticSpec(c=1.0)
        axes = ((-10.0, 10.0, 160), (-8.0, 8.0, 160))
        nu = GridDensity.from_function(
            lambda p: np.exp(-0.5 * p[:, 0] ** 2 / 4.0 - 0.5 * p[:, 1] ** 2),
            axes)
        h = 1e-3
        for _ in range(1000):
            nu = step_vfp(spec, nu, h, gamma=2.0)
        pts = nu.cell_centers()
        w = nu.masses()
        var_x = float(w @ pts[:, 0] ** 2) - float(w @ pts[:, 0]) ** 2
        var_v = float(w @ pts[:, 1] ** 2) - float(w @ pts[:, 1]) ** 2
        g0 = GaussianMoments([0.0, 0.0], np.diag([4.0, 1.0]))
        exact = evolve_kinetic(q, g0, 1.0, 2.0)
        assert var_x == pytest.approx(exact.cov[0, 0], rel=0.01)
        assert var_v == pytest.approx(exact.cov[1, 1], rel=0.01)
        assert abs(nu.mass() - 1.0) < 1e-12
        assert abs(nu.marginal(0).mass() - 1.0) < 1e-12

    def test_kinetic_free_energy_dissipates(self):
        spec = spec_quadratic()
        nu = GridDensity.from_function(
            lambda p: np.exp(-0.5 * (p[:, 0] - 1.0) ** 2 / 2.0
                             - 0.5 * p[:, 1] ** 2), self.AXES)
        prev = grid_functionals(spec, nu)["kinetic_free_energy"]
        for _ in range(20):
            for _ in range(25):
                nu = step_vfp(spec, nu, 2e-3, gamma=2.0)
            cur = grid_functionals(spec, nu)["kinetic_free_energy"]
            assert cur <= prev + 1e-8
            prev = cur

    def test_high_friction_marginal_tracks_gradient_flow(self):
        # at large friction the slow relaxation rate drops to ~2c/gamma, so
        # run the phase-space solver to a matched long time where both flows
        # have reached their discrete stationary profiles
        spec = spec_quadratic()
        gamma = 50.0
        axes = ((-8.0, 8.0, 96), (-8.0, 8.0, 96))
        nu = GridDensity.from_function(
            lambda p: np.exp(-0.5 * p[:, 0] ** 2 / 2.0 - 0.5 * p[:, 1] ** 2),
            axes)
        h = 0.01
        for _ in range(15_000):
            nu = step_vfp(spec, nu, h, gamma=gamma)
        marg = nu.marginal(axis=0)
        rho = GridDensity.gaussian(0.0, 2.0, axes[0])
        hg = 1e-3
        for _ in range(3000):
            rho = step_gradient_flow(spec, rho, hg)
        w2 = w2_1d_weighted(marg.centers(0), np.maximum(marg.masses(), 0.0)
                            / max(marg.mass(), 1e-300),
                            rho.centers(0), rho.masses())
        assert w2 < 0.02

    def test_needs_two_axes(self):
        rho = GridDensity.gaussian(0.0, 1.0, (-8.0, 8.0, 64))
        with pytest.raises(ValidationError):
            step_vfp(spec_quadratic(), rho, 1e-3, gamma=1.0)


class TestGridFunctionals:
    def test_uniform_density_has_zero_entropy(self):
        g = GridDensity(((0.0, 1.0, 50),), np.full(50, 1.0))
        spec = EnergySpec(confinement=quadratic(1e-300))
        out = grid_functionals(spec, g)
        assert out["entropy"] == pytest.approx(0.0, abs=1e-12)
        assert out["free_energy"] == pytest.approx(0.0, abs=1e-10)

    def test_gaussian_entropy_by_quadrature(self):
        g = GridDensity.gaussian(0.0, 1.0, (-8.0, 8.0, 512))
        out = grid_functionals(spec_quadratic(), g)
        assert out["entropy"] == pytest.approx(-1.4189385332046727, abs=1e-4)

    def test_discrete_stationary_phase_product_recenters_to_zero(self):
        spec = spec_quadratic()
        axes = ((-8.0, 8.0, 256), (-8.0, 8.0, 256))
        nu = stationary_phase_grid(spec, axes)
        fk = grid_functionals(spec, nu)["kinetic_free_energy"]
        star = free_energy(spec, GaussianMoments([0.0], [[1.0]]))
        assert fk == pytest.approx(star, abs=1e-4)

    def test_position_functionals_on_phase_grid_use_marginal(self):
        spec = spec_quadratic()
        axes = ((-8.0, 8.0, 128), (-8.0, 8.0, 128))
        nu = stationary_phase_grid(spec, axes)
        out = grid_functionals(spec, nu)
        assert out["M2"] == pytest.approx(1.0, rel=1e-6)
        assert out["energy"] == pytest.approx(0.5, rel=1e-6)
