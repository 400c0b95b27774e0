"""Mean-field Langevin laboratory.

Interacting-particle simulators, deterministic Fokker-Planck grid solvers
and exact Gaussian moment oracles for the overdamped and kinetic mean-field
Langevin dynamics, plus a config-driven experiment harness.
"""

from .energy import (EnergySpec, ParticleEnsemble, free_energy, intrinsic_derivative,
                     kinetic_free_energy, mean_field_force, quadratic, quadratic_pair,
                     quartic, spec_from_config, un_potential)
from .dynamics import SimParams, init_product, simulate, step_kinetic, step_overdamped
from .metrics import (DecaySeries, RateFit, entropy_knn, empirical_mean_cov, fit_rate,
                      second_moment, w2_1d, w2_assignment)
from .oracle import (GaussianMoments, QuadraticSpec, evolve_kinetic, evolve_overdamped,
                     gaussian_fisher, gaussian_kl, gaussian_w2, gibbs_n_particle,
                     heavy_ball_rate, inequality_suite, pl_constant, pl_ratio_oracle,
                     stationary_law, stationary_phase_law)
from .pde import GridDensity, grid_functionals, step_gradient_flow, step_vfp

__version__ = "0.1.0"

from .harness import (PRESETS, ExperimentConfig, default_config, emit_outputs,
                      emit_toml, parse_toml_text, run_preset)
