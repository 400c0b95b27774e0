"""Time-stepping of the N-particle overdamped and kinetic Langevin systems.

Overdamped: Euler-Maruyama.  Kinetic: BAOAB splitting with an exact
Ornstein-Uhlenbeck velocity refresh and one force evaluation per step
(the force from the closing kick is cached on the ensemble and reused by
the next step's opening kick).  All randomness comes from a counter-based
Philox generator seeded from SimParams.seed, so trajectories are
bit-reproducible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np

from .energy import (EnergySpec, ParticleEnsemble, free_energy,
                     kinetic_free_energy, mean_field_force)
from .errors import DivergenceError, ValidationError
from .metrics import DecaySeries, second_moment, w2_1d

__all__ = [
    "SimParams",
    "init_product",
    "step_overdamped",
    "step_kinetic",
    "o_step",
    "simulate",
    "OBSERVABLES",
]

SCHEMES = ("overdamped-EM", "kinetic-BAOAB")

OBSERVABLES = ("free_energy", "kinetic_free_energy", "M2", "mean", "covariance",
               "w2_to_reference")


@dataclass
class SimParams:
    """Scheme, step size, horizon, ensemble size and seed for one run."""

    step: float
    horizon: float
    n_particles: int
    dim: int = 1
    scheme: str = "overdamped-EM"
    gamma: Optional[float] = None
    record_every: int = 1
    seed: int = 0
    allow_large_step: bool = False

    def __post_init__(self):
        if self.step <= 0 or self.horizon < 0:
            raise ValidationError("need step > 0 and horizon >= 0")
        if self.n_particles < 1 or self.dim < 1:
            raise ValidationError("need n_particles >= 1 and dim >= 1")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}")
        if self.is_kinetic and (self.gamma is None or self.gamma <= 0):
            raise ValidationError("kinetic scheme needs friction gamma > 0")
        if self.horizon / self.step > 2**53:
            raise ValidationError("horizon/step does not fit in an integer count")

    @property
    def is_kinetic(self) -> bool:
        return self.scheme == "kinetic-BAOAB"

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))

    def check_step_guard(self, spec: EnergySpec) -> None:
        """Enforce h <= 1/(2L) against the declared force Lipschitz constant."""
        L = spec.force_lipschitz
        if L is None or L == 0:
            return
        if self.step > 1.0 / (2.0 * L):
            if self.allow_large_step:
                warnings.warn(f"step {self.step} exceeds stability guard 1/(2L)="
                              f"{1.0 / (2.0 * L):g} (override active)")
            else:
                raise ValidationError(
                    f"step {self.step} exceeds 1/(2L) = {1.0 / (2.0 * L):g}; "
                    "set allow_large_step=True to override")

    def make_rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed))


def init_product(rho0_sampler, params: SimParams) -> ParticleEnsemble:
    """Draw positions i.i.d. from rho0; kinetic runs get equilibrium velocities.

    rho0_sampler is either a callable (rng, n, d) -> (n, d) or an object with
    mean/cov (a Gaussian), sampled directly.
    """
    rng = params.make_rng()
    n, d = params.n_particles, params.dim
    if callable(rho0_sampler):
        pos = np.asarray(rho0_sampler(rng, n, d), dtype=float)
    else:
        mean = np.atleast_1d(np.asarray(rho0_sampler.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(rho0_sampler.cov, dtype=float))
        if mean.shape[0] != d:
            raise ValidationError("sampler dimension does not match params.dim")
        pos = rng.multivariate_normal(mean, cov, size=n)
    if pos.shape != (n, d):
        raise ValidationError(f"sampler produced shape {pos.shape}, expected {(n, d)}")
    vel = rng.standard_normal((n, d)) if params.is_kinetic else None
    return ParticleEnsemble(positions=pos, velocities=vel, time=0.0, rng=rng)


def _check_finite(ens: ParticleEnsemble, params: SimParams) -> None:
    bad = not np.all(np.isfinite(ens.positions))
    if not bad and ens.velocities is not None:
        bad = not np.all(np.isfinite(ens.velocities))
    if bad:
        raise DivergenceError(
            f"state diverged at t={ens.time:g} with step h={params.step:g}",
            time=ens.time)


def step_overdamped(spec: EnergySpec, ens: ParticleEnsemble, params: SimParams,
                    xi: Optional[np.ndarray] = None) -> ParticleEnsemble:
    """Euler-Maruyama update X <- X + h*force + sqrt(2h)*xi (updates in place)."""
    if ens.is_kinetic:
        raise ValidationError("overdamped step applied to a kinetic ensemble")
    h = params.step
    if xi is None:
        xi = ens.rng.standard_normal(ens.positions.shape)
    ens.positions += h * mean_field_force(spec, ens) + np.sqrt(2.0 * h) * xi
    ens.time += h
    _check_finite(ens, params)
    return ens


def o_step(v: np.ndarray, gamma: float, h: float,
           eta: Optional[np.ndarray] = None,
           rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Exact Ornstein-Uhlenbeck refresh v <- e^{-gh} v + sqrt(1 - e^{-2gh}) eta."""
    a = np.exp(-gamma * h)
    if eta is None:
        eta = rng.standard_normal(np.shape(v))
    return a * v + np.sqrt(max(1.0 - a * a, 0.0)) * eta


def step_kinetic(spec: EnergySpec, ens: ParticleEnsemble, params: SimParams,
                 eta: Optional[np.ndarray] = None) -> ParticleEnsemble:
    """One BAOAB step (B half-kick, A half-drift, O refresh, A, B half-kick)."""
    if not ens.is_kinetic:
        raise ValidationError("kinetic step applied to an overdamped ensemble")
    h = params.step
    gamma = params.gamma
    F = ens.force if ens.force is not None else mean_field_force(spec, ens)
    ens.velocities += 0.5 * h * F
    ens.positions += 0.5 * h * ens.velocities
    ens.velocities = o_step(ens.velocities, gamma, h, eta=eta, rng=ens.rng)
    ens.positions += 0.5 * h * ens.velocities
    F = mean_field_force(spec, ens)
    ens.velocities += 0.5 * h * F
    ens.force = F
    ens.time += h
    _check_finite(ens, params)
    return ens


def _phase_samples(ens: ParticleEnsemble) -> np.ndarray:
    return np.hstack([ens.positions, ens.velocities])


def _observe(name: str, spec: EnergySpec, ens: ParticleEnsemble, reference) -> float:
    if name == "free_energy":
        return free_energy(spec, ens.positions)
    if name == "kinetic_free_energy":
        if not ens.is_kinetic:
            raise ValidationError("kinetic_free_energy needs velocities")
        return kinetic_free_energy(spec, _phase_samples(ens))
    if name == "M2":
        return second_moment(ens.positions)
    if name == "mean":
        return float(np.linalg.norm(np.mean(ens.positions, axis=0)))
    if name == "covariance":
        return float(np.trace(np.atleast_2d(np.cov(ens.positions, rowvar=False))))
    if name == "w2_to_reference":
        if reference is None:
            raise ValidationError("w2_to_reference needs a reference measure")
        if ens.dim != 1:
            from .metrics import empirical_mean_cov
            from .oracle import gaussian_w2
            return gaussian_w2(empirical_mean_cov(ens.positions), reference)
        if hasattr(reference, "mean") and not isinstance(reference, np.ndarray):
            # dense quantile cloud of the 1D Gaussian reference
            m = max(4096, 2 * ens.n_particles)
            from scipy.special import ndtri
            u = (np.arange(m) + 0.5) / m
            ref = float(reference.mean[0]) + np.sqrt(float(reference.cov[0, 0])) * ndtri(u)
        else:
            ref = np.asarray(reference, dtype=float)
        return w2_1d(ens.positions[:, 0], ref)
    raise ValidationError(f"unknown observable {name!r}; choose from {OBSERVABLES}")


def simulate(spec: EnergySpec, params: SimParams, init: ParticleEnsemble,
             observables: Iterable[str], reference=None) -> Dict[str, DecaySeries]:
    """Run the configured scheme and record observables on the empirical measure.

    Scalar reductions: "mean" records the norm of the mean vector and
    "covariance" the trace of the sample covariance, so all series are
    positive and rate-fittable.
    """
    observables = list(observables)
    for name in observables:
        if name not in OBSERVABLES:
            raise ValidationError(f"unknown observable {name!r}")
    params.check_step_guard(spec)
    if params.is_kinetic != init.is_kinetic:
        raise ValidationError("ensemble kind does not match params.scheme")
    step = step_kinetic if params.is_kinetic else step_overdamped
    times = []
    records: Dict[str, list] = {name: [] for name in observables}

    def record(ens):
        times.append(ens.time)
        for name in observables:
            records[name].append(_observe(name, spec, ens, reference))

    ens = init
    record(ens)
    for k in range(1, params.n_steps + 1):
        ens = step(spec, ens, params)
        if k % params.record_every == 0:
            record(ens)
    return {
        name: DecaySeries(np.array(times), np.array(vals), label=name)
        for name, vals in records.items()
    }
