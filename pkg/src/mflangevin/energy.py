"""Energy functionals over probability measures and their intrinsic derivatives.

The energy of a measure rho is

    E(rho) = int V drho + r * M2(rho) + 1/2 * int int W(x, y) drho(x) drho(y)

with V a confining potential, W a symmetric pairwise interaction (optional)
and r >= 0 a quadratic regularization strength.  The free energy adds the
Boltzmann entropy, F(rho) = E(rho) + H(rho).  All three measure
representations used in this package are supported: sample clouds
(N x d arrays), Gaussian moments (objects with .mean/.cov) and grid
densities (objects with .cell_centers()/.masses()).

Temperature is fixed at 1 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import SingularityError, ValidationError

__all__ = [
    "ScalarField",
    "PairField",
    "EnergySpec",
    "ParticleEnsemble",
    "quadratic",
    "quartic",
    "quadratic_pair",
    "spec_from_config",
    "intrinsic_derivative",
    "mean_field_force",
    "free_energy",
    "kinetic_free_energy",
    "un_potential",
    "energy_of_samples",
]

# Pairwise interactions are evaluated in O(N^2); chunk rows to bound memory.
_PAIR_CHUNK = 512


@dataclass
class ScalarField:
    """A potential V: R^d -> R with gradient and regularity metadata."""

    value: Callable[[np.ndarray], np.ndarray]  # (..., d) -> (...)
    grad: Callable[[np.ndarray], np.ndarray]  # (..., d) -> (..., d)
    lower_bound: float = 0.0
    grad_lipschitz: Optional[float] = None
    # Closed-form E[V(X)] for X ~ N(mean, cov), when available.
    gaussian_expectation: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    label: str = "V"


@dataclass
class PairField:
    """A symmetric interaction W: R^d x R^d -> R with gradient in x."""

    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad1: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lower_bound: float = 0.0
    grad1_lipschitz: Optional[float] = None
    # Closed-form E[W(X, Y)] for X, Y iid N(mean, cov), when available.
    gaussian_pair_expectation: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    # Optional O(N) shortcut for (1/M) sum_j grad1(x, y_j); signature (X, Y) -> (N, d).
    empirical_grad1_mean: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    label: str = "W"


@dataclass
class EnergySpec:
    """Confinement + pairwise interaction + quadratic regularization."""

    confinement: ScalarField
    interaction: Optional[PairField] = None
    reg_strength: float = 0.0

    def __post_init__(self):
        if self.reg_strength < 0:
            raise ValidationError("reg_strength must be >= 0")

    @property
    def force_lipschitz(self) -> Optional[float]:
        """Declared Lipschitz constant of the mean-field force field."""
        lv = self.confinement.grad_lipschitz
        if lv is None:
            return None
        lw = 0.0
        if self.interaction is not None:
            if self.interaction.grad1_lipschitz is None:
                return None
            lw = self.interaction.grad1_lipschitz
        return lv + 2.0 * self.reg_strength + lw


@dataclass
class ParticleEnsemble:
    """N interacting particles in R^d, optionally with velocities."""

    positions: np.ndarray  # (N, d)
    velocities: Optional[np.ndarray] = None
    time: float = 0.0
    rng: Optional[np.random.Generator] = None
    force: Optional[np.ndarray] = None  # cached force for kick reuse

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.ndim != 2 or self.positions.shape[0] < 1:
            raise ValidationError("positions must be an (N, d) array with N >= 1")
        if not np.all(np.isfinite(self.positions)):
            raise ValidationError("positions contain non-finite entries")
        if self.velocities is not None:
            self.velocities = np.asarray(self.velocities, dtype=float)
            if self.velocities.shape != self.positions.shape:
                raise ValidationError("velocities must match the shape of positions")
            if not np.all(np.isfinite(self.velocities)):
                raise ValidationError("velocities contain non-finite entries")

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def is_kinetic(self) -> bool:
        return self.velocities is not None


# ---------------------------------------------------------------------------
# Built-in potential families
# ---------------------------------------------------------------------------

def quadratic(c: float) -> ScalarField:
    """V(x) = c |x|^2 / 2."""
    if c <= 0:
        raise ValidationError("quadratic confinement needs c > 0")

    def gauss(mean, cov):
        mean = np.atleast_1d(mean)
        cov = np.atleast_2d(cov)
        return 0.5 * c * (mean @ mean + np.trace(cov))

    return ScalarField(
        value=lambda x: 0.5 * c * np.sum(np.square(x), axis=-1),
        grad=lambda x: c * np.asarray(x, dtype=float),
        lower_bound=0.0,
        grad_lipschitz=c,
        gaussian_expectation=gauss,
        label=f"quadratic(c={c})",
    )


def quartic(c: float, q: float, radius: float = 10.0) -> ScalarField:
    """V(x) = c |x|^2 / 2 + q |x|^4 / 4.

    The Lipschitz metadata for the gradient is only valid on the ball of the
    given radius (the gradient is not globally Lipschitz).
    """
    if c < 0 or q < 0 or c + q <= 0:
        raise ValidationError("quartic confinement needs c, q >= 0, not both 0")

    def value(x):
        s = np.sum(np.square(x), axis=-1)
        return 0.5 * c * s + 0.25 * q * s * s

    def grad(x):
        x = np.asarray(x, dtype=float)
        s = np.sum(np.square(x), axis=-1, keepdims=True)
        return (c + q * s) * x

    def gauss(mean, cov):
        # E|X|^4 = (tr S + |m|^2)^2 + 2 tr(S^2) + 4 m' S m for X ~ N(m, S).
        mean = np.atleast_1d(mean)
        cov = np.atleast_2d(cov)
        m2 = mean @ mean + np.trace(cov)
        m4 = m2 * m2 + 2.0 * np.trace(cov @ cov) + 4.0 * mean @ cov @ mean
        return 0.5 * c * m2 + 0.25 * q * m4

    return ScalarField(
        value=value,
        grad=grad,
        lower_bound=0.0,
        grad_lipschitz=c + 3.0 * q * radius**2,
        gaussian_expectation=gauss,
        label=f"quartic(c={c},q={q})",
    )


def quadratic_pair(alpha: float) -> PairField:
    """W(x, y) = alpha |x - y|^2 / 2 (attractive for alpha > 0)."""
    if alpha < 0:
        raise ValidationError("quadratic_pair needs alpha >= 0")

    def value(x, y):
        return 0.5 * alpha * np.sum(np.square(np.asarray(x) - np.asarray(y)), axis=-1)

    def grad1(x, y):
        return alpha * (np.asarray(x, dtype=float) - np.asarray(y, dtype=float))

    def gauss_pair(mean, cov):
        # E|X - Y|^2 = 2 tr S for X, Y iid (means cancel).
        return alpha * np.trace(np.atleast_2d(cov))

    def mean_grad1(x, samples):
        ybar = np.mean(samples, axis=0)
        return alpha * (np.asarray(x, dtype=float) - ybar)

    return PairField(
        value=value,
        grad1=grad1,
        lower_bound=0.0,
        grad1_lipschitz=alpha,
        gaussian_pair_expectation=gauss_pair,
        empirical_grad1_mean=mean_grad1,
        label=f"quadratic_pair(alpha={alpha})",
    )


def spec_from_config(cfg: dict) -> EnergySpec:
    """Build an EnergySpec from a flat config mapping.

    Recognized keys: confinement ("quadratic" | "quartic"), c, q,
    interaction ("quadratic_pair" | "none"), alpha, reg_strength.
    """
    kind = cfg.get("confinement", "quadratic")
    if kind == "quadratic":
        conf = quadratic(float(cfg.get("c", 1.0)))
    elif kind == "quartic":
        conf = quartic(float(cfg.get("c", 1.0)), float(cfg.get("q", 0.1)))
    else:
        raise ValidationError(f"unknown confinement family: {kind!r}")
    inter = None
    ikind = cfg.get("interaction", "none")
    if ikind == "quadratic_pair":
        inter = quadratic_pair(float(cfg.get("alpha", 1.0)))
    elif ikind not in ("none", None, ""):
        raise ValidationError(f"unknown interaction family: {ikind!r}")
    return EnergySpec(confinement=conf, interaction=inter,
                      reg_strength=float(cfg.get("reg_strength", 0.0)))


# ---------------------------------------------------------------------------
# Measure plumbing
# ---------------------------------------------------------------------------

def _is_gaussian(measure) -> bool:
    return hasattr(measure, "mean") and hasattr(measure, "cov") and not isinstance(
        measure, np.ndarray
    )


def _is_grid(measure) -> bool:
    return hasattr(measure, "cell_centers") and hasattr(measure, "masses")


def _grid_points_weights(measure):
    pts = np.atleast_2d(measure.cell_centers())
    w = np.asarray(measure.masses()).ravel()
    total = w.sum()
    if not np.isclose(total, 1.0, atol=1e-8):
        raise ValidationError(f"grid measure not normalized: total mass {total}")
    return pts, w


def _pair_mean_grad1(spec: EnergySpec, x: np.ndarray, points: np.ndarray,
                     weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Weighted average of grad1 W(x, .) over the given support points."""
    W = spec.interaction
    if W is None:
        return np.zeros_like(x)
    if weights is None and W.empirical_grad1_mean is not None:
        return W.empirical_grad1_mean(x, points)
    g = W.grad1(x[None, :], points)  # (M, d)
    if weights is None:
        return g.mean(axis=0)
    return weights @ g


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def intrinsic_derivative(spec: EnergySpec, measure, x) -> np.ndarray:
    """Mean-field force field D E(rho, x) = grad V(x) + 2 r x + int grad1 W(x, .) drho."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValidationError("evaluation point contains non-finite entries")
    out = spec.confinement.grad(x) + 2.0 * spec.reg_strength * x
    if spec.interaction is not None:
        if _is_grid(measure):
            pts, w = _grid_points_weights(measure)
            out = out + _pair_mean_grad1(spec, x, pts, w)
        else:
            samples = np.atleast_2d(np.asarray(measure, dtype=float))
            if not np.all(np.isfinite(samples)):
                raise ValidationError("measure samples contain non-finite entries")
            out = out + _pair_mean_grad1(spec, x, samples)
    return out


def mean_field_force(spec: EnergySpec, ens: ParticleEnsemble) -> np.ndarray:
    """Row i is -D E(pi_x, x_i), the drift of particle i (self-term included)."""
    X = ens.positions
    drift = spec.confinement.grad(X) + 2.0 * spec.reg_strength * X
    W = spec.interaction
    if W is not None:
        if W.empirical_grad1_mean is not None:
            drift = drift + W.empirical_grad1_mean(X, X)
        else:
            inter = np.empty_like(X)
            for start in range(0, X.shape[0], _PAIR_CHUNK):
                block = X[start:start + _PAIR_CHUNK]
                g = W.grad1(block[:, None, :], X[None, :, :])  # (chunk, N, d)
                inter[start:start + _PAIR_CHUNK] = g.mean(axis=1)
            drift = drift + inter
    return -drift


def energy_of_samples(spec: EnergySpec, X: np.ndarray) -> float:
    """E(pi_x) for the empirical measure of X, diagonal terms included."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    e = float(np.mean(spec.confinement.value(X)))
    e += spec.reg_strength * float(np.mean(np.sum(np.square(X), axis=-1)))
    W = spec.interaction
    if W is not None:
        acc = 0.0
        for start in range(0, n, _PAIR_CHUNK):
            block = X[start:start + _PAIR_CHUNK]
            acc += float(np.sum(W.value(block[:, None, :], X[None, :, :])))
        e += 0.5 * acc / (n * n)
    return e


def _gaussian_energy(spec: EnergySpec, mean: np.ndarray, cov: np.ndarray) -> float:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    V = spec.confinement
    if V.gaussian_expectation is None:
        raise ValidationError(
            f"no closed-form Gaussian expectation for {V.label}; use a grid or samples"
        )
    e = float(V.gaussian_expectation(mean, cov))
    e += spec.reg_strength * float(mean @ mean + np.trace(cov))
    W = spec.interaction
    if W is not None:
        if W.gaussian_pair_expectation is None:
            raise ValidationError(
                f"no closed-form Gaussian pair expectation for {W.label}"
            )
        e += 0.5 * float(W.gaussian_pair_expectation(mean, cov))
    return e


def _gaussian_entropy(cov: np.ndarray) -> float:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = cov.shape[0]
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet):
        raise SingularityError("degenerate covariance in Gaussian entropy")
    # H(rho) = int rho ln rho = -1/2 ln det(2 pi e cov)
    return -0.5 * (d * np.log(2.0 * np.pi * np.e) + logdet)


def _grid_energy_entropy(spec: EnergySpec, measure):
    pts, w = _grid_points_weights(measure)
    vals = np.asarray(measure.values, dtype=float).ravel()
    # spectral transports undershoot by up to ~1e-6 * peak near truncated
    # tails; such cells are skipped by the entropy sum and contribute
    # negligibly to the energy quadrature, so only reject clearly broken grids
    if np.any(vals < -1e-5 * max(vals.max(), 1.0)):
        raise ValidationError("grid density has negative cells")
    vol = measure.cell_volume()
    e = float(w @ spec.confinement.value(pts))
    e += spec.reg_strength * float(w @ np.sum(np.square(pts), axis=-1))
    W = spec.interaction
    if W is not None:
        acc = 0.0
        for start in range(0, pts.shape[0], _PAIR_CHUNK):
            block_p = pts[start:start + _PAIR_CHUNK]
            block_w = w[start:start + _PAIR_CHUNK]
            vv = W.value(block_p[:, None, :], pts[None, :, :])  # (chunk, M)
            acc += float(block_w @ (vv @ w))
        e += 0.5 * acc
    pos = vals > 0
    entropy = float(np.sum(vals[pos] * np.log(vals[pos]))) * vol
    return e, entropy


def free_energy(spec: EnergySpec, measure, knn_k: int = 5) -> float:
    """F(rho) = E(rho) + H(rho), reported raw (not re-centered at rho_*).

    Entropy: closed form for Gaussians, cell quadrature for grids,
    Kozachenko-Leonenko k-NN estimate for sample clouds.
    """
    if _is_gaussian(measure):
        return _gaussian_energy(spec, measure.mean, measure.cov) + _gaussian_entropy(
            measure.cov
        )
    if _is_grid(measure):
        e, h = _grid_energy_entropy(spec, measure)
        return e + h
    from .metrics import entropy_knn

    X = np.atleast_2d(np.asarray(measure, dtype=float))
    if X.shape[0] <= knn_k:
        raise ValidationError("need N > k samples for the entropy estimator")
    # entropy_knn estimates -int rho ln rho, the differential entropy
    return energy_of_samples(spec, X) - entropy_knn(X, k=knn_k)


def kinetic_free_energy(spec: EnergySpec, phase_measure, knn_k: int = 5) -> float:
    """F_k(nu) = E(rho) + 1/2 int |v|^2 dnu + H(nu) + (d/2) ln(2 pi).

    The position marginal rho is extracted from the phase-space measure.
    At nu = rho (x) standard-Gaussian velocities, F_k(nu) = F(rho).
    """
    if _is_gaussian(phase_measure):
        mean = np.atleast_1d(np.asarray(phase_measure.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(phase_measure.cov, dtype=float))
        if mean.shape[0] % 2 != 0:
            raise ValidationError("phase-space Gaussian must have even dimension")
        d = mean.shape[0] // 2
        e = _gaussian_energy(spec, mean[:d], cov[:d, :d])
        kin = 0.5 * float(mean[d:] @ mean[d:] + np.trace(cov[d:, d:]))
        return e + kin + _gaussian_entropy(cov) + 0.5 * d * np.log(2.0 * np.pi)
    if _is_grid(phase_measure):
        pts, w = _grid_points_weights(phase_measure)
        if pts.shape[1] != 2:
            raise ValidationError("grid kinetic free energy requires a 2-axis (x, v) grid")
        rho = phase_measure.marginal(axis=0)
        e, _ = _grid_energy_entropy(spec, rho)
        kin = 0.5 * float(w @ np.square(pts[:, 1]))
        vals = np.asarray(phase_measure.values, dtype=float).ravel()
        pos = vals > 0
        entropy = float(np.sum(vals[pos] * np.log(vals[pos]))) * phase_measure.cell_volume()
        return e + kin + entropy + 0.5 * np.log(2.0 * np.pi)
    from .metrics import entropy_knn

    Z = np.atleast_2d(np.asarray(phase_measure, dtype=float))
    if Z.shape[1] % 2 != 0:
        raise ValidationError("phase-space samples must have even dimension")
    d = Z.shape[1] // 2
    X, Vv = Z[:, :d], Z[:, d:]
    e = energy_of_samples(spec, X)
    kin = 0.5 * float(np.mean(np.sum(np.square(Vv), axis=-1)))
    return e + kin - entropy_knn(Z, k=knn_k) + 0.5 * d * np.log(2.0 * np.pi)


def un_potential(spec: EnergySpec, x: np.ndarray) -> float:
    """N-particle mean-field potential U_N(x) = N * E(pi_x)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValidationError("configuration contains non-finite entries")
    return x.shape[0] * energy_of_samples(spec, x)
