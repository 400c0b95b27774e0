"""Estimators and distances on sample clouds and time series."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist
from scipy.special import digamma, gammaln

from .errors import FitError, ValidationError
from .oracle import GaussianMoments

__all__ = [
    "DecaySeries",
    "RateFit",
    "entropy_knn",
    "w2_1d",
    "w2_1d_weighted",
    "w2_assignment",
    "fit_rate",
    "second_moment",
    "empirical_mean_cov",
]


@dataclass
class DecaySeries:
    """Time-stamped functional values along a run."""

    times: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValidationError("times and values must be 1D arrays of equal length")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValidationError("times must be strictly increasing")

    def __len__(self):
        return self.times.size

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write("time,value,label\n")
            for t, v in zip(self.times, self.values):
                f.write(f"{t:.17g},{v:.17g},{self.label}\n")

    @classmethod
    def from_csv(cls, path) -> "DecaySeries":
        times, values, label = [], [], ""
        with open(path) as f:
            next(f)
            for line in f:
                t, v, label = line.rstrip("\n").split(",", 2)
                times.append(float(t))
                values.append(float(v))
        return cls(np.array(times), np.array(values), label)


@dataclass
class RateFit:
    """Exponential decay rate fitted from ln(value) vs time."""

    rate: float
    log_intercept: float
    r_squared: float
    window: Tuple[int, int]  # [start, stop) indices into the source series

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "log_intercept": self.log_intercept,
            "r_squared": self.r_squared,
            "window": list(self.window),
        }


def entropy_knn(samples: np.ndarray, k: int = 5) -> float:
    """Kozachenko-Leonenko k-NN estimate of the differential entropy.

    Returns an estimate of -int rho ln rho.  Bias is O(N^{-1/d}); duplicate
    points are jittered deterministically with a warning.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = X.shape
    if not (n > k >= 1):
        raise ValidationError("need N > k >= 1 samples")
    tree = cKDTree(X)
    dist, _ = tree.query(X, k=k + 1)
    eps = dist[:, k]
    if np.any(eps <= 0):
        warnings.warn("duplicate points detected; applying deterministic jitter")
        scale = max(np.abs(X).max(), 1.0) * 1e-10
        jitter = scale * np.sin(np.arange(n * d, dtype=float) + 1.0).reshape(n, d)
        X = X + jitter
        tree = cKDTree(X)
        dist, _ = tree.query(X, k=k + 1)
        eps = dist[:, k]
    log_vd = 0.5 * d * np.log(np.pi) - gammaln(0.5 * d + 1.0)
    return float(digamma(n) - digamma(k) + log_vd + d * np.mean(np.log(eps)))


def _as_1d(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2 and a.shape[1] == 1:
        a = a[:, 0]
    if a.ndim != 1:
        raise ValidationError("expected 1D samples")
    return a


def w2_1d_weighted(xa, wa, xb, wb) -> float:
    """Exact W2 between two weighted discrete 1D distributions.

    Computed from the quantile-function representation: the optimal coupling
    in 1D is the comonotone rearrangement.
    """
    xa, xb = _as_1d(xa), _as_1d(xb)
    wa = np.asarray(wa, dtype=float)
    wb = np.asarray(wb, dtype=float)
    if not (np.isclose(wa.sum(), 1.0) and np.isclose(wb.sum(), 1.0)):
        raise ValidationError("weights must sum to 1")
    ia, ib = np.argsort(xa, kind="stable"), np.argsort(xb, kind="stable")
    xa, wa = xa[ia], wa[ia]
    xb, wb = xb[ib], wb[ib]
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    levels = np.union1d(ca, cb)
    levels = levels[levels > 0]
    lo = np.concatenate([[0.0], levels[:-1]])
    widths = levels - lo
    mids = 0.5 * (levels + lo)
    # cumsum rounding can leave the top level a hair above ca[-1]/cb[-1]
    qa = xa[np.minimum(np.searchsorted(ca, mids, side="left"), xa.size - 1)]
    qb = xb[np.minimum(np.searchsorted(cb, mids, side="left"), xb.size - 1)]
    return float(np.sqrt(np.sum(widths * np.square(qa - qb))))


def w2_1d(a, b) -> float:
    """Exact empirical W2 in 1D via sorted quantile coupling (unequal sizes ok)."""
    a, b = _as_1d(a), _as_1d(b)
    if a.size == b.size:
        return float(np.sqrt(np.mean(np.square(np.sort(a) - np.sort(b)))))
    return w2_1d_weighted(a, np.full(a.size, 1.0 / a.size),
                          b, np.full(b.size, 1.0 / b.size))


def w2_assignment(a: np.ndarray, b: np.ndarray) -> float:
    """Exact W2 between equal-size empirical measures via optimal assignment."""
    A = np.atleast_2d(np.asarray(a, dtype=float))
    B = np.atleast_2d(np.asarray(b, dtype=float))
    if A.shape != B.shape:
        raise ValidationError("w2_assignment requires equal-size clouds")
    if A.shape[0] > 1024:
        raise ValidationError("dense assignment capped at N = 1024")
    cost = cdist(A, B, metric="sqeuclidean")
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


def fit_rate(series: DecaySeries, burn_in: float = 0.2,
             noise_floor: Optional[float] = None,
             window: Optional[Tuple[int, int]] = None) -> RateFit:
    """Least-squares fit of ln(value) against time; rate is minus the slope.

    Default window policy: drop the first `burn_in` fraction of points and
    any tail where values fall below 10x the supplied noise floor.
    """
    t = series.times
    v = series.values
    n = len(series)
    if window is not None:
        start, stop = window
    else:
        start = int(np.floor(burn_in * n))
        stop = n
        if noise_floor is not None:
            above = v > 10.0 * noise_floor
            good = np.nonzero(above)[0]
            if good.size:
                stop = min(stop, good[-1] + 1)
    sel = slice(start, stop)
    tt, vv = t[sel], v[sel]
    if np.any(vv <= 0):
        warnings.warn("nonpositive values in fit window; shrinking window")
        keep = vv > 0
        tt, vv = tt[keep], vv[keep]
    if tt.size < 3:
        raise FitError("fewer than 3 usable points for the rate fit")
    slope, intercept = np.polyfit(tt, np.log(vv), 1)
    resid = np.log(vv) - (slope * tt + intercept)
    ss_tot = float(np.sum(np.square(np.log(vv) - np.mean(np.log(vv)))))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(np.square(resid))) / ss_tot
    return RateFit(rate=float(-slope), log_intercept=float(intercept),
                   r_squared=r2, window=(start, stop))


def second_moment(samples: np.ndarray) -> float:
    """M2 = mean of |x|^2 over the cloud."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    return float(np.mean(np.sum(np.square(X), axis=-1)))


def empirical_mean_cov(samples: np.ndarray) -> GaussianMoments:
    """Sample mean and unbiased covariance as GaussianMoments."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if X.shape[0] < 2:
        raise ValidationError("need at least 2 samples for a covariance")
    return GaussianMoments(np.mean(X, axis=0), np.atleast_2d(np.cov(X, rowvar=False)))
