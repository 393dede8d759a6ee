"""Gaussian-process regression over the scaled interval box.

The kernel is the exponential of a weighted distance,

    k(b, b') = exp(-sum_h theta_h |b_h - b'_h|**p_h),

with per-dimension sensitivity weights ``theta_h >= 0`` and smoothness
exponents ``p_h in [1, 2]``.  The prior mean is zero and observations are
noise-free, so the posterior interpolates the training data exactly.
Hyperparameters are estimated by maximizing the log marginal likelihood with a
multistart bounded local search.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .design import sobol_points
from .errors import FittingError, NumericalError

__all__ = [
    "KernelHyperparams",
    "TrainingSet",
    "FittedGp",
    "Prediction",
    "kernel_eval",
    "build_covariance",
    "log_marginal_likelihood",
    "lml_gradient",
    "fit_hyperparameters",
    "condition",
    "predict",
    "predict_batch",
    "DEFAULT_HYPER_BOUNDS",
    "VARIANCE_CLAMP",
    "DUPLICATE_TOL",
]

# Posterior variances below this (in objective units squared) are treated as
# exactly zero; negative numerical residue is clamped first.
VARIANCE_CLAMP = 1e-10

# Two points closer than this in scaled infinity norm count as the same point.
DUPLICATE_TOL = 1e-9

# theta in [0, 2], p in [1, 2]; theta is dimensionless in scaled input space.
DEFAULT_HYPER_BOUNDS = ((0.0, 2.0), (1.0, 2.0))

_LOG_2PI = math.log(2.0 * math.pi)

# Escalating relative diagonal jitter tried when the covariance factorization
# fails: 1e-12 * 10**i up to 1e-6 of the mean diagonal.
_JITTER_LADDER = (0.0,) + tuple(1e-12 * 10.0**i for i in range(7))


@dataclass(frozen=True)
class KernelHyperparams:
    """Kernel weights ``theta`` (>= 0) and exponents ``p`` (in [1, 2])."""

    theta: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta, dtype=float))
        pw = np.atleast_1d(np.asarray(self.p, dtype=float))
        if th.shape != pw.shape or th.ndim != 1:
            raise ValueError("theta and p must be 1-d vectors of equal length")
        if np.any(th < 0):
            raise ValueError("theta components must be nonnegative")
        if np.any(pw < 1.0) or np.any(pw > 2.0):
            raise ValueError("p components must lie in [1, 2]")
        th.setflags(write=False)
        pw.setflags(write=False)
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "p", pw)

    @property
    def r(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class TrainingSet:
    """Design points (rows, scaled coordinates) with noise-free observations."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be a nonempty n x r matrix")
        if vals.shape != (pts.shape[0],):
            raise ValueError("values must be an n-vector matching points")
        if pts.min() < -1e-9 or pts.max() > 1 + 1e-9:
            raise ValueError("training points must lie inside the scaled unit hypercube")
        if pts.shape[0] > 1:
            diffs = np.abs(pts[:, None, :] - pts[None, :, :]).max(axis=-1)
            np.fill_diagonal(diffs, np.inf)
            if diffs.min() <= DUPLICATE_TOL:
                i, j = np.unravel_index(int(np.argmin(diffs)), diffs.shape)
                raise ValueError(f"duplicate training rows {i} and {j} (within {DUPLICATE_TOL:g})")
        pts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def r(self) -> int:
        return self.points.shape[1]

    def appended(self, point, value) -> "TrainingSet":
        """New set with one extra observation."""
        return TrainingSet(
            np.vstack([self.points, np.asarray(point, dtype=float)[None, :]]),
            np.append(self.values, float(value)),
        )


@dataclass(frozen=True)
class Prediction:
    """Posterior marginal mean and (clamped) variance at one point."""

    mean: float
    variance: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class FittedGp:
    """Conditioned GP: cached Cholesky factor of the training covariance.

    Immutable after construction; safe to share read-only across threads.
    ``alpha`` solves ``cov @ alpha = values`` (internally standardized values
    when ``value_scale != 1``).
    """

    training: TrainingSet
    hyper: KernelHyperparams
    factor: np.ndarray
    jitter: float
    alpha: np.ndarray
    value_shift: float = 0.0
    value_scale: float = 1.0

    def __post_init__(self):
        for name in ("factor", "alpha"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def kernel_eval(bj, bl, hyper: KernelHyperparams) -> float:
    """exp(-sum_h theta_h |bj_h - bl_h|**p_h); symmetric, in (0, 1]."""
    bj = np.atleast_1d(np.asarray(bj, dtype=float))
    bl = np.atleast_1d(np.asarray(bl, dtype=float))
    if bj.shape != bl.shape or bj.size != hyper.r:
        raise ValueError(f"expected two vectors of length {hyper.r}")
    d = np.abs(bj - bl)
    return float(np.exp(-np.sum(hyper.theta * d**hyper.p)))


def build_covariance(A, B, hyper: KernelHyperparams) -> np.ndarray:
    """Kernel matrix with entry (i, j) = kernel_eval(A_i, B_j)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != hyper.r or B.shape[1] != hyper.r:
        raise ValueError(f"points must have {hyper.r} columns")
    dist = np.zeros((A.shape[0], B.shape[0]))
    for h in range(hyper.r):
        if hyper.theta[h] == 0.0:
            continue
        dist += hyper.theta[h] * np.abs(A[:, h, None] - B[None, :, h]) ** hyper.p[h]
    return np.exp(-dist)


def _chol_with_jitter(cov: np.ndarray):
    """Lower Cholesky factor, escalating diagonal jitter on failure."""
    mean_diag = float(np.mean(np.diag(cov)))
    last = 0.0
    for rel in _JITTER_LADDER:
        jit = rel * mean_diag
        last = jit
        try:
            shifted = cov if jit == 0.0 else cov + jit * np.eye(cov.shape[0])
            return cholesky(shifted, lower=True), jit
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        f"covariance not positive definite even with jitter {last:.3e}", jitter=last
    )


def log_marginal_likelihood(training: TrainingSet, hyper: KernelHyperparams) -> float:
    """Zero-mean Gaussian log marginal likelihood of the observations."""
    cov = build_covariance(training.points, training.points, hyper)
    factor, _ = _chol_with_jitter(cov)
    alpha = cho_solve((factor, True), training.values)
    return float(
        -0.5 * training.values @ alpha
        - np.sum(np.log(np.diag(factor)))
        - 0.5 * training.n * _LOG_2PI
    )


def _abs_diffs(points: np.ndarray) -> np.ndarray:
    """Per-dimension |x_i - x_j| stack, shape (r, n, n)."""
    return np.abs(points[:, None, :] - points[None, :, :]).transpose(2, 0, 1)


def lml_gradient(training: TrainingSet, hyper: KernelHyperparams) -> np.ndarray:
    """Gradient of the log marginal likelihood: (d/dtheta_h, d/dp_h), length 2r."""
    diffs = _abs_diffs(training.points)
    _, grad = _lml_and_gradient(diffs, training.values, hyper.theta, hyper.p)
    return grad


def _lml_and_gradient(diffs: np.ndarray, values: np.ndarray, theta, p):
    """Shared evaluation path: diffs is the (r, n, n) |dx| stack."""
    r, n, _ = diffs.shape
    pow_d = diffs**p[:, None, None]
    cov = np.exp(-np.einsum("h,hij->ij", theta, pow_d))
    factor, _ = _chol_with_jitter(cov)
    alpha = cho_solve((factor, True), values)
    lml = float(-0.5 * values @ alpha - np.sum(np.log(np.diag(factor))) - 0.5 * n * _LOG_2PI)

    cov_inv = cho_solve((factor, True), np.eye(n))
    grad = np.empty(2 * r)
    with np.errstate(divide="ignore"):
        log_d = np.where(diffs > 0.0, np.log(np.where(diffs > 0.0, diffs, 1.0)), 0.0)
    for h in range(r):
        d_cov = -pow_d[h] * cov
        grad[h] = 0.5 * alpha @ d_cov @ alpha - 0.5 * np.sum(cov_inv * d_cov)
        d_cov_p = theta[h] * d_cov * log_d[h]
        grad[r + h] = 0.5 * alpha @ d_cov_p @ alpha - 0.5 * np.sum(cov_inv * d_cov_p)
    return lml, grad


def _standardizer(values: np.ndarray, standardize: bool):
    if not standardize:
        return 0.0, 1.0
    shift = float(np.mean(values))
    spread = float(np.std(values))
    return shift, (spread if spread > 0.0 else 1.0)


def fit_hyperparameters(
    training: TrainingSet,
    bounds=None,
    starts: int = 10,
    seed=0,
    standardize: bool = False,
) -> KernelHyperparams:
    """Best hyperparameters over a multistart bounded local search.

    One start sits at the hyper-box midpoint; the rest come from a seeded
    low-discrepancy draw.  Ties between equally good starts resolve to the
    lowest start index, so the result is deterministic given the seed.
    """
    if starts < 1:
        raise ValueError("starts must be >= 1")
    (t_lo, t_hi), (p_lo, p_hi) = bounds if bounds is not None else DEFAULT_HYPER_BOUNDS
    if t_lo < 0 or t_lo >= t_hi:
        raise ValueError("theta bounds must satisfy 0 <= lo < hi")
    if p_lo < 1.0 or p_hi > 2.0 or p_lo >= p_hi:
        raise ValueError("p bounds must satisfy 1 <= lo < hi <= 2")
    r = training.r
    midpoint = np.array([0.5 * (t_lo + t_hi)] * r + [0.5 * (p_lo + p_hi)] * r)
    if training.n == 1:
        # The likelihood is constant in the hyperparameters for a single point.
        return KernelHyperparams(midpoint[:r], midpoint[r:])

    shift, spread = _standardizer(training.values, standardize)
    values = (training.values - shift) / spread
    diffs = _abs_diffs(training.points)
    lo = np.array([t_lo] * r + [p_lo] * r)
    hi = np.array([t_hi] * r + [p_hi] * r)

    def objective(x):
        try:
            lml, grad = _lml_and_gradient(diffs, values, x[:r], x[r:])
        except NumericalError:
            return 1e20, np.zeros(2 * r)
        if not np.isfinite(lml):
            return 1e20, np.zeros(2 * r)
        return -lml, -grad

    x0s = [midpoint]
    if starts > 1:
        draws = sobol_points(starts - 1, 2 * r, seed)
        x0s.extend(lo + draws * (hi - lo))

    best = None
    for idx, x0 in enumerate(x0s):
        res = minimize(
            objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"maxiter": 100},
        )
        if not np.isfinite(res.fun) or res.fun >= 1e20:
            continue
        if best is None or res.fun < best[0]:
            best = (res.fun, idx, res.x)
    if best is None:
        raise FittingError("no start produced a finite log marginal likelihood")
    x = np.clip(best[2], lo, hi)
    return KernelHyperparams(x[:r], x[r:])


def condition(training: TrainingSet, hyper: KernelHyperparams, standardize: bool = False) -> FittedGp:
    """Condition the zero-mean prior on the training data."""
    if training.r != hyper.r:
        raise ValueError("training dimensionality does not match hyperparameters")
    shift, spread = _standardizer(training.values, standardize)
    values = (training.values - shift) / spread
    cov = build_covariance(training.points, training.points, hyper)
    factor, jitter = _chol_with_jitter(cov)
    alpha = cho_solve((factor, True), values)
    return FittedGp(training, hyper, factor, jitter, alpha, shift, spread)


def _clamp_variance(var):
    var = np.where(var < VARIANCE_CLAMP, 0.0, var)
    return var


def predict_batch(gp: FittedGp, points) -> tuple:
    """Posterior means and clamped variances at many points (m x r)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != gp.training.r:
        raise ValueError(f"points must have {gp.training.r} columns")
    means = np.empty(points.shape[0])
    variances = np.empty(points.shape[0])
    step = max(1, int(2**24 // max(1, gp.training.n)))
    for start in range(0, points.shape[0], step):
        block = points[start : start + step]
        cross = build_covariance(block, gp.training.points, gp.hyper)
        means[start : start + len(block)] = cross @ gp.alpha
        v = solve_triangular(gp.factor, cross.T, lower=True)
        variances[start : start + len(block)] = 1.0 - np.sum(v * v, axis=0)
    means = gp.value_shift + gp.value_scale * means
    variances = _clamp_variance(variances * gp.value_scale**2)
    return means, variances


def predict(gp: FittedGp, b) -> Prediction:
    """Posterior marginal mean/variance at a single scaled point.

    Points outside the unit cube are allowed but draw a warning.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if b.ndim != 1 or b.size != gp.training.r:
        raise ValueError(f"expected a vector of length {gp.training.r}")
    if b.min() < -1e-9 or b.max() > 1 + 1e-9:
        warnings.warn("prediction point lies outside the scaled box", stacklevel=2)
    means, variances = predict_batch(gp, b[None, :])
    return Prediction(float(means[0]), float(variances[0]))
