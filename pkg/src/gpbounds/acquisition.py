"""Acquisition functions over a fitted GP, grid maximization, stopping tests.

Each acquisition function scores how desirable it is to evaluate the
black box next, balancing exploitation (low variance near the incumbent
optimum) against exploration (high variance in unexplored regions):

* PI  -- probability of improving on the incumbent, Phi(gamma);
* EI  -- expected improvement, sigma * (gamma * Phi(gamma) + phi(gamma));
* CB  -- confidence bound, mean + chi * sigma for the maximum search and
         -(mean - chi * sigma) for the minimum search.

Maximization is a brute-force scan of a candidate grid, which keeps the
search deterministic and derivative-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .design import IntervalBox, unscale
from .gp import DUPLICATE_TOL, FittedGp, Prediction, predict_batch

__all__ = [
    "AcquisitionKind",
    "Direction",
    "AcquisitionResult",
    "StoppingPolicy",
    "gamma",
    "probability_of_improvement",
    "expected_improvement",
    "confidence_bound",
    "af_from_moments",
    "evaluate_af",
    "maximize_af",
    "stopping_check",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class Direction(Enum):
    """Which bound a search improves: MIN drives the lower bound, MAX the upper."""

    MIN = "min"
    MAX = "max"


@dataclass(frozen=True)
class AcquisitionKind:
    """One of "pi", "ei" or "cb"; ``chi`` only matters for confidence bounds."""

    name: str
    chi: float = 2.0

    def __post_init__(self):
        if self.name not in ("pi", "ei", "cb"):
            raise ValueError(f"unknown acquisition function {self.name!r}")
        if self.chi < 0:
            raise ValueError("chi must be nonnegative")

    @classmethod
    def pi(cls):
        return cls("pi")

    @classmethod
    def ei(cls):
        return cls("ei")

    @classmethod
    def cb(cls, chi: float = 2.0):
        return cls("cb", chi)


@dataclass(frozen=True)
class AcquisitionResult:
    """Grid maximizer of an acquisition function."""

    b_hat: np.ndarray
    af_value: float
    incumbent: float
    direction: Direction

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b_hat, dtype=float))
        b.setflags(write=False)
        object.__setattr__(self, "b_hat", b)


@dataclass(frozen=True)
class StoppingPolicy:
    """Budget ceiling plus the acquisition-value stopping tolerance.

    ``budget_total`` counts additional evaluations beyond the initial set
    unless ``budget_includes_initial`` is set.  ``af_tolerance`` is the strict
    threshold for PI/EI (default 1e-2 in objective units); confidence-bound
    searches instead stop once the grid maximum no longer promises improvement
    over the incumbent, with relative slack ``cb_slack``.
    """

    budget_total: int
    budget_includes_initial: bool = False
    af_tolerance: float | None = None
    cb_slack: float = 1e-6

    def __post_init__(self):
        if self.budget_total < 0:
            raise ValueError("budget_total must be nonnegative")
        if self.af_tolerance is not None and self.af_tolerance <= 0:
            raise ValueError("af_tolerance must be positive")


DEFAULT_AF_TOLERANCE = 1e-2


def gamma(mean: float, sigma: float, incumbent: float, direction: Direction) -> float:
    """Standardized improvement margin; callers must handle sigma == 0 first."""
    if sigma <= 0:
        raise ValueError("gamma requires sigma > 0")
    if direction is Direction.MAX:
        return (mean - incumbent) / sigma
    return (incumbent - mean) / sigma


def probability_of_improvement(pred: Prediction, incumbent: float, direction: Direction) -> float:
    """Phi(gamma); zero at known points, where no improvement is possible."""
    if pred.sigma == 0.0:
        return 0.0
    return float(ndtr(gamma(pred.mean, pred.sigma, incumbent, direction)))


def expected_improvement(pred: Prediction, incumbent: float, direction: Direction) -> float:
    """sigma * (gamma * Phi(gamma) + phi(gamma)); zero where sigma == 0."""
    if pred.sigma == 0.0:
        return 0.0
    g = gamma(pred.mean, pred.sigma, incumbent, direction)
    value = pred.sigma * (g * ndtr(g) + math.exp(-0.5 * g * g) / _SQRT_2PI)
    return max(0.0, float(value))


def confidence_bound(pred: Prediction, chi: float, direction: Direction) -> float:
    """Upper confidence bound for MAX, negated lower confidence bound for MIN."""
    if chi < 0:
        raise ValueError("chi must be nonnegative")
    if direction is Direction.MAX:
        return float(pred.mean + chi * pred.sigma)
    return float(-(pred.mean - chi * pred.sigma))


def af_from_moments(means, sigmas, incumbent, kind: AcquisitionKind, direction: Direction) -> np.ndarray:
    """Vectorized acquisition values from posterior moments."""
    means = np.asarray(means, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if kind.name == "cb":
        if direction is Direction.MAX:
            return means + kind.chi * sigmas
        return -(means - kind.chi * sigmas)
    live = sigmas > 0.0
    g = np.zeros_like(means)
    margin = means - incumbent if direction is Direction.MAX else incumbent - means
    np.divide(margin, sigmas, out=g, where=live)
    if kind.name == "pi":
        return np.where(live, ndtr(g), 0.0)
    ei = sigmas * (g * ndtr(g) + np.exp(-0.5 * g * g) / _SQRT_2PI)
    return np.where(live, np.maximum(ei, 0.0), 0.0)


def _incumbent(gp: FittedGp, direction: Direction) -> float:
    values = gp.training.values
    return float(values.max() if direction is Direction.MAX else values.min())


def _training_mask(grid: np.ndarray, training_points: np.ndarray) -> np.ndarray:
    """True where a grid point matches a training row within duplicate tolerance."""
    dist = np.full(grid.shape[0], np.inf)
    step = max(1, int(2**24 // max(1, training_points.shape[0])))
    for start in range(0, grid.shape[0], step):
        block = grid[start : start + step]
        d = np.abs(block[:, None, :] - training_points[None, :, :]).max(axis=-1)
        dist[start : start + len(block)] = d.min(axis=1)
    return dist <= DUPLICATE_TOL


def evaluate_af(gp: FittedGp, grid, kind: AcquisitionKind, direction: Direction) -> np.ndarray:
    """Acquisition value at every grid point (scaled coordinates).

    Grid points matching a training row evaluate with sigma = 0, so PI and EI
    vanish there exactly.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("empty candidate grid")
    means, variances = predict_batch(gp, grid)
    sigmas = np.sqrt(variances)
    sigmas[_training_mask(grid, gp.training.points)] = 0.0
    return af_from_moments(means, sigmas, _incumbent(gp, direction), kind, direction)


def maximize_af(
    gp: FittedGp,
    grid,
    kind: AcquisitionKind,
    direction: Direction,
    box: IntervalBox | None = None,
) -> AcquisitionResult:
    """Brute-force grid argmax; ties break to the lowest grid index.

    With ``box`` given, ``b_hat`` is reported in physical coordinates.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    values = evaluate_af(gp, grid, kind, direction)
    idx = int(np.argmax(values))
    b = grid[idx] if box is None else unscale(box, grid[idx])
    return AcquisitionResult(b, float(values[idx]), _incumbent(gp, direction), direction)


def stopping_check(result: AcquisitionResult, kind: AcquisitionKind, policy: StoppingPolicy) -> bool:
    """True when the acquisition maximum says the search may stop.

    PI/EI use the strict absolute test |max AF| < delta.  CB stops once the
    best grid score no longer exceeds the incumbent beyond relative slack
    (a dense grid drives the CB maximum to the incumbent, never below it).
    """
    if kind.name in ("pi", "ei"):
        delta = policy.af_tolerance if policy.af_tolerance is not None else DEFAULT_AF_TOLERANCE
        return abs(result.af_value) < delta
    inc = result.incumbent
    slack = policy.cb_slack * (1.0 + abs(inc))
    target = inc if result.direction is Direction.MAX else -inc
    return result.af_value <= target + slack
