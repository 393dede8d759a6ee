"""Reference interval-propagation baselines: vertex and subinterval methods."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .design import IntervalBox
from .errors import BudgetError

__all__ = [
    "BaselineResult",
    "MonotonicityRow",
    "vertex_method",
    "subinterval_method",
    "monotonicity_sweep",
]

# (n+1)**r grid evaluations beyond this need an explicit override.
DEFAULT_MAX_EVALUATIONS = 5_000_000


@dataclass(frozen=True)
class BaselineResult:
    """Bounds from an exhaustive point set, with their attaining locations."""

    lower: float
    upper: float
    lower_location: np.ndarray
    upper_location: np.ndarray
    evaluations: int

    def __post_init__(self):
        for name in ("lower_location", "upper_location"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "lower_location": self.lower_location.tolist(),
            "upper_location": self.upper_location.tolist(),
            "evaluations": self.evaluations,
        }


def _scan(blackbox, points: np.ndarray) -> BaselineResult:
    values = [float(blackbox(row)) for row in points]
    values = np.asarray(values)
    ilo = int(np.argmin(values))
    ihi = int(np.argmax(values))
    return BaselineResult(float(values[ilo]), float(values[ihi]),
                          points[ilo], points[ihi], len(points))


def vertex_method(blackbox, box: IntervalBox, allow_large: bool = False) -> BaselineResult:
    """Evaluate all 2**r box vertices; exact only for monotone responses."""
    if box.r > 20 and not allow_large:
        raise BudgetError(f"vertex method would need 2**{box.r} evaluations; pass allow_large to proceed")
    vertices = np.array(list(itertools.product(*zip(box.lower, box.upper))))
    return _scan(blackbox, vertices)


def subinterval_method(
    blackbox,
    box: IntervalBox,
    n: int,
    max_evaluations: int = DEFAULT_MAX_EVALUATIONS,
    allow_large: bool = False,
) -> BaselineResult:
    """Full tensor grid of subinterval endpoints: (n+1)**r evaluations.

    n subintervals per variable give n+1 points per axis including both
    interval endpoints, so the vertex set is always contained in the grid.
    """
    if n < 1:
        raise ValueError("need at least one subinterval per variable")
    count = (n + 1) ** box.r
    if count > max_evaluations and not allow_large:
        raise BudgetError(f"subinterval grid has {count} points (> {max_evaluations}); "
                          "pass allow_large to proceed")
    axes = [np.linspace(box.lower[i], box.upper[i], n + 1) for i in range(box.r)]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=-1)
    return _scan(blackbox, grid)


@dataclass(frozen=True)
class MonotonicityRow:
    """VM-vs-SM comparison for one relative deviation of the interval."""

    delta: float
    vm: BaselineResult
    sm: BaselineResult
    lower_error_pct: float
    upper_error_pct: float
    coincide: bool


def monotonicity_sweep(blackbox_factory, k0: float, deltas, n: int = 300):
    """Compare the two baselines over boxes k0 * (1 -/+ delta).

    ``blackbox_factory`` is called once per delta and must return a fresh
    single-variable black box, which lets callers attach per-sweep caches.
    VM and SM coincide exactly wherever the response is monotone, because the
    vertex points are members of the subinterval grid.
    """
    deltas = list(deltas)
    if not deltas:
        raise ValueError("deltas must be nonempty")
    if any(not (0.0 < d < 1.0) for d in deltas):
        raise ValueError("each delta must lie strictly inside (0, 1)")
    rows = []
    for delta in deltas:
        box = IntervalBox([k0 * (1.0 - delta)], [k0 * (1.0 + delta)])
        blackbox = blackbox_factory()
        vm = vertex_method(blackbox, box)
        sm = subinterval_method(blackbox, box, n)
        lo_err = 100.0 * (vm.lower - sm.lower) / abs(sm.lower)
        hi_err = 100.0 * (vm.upper - sm.upper) / abs(sm.upper)
        coincide = (
            abs(vm.lower - sm.lower) <= 1e-12 * (1.0 + abs(sm.lower))
            and abs(vm.upper - sm.upper) <= 1e-12 * (1.0 + abs(sm.upper))
        )
        rows.append(MonotonicityRow(float(delta), vm, sm, lo_err, hi_err, coincide))
    return rows
