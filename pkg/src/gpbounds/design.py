"""Initial-design construction: interval boxes, Taguchi-style arrays, grids.

All internal optimization work happens in the unit hypercube; :func:`scale`
and :func:`unscale` move points between physical coordinates and that cube.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import UnsupportedDesignError

__all__ = [
    "IntervalBox",
    "DesignMatrix",
    "taguchi_array",
    "map_levels",
    "partition_1d",
    "scale",
    "unscale",
    "test_grid",
    "sobol_points",
    "design_to_csv",
    "is_balanced",
    "orthogonality_violations",
]

FLOAT_FMT = ".17g"


@dataclass(frozen=True)
class IntervalBox:
    """Vector of closed intervals [lower_i, upper_i] in physical units."""

    lower: np.ndarray
    upper: np.ndarray
    names: tuple = ()
    units: tuple = ()

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size < 1:
            raise ValueError("lower and upper must be 1-d vectors of equal length >= 1")
        if not np.all(lo < hi):
            bad = int(np.argmin(hi - lo))
            raise ValueError(f"degenerate interval at variable {bad}: lower must be < upper")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        names = tuple(self.names) or tuple(f"b{i + 1}" for i in range(lo.size))
        units = tuple(self.units) or ("",) * lo.size
        if len(names) != lo.size or len(units) != lo.size:
            raise ValueError("names/units must match the number of variables")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "units", units)

    @property
    def r(self) -> int:
        return self.lower.size

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, point, tol=1e-12) -> bool:
        p = np.asarray(point, dtype=float)
        span = self.lengths
        return bool(np.all(p >= self.lower - tol * span) and np.all(p <= self.upper + tol * span))


@dataclass(frozen=True)
class DesignMatrix:
    """Level-index design: ``levels`` is s x r with entries in [0, q-1]."""

    levels: np.ndarray
    q: int

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=int)
        if lv.ndim != 2:
            raise ValueError("levels must be a 2-d matrix")
        if lv.min() < 0 or lv.max() > self.q - 1:
            raise ValueError(f"level indices must lie in [0, {self.q - 1}]")
        lv.setflags(write=False)
        object.__setattr__(self, "levels", lv)

    @property
    def s(self) -> int:
        return self.levels.shape[0]

    @property
    def r(self) -> int:
        return self.levels.shape[1]


# Four-variable arrays reproduced verbatim (as level indices) from the
# canonical tables this library replicates.  L8 and L25 are strength-2
# orthogonal; L9 and L16 are balanced but NOT strength-2 orthogonal (see
# orthogonality_violations), a property of the source tables themselves.
_L8 = [
    [0, 0, 0, 0], [0, 0, 0, 1], [0, 1, 1, 0], [0, 1, 1, 1],
    [1, 0, 1, 0], [1, 0, 1, 1], [1, 1, 0, 0], [1, 1, 0, 1],
]
_L9 = [
    [0, 0, 2, 0], [0, 1, 1, 1], [0, 2, 0, 2],
    [1, 0, 1, 2], [1, 1, 2, 0], [1, 2, 0, 1],
    [2, 0, 2, 1], [2, 1, 0, 2], [2, 2, 1, 0],
]
_L16 = [
    [0, 0, 0, 0], [0, 1, 1, 1], [0, 2, 2, 2], [0, 3, 3, 3],
    [1, 0, 1, 2], [1, 1, 2, 3], [1, 2, 3, 0], [1, 3, 0, 1],
    [2, 0, 2, 0], [2, 1, 3, 1], [2, 2, 0, 2], [2, 3, 1, 3],
    [3, 0, 3, 2], [3, 1, 0, 3], [3, 2, 1, 0], [3, 3, 2, 1],
]
_L25 = [
    [0, 0, 0, 0], [0, 1, 1, 1], [0, 2, 2, 2], [0, 3, 3, 3], [0, 4, 4, 4],
    [1, 0, 1, 2], [1, 1, 2, 3], [1, 2, 3, 4], [1, 3, 4, 0], [1, 4, 0, 1],
    [2, 0, 2, 4], [2, 1, 3, 0], [2, 2, 4, 1], [2, 3, 0, 2], [2, 4, 1, 3],
    [3, 0, 3, 1], [3, 1, 4, 2], [3, 2, 0, 3], [3, 3, 1, 4], [3, 4, 2, 0],
    [4, 0, 4, 3], [4, 1, 0, 4], [4, 2, 1, 0], [4, 3, 2, 1], [4, 4, 3, 2],
]

_EMBEDDED = {(2, 4): _L8, (3, 4): _L9, (4, 4): _L16, (5, 4): _L25}

SUPPORTED_DESIGNS = "L8(2^4), L9(3^4), L16(4^4), L25(5^4), and q-level ladders for r=1"


def taguchi_array(q: int, r: int) -> DesignMatrix:
    """Return the embedded s x r design at q levels.

    Supported: (q, 4) for q in {2, 3, 4, 5} and (q, 1) for any q >= 2.
    """
    if r == 1:
        if q < 2:
            raise UnsupportedDesignError(f"1-d ladder needs q >= 2, got {q}")
        return DesignMatrix(np.arange(q).reshape(-1, 1), q)
    key = (q, r)
    if key not in _EMBEDDED:
        raise UnsupportedDesignError(
            f"no embedded design for q={q}, r={r}; supported: {SUPPORTED_DESIGNS}"
        )
    return DesignMatrix(np.array(_EMBEDDED[key]), q)


def full_factorial(q: int, r: int) -> DesignMatrix:
    """All q**r level combinations.  Cost grows exponentially with r."""
    if q < 2 or r < 1:
        raise ValueError("full factorial needs q >= 2 and r >= 1")
    levels = np.array(list(itertools.product(range(q), repeat=r)), dtype=int)
    return DesignMatrix(levels, q)


def map_levels(design: DesignMatrix, box: IntervalBox, level_values=None) -> np.ndarray:
    """Map level indices to physical design points (s x r).

    Without ``level_values`` each variable uses q equally spaced values
    including both interval endpoints.  ``level_values`` is a per-variable list
    of q physical values and exists because some canonical tables use
    non-uniform level sets.
    """
    if design.r != box.r:
        raise ValueError(f"design has {design.r} variables but box has {box.r}")
    q = design.q
    if level_values is None:
        table = box.lower[None, :] + (box.upper - box.lower)[None, :] * (
            np.arange(q, dtype=float)[:, None] / (q - 1)
        )
    else:
        if len(level_values) != box.r:
            raise ValueError("level_values must supply one list per variable")
        table = np.empty((q, box.r))
        for i, vals in enumerate(level_values):
            vals = np.asarray(vals, dtype=float)
            if vals.size != q:
                raise ValueError(f"variable {box.names[i]}: expected {q} level values, got {vals.size}")
            if vals.min() < box.lower[i] or vals.max() > box.upper[i]:
                raise ValueError(f"variable {box.names[i]}: level values outside its interval")
            table[:, i] = vals
    cols = np.arange(box.r)
    return table[design.levels, cols[None, :]]


def partition_1d(interval, q: int) -> np.ndarray:
    """q equally spaced points over a single interval, endpoints included."""
    lo, hi = float(interval[0]), float(interval[1])
    if q < 2:
        raise ValueError(f"partition needs q >= 2, got {q}")
    if not lo < hi:
        raise ValueError("degenerate interval")
    return np.linspace(lo, hi, q)


def scale(box: IntervalBox, point) -> np.ndarray:
    """Physical coordinates -> unit hypercube (per-variable affine)."""
    p = np.asarray(point, dtype=float)
    return (p - box.lower) / box.lengths


def unscale(box: IntervalBox, point) -> np.ndarray:
    """Unit hypercube -> physical coordinates."""
    p = np.asarray(point, dtype=float)
    return box.lower + p * box.lengths


def sobol_points(count: int, dim: int, seed) -> np.ndarray:
    """Deterministic scrambled low-discrepancy set in [0, 1)^dim.

    Draws the next power of two and truncates, which keeps scipy quiet about
    unbalanced sample sizes.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    sampler = qmc.Sobol(d=dim, scramble=True, seed=np.random.default_rng(seed))
    m = max(0, int(np.ceil(np.log2(count))))
    return sampler.random_base2(m=m)[:count]


def test_grid(box: IntervalBox, lattice=None, low_discrepancy=None, seed=0) -> np.ndarray:
    """Candidate/test point set in scaled (unit-cube) coordinates.

    Exactly one of ``lattice`` (points per dimension; the full factorial
    includes every box vertex) or ``low_discrepancy`` (point count, drawn from
    a seeded scrambled Sobol sequence) must be given.
    """
    if (lattice is None) == (low_discrepancy is None):
        raise ValueError("specify exactly one of lattice / low_discrepancy")
    if lattice is not None:
        n = int(lattice)
        if n < 2:
            raise ValueError("lattice resolution must be >= 2")
        axes = [np.linspace(0.0, 1.0, n)] * box.r
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)
    n = int(low_discrepancy)
    if n < 2:
        raise ValueError("low_discrepancy count must be >= 2")
    return sobol_points(n, box.r, seed)


def design_to_csv(points: np.ndarray, names, path) -> None:
    """Write physical design points as CSV with a header row."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for row in points:
            fh.write(",".join(format(v, FLOAT_FMT) for v in row) + "\n")


def is_balanced(design: DesignMatrix) -> bool:
    """True when every column holds each level exactly s/q times."""
    s, q = design.s, design.q
    if s % q:
        return False
    want = s // q
    return all(
        np.all(np.bincount(design.levels[:, c], minlength=q) == want)
        for c in range(design.r)
    )


def orthogonality_violations(design: DesignMatrix):
    """Column pairs (0-based) violating strength-2 orthogonality.

    Strength 2 requires every ordered level pair to appear equally often in
    every pair of columns.
    """
    s, q = design.s, design.q
    bad = []
    for c1, c2 in itertools.combinations(range(design.r), 2):
        joint = design.levels[:, c1] * q + design.levels[:, c2]
        counts = np.bincount(joint, minlength=q * q)
        if s % (q * q) or np.any(counts != s // (q * q)):
            bad.append((c1, c2))
    return bad
