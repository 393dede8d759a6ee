"""Iterative bound search: two loop variants, estimates, metrics, reporting.

Variant A keeps two independent training datasets, one per bound, and runs
the two searches in sequence with an equally split evaluation budget.
Variant B grows a single shared dataset, selecting one point per bound per
iteration from the same GP (two evaluations per iteration while both sides
are live, one afterward).

Either way each iteration refits the kernel hyperparameters, maximizes the
acquisition function over a fixed candidate grid, evaluates the black box at
the selected point, appends it and re-checks the stopping rules.  The final
bound estimates are the extrema of the posterior mean over an estimation grid
that always contains the training rows, reported with their +/- 2 sigma
confidence intervals, which by construction bracket the observed optima.

Determinism: the candidate grid, the multistart draw and the estimation grid
are derived from the run seed once and reused for every iteration and both
sides, so identical inputs reproduce identical reports bit for bit (refitting
the same dataset always yields the same hyperparameters).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .acquisition import (
    AcquisitionKind,
    AcquisitionResult,
    Direction,
    StoppingPolicy,
    af_from_moments,
    maximize_af,
    stopping_check,
)
from .design import FLOAT_FMT, IntervalBox, scale, sobol_points, test_grid, unscale
from .errors import EvaluationError
from .gp import (
    DUPLICATE_TOL,
    FittedGp,
    KernelHyperparams,
    TrainingSet,
    condition,
    fit_hyperparameters,
    predict,
    predict_batch,
)

__all__ = [
    "BoundEstimate",
    "SideStep",
    "IterationRecord",
    "Metric1Result",
    "Metric2Result",
    "SatisfactionReport",
    "RunReport",
    "estimate_bounds",
    "metric1",
    "metric2",
    "compare_to_reference",
    "run_approach_a",
    "run_approach_b",
    "evaluate_initial",
    "default_candidate_grid",
    "write_trace_csv",
    "write_bounds_csv",
]

# Default candidate grids: full-factorial lattice for low dimension, a seeded
# low-discrepancy set otherwise; regenerated identically every iteration.
LATTICE_PER_DIM = 50
LOW_DISCREPANCY_COUNT = 4096
# Extra resolution used only for the final posterior-mean scan when r >= 3.
ESTIMATION_EXTRA = 65536

_CI_SLACK = 1e-12


@dataclass(frozen=True)
class BoundEstimate:
    """One bound: posterior-mean extremum location, value, and 2-sigma interval."""

    side: Direction
    location: np.ndarray
    mean: float
    sigma: float
    interval: tuple
    observed_optimum: float
    observed_location: np.ndarray

    def __post_init__(self):
        for name in ("location", "observed_location"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass
class SideStep:
    """What one bound's search did in one iteration."""

    side: Direction
    b_hat: np.ndarray | None
    observed: float | None
    af_value: float
    est_mean: float
    theta: np.ndarray
    p: np.ndarray
    stop_fired: bool = False
    duplicate_skipped: bool = False
    coincident: bool = False


@dataclass
class IterationRecord:
    iteration: int
    steps: list


@dataclass(frozen=True)
class Metric1Result:
    """Per-variable distance of the bound location to the last acquisition pick,
    plus the confidence-interval containment condition at that pick."""

    distances: np.ndarray
    distance_flags: np.ndarray
    ci_condition: bool
    af_location: np.ndarray


@dataclass(frozen=True)
class Metric2Result:
    """Per-variable distance of the bound location to the observed optimum,
    plus the posterior-mean magnitude agreement condition (None = indeterminate)."""

    distances: np.ndarray
    distance_flags: np.ndarray
    magnitude_condition: bool | None


@dataclass(frozen=True)
class SatisfactionReport:
    side: Direction
    metric1: Metric1Result
    metric2: Metric2Result
    warning: bool


@dataclass
class RunReport:
    """Everything a run produced; serializes losslessly to JSON."""

    approach: str
    af: AcquisitionKind
    box: IntervalBox
    initial_size: int
    initial_description: str
    minimum: BoundEstimate | None
    maximum: BoundEstimate | None
    satisfaction_min: SatisfactionReport | None
    satisfaction_max: SatisfactionReport | None
    iterations: list
    evaluations: int
    stop_reasons: dict
    seed: int
    final_hyper: dict
    final_training: dict
    standardize: bool = False
    incomplete: bool = False
    failure: str | None = None

    def to_dict(self) -> dict:
        def estimate(e):
            if e is None:
                return None
            return {
                "side": e.side.value,
                "location": e.location.tolist(),
                "mean": e.mean,
                "sigma": e.sigma,
                "interval": list(e.interval),
                "observed_optimum": e.observed_optimum,
                "observed_location": e.observed_location.tolist(),
            }

        def satisfaction(s):
            if s is None:
                return None
            return {
                "side": s.side.value,
                "metric1": {
                    "distances": s.metric1.distances.tolist(),
                    "distance_flags": [bool(f) for f in s.metric1.distance_flags],
                    "ci_condition": s.metric1.ci_condition,
                    "af_location": s.metric1.af_location.tolist(),
                },
                "metric2": {
                    "distances": s.metric2.distances.tolist(),
                    "distance_flags": [bool(f) for f in s.metric2.distance_flags],
                    "magnitude_condition": s.metric2.magnitude_condition,
                },
                "warning": s.warning,
            }

        return {
            "approach": self.approach,
            "af": {"name": self.af.name, "chi": self.af.chi},
            "box": {
                "lower": self.box.lower.tolist(),
                "upper": self.box.upper.tolist(),
                "names": list(self.box.names),
                "units": list(self.box.units),
            },
            "initial_size": self.initial_size,
            "initial_description": self.initial_description,
            "minimum": estimate(self.minimum),
            "maximum": estimate(self.maximum),
            "satisfaction_min": satisfaction(self.satisfaction_min),
            "satisfaction_max": satisfaction(self.satisfaction_max),
            "iterations": [
                {
                    "iteration": rec.iteration,
                    "steps": [
                        {
                            "side": st.side.value,
                            "b_hat": None if st.b_hat is None else st.b_hat.tolist(),
                            "observed": st.observed,
                            "af_value": st.af_value,
                            "est_mean": st.est_mean,
                            "theta": st.theta.tolist(),
                            "p": st.p.tolist(),
                            "stop_fired": st.stop_fired,
                            "duplicate_skipped": st.duplicate_skipped,
                            "coincident": st.coincident,
                        }
                        for st in rec.steps
                    ],
                }
                for rec in self.iterations
            ],
            "evaluations": self.evaluations,
            "stop_reasons": dict(self.stop_reasons),
            "seed": self.seed,
            "final_hyper": self.final_hyper,
            "final_training": self.final_training,
            "standardize": self.standardize,
            "incomplete": self.incomplete,
            "failure": self.failure,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        box = IntervalBox(d["box"]["lower"], d["box"]["upper"],
                          tuple(d["box"]["names"]), tuple(d["box"]["units"]))

        def estimate(e):
            if e is None:
                return None
            return BoundEstimate(Direction(e["side"]), np.asarray(e["location"]),
                                 e["mean"], e["sigma"], tuple(e["interval"]),
                                 e["observed_optimum"], np.asarray(e["observed_location"]))

        def satisfaction(s):
            if s is None:
                return None
            m1 = Metric1Result(np.asarray(s["metric1"]["distances"]),
                               np.asarray(s["metric1"]["distance_flags"], dtype=bool),
                               s["metric1"]["ci_condition"],
                               np.asarray(s["metric1"]["af_location"]))
            m2 = Metric2Result(np.asarray(s["metric2"]["distances"]),
                               np.asarray(s["metric2"]["distance_flags"], dtype=bool),
                               s["metric2"]["magnitude_condition"])
            return SatisfactionReport(Direction(s["side"]), m1, m2, s["warning"])

        iterations = [
            IterationRecord(
                rec["iteration"],
                [
                    SideStep(
                        Direction(st["side"]),
                        None if st["b_hat"] is None else np.asarray(st["b_hat"]),
                        st["observed"],
                        st["af_value"],
                        st["est_mean"],
                        np.asarray(st["theta"]),
                        np.asarray(st["p"]),
                        st["stop_fired"],
                        st["duplicate_skipped"],
                        st["coincident"],
                    )
                    for st in rec["steps"]
                ],
            )
            for rec in d["iterations"]
        ]
        return cls(
            approach=d["approach"],
            af=AcquisitionKind(d["af"]["name"], d["af"]["chi"]),
            box=box,
            initial_size=d["initial_size"],
            initial_description=d["initial_description"],
            minimum=estimate(d["minimum"]),
            maximum=estimate(d["maximum"]),
            satisfaction_min=satisfaction(d["satisfaction_min"]),
            satisfaction_max=satisfaction(d["satisfaction_max"]),
            iterations=iterations,
            evaluations=d["evaluations"],
            stop_reasons=dict(d["stop_reasons"]),
            seed=d["seed"],
            final_hyper=d["final_hyper"],
            final_training=d["final_training"],
            standardize=d.get("standardize", False),
            incomplete=d.get("incomplete", False),
            failure=d.get("failure"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))

    def rebuild_gp(self, side: str) -> FittedGp:
        """Recondition the final GP of one side ("min"/"max") from the report."""
        data = self.final_training[side]
        training = TrainingSet(scale(self.box, np.asarray(data["points"])), data["values"])
        hyper = KernelHyperparams(self.final_hyper[side]["theta"], self.final_hyper[side]["p"])
        return condition(training, hyper, standardize=self.standardize)


def evaluate_initial(blackbox, box: IntervalBox, points_physical, parallel: int = 1) -> TrainingSet:
    """Run the black box at the initial design points (physical coordinates)."""
    pts = np.atleast_2d(np.asarray(points_physical, dtype=float))
    if parallel > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallel) as pool:
            values = list(pool.map(lambda p: float(blackbox(p)), pts))
    else:
        values = [float(blackbox(p)) for p in pts]
    return TrainingSet(scale(box, pts), values)


def default_candidate_grid(box: IntervalBox, seed) -> np.ndarray:
    """Scaled candidate set: 50-per-dim lattice for r <= 2, Sobol 4096 otherwise."""
    if box.r <= 2:
        return test_grid(box, lattice=LATTICE_PER_DIM)
    return test_grid(box, low_discrepancy=LOW_DISCREPANCY_COUNT, seed=seed)


def estimate_bounds(gp: FittedGp, grid, box: IntervalBox | None = None):
    """(minimum, maximum) bound estimates from the posterior-mean extrema.

    The grid must include every training row so that the observed optima are
    always candidates, which makes the reported 2-sigma intervals bracket
    them.  Locations are physical when ``box`` is given.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    means, variances = predict_batch(gp, grid)
    sigmas = np.sqrt(variances)
    values = gp.training.values

    def where(pos: int, side: Direction) -> BoundEstimate:
        mean = float(means[pos])
        sigma = float(sigmas[pos])
        j = int(np.argmin(values) if side is Direction.MIN else np.argmax(values))
        loc = unscale(box, grid[pos]) if box is not None else grid[pos]
        obs = gp.training.points[j]
        obs_loc = unscale(box, obs) if box is not None else obs
        return BoundEstimate(side, loc, mean, sigma,
                             (mean - 2.0 * sigma, mean + 2.0 * sigma),
                             float(values[j]), obs_loc)

    return (where(int(np.argmin(means)), Direction.MIN),
            where(int(np.argmax(means)), Direction.MAX))


def metric1(last_af_point, estimate: BoundEstimate, gp: FittedGp, box: IntervalBox) -> Metric1Result:
    """Distance of the bound location to the last (unevaluated) acquisition pick.

    Per-variable distances at or above 2 percent of the interval length flag
    the bound as under-explored.  The companion condition requires the GP
    confidence interval at that pick to stay inside the bound's conservative
    envelope (equality tolerated).
    """
    af_phys = np.atleast_1d(np.asarray(last_af_point, dtype=float))
    z = np.abs(estimate.location - af_phys)
    flags = z < 0.02 * box.lengths
    pred = predict(gp, scale(box, af_phys))
    if estimate.side is Direction.MIN:
        bound = estimate.interval[0]
        ci = pred.mean - 2.0 * pred.sigma >= bound - _CI_SLACK * (1.0 + abs(bound))
    else:
        bound = estimate.interval[1]
        ci = pred.mean + 2.0 * pred.sigma <= bound + _CI_SLACK * (1.0 + abs(bound))
    return Metric1Result(z, flags, bool(ci), af_phys)


def metric2(estimate: BoundEstimate, gp: FittedGp, box: IntervalBox) -> Metric2Result:
    """Distance of the bound location to the observed-optimum location, and the
    posterior-mean magnitude agreement (within 5 percent) between the two."""
    z = np.abs(estimate.location - estimate.observed_location)
    flags = z < 0.02 * box.lengths
    m_bound = estimate.mean
    if m_bound == 0.0:
        magnitude = None
    else:
        m_obs = predict(gp, scale(box, estimate.observed_location)).mean
        magnitude = bool(abs(m_bound - m_obs) < 0.05 * abs(m_bound))
    return Metric2Result(z, flags, magnitude)


def _satisfaction(side, m1: Metric1Result, m2: Metric2Result) -> SatisfactionReport:
    ok = (bool(np.all(m1.distance_flags)) and m1.ci_condition
          and bool(np.all(m2.distance_flags)) and m2.magnitude_condition is True)
    return SatisfactionReport(side, m1, m2, not ok)


def compare_to_reference(result, reference_bounds):
    """Signed percentage errors (lower, upper) of bound estimates vs a reference.

    ``result`` may be a RunReport, a BaselineResult, or a plain (lb, ub) pair.
    """
    if isinstance(result, RunReport):
        if result.minimum is None or result.maximum is None:
            raise ValueError("report carries no bound estimates")
        est = (result.minimum.mean, result.maximum.mean)
    elif hasattr(result, "lower") and hasattr(result, "upper"):
        est = (result.lower, result.upper)
    else:
        est = (float(result[0]), float(result[1]))
    ref_lo, ref_hi = float(reference_bounds[0]), float(reference_bounds[1])
    if ref_lo == 0.0 or ref_hi == 0.0:
        raise ValueError("zero reference bound: percentage error undefined")
    return (100.0 * (est[0] - ref_lo) / abs(ref_lo),
            100.0 * (est[1] - ref_hi) / abs(ref_hi))


def _split_budget(policy: StoppingPolicy, initial_size: int):
    extra = policy.budget_total - initial_size if policy.budget_includes_initial else policy.budget_total
    extra = max(0, extra)
    return extra // 2, extra - extra // 2


def _min_inf_dist_mask(grid: np.ndarray, points: np.ndarray) -> np.ndarray:
    d = np.abs(grid[:, None, :] - points[None, :, :]).max(axis=-1)
    return d.min(axis=1) <= DUPLICATE_TOL


def _select(order: np.ndarray, dup_mask: np.ndarray):
    for idx in order:
        if not dup_mask[idx]:
            return int(idx), bool(idx != order[0])
    return None, False


class _Run:
    """Shared seeds, grids and fitting for one run."""

    def __init__(self, box, af_kind, policy, seed, grid, fit_starts, fit_bounds, standardize):
        self.box = box
        self.af_kind = af_kind
        self.policy = policy
        self.seed = seed
        root = np.random.SeedSequence(seed)
        ss_grid, self._ss_fit, self._ss_est = root.spawn(3)
        self.grid = (np.atleast_2d(np.asarray(grid, dtype=float)) if grid is not None
                     else default_candidate_grid(box, ss_grid))
        if self.grid.shape[0] == 0 or self.grid.shape[1] != box.r:
            raise ValueError(f"candidate grid must be nonempty with {box.r} columns")
        self.fit_starts = fit_starts
        self.fit_bounds = fit_bounds
        self.standardize = standardize
        self._est_extra = sobol_points(ESTIMATION_EXTRA, box.r, self._ss_est) if box.r >= 3 else None

    def fit(self, data: TrainingSet) -> FittedGp:
        # Reusing the same seed keeps refits of identical data bit-identical.
        hyper = fit_hyperparameters(data, bounds=self.fit_bounds, starts=self.fit_starts,
                                    seed=self._ss_fit, standardize=self.standardize)
        return condition(data, hyper, standardize=self.standardize)

    def moments(self, gp: FittedGp):
        means, variances = predict_batch(gp, self.grid)
        sigmas = np.sqrt(variances)
        sigmas[_min_inf_dist_mask(self.grid, gp.training.points)] = 0.0
        return means, sigmas

    def estimation_grid(self, data: TrainingSet) -> np.ndarray:
        parts = [self.grid]
        if self._est_extra is not None:
            parts.append(self._est_extra)
        parts.append(data.points)
        return np.vstack(parts)

    def finalize(self, data: TrainingSet):
        """Final fit, both bound estimates, per-side satisfaction metrics."""
        gp = self.fit(data)
        est_min, est_max = estimate_bounds(gp, self.estimation_grid(data), self.box)
        out = {}
        for side, est in ((Direction.MIN, est_min), (Direction.MAX, est_max)):
            af_li = maximize_af(gp, self.grid, self.af_kind, side, self.box)
            sat = _satisfaction(side, metric1(af_li.b_hat, est, gp, self.box),
                                metric2(est, gp, self.box))
            out[side] = (est, sat)
        return gp, out


def run_approach_a(blackbox, box: IntervalBox, initial: TrainingSet, af_kind: AcquisitionKind,
                   policy: StoppingPolicy, seed: int = 0, grid=None, fit_starts: int = 10,
                   fit_bounds=None, standardize: bool = False) -> RunReport:
    """Two independent searches, one dataset per bound, budget split equally.

    The lower-bound search receives floor(extra/2) evaluations and the
    upper-bound search the remainder; unused budget is not transferred.
    """
    if initial.r != box.r:
        raise ValueError("initial training set dimensionality does not match the box")
    run = _Run(box, af_kind, policy, seed, grid, fit_starts, fit_bounds, standardize)
    alloc = dict(zip((Direction.MIN, Direction.MAX), _split_budget(policy, initial.n)))

    datasets = {}
    records = []
    used = {Direction.MIN: 0, Direction.MAX: 0}
    stop_reasons = {}
    failure = None

    for side in (Direction.MIN, Direction.MAX):
        data = initial
        reason = "aborted" if failure is not None else None
        iteration = 0
        while reason is None:
            if used[side] >= alloc[side]:
                reason = "budget"
                break
            iteration += 1
            gp = run.fit(data)
            means, sigmas = run.moments(gp)
            incumbent = float(data.values.min() if side is Direction.MIN else data.values.max())
            af_values = af_from_moments(means, sigmas, incumbent, af_kind, side)
            order = np.argsort(-af_values, kind="stable")
            af_max = float(af_values[order[0]])
            est_mean = float(means.min() if side is Direction.MIN else means.max())
            idx, skipped = _select(order, _min_inf_dist_mask(run.grid, data.points))
            if idx is None:
                records.append(IterationRecord(iteration, [SideStep(
                    side, None, None, af_max, est_mean, gp.hyper.theta, gp.hyper.p)]))
                reason = "degenerate"
                break
            b_phys = unscale(box, run.grid[idx])
            try:
                w = float(blackbox(b_phys))
            except EvaluationError as exc:
                failure = str(exc)
                reason = "error"
                break
            data = data.appended(run.grid[idx], w)
            used[side] += 1
            fired = stopping_check(AcquisitionResult(b_phys, af_max, incumbent, side),
                                   af_kind, policy)
            records.append(IterationRecord(iteration, [SideStep(
                side, b_phys, w, af_max, est_mean, gp.hyper.theta, gp.hyper.p,
                stop_fired=fired, duplicate_skipped=skipped)]))
            if fired:
                reason = "af"
        datasets[side] = data
        stop_reasons[side.value] = reason

    return _assemble("A", run, initial, datasets, records, used, stop_reasons, failure)


def run_approach_b(blackbox, box: IntervalBox, initial: TrainingSet, af_kind: AcquisitionKind,
                   policy: StoppingPolicy, seed: int = 0, grid=None, fit_starts: int = 10,
                   fit_bounds=None, standardize: bool = False) -> RunReport:
    """Single shared dataset; both bounds advance from the same GP.

    Each iteration evaluates the lower-bound pick and then the upper-bound
    pick unless they coincide, in which case the single evaluation serves both
    sides.  A side that meets its stopping rule drops out while the other
    keeps iterating on the shared dataset; each side spends from its own half
    of the budget.
    """
    if initial.r != box.r:
        raise ValueError("initial training set dimensionality does not match the box")
    run = _Run(box, af_kind, policy, seed, grid, fit_starts, fit_bounds, standardize)
    alloc = dict(zip((Direction.MIN, Direction.MAX), _split_budget(policy, initial.n)))

    data = initial
    records = []
    used = {Direction.MIN: 0, Direction.MAX: 0}
    stop_reasons = {Direction.MIN: None, Direction.MAX: None}
    failure = None
    iteration = 0

    while failure is None:
        for side in (Direction.MIN, Direction.MAX):
            if stop_reasons[side] is None and used[side] >= alloc[side]:
                stop_reasons[side] = "budget"
        live = [s for s in (Direction.MIN, Direction.MAX) if stop_reasons[s] is None]
        if not live:
            break
        iteration += 1
        gp = run.fit(data)
        means, sigmas = run.moments(gp)
        dup_mask = _min_inf_dist_mask(run.grid, data.points)

        picked = {}
        results = {}
        steps = {}
        for side in live:
            incumbent = float(data.values.min() if side is Direction.MIN else data.values.max())
            af_values = af_from_moments(means, sigmas, incumbent, af_kind, side)
            order = np.argsort(-af_values, kind="stable")
            af_max = float(af_values[order[0]])
            est_mean = float(means.min() if side is Direction.MIN else means.max())
            idx, skipped = _select(order, dup_mask)
            if idx is None:
                stop_reasons[side] = "degenerate"
                steps[side] = SideStep(side, None, None, af_max, est_mean,
                                       gp.hyper.theta, gp.hyper.p)
                continue
            picked[side] = idx
            results[side] = AcquisitionResult(unscale(box, run.grid[idx]), af_max, incumbent, side)
            steps[side] = SideStep(side, unscale(box, run.grid[idx]), None, af_max, est_mean,
                                   gp.hyper.theta, gp.hyper.p, duplicate_skipped=skipped)

        coincident = (
            len(picked) == 2
            and np.max(np.abs(run.grid[picked[Direction.MIN]]
                              - run.grid[picked[Direction.MAX]])) <= DUPLICATE_TOL
        )
        try:
            if coincident:
                idx = picked[Direction.MIN]
                w = float(blackbox(unscale(box, run.grid[idx])))
                data = data.appended(run.grid[idx], w)
                used[Direction.MIN] += 1
                for side in picked:
                    steps[side].observed = w
                    steps[side].coincident = True
            else:
                for side in (Direction.MIN, Direction.MAX):
                    if side not in picked:
                        continue
                    idx = picked[side]
                    w = float(blackbox(unscale(box, run.grid[idx])))
                    data = data.appended(run.grid[idx], w)
                    used[side] += 1
                    steps[side].observed = w
        except EvaluationError as exc:
            failure = str(exc)
            for side in live:
                if stop_reasons[side] is None:
                    stop_reasons[side] = "error"
        for side in picked:
            if stop_reasons[side] is None and stopping_check(results[side], af_kind, policy):
                stop_reasons[side] = "af"
                steps[side].stop_fired = True
        records.append(IterationRecord(iteration, [steps[s] for s in (Direction.MIN, Direction.MAX)
                                                   if s in steps]))

    datasets = {Direction.MIN: data, Direction.MAX: data}
    reasons = {s.value: stop_reasons[s] for s in (Direction.MIN, Direction.MAX)}
    return _assemble("B", run, initial, datasets, records, used, reasons, failure)


def _assemble(approach, run: _Run, initial, datasets, records, used, stop_reasons, failure) -> RunReport:
    estimates = {Direction.MIN: None, Direction.MAX: None}
    satisfactions = {Direction.MIN: None, Direction.MAX: None}
    final_hyper = {}
    final_training = {}
    shared = datasets[Direction.MIN] is datasets[Direction.MAX]
    try:
        if shared:
            gp, both = run.finalize(datasets[Direction.MIN])
            for side in (Direction.MIN, Direction.MAX):
                estimates[side], satisfactions[side] = both[side]
                final_hyper[side.value] = _hyper_dict(gp)
                final_training[side.value] = _training_dict(datasets[side], run.box)
        else:
            for side in (Direction.MIN, Direction.MAX):
                gp, both = run.finalize(datasets[side])
                estimates[side], satisfactions[side] = both[side]
                final_hyper[side.value] = _hyper_dict(gp)
                final_training[side.value] = _training_dict(datasets[side], run.box)
    except Exception as exc:  # keep whatever the run produced
        if failure is None:
            failure = f"finalization failed: {exc}"

    evaluations = initial.n + used[Direction.MIN] + used[Direction.MAX]
    records = sorted(records, key=lambda rec: rec.iteration)
    return RunReport(
        approach=approach,
        af=run.af_kind,
        box=run.box,
        initial_size=initial.n,
        initial_description=f"{initial.n} design points",
        minimum=estimates[Direction.MIN],
        maximum=estimates[Direction.MAX],
        satisfaction_min=satisfactions[Direction.MIN],
        satisfaction_max=satisfactions[Direction.MAX],
        iterations=records,
        evaluations=evaluations,
        stop_reasons=stop_reasons,
        seed=run.seed,
        final_hyper=final_hyper,
        final_training=final_training,
        standardize=run.standardize,
        incomplete=failure is not None,
        failure=failure,
    )


def _hyper_dict(gp: FittedGp) -> dict:
    return {"theta": gp.hyper.theta.tolist(), "p": gp.hyper.p.tolist()}


def _training_dict(data: TrainingSet, box: IntervalBox) -> dict:
    return {"points": unscale(box, data.points).tolist(), "values": data.values.tolist()}


def write_trace_csv(report: RunReport, path) -> None:
    """Flat per-step iteration trace for plotting."""
    names = report.box.names
    r = report.box.r
    header = (["iteration", "side", "af_value", "observed", "est_mean",
               "stop_fired", "duplicate_skipped", "coincident"]
              + [f"b_{n}" for n in names]
              + [f"theta_{i + 1}" for i in range(r)]
              + [f"p_{i + 1}" for i in range(r)])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for rec in report.iterations:
            for st in rec.steps:
                row = [str(rec.iteration), st.side.value,
                       format(st.af_value, FLOAT_FMT),
                       "" if st.observed is None else format(st.observed, FLOAT_FMT),
                       format(st.est_mean, FLOAT_FMT),
                       str(int(st.stop_fired)), str(int(st.duplicate_skipped)),
                       str(int(st.coincident))]
                row += ([""] * r if st.b_hat is None
                        else [format(v, FLOAT_FMT) for v in st.b_hat])
                row += [format(v, FLOAT_FMT) for v in st.theta]
                row += [format(v, FLOAT_FMT) for v in st.p]
                fh.write(",".join(row) + "\n")


def write_bounds_csv(report: RunReport, path) -> None:
    """Both bound estimates, one row per side."""
    names = report.box.names
    header = (["side", "mean", "sigma", "lo", "hi", "observed_optimum"]
              + [f"b_{n}" for n in names] + [f"obs_b_{n}" for n in names])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for est in (report.minimum, report.maximum):
            if est is None:
                continue
            row = [est.side.value, format(est.mean, FLOAT_FMT), format(est.sigma, FLOAT_FMT),
                   format(est.interval[0], FLOAT_FMT), format(est.interval[1], FLOAT_FMT),
                   format(est.observed_optimum, FLOAT_FMT)]
            row += [format(v, FLOAT_FMT) for v in est.location]
            row += [format(v, FLOAT_FMT) for v in est.observed_location]
            fh.write(",".join(row) + "\n")
