"""Command-line surface: run, baseline, design, report.

Configuration is a JSON document validated against the schema shipped at
``gpbounds/schemas/config.schema.json``; all artifacts are JSON/CSV files
written into the configured output directory.
"""

from __future__ import annotations

import argparse
import json
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import models
from .acquisition import AcquisitionKind, StoppingPolicy
from .baselines import subinterval_method, vertex_method
from .design import (
    FLOAT_FMT,
    IntervalBox,
    design_to_csv,
    map_levels,
    partition_1d,
    taguchi_array,
    test_grid,
)
from .errors import ConfigError, EvaluationError, GpBoundsError
from .gp import predict_batch
from .models import CachedBlackbox, SdofParams, SubprocessBlackbox
from .solver import (
    RunReport,
    compare_to_reference,
    evaluate_initial,
    run_approach_a,
    run_approach_b,
    write_bounds_csv,
    write_trace_csv,
)

_SDOF_PARAM_KEYS = ("mass", "damping", "damping_ratio", "force_amplitude",
                    "forcing_frequency", "forcing_duration", "horizon", "dt")


def _schema() -> dict:
    with resources.files("gpbounds.schemas").joinpath("config.schema.json").open() as fh:
        return json.load(fh)


def load_config(path) -> dict:
    """Parse and validate a run configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    try:
        jsonschema.validate(cfg, _schema())
    except jsonschema.ValidationError as exc:
        field = ".".join(str(p) for p in exc.absolute_path) or "(top level)"
        raise ConfigError(f"config field {field}: {exc.message}", field=field)
    for i, entry in enumerate(cfg["box"]):
        if not entry["lower"] < entry["upper"]:
            field = f"box[{i}].lower"
            raise ConfigError(f"config field {field}: lower must be strictly below upper "
                              f"for variable {entry['name']!r}", field=field)
    model = cfg["model"]
    if model["name"] == "subprocess" and "command" not in model:
        raise ConfigError("config field model.command: required for subprocess models",
                          field="model.command")
    if model["name"] == "sdof" and len(cfg["box"]) != 1:
        raise ConfigError("config field box: the sdof model has exactly one interval variable",
                          field="box")
    if model["name"] == "synthetic4d":
        if len(cfg["box"]) != 4:
            raise ConfigError("config field box: synthetic4d needs four variables", field="box")
        for i, entry in enumerate(cfg["box"]):
            if entry["lower"] < 0 or entry["upper"] > 1:
                raise ConfigError(f"config field box[{i}]: synthetic4d is defined on the unit box",
                                  field=f"box[{i}]")
    unknown = set(model.get("params", {})) - set(_SDOF_PARAM_KEYS)
    if model["name"] == "sdof" and unknown:
        raise ConfigError(f"config field model.params: unknown keys {sorted(unknown)}",
                          field="model.params")
    return cfg


def _box_from_config(cfg) -> IntervalBox:
    entries = cfg["box"]
    return IntervalBox(
        [e["lower"] for e in entries],
        [e["upper"] for e in entries],
        tuple(e["name"] for e in entries),
        tuple(e.get("unit", "") for e in entries),
    )


def _build_blackbox(cfg):
    model = cfg["model"]
    name = model["name"]
    if name == "sdof":
        params = SdofParams(**model.get("params", {}))
        return (lambda b: models.sdof_max_abs_acceleration(float(np.asarray(b)[0]), params)), name
    if name == "synthetic4d":
        return models.synthetic_4d, name
    return SubprocessBlackbox(model["command"], timeout=model.get("timeout", 60.0)), name


def _initial_points(cfg, box: IntervalBox) -> np.ndarray:
    spec = cfg.get("initial_design")
    if spec is None:
        raise ConfigError("config field initial_design: required for runs", field="initial_design")
    if "taguchi_q" in spec:
        design = taguchi_array(spec["taguchi_q"], box.r)
        return map_levels(design, box, spec.get("level_values"))
    if "partition_q" in spec:
        if box.r != 1:
            raise ConfigError("config field initial_design.partition_q: only valid for one "
                              "interval variable", field="initial_design.partition_q")
        return partition_1d((box.lower[0], box.upper[0]), spec["partition_q"]).reshape(-1, 1)
    path = spec["points_file"]
    try:
        pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError:
        raise ConfigError(f"config field initial_design.points_file: cannot read {path}",
                          field="initial_design.points_file")
    if pts.shape[1] != box.r:
        raise ConfigError(f"config field initial_design.points_file: expected {box.r} columns",
                          field="initial_design.points_file")
    return pts


def _grid_from_config(cfg, box: IntervalBox, seed: int):
    spec = cfg.get("grid")
    if spec is None:
        return None
    if "lattice" in spec:
        return test_grid(box, lattice=spec["lattice"])
    return test_grid(box, low_discrepancy=spec["low_discrepancy"], seed=seed)


def _require(cfg, key: str):
    if key not in cfg:
        raise ConfigError(f"config field {key}: required for runs", field=key)
    return cfg[key]


def _print_summary(report: RunReport) -> None:
    box = report.box
    print(f"approach {report.approach}, acquisition {report.af.name}"
          + (f" (chi={report.af.chi:g})" if report.af.name == "cb" else ""))
    added = report.evaluations - report.initial_size
    print(f"evaluations: {report.evaluations} = {report.initial_size} initial + {added} added")
    print(f"stop reasons: min={report.stop_reasons.get('min')}, max={report.stop_reasons.get('max')}")
    for est in (report.minimum, report.maximum):
        if est is None:
            continue
        tag = "lower bound" if est.side.value == "min" else "upper bound"
        loc = ", ".join(f"{n}={v:.6g}" for n, v in zip(box.names, est.location))
        print(f"{tag}: mean {est.mean:.6g}, interval [{est.interval[0]:.6g}, {est.interval[1]:.6g}]"
              f" at {loc} (observed {est.observed_optimum:.6g})")
    warned = []
    for sat in (report.satisfaction_min, report.satisfaction_max):
        if sat is not None and sat.warning:
            warned.append(sat)
    if warned:
        print("WARNING: bound-quality metrics flagged the following sides; consider more simulations")
        for sat in warned:
            m1 = "".join("Y" if f else "N" for f in sat.metric1.distance_flags)
            m2 = "".join("Y" if f else "N" for f in sat.metric2.distance_flags)
            mag = {True: "Y", False: "N", None: "indeterminate"}[sat.metric2.magnitude_condition]
            print(f"  side={sat.side.value}: metric1 distances [{m1}] ci="
                  f"{'Y' if sat.metric1.ci_condition else 'N'}; metric2 distances [{m2}] magnitude={mag}")
    if report.incomplete:
        print(f"RUN INCOMPLETE: {report.failure}")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    out = Path(args.out or cfg.get("output_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    box = _box_from_config(cfg)
    fn, source = _build_blackbox(cfg)
    blackbox = CachedBlackbox(fn, box, source=source, log_path=out / "eval_log.jsonl")
    if args.resume:
        replayed = blackbox.replay_log(args.resume)
        print(f"resume: replayed {replayed} evaluations from {args.resume}")

    approach = _require(cfg, "approach")
    af_cfg = _require(cfg, "af")
    budget = _require(cfg, "budget")
    kind = (AcquisitionKind.cb(af_cfg.get("chi", 2.0)) if af_cfg["kind"] == "cb"
            else AcquisitionKind(af_cfg["kind"]))
    policy = StoppingPolicy(
        budget_total=budget,
        budget_includes_initial=cfg.get("budget_includes_initial", False),
        af_tolerance=af_cfg.get("delta"),
        cb_slack=af_cfg.get("cb_slack", 1e-6),
    )

    points = _initial_points(cfg, box)
    extra = max(0, budget - len(points)) if policy.budget_includes_initial else budget
    total = len(points) + extra
    if total > 0 and len(points) > 0.25 * total:
        print(f"warning: initial design uses {len(points)} of {total} total simulations "
              "(more than a quarter of the budget)")

    initial = evaluate_initial(blackbox, box, points, parallel=args.parallel)
    grid = _grid_from_config(cfg, box, seed)
    runner = run_approach_a if approach == "A" else run_approach_b
    report = runner(blackbox, box, initial, kind, policy, seed=seed, grid=grid,
                    fit_starts=cfg.get("fit_starts", 10),
                    standardize=cfg.get("standardize_outputs", False))

    payload = {"generated_at": time.time(), **report.to_dict()}
    (out / "report.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
    write_trace_csv(report, out / "trace.csv")
    write_bounds_csv(report, out / "bounds.csv")
    print(f"artifacts written to {out}")
    _print_summary(report)
    return 3 if report.incomplete else 0


def cmd_baseline(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.get("output_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    box = _box_from_config(cfg)
    fn, source = _build_blackbox(cfg)
    blackbox = CachedBlackbox(fn, box, source=source, log_path=out / "eval_log.jsonl")
    if args.method == "vertex":
        result = vertex_method(blackbox, box, allow_large=args.allow_large)
    else:
        result = subinterval_method(blackbox, box, args.n, allow_large=args.allow_large)
    payload = {
        "generated_at": time.time(),
        "method": args.method,
        "subintervals": args.n if args.method == "subinterval" else None,
        "model": cfg["model"]["name"],
        "box": {"lower": box.lower.tolist(), "upper": box.upper.tolist(),
                "names": list(box.names)},
        **result.to_dict(),
    }
    (out / "baseline.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
    loc_lo = ", ".join(f"{n}={v:.6g}" for n, v in zip(box.names, result.lower_location))
    loc_hi = ", ".join(f"{n}={v:.6g}" for n, v in zip(box.names, result.upper_location))
    print(f"{args.method}: {result.evaluations} evaluations")
    print(f"lower bound {result.lower:.6g} at {loc_lo}")
    print(f"upper bound {result.upper:.6g} at {loc_hi}")
    return 0


def cmd_design(args) -> int:
    cfg = load_config(args.config)
    box = _box_from_config(cfg)
    levels = None
    if args.levels:
        with open(args.levels, "r", encoding="utf-8") as fh:
            levels = json.load(fh)
    design = taguchi_array(args.q, box.r)
    points = map_levels(design, box, levels)
    design_to_csv(points, box.names, args.out)
    print(f"wrote {design.s} x {design.r} design to {args.out}")
    return 0


def cmd_report(args) -> int:
    path = Path(args.report)
    if not path.exists():
        raise ConfigError(f"report file not found: {path}")
    report = RunReport.from_json(path.read_text(encoding="utf-8"))
    out = Path(args.out or path.parent)
    out.mkdir(parents=True, exist_ok=True)
    box = report.box

    if box.r == 1 and report.final_training:
        curve_grid = np.linspace(0.0, 1.0, 301).reshape(-1, 1)
        physical = box.lower[0] + curve_grid[:, 0] * box.lengths[0]
        sides = ["min"] if report.approach == "B" else ["min", "max"]
        for side in sides:
            gp = report.rebuild_gp(side)
            means, variances = predict_batch(gp, curve_grid)
            sig = np.sqrt(variances)
            name = "gp_curve.csv" if side == "min" else "gp_curve_ub.csv"
            with open(out / name, "w", encoding="utf-8") as fh:
                fh.write("b,mean,lo,hi\n")
                for b, m, s in zip(physical, means, sig):
                    fh.write(",".join(format(v, FLOAT_FMT)
                                      for v in (b, m, m - 2 * s, m + 2 * s)) + "\n")
            print(f"wrote {out / name}")
    elif box.r != 1:
        print("gp_curve.csv is only produced for single-variable runs")

    if args.reference:
        try:
            ref = tuple(float(v) for v in args.reference.split(","))
            assert len(ref) == 2
        except (ValueError, AssertionError):
            raise ConfigError("--reference must be 'lower,upper'")
        with open(out / "error_trace.csv", "w", encoding="utf-8") as fh:
            fh.write("iteration,side,est_mean,error_pct\n")
            for rec in report.iterations:
                for st in rec.steps:
                    target = ref[0] if st.side.value == "min" else ref[1]
                    err = 100.0 * (st.est_mean - target) / abs(target)
                    fh.write(f"{rec.iteration},{st.side.value},"
                             f"{format(st.est_mean, FLOAT_FMT)},{format(err, FLOAT_FMT)}\n")
            if report.minimum is not None and report.maximum is not None:
                errs = compare_to_reference(report, ref)
                final_it = len(report.iterations) + 1
                fh.write(f"{final_it},min,{format(report.minimum.mean, FLOAT_FMT)},"
                         f"{format(errs[0], FLOAT_FMT)}\n")
                fh.write(f"{final_it},max,{format(report.maximum.mean, FLOAT_FMT)},"
                         f"{format(errs[1], FLOAT_FMT)}\n")
        print(f"wrote {out / 'error_trace.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpbounds",
                                     description="Bounds of black-box responses over interval "
                                                 "inputs via GP surrogates")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an iterative bound search")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="override the config output directory")
    p_run.add_argument("--parallel", type=int, default=1,
                       help="parallel evaluations for the initial design")
    p_run.add_argument("--resume", default=None, help="replay a previous eval_log.jsonl")
    p_run.set_defaults(func=cmd_run)

    p_base = sub.add_parser("baseline", help="run a reference interval-propagation method")
    p_base.add_argument("--config", required=True)
    p_base.add_argument("--method", required=True, choices=("vertex", "subinterval"))
    p_base.add_argument("--n", type=int, default=300, help="subintervals per variable")
    p_base.add_argument("--out", default=None)
    p_base.add_argument("--allow-large", action="store_true",
                        help="override the evaluation-count guard")
    p_base.set_defaults(func=cmd_baseline)

    p_design = sub.add_parser("design", help="emit an initial design as CSV")
    p_design.add_argument("--config", required=True, help="config supplying the box")
    p_design.add_argument("--q", type=int, required=True, help="levels per variable")
    p_design.add_argument("--levels", default=None,
                          help="JSON file with explicit per-variable level values")
    p_design.add_argument("--out", default="design.csv")
    p_design.set_defaults(func=cmd_design)

    p_rep = sub.add_parser("report", help="derive plot-ready CSVs from report.json")
    p_rep.add_argument("--report", required=True)
    p_rep.add_argument("--reference", default=None, help="'lower,upper' reference bounds")
    p_rep.add_argument("--out", default=None)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}")
        return 2
    except EvaluationError as exc:
        print(f"evaluation error: {exc}")
        return 3
    except GpBoundsError as exc:
        print(f"error: {exc}")
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
