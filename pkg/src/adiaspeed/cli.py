"""Command-line entry point: adiaspeed <command> [options]."""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .eigenpath import (
    asp_time_estimate,
    c_functional,
    constant_speed_schedule,
    path_length,
    refine_grid,
    track_eigenstate,
)
from .errors import AdiaspeedError
from .evolution import final_fidelity, min_time_for_fidelity
from .hamiltonians import grover_effective, grover_full, landau_zener, load
from .scheduler import BuilderConfig, build_constant_speed, load_points, segment_count_estimate, total_cost_report
from .schedules import grover_optimal, linear


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON file whose keys mirror the long options")
    p.add_argument("--target-fidelity", type=float, default=0.75)
    p.add_argument("--dl-target", type=float, default=0.2, help="target segment length")
    p.add_argument("--samples", type=int, default=10_000, help="Monte Carlo samples per estimate")
    p.add_argument("--backend", choices=["exact", "gaussian", "gaussian-mc"], default="exact")
    p.add_argument("--beta-over-gap", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"))


def _add_system(p):
    p.add_argument("--system", choices=["grover", "grover-full", "landau-zener", "file"], default="grover")
    p.add_argument("--n", type=int, default=10, help="Grover: N = 2^n items")
    p.add_argument("--marked", type=int, default=0)
    p.add_argument("--delta", type=float, default=0.1, help="avoided-crossing coupling")
    p.add_argument("--hamiltonian", type=Path, help="Hamiltonian file for --system file")
    p.add_argument("--gap", type=float, help="minimum gap for --system file (default: computed)")


def _add_schedule(p):
    p.add_argument("--schedule", default="linear", help="linear | optimal | geodesic | css | <points.csv>")
    p.add_argument("--t1", type=float, help="first step time for css builds (default: automatic)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adiaspeed", description="Constant-speed adiabatic schedules")
    sub = parser.add_subparsers(dest="command", required=True)

    sched = sub.add_parser("schedule", help="schedule construction")
    ssub = sched.add_subparsers(dest="action", required=True)
    build = ssub.add_parser("build", help="build a segmented constant-speed schedule")
    _add_common(build)
    _add_system(build)
    build.add_argument("--t1", type=float)

    evolve = sub.add_parser("evolve", help="final fidelity, or minimum time to the target fidelity")
    _add_common(evolve)
    _add_system(evolve)
    _add_schedule(evolve)
    evolve.add_argument("--time", type=float, help="total time; omit to search for the minimum time")

    sweep = sub.add_parser("sweep", help="time-versus-gap scaling sweeps")
    wsub = sweep.add_subparsers(dest="family", required=True)
    grover = wsub.add_parser("grover")
    _add_common(grover)
    grover.add_argument("--exponents", type=int, nargs="+", default=list(range(6, 15)))
    grover.add_argument("--schedules", nargs="+", default=["linear", "css"])
    grover.add_argument("--workers", type=int, default=1)
    grover.add_argument("--full", action="store_true", help="cross-check n <= 8 on the dense n-qubit Hamiltonian")
    synth = wsub.add_parser("synthetic")
    _add_common(synth)
    synth.add_argument("--deltas", type=float, nargs="+", default=[0.2, 0.1, 0.05, 0.025])
    synth.add_argument("--schedules", nargs="+", default=["linear", "css"])
    synth.add_argument("--workers", type=int, default=1)

    curve = sub.add_parser("curve", help="fidelity versus total time")
    _add_common(curve)
    _add_system(curve)
    _add_schedule(curve)
    curve.add_argument("--times", type=float, nargs="+")
    curve.add_argument("--t-min", type=float, default=1.0)
    curve.add_argument("--t-max", type=float, default=1e3)
    curve.add_argument("--count", type=int, default=31)

    geo = sub.add_parser("geometry", help="path length, speed and C[s] report")
    _add_common(geo)
    _add_system(geo)
    geo.add_argument("--max-segment", type=float, default=0.005)

    cert = sub.add_parser("certify", help="run the bound-certification suite")
    _add_common(cert)
    cert.add_argument("--trials", type=int, default=200)
    cert.add_argument("--repetitions", type=int, default=200)
    return parser


def _apply_config(parser, argv):
    """Re-parse with values from --config as defaults, so explicit flags still win."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    cfg = json.loads(Path(args.config).read_text())
    known = vars(args)
    for key in cfg:
        if key.replace("-", "_") not in known:
            parser.error(f"unknown config key {key!r}")
    sub = _subparser_for(parser, args)
    sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
    args = parser.parse_args(argv)
    for k in ("out", "hamiltonian", "config"):
        if isinstance(getattr(args, k, None), str):
            setattr(args, k, Path(getattr(args, k)))
    return args


def _subparser_for(parser, args):
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    p = action.choices[args.command]
    for attr in ("action", "family"):
        name = getattr(args, attr, None)
        if name is not None:
            inner = next(a for a in p._actions if isinstance(a, argparse._SubParsersAction))
            p = inner.choices[name]
    return p


def _system(args):
    """(Hamiltonian, gap, N or None)."""
    if args.system == "grover":
        n_items = 2**args.n
        return grover_effective(n_items), 1.0 / math.sqrt(n_items), n_items
    if args.system == "grover-full":
        n_items = 2**args.n
        return grover_full(args.n, args.marked), 1.0 / math.sqrt(n_items), n_items
    if args.system == "landau-zener":
        return landau_zener(args.delta), 2.0 * args.delta, None
    if args.hamiltonian is None:
        raise SystemExit("--system file needs --hamiltonian PATH")
    h = load(args.hamiltonian)
    gap = args.gap
    if gap is None:
        table = track_eigenstate(h, refine_grid(h, max_segment=0.01), excited=False)
        gap = float(table.gap.min())
    return h, gap, None


def _backend(args, gap):
    return ex.BackendSpec(args.backend, args.beta_over_gap, args.samples, args.seed).make(gap)


def _schedule(args, h, gap, n_items):
    kind = args.schedule
    if kind == "linear":
        return linear()
    if kind == "optimal":
        if n_items is None:
            raise SystemExit("the optimal schedule is available only for Grover systems")
        return grover_optimal(n_items)
    if kind == "geodesic":
        return constant_speed_schedule(track_eigenstate(h, refine_grid(h, max_segment=0.01), excited=False))
    if kind == "css":
        cfg = BuilderConfig(args.dl_target, args.t1, _backend(args, gap))
        return build_constant_speed(h, cfg)[0]
    return load_points(kind).schedule()


def _out(args) -> Path:
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def cmd_schedule_build(args):
    h, gap, _ = _system(args)
    backend = _backend(args, gap)
    sched, pts = build_constant_speed(h, BuilderConfig(args.dl_target, args.t1, backend))
    out = _out(args)
    pts.to_csv(out / "points.csv")
    summary = {"system": h.label, "gap": gap, "backend": backend.describe(), **total_cost_report(pts, backend).as_dict()}
    ex.write_json(summary, out / "summary.json")
    print(f"{pts.segments} segments, T = {pts.total_time:.6g}, mean root evaluations {summary['mean_root_evaluations']:.2f}")


def cmd_evolve(args):
    h, gap, n_items = _system(args)
    sched = _schedule(args, h, gap, n_items)
    if args.time is not None:
        f = final_fidelity(h, sched, args.time)
        summary = {"T": args.time, "fidelity": f}
    else:
        res = min_time_for_fidelity(h, sched, args.target_fidelity)
        summary = {"T": res.time, "fidelity": res.fidelity, "lower": res.lower, "evaluations": res.evaluations}
    summary.update(system=h.label, schedule=sched.describe(), gap=gap)
    ex.write_json(summary, _out(args) / "summary.json")
    print(json.dumps(summary))


def _sweep_config(args):
    backend = ex.BackendSpec(args.backend, args.beta_over_gap, args.samples, args.seed)
    return ex.SweepConfig(tuple(args.schedules), args.target_fidelity, args.dl_target, backend)


def cmd_sweep(args):
    cfg = _sweep_config(args)
    if args.family == "grover":
        records = ex.grover_sweep(args.exponents, cfg, args.workers, args.full)
    else:
        records = ex.synthetic_sweep(args.deltas, cfg, args.workers)
    out = _out(args)
    ex.write_records(records, out / f"sweep_{args.family}.csv")
    summary = ex.sweep_summary(records, {"family": args.family, "backend": args.backend})
    ex.write_json(summary, out / "summary.json")
    for kind, fit in summary["fits"].items():
        print(f"{kind}: slope {fit['slope']:.3f} (r^2 {fit['r_squared']:.4f})")


def cmd_curve(args):
    h, gap, n_items = _system(args)
    sched = _schedule(args, h, gap, n_items)
    times = args.times or list(np.geomspace(args.t_min, args.t_max, args.count))
    rows = ex.fidelity_curve(h, sched, times)
    out = _out(args)
    with (out / "curve.csv").open("w") as fh:
        fh.write("T,fidelity\n")
        for t, f in rows:
            fh.write(f"{t:.17g},{f:.17g}\n")
    ex.write_json({"system": h.label, "schedule": sched.describe(), "points": len(rows)}, out / "summary.json")
    print(f"wrote {len(rows)} points to {out / 'curve.csv'}")


def cmd_geometry(args):
    h, gap, n_items = _system(args)
    table = track_eigenstate(h, refine_grid(h, max_segment=args.max_segment))
    out = _out(args)
    table.to_csv(out / "path.csv")
    length = path_length(table)
    css = constant_speed_schedule(table)
    report = {
        "system": h.label,
        "path_length": length,
        "min_gap": float(table.gap.min()),
        "samples": len(table),
        "segments_estimate": segment_count_estimate(length, args.dl_target),
        "c_linear": c_functional(linear(), table).total,
        "c_constant_speed": c_functional(css, table).total,
        "t_est_linear": asp_time_estimate(table, h, linear()),
        "t_est_constant_speed": asp_time_estimate(table, h, css),
    }
    ex.write_json(report, out / "summary.json")
    print(json.dumps(report, indent=2))


def cmd_certify(args):
    report = ex.certify_bounds(args.trials, args.seed, args.repetitions, args.samples)
    ex.write_json(report, _out(args) / "summary.json")
    print(json.dumps(report, indent=2, default=float))
    return 0 if ex.certification_passed(report) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    handlers = {
        "schedule": cmd_schedule_build,
        "evolve": cmd_evolve,
        "sweep": cmd_sweep,
        "curve": cmd_curve,
        "geometry": cmd_geometry,
        "certify": cmd_certify,
    }
    try:
        return handlers[args.command](args) or 0
    except AdiaspeedError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
