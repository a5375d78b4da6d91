"""Command-line frontend: reproducible experiments emitting CSV/JSON artifacts.

Every randomized subcommand takes --seed; with --strict an explicit seed is
required, otherwise a generated one is printed and recorded. Each run writes a
manifest next to its outputs with the subcommand, full parameter set, master
seed, and output paths, and contains no timestamps, so reruns with the same
seed are byte-identical.

Exit codes: 0 success, 2 usage or input error, 3 optimization infeasibility.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import evaluate as ev
from . import meta, traffic, verify
from .model import InvalidParam, RandomSource, RecoveryConfig, ScenarioParams

TOOL_VERSION = "lerkit 0.1.0"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        self.code = code
        super().__init__(message)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    if args.strict:
        raise CliError("--strict requires an explicit --seed")
    seed = secrets.randbits(48)
    print(f"generated seed: {seed}")
    return seed


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get("LERKIT_WORKERS")
    return max(1, int(env)) if env else 1


def _write(path: Path, content: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")
    return path


def _write_manifest(out_dir: Path, subcommand: str, params: dict, seed: int, outputs: list[Path]):
    doc = {
        "tool": TOOL_VERSION,
        "subcommand": subcommand,
        "parameters": params,
        "master_seed": seed,
        "outputs": sorted(str(p) for p in outputs),
    }
    _write(out_dir / f"{subcommand}_manifest.json", json.dumps(doc, indent=2) + "\n")


def _fmt(x: float) -> str:
    return f"{x:g}"


def cmd_optimize(args) -> int:
    seed = _resolve_seed(args)
    try:
        params = ScenarioParams(p=args.p, E=args.E, T=args.T, N=args.N)
        report = meta.optimize_weights(
            params,
            RandomSource(seed),
            progress=(lambda s: print(s, flush=True)) if args.verbose else None,
        )
    except InvalidParam as e:
        raise CliError(f"invalid parameter: {e}")
    except (meta.Unachievable, meta.InfeasibleMonotoneFit) as e:
        raise CliError(f"optimization infeasible: {e}", code=EXIT_INFEASIBLE)

    out = Path(args.out)
    outputs = [_write(out, report.to_config().to_json() + "\n")]
    bounds_path = Path(args.bounds_csv) if args.bounds_csv else out.with_suffix(".bounds.csv")
    outputs.append(_write(bounds_path, report.bounds_csv()))
    _write_manifest(
        out.parent, "optimize",
        {"p": args.p, "E": args.E, "T": args.T, "N": args.N, "out": str(out)},
        seed, outputs,
    )
    print(f"qual: {report.qual}")
    print(f"t_opt: {report.threshold}")
    return EXIT_OK


def _load_config(path: str) -> RecoveryConfig:
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {path}")
    try:
        return RecoveryConfig.from_json(p.read_text(encoding="utf-8"))
    except (KeyError, ValueError) as e:
        raise CliError(f"bad config {path}: {e}")


def cmd_evaluate(args) -> int:
    seed = _resolve_seed(args)
    config = _load_config(args.config)
    try:
        p_values = [float(x) for x in args.actual_p.split(",") if x]
    except ValueError as e:
        raise CliError(f"bad --actual-p: {e}")
    if not p_values:
        raise CliError("--actual-p needs at least one value")
    out_dir = Path(args.out_dir)
    src = RandomSource(seed)
    n_workers = _workers(args)

    def one_curve(i_p):
        i, p = i_p
        return ev.detection_curve(config, p, args.N, args.steps, src.child(100 + i))

    tasks = list(enumerate(p_values))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            curves = list(pool.map(one_curve, tasks))
    else:
        curves = [one_curve(t) for t in tasks]

    outputs = []
    tag = f"{_fmt(config.E)}_{config.T}"
    for p, curve in zip(p_values, curves):
        path = out_dir / f"detection_{_fmt(p)}_{tag}.csv"
        outputs.append(_write(path, curve.csv()))
    sweep = ev.qual_sweep_over_p(config, p_values, args.N, src.child(1))
    outputs.append(_write(out_dir / f"qual_{_fmt(config.p)}_{tag}.csv", sweep.csv()))
    _write_manifest(
        out_dir, "evaluate",
        {"config": args.config, "actual_p": p_values, "steps": args.steps, "N": args.N},
        seed, outputs,
    )
    for path in outputs:
        print(f"wrote {path}")
    return EXIT_OK


def _parse_synth_spec(spec: str) -> dict:
    out = {"n": 50, "duration": 600.0, "area": 1000.0, "speed": 14.0, "dt": 1.0}
    for part in spec.split(","):
        if not part:
            continue
        if "=" not in part:
            raise CliError(f"bad --synth item {part!r} (want key=value)")
        key, _, value = part.partition("=")
        if key not in out:
            raise CliError(f"unknown --synth key {key!r}")
        try:
            out[key] = int(value) if key == "n" else float(value)
        except ValueError:
            raise CliError(f"bad --synth value for {key}: {value!r}")
    return out


def cmd_traffic(args) -> int:
    seed = _resolve_seed(args)
    config = _load_config(args.config)
    src = RandomSource(seed)
    if bool(args.trace) == bool(args.synth):
        raise CliError("exactly one of --trace or --synth is required")
    if args.trace:
        path = Path(args.trace)
        if not path.exists():
            raise CliError(f"trace file not found: {args.trace}")
        try:
            trace = traffic.parse_trace(path.read_text(encoding="utf-8"))
        except traffic.ParseError as e:
            raise CliError(f"trace parse error at line {e.line_no}: {e.reason}")
    else:
        spec = _parse_synth_spec(args.synth)
        trace = traffic.synth_trace(
            spec["n"], (spec["area"], spec["area"]), spec["speed"],
            spec["duration"], spec["dt"], src.child(0),
        )

    focals = sorted(trace.entity_ids())
    if args.focal:
        missing = [f for f in args.focal.split(",") if f not in trace.entity_ids()]
        if missing:
            raise CliError(f"focal entities not in trace: {', '.join(missing)}")
        focals = args.focal.split(",")

    def one(item):
        i, focal = item
        detect = traffic.time_to_detection(
            trace, focal, config, args.p, args.spoof_start,
            range_m=args.range, t_k=args.tk, src=src.child(1 + i),
        )
        seq = traffic.encounters(trace, focal, range_m=args.range, t_k=args.tk)
        used = sum(1 for e in seq.events if e.time_s >= args.spoof_start)
        if isinstance(detect, traffic.NotDetected):
            return (focal, args.spoof_start, detect, detect.encounters_used)
        spoofed_times = [e.time_s for e in seq.events if e.time_s >= args.spoof_start]
        consumed = sum(1 for t in spoofed_times if t <= args.spoof_start + detect)
        return (focal, args.spoof_start, detect, consumed)

    n_workers = _workers(args)
    items = list(enumerate(focals))
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(one, items))
    else:
        rows = [one(it) for it in items]

    out = Path(args.out)
    outputs = [_write(out, traffic.results_csv(rows))]
    if args.counts_out:
        series = traffic.active_counts(trace, args.counts_bin)
        outputs.append(_write(Path(args.counts_out), traffic.counts_csv(series)))
    _write_manifest(
        out.parent, "traffic",
        {"config": args.config, "trace": args.trace, "synth": args.synth,
         "p": args.p, "spoof_start": args.spoof_start, "range": args.range, "tk": args.tk},
        seed, outputs,
    )
    detected = [r[2] for r in rows if not isinstance(r[2], traffic.NotDetected)]
    print(f"focal entities: {len(rows)}; detected: {len(detected)}")
    if detected:
        detected.sort()
        mean = sum(detected) / len(detected)
        median = detected[len(detected) // 2]
        print(f"latency mean: {mean:.1f} s, median: {median:.1f} s")
    return EXIT_OK


def cmd_verify_demo(args) -> int:
    seed = _resolve_seed(args)
    path = Path(args.script)
    if not path.exists():
        raise CliError(f"script file not found: {args.script}")
    try:
        script = verify.parse_script(path.read_text(encoding="utf-8"))
    except verify.ScriptError as e:
        raise CliError(f"script error at line {e.line_no}: {e.reason}")
    records = verify.run_script(script, RandomSource(seed))
    lines = ["time_s,verifier,prover,adversary,mtac_ok,data_ok,v,measured_m,true_m,shift_m,discarded"]
    for r in records:
        v = "" if r.outcome is None else str(r.outcome.v)
        lines.append(
            f"{r.time_s!r},{r.verifier_id},{r.prover_id},{r.adversary_kind.value},"
            f"{int(r.mtac_ok)},{int(r.data_ok)},{v},{r.measured_m!r},{r.true_m!r},"
            f"{r.applied_shift_m!r},{r.discarded}"
        )
    out = Path(args.out)
    outputs = [_write(out, "\n".join(lines) + "\n")]
    _write_manifest(
        out.parent, "verify-demo", {"script": args.script}, seed, outputs
    )
    accepted = sum(1 for r in records if r.outcome is not None)
    discarded = len(records) - accepted
    print(f"exchanges: {len(records)}; accepted: {accepted}; discarded: {discarded}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lerkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--strict", action="store_true",
                        help="fail instead of generating a seed")
        sp.add_argument("--workers", type=int, default=None,
                        help="parallel workers (default $LERKIT_WORKERS or 1)")

    sp = sub.add_parser("optimize", help="tune weights and threshold for (p, E, T)")
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--E", type=float, required=True)
    sp.add_argument("--T", type=int, required=True)
    sp.add_argument("--N", type=int, default=10_000)
    sp.add_argument("--out", required=True)
    sp.add_argument("--bounds-csv", default=None)
    sp.add_argument("--verbose", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("evaluate", help="detection curves and qual sweep for a config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--actual-p", required=True, help="comma-separated p values")
    sp.add_argument("--steps", type=int, default=40)
    sp.add_argument("--N", type=int, default=10_000)
    sp.add_argument("--out-dir", default=".")
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("traffic", help="time-to-detection over a mobility trace")
    sp.add_argument("--config", required=True)
    sp.add_argument("--trace", default=None)
    sp.add_argument("--synth", default=None,
                    help="n=50,duration=600[,area=1000,speed=14,dt=1]")
    sp.add_argument("--focal", default=None, help="comma-separated focal ids (default all)")
    sp.add_argument("--p", type=float, default=0.0)
    sp.add_argument("--spoof-start", type=float, default=0.0)
    sp.add_argument("--range", type=float, default=traffic.DEFAULT_RANGE_M)
    sp.add_argument("--tk", type=float, default=traffic.DEFAULT_T_K_S)
    sp.add_argument("--out", required=True)
    sp.add_argument("--counts-out", default=None)
    sp.add_argument("--counts-bin", type=float, default=60.0)
    common(sp)
    sp.set_defaults(func=cmd_traffic)

    sp = sub.add_parser("verify-demo", help="run a scripted exchange scenario")
    sp.add_argument("--script", required=True)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_verify_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
