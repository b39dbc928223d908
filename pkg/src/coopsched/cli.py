"""``coopsched`` command line: simulate, montecarlo, replay-utias, bench-sched, verify-bounds.

Exit status is 0 when the command finished and every validity check held,
1 when it finished but some check failed, and 2 on bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from coopsched.config import parse_config, serialize_config
from coopsched.harness import (
    BENCH_CASES,
    ConfigError,
    RunTrace,
    ScenarioConfig,
    bench_scheduling,
    run_monte_carlo,
    run_replay,
    run_scenario,
)
from coopsched.scheduling import POLICIES
from coopsched.utias import DatasetError, load_dataset, resample_to_grid
from coopsched.verify import verify_all

TRACE_HEADER = ("tick", "time_s", "logdet", "rmse_agg", "robot_id", "det_robot", "selected_ids")
SELECTION_HEADER = ("tick", "observer", "candidates", "selected", "scores")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_INPUT = 0, 1, 2

log = logging.getLogger("coopsched")


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _ids(values) -> str:
    return ";".join(str(v) for v in values)


def trace_csv(trace: RunTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for k in range(trace.n_ticks):
        t = repr(k * trace.dt)
        chosen = trace.selections[k]
        for i in range(trace.n_robots):
            w.writerow((k, t, repr(float(trace.logdet[k])), repr(float(trace.sq_error[k])), i + 1,
                        repr(float(trace.det_robot[k, i])), _ids(chosen.get(i + 1, ()))))
    return buf.getvalue()


def selections_csv(trace: RunTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SELECTION_HEADER)
    for ev in trace.selection_log:
        w.writerow((ev.tick, ev.observer, _ids(ev.candidates), _ids(ev.selected),
                    ";".join(repr(s) for s in ev.scores)))
    return buf.getvalue()


def _load_config(args) -> ScenarioConfig:
    text = Path(args.config).read_text() if args.config else ""
    cfg = parse_config(text)
    overrides = {}
    for name in ("seed", "policy", "q", "runs"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return cfg.replace(**overrides) if overrides else cfg


def _report(violations: Sequence[str]) -> int:
    for v in violations[:20]:
        print(f"check failed: {v}", file=sys.stderr)
    if len(violations) > 20:
        print(f"... {len(violations) - 20} more", file=sys.stderr)
    return EXIT_CHECK_FAILED if violations else EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    trace = run_scenario(cfg)
    out = Path(args.out)
    write_atomic(out / "trace.csv", trace_csv(trace))
    write_atomic(out / "selections.csv", selections_csv(trace))
    write_atomic(out / "config.txt", serialize_config(cfg))
    print(f"final logdet {trace.final_logdet:.6f}, aggregated squared error {trace.final_sq_error:.6f}, "
          f"{trace.n_updates} updates")
    return _report(trace.violations + ([] if trace.ok else ["non-finite logdet"]))


def cmd_montecarlo(args) -> int:
    cfg = _load_config(args)
    agg = run_monte_carlo(cfg)
    doc = {
        "seed": agg.master_seed,
        "runs": len(agg.run_seeds),
        "run_seeds": agg.run_seeds,
        "time_s": [k * cfg.dt for k in range(len(agg.log_mean_det))],
        "log_mean_det": agg.log_mean_det.tolist(),
        "mean_rmse": agg.mean_rmse.tolist(),
        "final_logdets": agg.final_logdets.tolist(),
        "config": serialize_config(cfg),
        "violations": agg.violations,
    }
    write_atomic(Path(args.out) / "aggregate.json", json.dumps(doc, indent=1) + "\n")
    print(f"{len(agg.run_seeds)} runs, final log mean det {agg.log_mean_det[-1]:.6f}, "
          f"final mean aggregated squared error {agg.mean_rmse[-1]:.6f}")
    return _report(agg.violations)


def cmd_replay(args) -> int:
    bundle = load_dataset(args.dataset)
    grid = resample_to_grid(bundle, args.t0, args.duration, args.dt)
    policy = args.policy or "alg1"
    q = 1 if args.q is None else args.q
    seed = 0 if args.seed is None else args.seed
    trace = run_replay(grid, policy, q, seed=seed)
    out = Path(args.out)
    write_atomic(out / "trace.csv", trace_csv(trace))
    write_atomic(out / "selections.csv", selections_csv(trace))
    summary = {"dataset": str(args.dataset), "t0": args.t0, "duration": args.duration, "dt": args.dt,
               "policy": policy, "q": q, "seed": seed, "ticks": trace.n_ticks,
               "grid_measurements": grid.n_measurements, "updates": trace.n_updates,
               "final_logdet": trace.final_logdet, "final_sq_error": trace.final_sq_error,
               "counts": {k: {str(r): c for r, c in v.items()} for k, v in bundle.counts().items()}}
    write_atomic(out / "summary.json", json.dumps(summary, indent=1) + "\n")
    print(f"{trace.n_ticks} ticks, {trace.n_updates} updates, final logdet {trace.final_logdet:.6f}")
    return _report(trace.violations)


def cmd_bench(args) -> int:
    rows = bench_scheduling(BENCH_CASES, trials=args.trials, seed=0 if args.seed is None else args.seed)
    lines = ["n_robots,q,greedy_ms,alg1_ms"] + [f"{r.n_robots},{r.q},{r.greedy_ms!r},{r.alg1_ms!r}" for r in rows]
    print(f"{'N':>3} {'q':>3} {'greedy ms':>12} {'alg1 ms':>10}")
    for r in rows:
        print(f"{r.n_robots:>3} {r.q:>3} {r.greedy_ms:>12.4f} {r.alg1_ms:>10.4f}")
    if args.out:
        write_atomic(Path(args.out) / "bench.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify_all(args.instances, 0 if args.seed is None else args.seed)
    for r in results:
        print(r.summary())
    if args.out:
        doc = [{"name": r.name, "instances": r.instances, "ok": r.ok, "worst_margin": r.worst_margin,
                "seconds": r.seconds, "violations": r.violations} for r in results]
        write_atomic(Path(args.out) / "verify.json", json.dumps(doc, indent=1) + "\n")
    return _report([v for r in results for v in r.violations])


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coopsched", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, out_required=True):
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--seed", type=_seed)

    sim = sub.add_parser("simulate", help="one synthetic run")
    mc = sub.add_parser("montecarlo", help="repeated runs and their aggregate")
    for p in (sim, mc):
        common(p)
        p.add_argument("--config", help="scenario config file (defaults when omitted)")
        p.add_argument("--policy", choices=POLICIES)
        p.add_argument("--q", type=_nonneg_int)
    mc.add_argument("--runs", type=int)
    sim.set_defaults(func=cmd_simulate)
    mc.set_defaults(func=cmd_montecarlo)

    rep = sub.add_parser("replay-utias", help="filter replay of a UTIAS-format dataset window")
    common(rep)
    rep.add_argument("--dataset", required=True)
    rep.add_argument("--t0", type=float, default=0.0, help="window start, seconds after the dataset start")
    rep.add_argument("--duration", type=float, default=300.0)
    rep.add_argument("--dt", type=float, default=0.1)
    rep.add_argument("--policy", choices=POLICIES)
    rep.add_argument("--q", type=_nonneg_int)
    rep.set_defaults(func=cmd_replay)

    bench = sub.add_parser("bench-sched", help="selector timing table")
    common(bench, out_required=False)
    bench.add_argument("--trials", type=int, default=30)
    bench.set_defaults(func=cmd_bench)

    ver = sub.add_parser("verify-bounds", help="randomized checks of the determinant bound and lemmas")
    common(ver, out_required=False)
    ver.add_argument("--instances", type=int, default=1000)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError, OSError) as exc:
        print(f"coopsched: error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
