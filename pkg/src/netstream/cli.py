"""Command-line surface: stream, simulate, evaluate, tune, bench.

Streaming reads rows of p comma- or whitespace-separated decimals (one per
time point) from a file, a growing file (--follow), or standard input, and
emits one JSON-lines record per post-burn-in row, flushed immediately.
A --config file of flat key=value pairs overrides command-line flags; the
NETSTREAM_SEED environment variable is the last-resort seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import fields as dataclass_fields

import numpy as np

from .bench import bench_table
from .metrics import GroundTruth, score_run
from .offline import KernelConfig, tune_lambdas
from .solver import SolverConfig
from .stream import StreamConfig, StreamingEstimator, record_to_json
from .synth import (DatasetSpec, GroundTruthSegment, gen_dataset,
                    read_observations, read_truth, write_dataset)


def _coerce(value):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


def _load_config_file(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, val = line.split("=", 1)
            values[key.strip()] = _coerce(val.strip())
    return values


def _apply_config(args, parser):
    """Config-file values override flags (and flag defaults)."""
    if getattr(args, "config", None):
        for key, val in _load_config_file(args.config).items():
            if hasattr(args, key):
                setattr(args, key, val)
            else:
                parser.error(f"unknown config key {key!r}")
    return args


def _resolve_seed(args):
    if args.seed is None:
        env = os.environ.get("NETSTREAM_SEED")
        args.seed = int(env) if env else 0
    return args.seed


def _parse_row(line):
    parts = line.replace(",", " ").split()
    if not parts:
        return None
    return [float(v) for v in parts]


def _iter_lines(path, follow, idle_timeout):
    if path == "-":
        for line in sys.stdin:
            yield line
        return
    with open(path, "r", encoding="utf-8") as fh:
        idle_start = None
        while True:
            line = fh.readline()
            if line:
                idle_start = None
                if line.endswith("\n"):
                    yield line
                else:
                    # partial write at tail: wait for the rest
                    buf = line
                    while follow and not buf.endswith("\n"):
                        time.sleep(0.05)
                        buf += fh.readline()
                    yield buf
                continue
            if not follow:
                return
            if idle_timeout and idle_start is not None \
                    and time.monotonic() - idle_start > idle_timeout:
                return
            if idle_start is None:
                idle_start = time.monotonic()
            time.sleep(0.05)


def cmd_stream(args, parser):
    _apply_config(args, parser)
    stream_keys = {f.name for f in dataclass_fields(StreamConfig)}
    cfg_kwargs = {k: getattr(args, k) for k in stream_keys if hasattr(args, k)}
    engine = None
    skip_rows = 0
    if args.resume and args.checkpoint and os.path.exists(args.checkpoint):
        with open(args.checkpoint, "r", encoding="utf-8") as fh:
            engine = StreamingEstimator.from_checkpoint(json.load(fh))
        skip_rows = engine.t
        print(f"resumed from checkpoint at t={skip_rows}", file=sys.stderr)

    out = sys.stdout if args.output == "-" else open(args.output, "a" if skip_rows
                                                     else "w", encoding="utf-8")
    seen_valid = 0
    status = 0
    try:
        for lineno, line in enumerate(_iter_lines(args.input, args.follow,
                                                  args.idle_timeout), start=1):
            try:
                row = _parse_row(line)
            except ValueError:
                print(f"warning: skipping malformed row at line {lineno}",
                      file=sys.stderr)
                continue
            if row is None:
                continue
            if engine is None:
                engine = StreamingEstimator(len(row), StreamConfig(**cfg_kwargs))
            if len(row) != engine.p:
                print(f"fatal: dimension changed from {engine.p} to {len(row)} "
                      f"at line {lineno}", file=sys.stderr)
                status = 2
                break
            seen_valid += 1
            if seen_valid <= skip_rows:
                continue
            rec = engine.feed(np.asarray(row))
            if rec is not None:
                out.write(record_to_json(rec) + "\n")
                out.flush()
            elif engine.burned_in:
                print(f"burn-in complete after {engine.t} observations",
                      file=sys.stderr)
            if args.checkpoint:
                tmp = args.checkpoint + ".tmp"
                with open(tmp, "w", encoding="utf-8") as fh:
                    json.dump(engine.to_checkpoint(), fh)
                os.replace(tmp, args.checkpoint)
    finally:
        if out is not sys.stdout:
            out.close()
    return status


def cmd_simulate(args, parser):
    _apply_config(args, parser)
    _resolve_seed(args)
    spec = DatasetSpec(p=args.p, segments=args.segments, seg_len=args.seg_len,
                       graph_model=args.graph, m=args.m, k=args.k,
                       beta=args.beta, var_coeff=args.var_coeff,
                       seed=args.seed, normalize=not args.no_normalize)
    dataset = gen_dataset(spec)
    write_dataset(dataset, args.out, args.truth)
    print(f"wrote {dataset.T} observations (p={spec.p}) to {args.out}; "
          f"ground truth to {args.truth}", file=sys.stderr)
    return 0


def _truth_from_sidecar(doc):
    segments = []
    for seg in doc["segments"]:
        precision = np.array(seg["precision"], dtype=float)
        segments.append(GroundTruthSegment(
            graph=tuple((e[0], e[1]) for e in seg["edges"]),
            precision=precision, covariance=np.linalg.inv(precision),
            length=seg["length"], start=seg["start"]))
    return GroundTruth(T=doc["T"], segments=tuple(segments),
                       change_points=tuple(doc["change_points"]))


def cmd_evaluate(args, parser):
    _apply_config(args, parser)
    truth = _truth_from_sidecar(read_truth(args.truth))
    edge_seq = [None] * truth.T
    r_trace = [None] * truth.T
    iters_seq = [None] * truth.T
    wall_seq = [None] * truth.T
    S_seq = [None] * truth.T
    with open(args.run, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            t = rec["t"]
            if not 1 <= t <= truth.T:
                print(f"fatal: record t={t} outside dataset range 1..{truth.T}",
                      file=sys.stderr)
                return 2
            edge_seq[t - 1] = {(e[0], e[1]) for e in rec.get("edges", [])}
            r_trace[t - 1] = rec.get("r_t")
            iters_seq[t - 1] = rec.get("iters")
            wall_seq[t - 1] = rec.get("wall_ms")
            if "S" in rec:
                S_seq[t - 1] = np.array(rec["S"], dtype=float)
    series = score_run(edge_seq, truth, forgetting_trace=r_trace,
                       S_seq=S_seq if any(s is not None for s in S_seq) else None,
                       iters_seq=iters_seq, wall_ms_seq=wall_seq)
    lines = series.to_jsonl_lines() if args.format == "jsonl" \
        else series.to_csv_lines()
    for line in lines:
        print(line)
    summary = series.summary()
    summary["r_windows"] = _r_windows(r_trace, truth.change_points)
    print(json.dumps(summary))
    return 0


def _r_windows(r_trace, change_points, width=10):
    """Mean forgetting factor over the 10 points before/after each change."""
    out = []
    for cp in change_points:
        before = [r for r in r_trace[max(0, cp - 1 - width - 1):cp - 2]
                  if r is not None]
        after = [r for r in r_trace[cp - 1:cp - 1 + width] if r is not None]
        out.append({
            "change_point": cp,
            "mean_r_before": float(np.mean(before)) if before else None,
            "mean_r_after": float(np.mean(after)) if after else None,
        })
    return out


def cmd_tune(args, parser):
    _apply_config(args, parser)
    X, _ = read_observations(args.input)
    if args.burn_in > 0:
        X = X[:args.burn_in]
    grid1 = tuple(float(v) for v in args.grid1.split(","))
    grid2 = tuple(float(v) for v in args.grid2.split(","))
    base = SolverConfig(epsilon=args.epsilon, max_iters=args.max_iters,
                        zero_tol=args.zero_tol)
    l1, l2, table = tune_lambdas(X, base, KernelConfig(width=args.kernel_width),
                                 grid1=grid1, grid2=grid2)
    print("lambda1,lambda2,aic")
    for row in table:
        print(f"{row[0]!r},{row[1]!r},{row[2]!r}")
    print(f"selected lambda1={l1!r} lambda2={l2!r}", file=sys.stderr)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(f"lambda1={l1!r}\nlambda2={l2!r}\n")
    return 0


def cmd_bench(args, parser):
    _apply_config(args, parser)
    _resolve_seed(args)
    p_values = [int(v) for v in args.p_list.split(",")]
    rows = bench_table(p_values, reps=args.reps, seed=args.seed)
    print("p,mode,mean_ms,median_ms,n_updates")
    for row in rows:
        print(f"{row['p']},{row['mode']},{row['mean_ms']!r},"
              f"{row['median_ms']!r},{row['n_updates']}")
    return 0


def _add_solver_flags(sp):
    sp.add_argument("--lambda1", type=float, default=0.1,
                    help="sparsity penalty weight")
    sp.add_argument("--lambda2", type=float, default=0.1,
                    help="temporal-homogeneity penalty weight")
    sp.add_argument("--epsilon", type=float, default=1e-4,
                    help="ADMM convergence tolerance (default invented: the "
                         "method prescribes none)")
    sp.add_argument("--max-iters", dest="max_iters", type=int, default=500,
                    help="ADMM iteration cap (default invented)")
    sp.add_argument("--zero-tol", dest="zero_tol", type=float, default=1e-8)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="netstream",
        description="Streaming estimation of time-varying sparse "
                    "partial-correlation networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("stream", help="estimate networks from a row stream")
    sp.add_argument("--input", default="-", help="rows file or - for stdin")
    sp.add_argument("--output", default="-", help="JSON-lines output or -")
    sp.add_argument("--mode", choices=("sliding", "ewma", "adaptive"),
                    default="adaptive")
    sp.add_argument("--h", type=int, default=20, help="sliding window length")
    sp.add_argument("--r", type=float, default=0.95,
                    help="fixed forgetting factor (ewma mode)")
    sp.add_argument("--eta", type=float, default=0.005,
                    help="adaptive-forgetting stepsize")
    sp.add_argument("--r-init", dest="r_init", type=float, default=0.95)
    sp.add_argument("--r-min", dest="r_min", type=float, default=0.5)
    sp.add_argument("--r-max", dest="r_max", type=float, default=0.9999)
    _add_solver_flags(sp)
    sp.add_argument("--burn-in", dest="burn_in_n", type=int, default=15)
    sp.add_argument("--kernel-width", dest="kernel_width", type=float, default=3.0)
    sp.add_argument("--emit", choices=("edges", "full_matrix", "metrics"),
                    default="edges")
    sp.add_argument("--cold-start", dest="warm_start", action="store_false",
                    help="restart ADMM from scratch each time point")
    sp.add_argument("--follow", action="store_true",
                    help="keep reading as the input file grows")
    sp.add_argument("--idle-timeout", dest="idle_timeout", type=float, default=0.0,
                    help="with --follow, stop after this many idle seconds")
    sp.add_argument("--checkpoint", help="write a resumable state file here")
    sp.add_argument("--resume", action="store_true",
                    help="resume from --checkpoint if it exists")
    sp.add_argument("--config", help="key=value file overriding flags")
    sp.set_defaults(func=cmd_stream)

    sp = sub.add_parser("simulate", help="generate a synthetic dataset")
    sp.add_argument("--p", type=int, default=10)
    sp.add_argument("--segments", type=int, default=5)
    sp.add_argument("--seg-len", dest="seg_len", type=int, default=100)
    sp.add_argument("--graph", choices=("ba", "ws"), default="ba")
    sp.add_argument("--m", type=int, default=2, help="edges per new node (ba)")
    sp.add_argument("--k", type=int, default=4, help="ring degree (ws)")
    sp.add_argument("--beta", type=float, default=0.75,
                    help="rewiring probability (ws)")
    sp.add_argument("--var-coeff", dest="var_coeff", type=float, default=0.3)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--no-normalize", action="store_true",
                    help="skip unit-diagonal rescaling of the precision")
    sp.add_argument("--out", required=True, help="observations path")
    sp.add_argument("--truth", required=True, help="ground-truth sidecar path")
    sp.add_argument("--config", help="key=value file overriding flags")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("evaluate", help="score a run against ground truth")
    sp.add_argument("--run", required=True, help="JSON-lines records")
    sp.add_argument("--truth", required=True, help="ground-truth sidecar")
    sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    sp.add_argument("--config", help="key=value file overriding flags")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("tune", help="AIC grid search over penalty weights")
    sp.add_argument("--input", required=True, help="burn-in observations file")
    sp.add_argument("--burn-in", dest="burn_in", type=int, default=0,
                    help="use only the first N rows (0 = all)")
    sp.add_argument("--grid1", default="0.05,0.1,0.2,0.4")
    sp.add_argument("--grid2", default="0.05,0.1,0.2,0.4")
    sp.add_argument("--kernel-width", dest="kernel_width", type=float, default=3.0)
    sp.add_argument("--epsilon", type=float, default=1e-4)
    sp.add_argument("--max-iters", dest="max_iters", type=int, default=500)
    sp.add_argument("--zero-tol", dest="zero_tol", type=float, default=1e-8)
    sp.add_argument("--out", help="write selected values as key=value")
    sp.add_argument("--config", help="key=value file overriding flags")
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("bench", help="per-update timing by dimension")
    sp.add_argument("--p-list", dest="p_list", default="10,19")
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--config", help="key=value file overriding flags")
    sp.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
