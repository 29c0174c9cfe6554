"""Command-line interface: build, query, bench, and linkpred subcommands.

Conventions: stdout carries data (stats report, ranked scores, CSV), stderr
carries logs. Every command is deterministic for a fixed --seed. A config
file of key=value lines can preload any long option; explicit flags win.
Exit codes: 0 ok, 1 other failure, 2 parse error, 3 inadmissible damping
factor, 4 I/O or index-format error, 5 unknown node, 6 empty positives.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import linkpred as lp
from . import solver
from .graph import GraphParseError, InadmissibleAlphaError, largest_connected_component, load_edge_list
from .index import IndexFormatError, build_index, load_index, save_index
from .partition import PartitionConfig
from .solver import UnknownNodeError

WORKERS_ENV = "LRCKATZ_WORKERS"


def _workers():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _log(msg):
    print(msg, file=sys.stderr)


def _open_out(path):
    return open(path, "w", newline="") if path else sys.stdout


def _close_out(fh):
    if fh is not sys.stdout:
        fh.close()


def _partition_config(args):
    return PartitionConfig(
        max_part_size=args.max_part,
        max_separator_fraction=args.sep_frac,
        max_recursion_depth=args.depth,
    )


def cmd_build(args):
    g = load_edge_list(args.graph, fmt=args.fmt)
    loaded_n = g.n
    g = largest_connected_component(g)
    if g.n < loaded_n:
        _log(f"kept largest component: {g.n} of {loaded_n} nodes")
    idx = build_index(
        g,
        alpha=args.alpha if args.alpha is not None else "hardest",
        ell=args.ell,
        cfg=_partition_config(args),
        seed=args.seed,
    )
    save_index(idx, args.out)
    _log(f"index written to {args.out}")
    if args.id_map:
        with open(args.id_map, "w") as fh:
            for internal, original in enumerate(idx.id_map):
                fh.write(f"{internal} {original}\n")
    for key, value in idx.build_stats.items():
        if key == "correction_values":
            value = " ".join(f"{v:.6g}" for v in value)
        elif isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{key}: {value}")
    return 0


def cmd_query(args):
    idx = load_index(args.index)
    kv, rep = solver.query(idx, args.node, tol=args.tol)
    order = np.lexsort((np.arange(idx.n), -kv.scores))
    if args.top and args.top > 0:
        order = order[: args.top]
    out = _open_out(args.out)
    try:
        for i in order:
            out.write(f"{idx.id_map[i]} {kv.scores[i]:.12g}\n")
    finally:
        _close_out(out)
    _log(f"iterations: {rep.iterations}")
    _log(f"final_residual_norm: {rep.final_residual_norm:.6e}")
    _log(f"converged: {rep.converged}")
    _log(f"wall_time: {rep.wall_time:.6f}")
    return 0


def _thread_map(fn, items):
    w = _workers()
    if w <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items))


def cmd_bench(args):
    idx = load_index(args.index)
    if args.queries > idx.n:
        raise ValueError(f"cannot sample {args.queries} queries from {idx.n} nodes")
    rng = np.random.default_rng(args.seed)
    nodes = np.sort(rng.choice(idx.id_map, size=args.queries, replace=False))
    methods = [("lrc", solver.query)]
    if args.baseline_cg:
        methods.append(("cg", solver.query_cg_baseline))
    out = _open_out(args.out)
    try:
        w = csv.writer(out)
        w.writerow(["query", "method", "iterations", "wall_time", "residual"])
        for name, fn in methods:
            reports = _thread_map(lambda q: fn(idx, int(q), tol=args.tol)[1], list(nodes))
            for q, rep in zip(nodes, reports):
                w.writerow(
                    [q, name, rep.iterations, f"{rep.wall_time:.6f}", f"{rep.final_residual_norm:.6e}"]
                )
            iters = np.array([r.iterations for r in reports], dtype=float)
            times = np.array([r.wall_time for r in reports])
            resid = np.array([r.final_residual_norm for r in reports])
            w.writerow(
                ["mean", name, f"{iters.mean():.3f}", f"{times.mean():.6f}", f"{resid.mean():.6e}"]
            )
    finally:
        _close_out(out)
    return 0


def _load_timestamped(path):
    with open(path, "rb") as fh:
        data = fh.read()
    rows = []
    for line_no, raw in enumerate(data.decode("utf-8", errors="replace").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if len(toks) != 3:
            raise GraphParseError(f"expected 3 fields (u, v, time), got {len(toks)}", line_no)
        try:
            rows.append((int(toks[0]), int(toks[1]), float(toks[2])))
        except ValueError:
            raise GraphParseError(f"bad row {toks!r}", line_no) from None
    if not rows:
        raise GraphParseError("no timestamped edges in input")
    return rows


def cmd_linkpred(args):
    rows = _load_timestamped(args.edges)
    ds = lp.temporal_split(rows, args.cutoff)
    _log(
        f"train: {ds.train.n} nodes, {ds.train.num_edges} edges; "
        f"positives: {len(ds.positives)}"
    )
    if not ds.positives:
        raise lp.EmptyPositivesError("no positive pairs after the cutoff")
    idx = build_index(
        ds.train,
        alpha=args.alpha if args.alpha is not None else "hardest",
        ell=args.ell,
        cfg=_partition_config(args),
        seed=args.seed,
    )
    s_values = sorted({int(t) for t in args.s.split(",") if t.strip()})
    if not s_values:
        raise ValueError("empty --s list")
    endpoints = sorted({u for pair in ds.positives for u in pair})
    sample = endpoints
    if args.queries and args.queries < len(endpoints):
        rng = np.random.default_rng(args.seed)
        sample = sorted(rng.choice(endpoints, size=args.queries, replace=False).tolist())
    methods = ["katz", "sparse-katz"] if args.method == "both" else [args.method]
    table = lp.evaluate_recall_sweep(
        idx, methods, ds, s_values, T=args.T, query_sample=sample,
        tol=args.tol, workers=_workers(),
    )
    out = _open_out(args.out)
    try:
        w = csv.writer(out)
        w.writerow(["method", "bucket", "s", "mean_recall", "std_recall", "n_queries"])
        rows_out = [
            (method, label, s, stat)
            for method, label, s, stat in table
            if label in lp.BUCKET_LABELS
        ]
        rows_out.sort(key=lambda r: (r[0], r[1], r[2]))
        for method, label, s, stat in rows_out:
            w.writerow(
                [method, label, s, f"{stat.mean:.6f}", f"{stat.std:.6f}", stat.n_queries]
            )
    finally:
        _close_out(out)
    return 0


def _merge_config(argv):
    """Splice config-file options in after the subcommand; flags still win."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise GraphParseError("--config requires a path")
    path = argv[i + 1]
    with open(path) as fh:
        lines = fh.read().splitlines()
    tokens = []
    for line_no, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise GraphParseError("expected key=value in config", line_no)
        key, _, val = line.partition("=")
        key = "--" + key.strip().lstrip("-").replace("_", "-")
        val = val.strip()
        if val.lower() == "true":
            tokens.append(key)
        elif val.lower() != "false":
            tokens.extend([key, val])
    return argv[:1] + tokens + argv[1:i] + argv[i + 2 :]


def _build_parser():
    p = argparse.ArgumentParser(prog="lrckatz", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common_partition(sp):
        sp.add_argument("--max-part", type=int, default=None, help="max interior part size")
        sp.add_argument("--sep-frac", type=float, default=0.15, help="separator fraction warning threshold")
        sp.add_argument("--depth", type=int, default=64, help="max bisection depth")

    b = sub.add_parser("build", help="build and save a query index")
    b.add_argument("graph", help="edge-list file")
    grp = b.add_mutually_exclusive_group()
    grp.add_argument("--alpha", type=float, default=None, help="damping factor")
    grp.add_argument("--hardest", action="store_true", help="use 1/(norm+1) (default)")
    b.add_argument("--ell", type=int, default=25, help="correction rank")
    b.add_argument("--seed", type=int, default=0, help="eigensolver seed")
    b.add_argument("--fmt", choices=("auto", "whitespace", "csv"), default="auto")
    b.add_argument("--id-map", default=None, help="write internal-to-original id map here")
    b.add_argument("--out", required=True, help="index output path")
    common_partition(b)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="rank all nodes by proximity to one node")
    q.add_argument("index", help="index file from build")
    q.add_argument("--node", type=int, required=True, help="original node id")
    q.add_argument("--tol", type=float, default=1e-8)
    q.add_argument("--top", type=int, default=0, help="rows to emit; 0 = all")
    q.add_argument("--out", default=None, help="output path (default stdout)")
    q.set_defaults(func=cmd_query)

    be = sub.add_parser("bench", help="time solver iterations over sampled queries")
    be.add_argument("index")
    be.add_argument("--queries", type=int, default=100)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--baseline-cg", action="store_true", help="also run plain CG on the full system")
    be.add_argument("--tol", type=float, default=1e-8)
    be.add_argument("--out", default=None)
    be.set_defaults(func=cmd_bench)

    l = sub.add_parser("linkpred", help="temporal-split link prediction recall")
    l.add_argument("edges", help="timestamped edge list: u v epoch-seconds")
    l.add_argument("--cutoff", type=float, required=True, help="train/test time boundary")
    l.add_argument("--s", default="10,50,100", help="comma-separated list sizes")
    l.add_argument("--T", type=int, default=None, help="anchor count (default pool+1)")
    l.add_argument("--method", choices=("katz", "sparse-katz", "both"), default="both")
    l.add_argument("--queries", type=int, default=None, help="sample this many query nodes")
    l.add_argument("--seed", type=int, default=0)
    grp = l.add_mutually_exclusive_group()
    grp.add_argument("--alpha", type=float, default=None)
    grp.add_argument("--hardest", action="store_true")
    l.add_argument("--ell", type=int, default=25)
    l.add_argument("--tol", type=float, default=1e-10)
    l.add_argument("--out", default=None)
    common_partition(l)
    l.set_defaults(func=cmd_linkpred)

    for sp in (b, q, be, l):
        sp.add_argument("--config", default=None, help=argparse.SUPPRESS)
    return p


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        argv = _merge_config(argv)
    except GraphParseError as err:
        _log(f"error: {err}")
        return 2
    except OSError as err:
        _log(f"error: {err}")
        return 4
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code) if err.code else 0
    try:
        return args.func(args)
    except GraphParseError as err:
        _log(f"error: {err}")
        return 2
    except InadmissibleAlphaError as err:
        _log(f"error: {err}")
        return 3
    except (OSError, IndexFormatError) as err:
        _log(f"error: {err}")
        return 4
    except UnknownNodeError as err:
        _log(f"error: {err.args[0] if err.args else err}")
        return 5
    except lp.EmptyPositivesError as err:
        _log(f"error: {err}")
        return 6
    except (ValueError, RuntimeError) as err:
        _log(f"error: {err}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
