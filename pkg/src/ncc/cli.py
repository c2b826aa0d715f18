"""``ncc`` command line: generate graphs, run and verify algorithms, scaling sweeps."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (ALGORITHMS, rows_to_csv, run_algorithm, save_outcome, scaling_points,
                          scaling_report, sweep, write_atomic)
from .graphs import ALIASES, FAMILIES, GraphError, gen_graph, read_graph, write_graph
from .local import EPSILON_DEFAULT

DROP = {"random": "random-subset", "prefix": "prefix"}


def _seed_list(args, parser) -> list[int]:
    if args.seed_list is not None:
        try:
            seeds = [int(s) for s in args.seed_list.split(",") if s.strip()]
        except ValueError:
            parser.error(f"--seed-list must be comma-separated integers, got {args.seed_list!r}")
        if not seeds:
            parser.error("--seed-list is empty")
        return seeds
    if args.seeds < 1:
        parser.error("--seeds must be at least 1")
    return list(range(args.seeds))


def _add_graph_flags(p):
    p.add_argument("--family", default="random-gnm", choices=sorted(FAMILIES + tuple(ALIASES)))
    p.add_argument("--m", type=int, default=None, help="edges (random-gnm)")
    p.add_argument("--a", type=int, default=None, help="forests (bounded-arboricity)")
    p.add_argument("--weight-exp", type=float, default=2.0, help="weights uniform in [1, n^x]")
    p.add_argument("--weighted", action="store_true", help="weights for non-MST algorithms too")


def _add_run_flags(p):
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--source", type=int, default=0, help="BFS source")
    p.add_argument("--kappa", type=float, default=8.0, help="capacity = ceil(kappa log2 n)")
    p.add_argument("--drop-policy", default="random", choices=sorted(DROP))
    p.add_argument("--epsilon", type=float, default=EPSILON_DEFAULT, help="coloring palette slack")
    p.add_argument("--out", type=Path, default=Path("ncc-out"))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--seeds", type=int, default=1, help="run seeds 0..K-1")
    g.add_argument("--seed-list", default=None, help="comma-separated seeds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncc", description="Node-capacitated clique simulator")
    sub = parser.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run, verify and record an algorithm")
    _add_run_flags(run)
    _add_graph_flags(run)
    run.add_argument("--n", type=int, default=None)
    run.add_argument("--input", type=Path, default=None, help="graph file instead of a family")

    sc = sub.add_parser("scaling", help="median rounds against the round bound over several n")
    _add_run_flags(sc)
    _add_graph_flags(sc)
    sc.add_argument("--n", default="64,128,256,512", help="comma-separated sizes, ascending")
    sc.add_argument("--m-per-n", type=float, default=None, help="edges per node (random-gnm)")
    sc.add_argument("--limit", type=float, default=2.0, help="allowed max/min ratio")

    gen = sub.add_parser("gen", help="write a generated graph file")
    _add_graph_flags(gen)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)
    return parser


def _cmd_run(args, parser) -> int:
    seeds = _seed_list(args, parser)
    if args.input is None and args.n is None:
        parser.error("give --n with --family, or --input FILE")
    rows = []
    failed = False
    for s in seeds:
        if args.input is not None:
            try:
                g = read_graph(args.input)
            except (OSError, GraphError) as exc:
                parser.error(str(exc))
            name = args.input.stem
        else:
            try:
                g = gen_graph(args.family, args.n, seed=s, m=args.m, a=args.a,
                              weighted=args.weighted or args.algo == "mst", weight_exp=args.weight_exp)
            except GraphError as exc:
                parser.error(str(exc))
            name = f"{g.meta['family']}-n{g.n}"
        if args.algo == "bfs" and not 0 <= args.source < g.n:
            parser.error(f"--source {args.source} outside 0..{g.n - 1}")
        out = run_algorithm(args.algo, g, s, kappa=args.kappa, drop_policy=DROP[args.drop_policy],
                            epsilon=args.epsilon, source=args.source)
        save_outcome(args.out, f"{args.algo}-{name}-seed{s}", out, g)
        rows.append(out.row)
        r = out.row
        clean = r.verified and r.drop_total == 0
        failed |= not clean
        status = "ok" if clean else ("dropped" if r.verified else "FAILED")
        print(f"{args.algo} n={r.n} m={r.m} seed={s}: rounds={r.rounds} phases={r.phases} "
              f"drops={r.drop_total} {status}" + (f" ({out.diagnostics[0]})" if out.diagnostics else ""))
    write_atomic(args.out / "metrics.csv", rows_to_csv(rows))
    return 1 if failed else 0


def _cmd_scaling(args, parser) -> int:
    seeds = _seed_list(args, parser)
    try:
        ns = [int(x) for x in args.n.split(",") if x.strip()]
    except ValueError:
        parser.error(f"--n must be comma-separated integers, got {args.n!r}")
    if not ns or ns != sorted(ns) or ns[0] < 2:
        parser.error("--n must be ascending sizes >= 2")
    rows_by_n, a_by_n, D_by_n = sweep(args.algo, ns, args.family, seeds, m_per_n=args.m_per_n, a=args.a,
                                      weighted=args.weighted, weight_exp=args.weight_exp, kappa=args.kappa,
                                      source=args.source)
    points = scaling_points(rows_by_n, args.algo, a_by_n, D_by_n)
    text, flat = scaling_report(args.algo, points, args.limit)
    print(text)
    rows = [r for n in ns for r in rows_by_n[n]]
    write_atomic(args.out / f"scaling-{args.algo}.csv", rows_to_csv(rows))
    write_atomic(args.out / f"scaling-{args.algo}.txt", text + "\n")
    bad = any(not r.verified or r.drop_total for r in rows)
    return 1 if bad or not flat else 0


def _cmd_gen(args, parser) -> int:
    try:
        g = gen_graph(args.family, args.n, seed=args.seed, m=args.m, a=args.a, weighted=args.weighted,
                      weight_exp=args.weight_exp)
    except GraphError as exc:
        parser.error(str(exc))
    write_graph(g, args.out)
    print(f"wrote {g!r} to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "kappa", 1.0) <= 0:
        parser.error("--kappa must be positive")
    if getattr(args, "epsilon", 1.0) <= 0:
        parser.error("--epsilon must be positive")
    if args.cmd == "run":
        return _cmd_run(args, parser)
    if args.cmd == "scaling":
        return _cmd_scaling(args, parser)
    return _cmd_gen(args, parser)


if __name__ == "__main__":
    sys.exit(main())
