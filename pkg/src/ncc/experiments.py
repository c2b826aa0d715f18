"""Run algorithms under the simulator, verify them, and summarize round counts."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .graphs import InputGraph, gen_graph
from .local import (EPSILON_DEFAULT, bfs_tree, compute_coloring, compute_matching, compute_mis,
                    setup_broadcast_trees)
from .mst import compute_mst
from .net import CapacityViolation, NetworkConfig, ProtocolStall
from .oracles import oracle_bfs, reference_arboricity, verify
from .orientation import compute_orientation
from .sim import Simulation

ALGORITHMS = ("mst", "bfs", "mis", "matching", "coloring", "orientation")
COLUMNS = ("algo", "n", "m", "a_ref", "seed", "rounds", "phases", "drop_total", "peak_send",
           "peak_recv", "congestion", "verified")


@dataclass
class MetricsRow:
    algo: str
    n: int
    m: int
    a_ref: int
    seed: int
    rounds: int
    phases: int
    drop_total: int
    peak_send: int
    peak_recv: int
    congestion: int
    verified: bool

    def as_list(self) -> list:
        return [getattr(self, c) for c in COLUMNS]


@dataclass
class RunOutcome:
    row: MetricsRow
    result: object
    sim: Simulation
    error: str = ""
    diagnostics: tuple = ()


def _congestion(sim) -> int:
    vals = [int(p["congestion"]) for p in sim.trace.primitives if "congestion" in p]
    return max(vals, default=0)


def run_algorithm(algo: str, g: InputGraph, seed: int, kappa: float = 8.0, drop_policy: str = "random-subset",
                  epsilon: float = EPSILON_DEFAULT, source: int = 0, a_ref: int | None = None) -> RunOutcome:
    """One seeded run of ``algo`` on ``g``, checked against the oracles."""
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}")
    sim = Simulation(g.n, NetworkConfig(n=g.n, kappa=kappa, seed=seed, drop_policy=drop_policy))
    a_ref = reference_arboricity(g) if a_ref is None else a_ref
    result, error = None, ""
    try:
        if algo == "mst":
            result = compute_mst(sim, g)
        else:
            o = compute_orientation(sim, g)
            if algo == "orientation":
                result = o
            elif algo == "coloring":
                result = compute_coloring(sim, g, o, epsilon=epsilon)
            else:
                trees = setup_broadcast_trees(sim, g, o)
                if algo == "bfs":
                    result = bfs_tree(sim, g, trees, source)
                elif algo == "mis":
                    result = compute_mis(sim, g, trees)
                else:
                    result = compute_matching(sim, g, trees)
    except (CapacityViolation, ProtocolStall, RuntimeError) as exc:
        error = f"{type(exc).__name__}: {exc}"
    if result is not None:
        ref = a_ref if algo == "orientation" else None
        rep = verify(algo, g, result, a_ref=ref)
        ok, diags = rep.passed, tuple(rep.diagnostics)
    else:
        ok, diags = False, (error,)
    tr = sim.trace
    row = MetricsRow(algo, g.n, g.m, int(a_ref), int(seed), int(sim.round),
                     int(getattr(result, "phases", 0) or 0), tr.drop_total, tr.peak_send, tr.peak_recv,
                     _congestion(sim), bool(ok))
    return RunOutcome(row, result, sim, error, diags)


def result_lines(algo: str, g: InputGraph, result) -> list[str]:
    if result is None:
        return []
    if algo == "mst":
        return result.export_lines(g)
    return result.export_lines()


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(["true" if v is True else "false" if v is False else v for v in r.as_list()])
    return buf.getvalue()


def save_outcome(out_dir: Path, tag: str, outcome: RunOutcome, g: InputGraph) -> None:
    """Result file plus trace summary JSON for one run."""
    out_dir = Path(out_dir)
    write_atomic(out_dir / f"{tag}.txt", "\n".join(result_lines(outcome.row.algo, g, outcome.result)) + "\n")
    summary = outcome.sim.trace.to_dict(per_round=False)
    summary["row"] = asdict(outcome.row)
    summary["error"] = outcome.error
    summary["diagnostics"] = list(outcome.diagnostics)
    write_atomic(out_dir / f"{tag}.trace.json", json.dumps(summary, sort_keys=True, indent=1, default=_jsonable) + "\n")
    r = outcome.row
    brief = dict(algo=r.algo, n=r.n, m=r.m, seed=r.seed, phases=r.phases, rounds=r.rounds, verified=r.verified)
    if r.algo == "mst" and outcome.result is not None:
        brief["weight"] = int(outcome.result.weight)
    write_atomic(out_dir / f"{tag}.summary.json", json.dumps(brief, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    raise TypeError(type(x).__name__)


# -- scaling -------------------------------------------------------------------
def diameter(g: InputGraph) -> int:
    """Double-sweep estimate of D in node 0's component; exact on trees."""
    d0 = oracle_bfs(g, 0)
    far = int(np.argmax(d0))
    return int(oracle_bfs(g, far).max())


def bound(algo: str, n: int, a: int, D: int = 0) -> float:
    """The round bound for ``algo`` with measured ``a`` and ``D`` substituted."""
    lg = math.log2(max(n, 2))
    if algo == "mst":
        return lg ** 4
    if algo == "bfs":
        return (a + D + lg) * lg
    if algo == "coloring":
        return (a + lg) * lg ** 1.5
    return (a + lg) * lg


@dataclass
class ScalingPoint:
    n: int
    median_rounds: float
    bound: float
    ratio: float
    normalized: float
    trials: int
    verified: int


def scaling_points(rows_by_n: dict, algo: str, a_by_n: dict, D_by_n: dict | None = None) -> list[ScalingPoint]:
    """Median rounds per ``n`` over its bound, normalized at the smallest ``n``."""
    pts = []
    for n in sorted(rows_by_n):
        rows = rows_by_n[n]
        med = float(np.median([r.rounds for r in rows]))
        b = bound(algo, n, a_by_n[n], (D_by_n or {}).get(n, 0))
        pts.append(ScalingPoint(n, med, b, med / b, 0.0, len(rows), sum(r.verified for r in rows)))
    if pts:
        c = pts[0].ratio
        for p in pts:
            p.normalized = p.ratio / c if c else float("nan")
    return pts


def spread(points) -> float:
    """max/min of the fitted ratios (1.0 is perfectly flat)."""
    r = [p.ratio for p in points]
    return max(r) / min(r) if r and min(r) > 0 else float("inf")


def scaling_report(algo: str, points: list[ScalingPoint], limit: float = 2.0) -> tuple[str, bool]:
    """Text table and whether the ratio stays within ``limit``."""
    lines = [f"{algo}: rounds / bound, constant fitted at n={points[0].n}" if points else f"{algo}: no data",
             f"{'n':>6} {'median':>10} {'bound':>10} {'ratio':>9} {'vs n0':>7} {'ok':>5}"]
    for p in points:
        lines.append(f"{p.n:>6} {p.median_rounds:>10.0f} {p.bound:>10.1f} {p.ratio:>9.3f} "
                     f"{p.normalized:>7.3f} {p.verified:>2}/{p.trials:<2}")
    if len(points) < 3:
        lines.append("fewer than 3 sizes: flatness check skipped")
        return "\n".join(lines), True
    s = spread(points)
    flat = s < limit
    lines.append(f"spread {s:.3f} ({'flat' if flat else 'NOT FLAT'}, limit {limit:g}x)")
    return "\n".join(lines), flat


def sweep(algo: str, ns, family: str, seeds, m_per_n: float | None = None, a: int | None = None,
          weighted: bool = False, weight_exp: float = 2.0, kappa: float = 8.0, source: int = 0):
    """Run ``algo`` for every ``(n, seed)``; returns rows by n, a_ref and D by n."""
    rows_by_n, a_by_n, D_by_n = {}, {}, {}
    for n in ns:
        rows, arefs, Ds = [], [], []
        for s in seeds:
            m = None if m_per_n is None else int(m_per_n * n)
            g = gen_graph(family, n, seed=s, m=m, a=a, weighted=weighted or algo == "mst", weight_exp=weight_exp)
            ar = int(g.meta.get("a_construction") or reference_arboricity(g))
            out = run_algorithm(algo, g, s, kappa=kappa, source=source, a_ref=ar)
            rows.append(out.row)
            arefs.append(ar)
            if algo == "bfs":
                Ds.append(diameter(g))
        rows_by_n[n] = rows
        a_by_n[n] = int(np.median(arefs))
        if Ds:
            D_by_n[n] = int(np.median(Ds))
    return rows_by_n, a_by_n, D_by_n
