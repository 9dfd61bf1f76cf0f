"""Command line: ``pairpotts verify | sample | variance-scan``.

Every subcommand reads one JSON config (see README) and writes into ``--out``.
Exit codes: 0 pass, 1 a check failed, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from . import __version__, lattice, mcmc, oracle, special
from .lattice import GENUS0, TORUS
from .model import Params

CSV_HEADER = ["experiment", "graph", "q", "qp", "a", "b", "estimand", "value", "stderr", "n", "seed"]

DEFAULT_VERIFY = {
    "experiment": "verify-default",
    "graphs": ["box:1"],
    "grid": {"q": [2, 3], "qp": [2, 3], "a": [0.3, 0.5, 0.7], "b": [0.3, 0.5, 0.7]},
}


class UsageError(Exception):
    pass


def parse_graph(spec) -> lattice.EmbeddedGraph:
    """``"box:4"``, ``"torus:2"``, ``"prism"`` or ``{"kind": "box", "n": 4}``."""
    if isinstance(spec, str):
        kind, _, n = spec.partition(":")
        spec = {"kind": kind, "n": int(n)} if n else {"kind": kind}
    if not isinstance(spec, dict):
        raise UsageError(f"bad graph spec {spec!r}")
    kind = spec.get("kind")
    try:
        if kind == "box":
            return lattice.build_box(int(spec["n"]))
        if kind == "torus":
            return lattice.build_torus(int(spec["n"]))
        if kind == "prism":
            return lattice.build_prism()
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad graph spec {spec!r}: {exc}") from None
    raise UsageError(f"unknown graph kind {kind!r}")


def parse_grid(grid: dict) -> list[Params]:
    try:
        axes = [list(grid[k]) for k in ("q", "qp", "a", "b")]
    except (KeyError, TypeError):
        raise UsageError("grid needs lists q, qp, a, b") from None
    if any(len(ax) == 0 for ax in axes):
        raise UsageError("empty parameter grid")
    Q = grid.get("Q")
    Qp = grid.get("Qp")
    out = []
    for q, qp, a, b in itertools.product(*axes):
        try:
            out.append(Params(int(q), int(qp), float(a), float(b),
                              tuple(Q) if Q and len(Q) == q else None,
                              tuple(Qp) if Qp and len(Qp) == qp else None))
        except ValueError as exc:
            raise UsageError(f"bad grid point {(q, qp, a, b)}: {exc}") from None
    return out


def parse_sampler(d: dict, seed: int) -> tuple[mcmc.SamplerConfig, int]:
    d = dict(d or {})
    chains = int(d.pop("chains", 1))
    try:
        cfg = mcmc.SamplerConfig(seed=seed, **d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad sampler config: {exc}") from None
    if chains < 1:
        raise UsageError("chains must be positive")
    return cfg, chains


@dataclass
class RunContext:
    config: dict
    out: Path
    seed: int
    threads: int

    @property
    def experiment(self) -> str:
        return str(self.config.get("experiment", "run"))


def load_config(path: Optional[str], default: Optional[dict] = None) -> dict:
    if path is None:
        if default is None:
            raise UsageError("--config is required")
        return dict(default)
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


# ---------------------------------------------------------------------------
# verify


def graph_reports(g: lattice.EmbeddedGraph) -> list[oracle.Report]:
    if g.topology == TORUS:
        return [oracle.check_torus_topology(g)]
    return oracle.graph_suite(g)


def point_reports(g: lattice.EmbeddedGraph, p: Params) -> list[oracle.Report]:
    if g.topology == TORUS:
        return [oracle.check_fk_reduction(g, p)] if p.on_line else []
    reps = oracle.identity_suite(g, p)
    if p.q == p.qp == 2 and tuple(p.Q) == special.PM and tuple(p.Qp) == special.PM and g.n_edges <= 12:
        reps.append(special.check_six_vertex(g, p))
    if p.qp == 2 and p.q in (1, 2) and abs(p.a**2 + p.b**2 - 1) < 1e-12:
        reps.append(special.check_current_traces(g, p))
    return reps


def cmd_verify(ctx: RunContext) -> int:
    graphs = [parse_graph(s) for s in ctx.config.get("graphs", [ctx.config.get("graph", "box:1")])]
    points = parse_grid(ctx.config.get("grid", {}))
    jobs = [(g, None) for g in graphs] + [(g, p) for g in graphs for p in points]
    with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
        results = list(pool.map(lambda j: graph_reports(j[0]) if j[1] is None else point_reports(*j), jobs))
    reports = [r for reps in results for r in reps]
    ctx.out.mkdir(parents=True, exist_ok=True)
    with open(ctx.out / "verify.json", "w") as fh:
        json.dump({"version": __version__, "experiment": ctx.experiment,
                   "reports": [r.to_dict() for r in reports]}, fh, indent=1, default=oracle._json_default)
    failed = [r for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed")
    if failed:
        r = failed[0]
        print(f"FAIL {r.identity} on {r.graph} at {r.params}: max_error={r.max_error:.3g}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# sampling


def _path_for(g: lattice.EmbeddedGraph, cfg: dict) -> list:
    if g.topology == GENUS0:
        spec = cfg.get("path")
        if spec:
            return lattice.face_path(g, int(spec["from"]), int(spec["to"]))
        return mcmc.default_path(g)
    n = int(round(g.n_faces**0.5))
    # antipodal faces
    return lattice.torus_face_path(g, 0, (n // 2) * n + n // 2)


def _run_point(g, p, base: mcmc.SamplerConfig, chains: int, chain0: int, path, pool) -> mcmc.EstimatorAccumulator:
    cfgs = [base.with_chain(chain0 + c) for c in range(chains)]
    accs = list(pool.map(lambda c: mcmc.run_chain(g, p, c, path), cfgs))
    acc = accs[0]
    for other in accs[1:]:
        acc = acc.merge(other)
    return acc


def _rows_for(ctx: RunContext, g, p, acc: mcmc.EstimatorAccumulator) -> list[list]:
    base = [ctx.experiment, g.name, p.q, p.qp, p.a, p.b]
    n = acc.n
    rows = []

    def add(name, val, err):
        rows.append(base + [name, _fmt(val), _fmt(err), n, ctx.seed])

    if n >= 2:
        hv = mcmc.estimate_height_variance(acc)
        add("var_dh", hv["variance"], hv["stderr"])
        add("mean_dh", hv["mean"], hv["mean_stderr"])
    cc = mcmc.estimate_cluster_counts(acc)
    add("E_N_nonzero", *cc["N_nonzero"])
    for d, (m, e) in cc["N_d"].items():
        add(f"E_N_d[{d:g}]", m, e)
    if acc.cluster_stats:
        add("E_N_prime", *cc["N_prime"])
        add("E_N_surround", *cc["N_surround"])
        add("P_connected", *cc["connectivity"])
    if n >= 2:
        gap = mcmc.identity_gap(acc)
        add("identity_rhs", gap["rhs"], gap["rhs_stderr"])
        add("identity_gap", gap["gap"], gap["stderr"])
        if acc.cluster_stats:
            im = mcmc.inequality_margin(acc, p.qp)
            add("inequality_margin", im["margin"], im["stderr"])
    return rows


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _write_sidecar(ctx: RunContext, name: str, extra: dict) -> None:
    meta = {"version": __version__, "seed": ctx.seed, "experiment": ctx.experiment, "config": ctx.config, **extra}
    (ctx.out / name).write_text(json.dumps(meta, indent=1, sort_keys=True, default=str))


def cmd_sample(ctx: RunContext) -> int:
    graphs = [parse_graph(s) for s in ctx.config.get("graphs", [ctx.config.get("graph", "box:1")])]
    points = parse_grid(ctx.config.get("grid", {}))
    base, chains = parse_sampler(ctx.config.get("sampler"), ctx.seed)
    ctx.out.mkdir(parents=True, exist_ok=True)
    (ctx.out / "accumulators").mkdir(exist_ok=True)
    rows = []
    with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
        for gi, g in enumerate(graphs):
            path = _path_for(g, ctx.config)
            for pi, p in enumerate(points):
                chain0 = (gi * len(points) + pi) * chains
                acc = _run_point(g, p, base, chains, chain0, path, pool)
                rows.extend(_rows_for(ctx, g, p, acc))
                (ctx.out / "accumulators" / f"{g.name}_{pi}.json").write_text(acc.to_json())
    _write_csv(ctx.out / "results.csv", rows)
    _write_sidecar(ctx, "results.run.json", {"rows": len(rows)})
    return 0


def cmd_variance_scan(ctx: RunContext) -> int:
    sizes = ctx.config.get("sizes")
    if not sizes:
        raise UsageError("variance-scan needs a non-empty 'sizes' list")
    topo = ctx.config.get("topology", "box")
    if topo not in ("box", "torus"):
        raise UsageError("topology must be 'box' or 'torus'")
    points = parse_grid(ctx.config.get("grid", {}))
    base, chains = parse_sampler(ctx.config.get("sampler"), ctx.seed)
    scale = ctx.config.get("sweeps_scale", {})
    expect = ctx.config.get("expect")
    ctx.out.mkdir(parents=True, exist_ok=True)
    rows = []
    verdicts = []
    with ThreadPoolExecutor(max_workers=ctx.threads) as pool:
        for pi, p in enumerate(points):
            curve = []
            for si, n in enumerate(sizes):
                g = parse_graph({"kind": topo, "n": n})
                cfg = base
                if str(n) in scale:
                    f = float(scale[str(n)])
                    cfg = replace(cfg, sweeps=int(cfg.sweeps * f), burn_in=int(cfg.burn_in * f))
                chain0 = (pi * len(sizes) + si) * chains
                acc = _run_point(g, p, cfg, chains, chain0, _path_for(g, ctx.config), pool)
                hv = mcmc.estimate_height_variance(acc)
                curve.append((hv["variance"], hv["stderr"]))
                rows.extend(_rows_for(ctx, g, p, acc))
            if expect:
                verdicts.append({"params": p.as_dict(), **trend_verdict(curve, expect)})
    _write_csv(ctx.out / "variance_scan.csv", rows)
    _write_sidecar(ctx, "variance_scan.run.json", {"sizes": sizes, "verdicts": verdicts})
    if verdicts:
        for v in verdicts:
            print(("PASS" if v["pass"] else "FAIL"), v["params"], v["detail"])
        return 0 if all(v["pass"] for v in verdicts) else 1
    return 0


def trend_verdict(curve: list[tuple[float, float]], expect: str, k: float = 2.0) -> dict:
    """``increasing``: each step exceeds ``k`` joint stderrs. ``bounded``: the last
    two sizes agree within ``k`` joint stderrs."""
    steps = [((v2 - v1), (e1**2 + e2**2) ** 0.5) for (v1, e1), (v2, e2) in zip(curve, curve[1:])]
    if expect == "increasing":
        ok = all(d > k * s for d, s in steps)
    elif expect == "bounded":
        d, s = steps[-1]
        ok = abs(d) <= k * s
    else:
        raise UsageError(f"unknown expectation {expect!r}")
    return {"pass": bool(ok), "detail": [(round(d, 5), round(s, 5)) for d, s in steps]}


# ---------------------------------------------------------------------------


COMMANDS = {"verify": cmd_verify, "sample": cmd_sample, "variance-scan": cmd_variance_scan}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pairpotts", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="DIR", default="out")
        sp.add_argument("--seed", metavar="N", type=int)
        sp.add_argument("--threads", metavar="K", type=int, default=1)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        default = DEFAULT_VERIFY if args.command == "verify" else None
        config = load_config(args.config, default)
        seed = args.seed if args.seed is not None else int(config.get("seed", 0))
        ctx = RunContext(config, Path(args.out), seed, args.threads)
        return COMMANDS[args.command](ctx)
    except UsageError as exc:
        print(f"pairpotts: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pairpotts: I/O error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 2
