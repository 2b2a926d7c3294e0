"""Command line entry point: ``gogbench <subcommand> ...``.

Exit codes: 0 all thresholds pass, 2 a threshold fails, 3 the graph of
groups is invalid, 4 the vertex budget is exceeded, 5 bad input (usage,
config, word syntax), 6 any other workbench error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from pathlib import Path

from . import __version__
from .config import WorkbenchConfig, parse_config
from .cuspedspace import build_cusped, estimate_delta
from .errors import ParseError, WorkbenchError
from .groupcore import DEFAULT_BUDGET, named_backend
from .normalform import parse_gog_word, reduce, render_nf, thread
from .quotientproj import QuotientBall, peripheral_roots, proj_bound, verify_dist_projs
from .treespace import build_ball, distortion_profile, sides_decomposition

EXIT_THRESHOLD = 2


class UsageError(ParseError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- output helpers ----------------------------------------------------------------


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    write_atomic(path, buf.getvalue())


def _fmt(x: float) -> str:
    return f"{x:.6f}"


class Report:
    """Collects parameters and results and writes ``<name>-report.json``."""

    def __init__(self, name: str, args, cfg: WorkbenchConfig | None = None):
        self.name = name
        self.out = Path(args.out_dir)
        self.started = getattr(args, "started", None) or time.perf_counter()
        self.data = {
            "experiment": name,
            "version": __version__,
            "config": cfg.path if cfg else None,
            "config_sha256": cfg.sha256 if cfg else None,
            "parameters": {},
            "results": {},
            "thresholds": {},
            "passed": True,
        }

    def param(self, **kw):
        self.data["parameters"].update(kw)

    def result(self, **kw):
        self.data["results"].update(kw)

    def threshold(self, label: str, ok: bool, detail: str = ""):
        self.data["thresholds"][label] = {"pass": bool(ok), "detail": detail}
        if not ok:
            self.data["passed"] = False

    def csv(self, suffix: str, header, rows) -> Path:
        path = self.out / f"{self.name}{suffix}.csv"
        write_csv(path, header, rows)
        self.data.setdefault("artifacts", []).append(path.name)
        return path

    def finish(self) -> int:
        self.data["wall_clock_s"] = round(time.perf_counter() - self.started, 3)
        write_atomic(self.out / f"{self.name}-report.json", json.dumps(self.data, indent=2, default=str) + "\n")
        for label, t in self.data["thresholds"].items():
            print(f"{'PASS' if t['pass'] else 'FAIL'}  {label}  {t['detail']}")
        print(f"{self.name}: {'pass' if self.data['passed'] else 'FAIL'} (config sha256 {self.data['config_sha256']})")
        return 0 if self.data["passed"] else EXIT_THRESHOLD


def _setting(args, cfg: WorkbenchConfig | None, experiment: str, key: str, cast=str, default=None, required=False):
    """Command-line flag, else the config's experiment section, else ``default``."""
    val = getattr(args, key, None)
    if val is None and cfg is not None:
        raw = cfg.experiment(experiment).get(key)
        if raw is not None:
            try:
                val = cast(raw)
            except ValueError:
                raise ParseError(f"[experiment {experiment}] {key} = {raw!r} is not valid") from None
    if val is None:
        val = default
    if val is None and required:
        raise UsageError(f"{experiment}: --{key.replace('_', '-')} is required (flag or config)")
    return val


def _ints(text) -> list[int]:
    if isinstance(text, list):
        return [int(x) for x in text]
    return [int(x) for x in str(text).replace(",", " ").split()]


def _load(args) -> WorkbenchConfig:
    return parse_config(args.config)


# -- subcommands ------------------------------------------------------------------------


def cmd_check_admissible(args) -> int:
    cfg = _load(args)
    radius = _setting(args, cfg, "check-admissible", "radius", int, 4)
    rep = Report("check-admissible", args, cfg)
    rep.param(radius=radius)
    res = cfg.gog.check_admissibility(radius, budget=args.budget_vertices)
    rows = []
    for key, c in res.conditions.items():
        rows.append((key, c.status, c.method, json.dumps(c.detail, sort_keys=True, default=str)))
        rep.threshold(key, c.status == "pass", c.status)
    rep.result(**res.to_dict())
    rep.csv("", ["condition", "status", "method", "detail"], rows)
    return rep.finish()


def cmd_build_ball(args) -> int:
    cfg = _load(args)
    radius = _setting(args, cfg, "build-ball", "radius", int, required=True)
    start = _setting(args, cfg, "build-ball", "start")
    ball = build_ball(cfg.gog, radius, start, budget=args.budget_vertices)
    rep = Report("build-ball", args, cfg)
    rep.param(radius=radius, start=start or cfg.gog.base)
    buf = io.StringIO()
    ball.write(buf, cfg.sha256)
    path = Path(args.out_dir) / f"ball-r{radius}.txt"
    write_atomic(path, buf.getvalue())
    rep.result(vertices=len(ball), edges=ball.adjacency.nnz // 2, vertex_spaces=len(set(ball.node_of.tolist())), export=path.name)
    print(f"ball radius {radius}: {len(ball)} vertices, {ball.adjacency.nnz // 2} edges -> {path}")
    return rep.finish()


def cmd_distortion(args) -> int:
    cfg = _load(args)
    name = "distortion"
    seed = _setting(args, cfg, name, "seed", int)
    if seed is None:
        raise UsageError("distortion: a seed is required (--seed or 'seed' in the experiment section)")
    edge = _setting(args, cfg, name, "edge", required=True)
    radii = _ints(_setting(args, cfg, name, "radii", str, required=True))
    subspace = _setting(args, cfg, name, "subspace", str, "edge")
    max_k = _setting(args, cfg, name, "max_k", float)
    max_a = _setting(args, cfg, name, "max_a", float)
    spread = _setting(args, cfg, name, "max_k_spread", float)
    g = cfg.gog
    if edge not in g.edges:
        raise ParseError(f"unknown edge {edge!r}")
    rep = Report(name, args, cfg)
    rep.param(edge=edge, radii=radii, subspace=subspace, seed=seed, max_k=max_k, max_a=max_a, max_k_spread=spread)
    table, fits = [], []
    start = g.edges[edge].source
    for r in radii:
        ball = build_ball(g, r, start, budget=args.budget_vertices)
        te = ball.edge_at(0, edge)
        if subspace == "edge":
            sel, intrinsic = ball.subspace(te), "edge"
        elif subspace == "vertex":
            sel, intrinsic = ball.subspace(te.tail), "vertex"
        else:
            raise UsageError(f"subspace must be 'edge' or 'vertex', not {subspace!r}")
        prof = distortion_profile(ball, sel, intrinsic, seed=seed)
        table += [(r, a, b, n) for a, b, n in prof.csv_rows()]
        fits.append((r, _fmt(prof.K), _fmt(prof.A), _fmt(prof.max_ratio), len(sel), prof.pairs, prof.certified_pairs, int(prof.sampled)))
        if max_k is not None:
            rep.threshold(f"K <= {max_k:g} at r={r}", prof.K <= max_k, f"K={prof.K:.4f}")
        if max_a is not None:
            rep.threshold(f"A <= {max_a:g} at r={r}", prof.A <= max_a, f"A={prof.A:.4f}")
    ks = [float(f[1]) for f in fits]
    if spread is not None:
        rep.threshold(f"K spread <= {spread:g}", max(ks) - min(ks) <= spread, f"spread={max(ks) - min(ks):.4f}")
    rep.result(fits=[dict(zip(["radius", "K", "A", "max_ratio", "points", "pairs", "certified_pairs", "sampled"], f)) for f in fits])
    rep.csv("", ["radius", "d_intrinsic", "d_ambient", "count"], table)
    rep.csv("-fit", ["radius", "K", "A", "max_ratio", "points", "pairs", "certified_pairs", "sampled"], fits)
    return rep.finish()


def cmd_dist_projs(args) -> int:
    cfg = _load(args)
    name = "dist-projs"
    edge = _setting(args, cfg, name, "edge", required=True)
    radius = _setting(args, cfg, name, "radius", int, required=True)
    cap_k = _setting(args, cfg, name, "cap_k", float)
    cap_a = _setting(args, cfg, name, "cap_a", float)
    cap = (cap_k, cap_a) if cap_k is not None and cap_a is not None else None
    g = cfg.gog
    if edge not in g.edges:
        raise ParseError(f"unknown edge {edge!r}")
    res = verify_dist_projs(g, edge, radius, cap, budget=args.budget_vertices)
    rep = Report(name, args, cfg)
    rep.param(edge=edge, radius=radius, cap_k=cap_k, cap_a=cap_a)
    rep.result(K=res.K, A=res.A, pairs=len(res.rows), violations=len(res.violations))
    if cap is not None:
        rep.threshold(f"K <= {cap_k:g}", res.K <= cap_k, f"K={res.K:.4f}")
        rep.threshold(f"A <= {cap_a:g}", res.A <= cap_a, f"A={res.A:.4f}")
        rep.threshold(f"no pair violates cap ({cap_k:g}, {cap_a:g})", not res.violations, f"violations={len(res.violations)}")
    rep.csv("", ["pair_id", "d_edge", "d_Yv", "d_Yw", "d_Xv"], res.rows)
    return rep.finish()


def cmd_proj_bound(args) -> int:
    name = "proj-bound"
    cfg = _load(args) if args.config else None
    radius = _setting(args, cfg, name, "radius", int, required=True)
    max_diam = _setting(args, cfg, name, "max_diameter", int)
    if cfg is not None:
        vertex = _setting(args, cfg, name, "vertex", str, cfg.gog.base)
        if vertex not in cfg.gog.vertices:
            raise ParseError(f"unknown vertex {vertex!r}")
        backend = cfg.gog.backend(vertex)
        roots = peripheral_roots(cfg.gog, vertex)
        params = {"vertex": vertex}
    else:
        if not args.base or not args.peripheral:
            raise UsageError("proj-bound needs a config or both --base and --peripheral")
        backend = named_backend(args.base)
        if backend.kind != "free":
            raise UsageError("--base must name a free backend for proj-bound")
        roots = [backend.parse(w).letters for w in args.peripheral]
        params = {"base": args.base, "peripheral": args.peripheral}
    free = backend if backend.kind == "free" else backend.free_part()
    free.ball(radius, args.budget_vertices)  # fail fast on the budget
    qb = QuotientBall(backend, radius)
    lines = qb.lines(roots)
    res = proj_bound(qb, lines)
    rep = Report(name, args, cfg)
    rep.param(radius=radius, max_diameter=max_diam, **params)
    rep.result(
        quotient_points=len(qb.points), lines=len(lines), pairs=res.pairs, skipped_pairs=res.skipped_pairs,
        excluded_points=res.excluded_points, max_diameter=res.max_diameter,
    )
    if max_diam is not None:
        rep.threshold(f"projection diameter <= {max_diam}", res.max_diameter <= max_diam, f"max={res.max_diameter}")
    rep.csv("", ["line", "other", "diameter", "points_used"], res.csv_rows(qb))
    return rep.finish()


def cmd_sides(args) -> int:
    cfg = _load(args)
    name = "sides"
    edge = _setting(args, cfg, name, "edge", required=True)
    radius = _setting(args, cfg, name, "radius", int, required=True)
    g = cfg.gog
    if edge not in g.edges:
        raise ParseError(f"unknown edge {edge!r}")
    ball = build_ball(g, radius, g.edges[edge].source, budget=args.budget_vertices)
    te = ball.edge_at(0, edge)
    sides = sides_decomposition(ball, te)
    on_edge = set(sides.on_edge.tolist())
    rows, mixed = [], 0
    eps_by_node: dict[int, set] = {}
    for i in range(len(ball)):
        side = 0 if i in on_edge else int(sides.epsilon[i])
        eps_by_node.setdefault(int(ball.node_of[i]), set()).add(int(sides.epsilon[i]))
        rows.append((i, ball.points[i].end, int(ball.node_of[i]), side, int(sides.epsilon[i]), ball.render(i)))
    mixed = sum(1 for s in eps_by_node.values() if len(s) > 1)
    rep = Report(name, args, cfg)
    rep.param(edge=edge, radius=radius)
    rep.result(points=len(ball), on_edge=len(sides.on_edge), plus=len(sides.plus), minus=len(sides.minus),
               vertex_spaces=len(eps_by_node), mixed_vertex_spaces=mixed)
    rep.threshold("epsilon constant on vertex spaces", mixed == 0, f"mixed={mixed}")
    rep.csv("", ["index", "vertex", "vertex_space", "side", "epsilon", "normal_form"], rows)
    return rep.finish()


def cmd_cusp_delta(args) -> int:
    name = "cusp-delta"
    b = named_backend(args.base)
    cg = build_cusped(b, args.peripheral, args.radius, args.depth, budget=args.budget_vertices)
    est = estimate_delta(cg.graph, args.method, margin=args.margin)
    rep = Report(name, args)
    rep.param(base=args.base, peripheral=args.peripheral, radius=args.radius, depth=args.depth, method=args.method, margin=args.margin)
    rep.result(delta=str(est.value), record=est.record(), cosets=len(cg.cosets), ball=cg.ball_size)
    if args.max_delta is not None:
        rep.threshold(f"delta <= {args.max_delta:g}", float(est.value) <= args.max_delta, f"delta={est.value}")
    if args.graph_out:
        buf = io.StringIO()
        cg.graph.write(buf, f"cusped {args.base} <{args.peripheral}> radius {args.radius} depth {args.depth}")
        write_atomic(Path(args.graph_out), buf.getvalue())
    print(est.record())
    rep.csv("", ["base", "peripheral", "radius", "depth", "method", "delta", "certified", "guard", "vertices", "used"],
            [(args.base, args.peripheral, args.radius, args.depth, est.method, str(est.value), est.certified, est.guard, est.vertices, est.used_vertices)])
    return rep.finish()


def cmd_nf(args) -> int:
    cfg = _load(args)
    g = cfg.gog
    stream = sys.stdin if args.input == "-" else open(args.input)
    status = 0
    with stream:
        for n, line in enumerate(stream, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                word = thread(g, parse_gog_word(text), args.start, close=args.close)
                print(render_nf(g, reduce(g, word, args.start)))
            except ParseError as err:
                print(f"line {n}: {err}", file=sys.stderr)
                status = err.exit_code
    return status


# -- argument parsing -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gogbench", description="Finite-scale experiments on graphs of groups with Z^2 edge groups.")
    p.add_argument("--version", action="version", version=f"gogbench {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, config=True):
        if config:
            sp.add_argument("config", help="config file, or the name of a shipped config")
        sp.add_argument("--out-dir", default=".", help="directory for CSV and report files (default: .)")
        sp.add_argument("--budget-vertices", type=int, default=DEFAULT_BUDGET, help="abort past this many vertices")
        return sp

    sp = common(sub.add_parser("check-admissible", help="check the admissibility conditions"))
    sp.add_argument("--radius", type=int)
    sp.set_defaults(func=cmd_check_admissible)

    sp = common(sub.add_parser("build-ball", help="export a ball of the tree of spaces"))
    sp.add_argument("--radius", type=int)
    sp.add_argument("--start", help="Gamma-vertex of the basepoint (default: base vertex)")
    sp.set_defaults(func=cmd_build_ball)

    sp = common(sub.add_parser("distortion", help="edge- or vertex-space distortion profile"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--edge")
    sp.add_argument("--radii", nargs="+", type=int)
    sp.add_argument("--subspace", choices=["edge", "vertex"])
    sp.add_argument("--max-k", dest="max_k", type=float)
    sp.add_argument("--max-a", dest="max_a", type=float)
    sp.add_argument("--max-k-spread", dest="max_k_spread", type=float)
    sp.set_defaults(func=cmd_distortion)

    sp = common(sub.add_parser("dist-projs", help="distance formula across an edge"))
    sp.add_argument("--edge")
    sp.add_argument("--radius", type=int)
    sp.add_argument("--cap-k", dest="cap_k", type=float)
    sp.add_argument("--cap-a", dest="cap_a", type=float)
    sp.set_defaults(func=cmd_dist_projs)

    sp = common(sub.add_parser("proj-bound", help="projection diameters between peripheral lines"), config=False)
    sp.add_argument("config", nargs="?")
    sp.add_argument("--vertex")
    sp.add_argument("--base", help="named free backend, used without a config")
    sp.add_argument("--peripheral", nargs="+", help="peripheral words, used with --base")
    sp.add_argument("--radius", type=int)
    sp.add_argument("--max-diameter", dest="max_diameter", type=int)
    sp.set_defaults(func=cmd_proj_bound)

    sp = common(sub.add_parser("sides", help="split a ball by an edge space"))
    sp.add_argument("--edge")
    sp.add_argument("--radius", type=int)
    sp.set_defaults(func=cmd_sides)

    sp = common(sub.add_parser("cusp-delta", help="Gromov delta of a truncated cusped space"), config=False)
    sp.add_argument("--base", required=True, help="free2, free3, z2 or free2xz")
    sp.add_argument("--peripheral", required=True, help="peripheral generator word, e.g. x")
    sp.add_argument("--radius", type=int, required=True)
    sp.add_argument("--depth", type=int, required=True)
    sp.add_argument("--method", choices=["four-point", "maxmin", "basepoint"], default="four-point")
    sp.add_argument("--margin", type=int, default=1)
    sp.add_argument("--max-delta", dest="max_delta", type=float)
    sp.add_argument("--graph-out", help="also export the cusped graph here")
    sp.set_defaults(func=cmd_cusp_delta)

    sp = common(sub.add_parser("nf", help="normal forms of words read one per line"))
    sp.add_argument("--input", default="-", help="file of words (default: stdin)")
    sp.add_argument("--start", help="start vertex (default: base vertex)")
    sp.add_argument("--close", action="store_true", help="return the path to its start vertex")
    sp.set_defaults(func=cmd_nf)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.started = time.perf_counter()
        if not getattr(args, "command", None):
            parser.print_help()
            return UsageError.exit_code
        if args.budget_vertices < 1:
            raise UsageError("--budget-vertices must be positive")
        return args.func(args)
    except WorkbenchError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
