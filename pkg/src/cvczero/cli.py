"""Command-line driver.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on a
configuration error (bad config file, unknown zoo entry, malformed input).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np
import tomli

from . import __version__
from .config import CHECK_NAMES, RunConfig, load_config
from .errors import ConfigError, GeometryError, UnknownSeries
from .flows import geodesic, rank_estimate
from .global_structure import Leg, Loop, default_loops, holonomy, splitting_detect
from .gluing import (Edge, GraphDescription, Vertex, build_graph_manifold, export_atlas,
                     validate_isometries)
from .metric_core import metric_at, normalize
from .pointwise import classify_point
from .report import (check_f_ode, check_frame_audit, emit_plot_data, run_suite, sites)
from .zoo import zoo_list


def _common(p: argparse.ArgumentParser, zoo_required: bool = False):
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--zoo", action="append", required=zoo_required,
                   help="zoo entry name (repeatable for verify)")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--tol-scale", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--output", help="output file (default: standard output)")


def _point_args(p: argparse.ArgumentParser, direction: bool = True):
    p.add_argument("--chart", help="chart id (default: first chart of the atlas)")
    p.add_argument("--point", type=float, nargs=3, required=True, metavar=("X1", "X2", "X3"))
    if direction:
        p.add_argument("--direction", type=float, nargs=3, required=True,
                       metavar=("V1", "V2", "V3"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cvczero", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build an atlas and export it as JSON")
    _common(p)
    p.add_argument("--graph", help="TOML graph description ([[vertex]], [[edge]] tables)")

    p = sub.add_parser("verify", help="run the verification suite")
    _common(p)
    p.add_argument("--checks", nargs="+", choices=CHECK_NAMES)
    p.add_argument("--csv-dir", help="directory for CSV series")
    p.add_argument("--timing", action="store_true", help="record wall time in the report")

    p = sub.add_parser("classify", help="classify a point")
    _common(p, True)
    _point_args(p, direction=False)

    p = sub.add_parser("geodesic", help="integrate a geodesic")
    _common(p, True)
    _point_args(p)
    p.add_argument("--steps", type=int, default=11, help="number of output samples")

    p = sub.add_parser("rank", help="estimate the rank of a geodesic")
    _common(p, True)
    _point_args(p)

    p = sub.add_parser("frame-audit", help="adapted-frame identities at the entry's sites")
    _common(p, True)

    p = sub.add_parser("holonomy", help="holonomy of loops and common fixed line")
    _common(p, True)
    p.add_argument("--loops", help="TOML file with [[loop]] tables (default: built-in loops)")

    p = sub.add_parser("zoo", help="list zoo entries")
    p.add_argument("--output")

    p = sub.add_parser("report", help="export a series of a report as CSV")
    p.add_argument("report", help="report JSON file")
    p.add_argument("--series", required=True, help="series name, e.g. f or trS")
    p.add_argument("--output")
    return ap


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "zoo", None):
        known = {e.name for e in zoo_list()}
        for name in args.zoo:
            if name not in known:
                raise ConfigError(f"unknown zoo entry {name!r}", field="--zoo")
        cfg.zoo = list(args.zoo)
    for attr, key in (("seed", "seed"), ("samples", "samples"), ("tol_scale", "tol_scale"),
                      ("horizon", "horizon"), ("jobs", "jobs")):
        val = getattr(args, attr, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "checks", None):
        cfg.checks = list(args.checks)
    if getattr(args, "output", None):
        cfg.output = args.output
    if getattr(args, "csv_dir", None):
        cfg.csv_dir = args.csv_dir
    if getattr(args, "timing", False):
        cfg.timing = True
    if cfg.samples < 1:
        raise ConfigError("--samples must be positive", field="--samples")
    return cfg


def _write(text: str, path: Optional[str]):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    from .report import _jsonable_keep_order
    return json.dumps(_jsonable_keep_order(obj), indent=2) + "\n"


def _atlas(cfg: RunConfig):
    from .report import atlas_for
    return atlas_for(cfg.zoo[0])


def _point(atlas, args):
    cid = args.chart or next(iter(atlas.charts))
    if cid not in atlas.charts:
        raise ConfigError(f"unknown chart {cid!r}; known: {list(atlas.charts)}", field="--chart")
    return atlas.locate(cid, args.point)


def _unit(atlas, p, v):
    return normalize(metric_at(atlas.chart(p[0]), p[1]), np.asarray(v, float))


def parse_graph(text: str, source: str = "<graph>") -> GraphDescription:
    """Graph description from TOML: ``[[vertex]]`` tables with the fields of
    :class:`Vertex`, ``[[edge]]`` tables with ``a = [vertex, boundary]``,
    ``b = [...]`` and ``word``, and an optional top-level ``collar``."""
    try:
        data = tomli.loads(text)
        verts = tuple(Vertex(**v) for v in data.get("vertex", []))
        edges = tuple(Edge(tuple(e["a"]), tuple(e["b"]), e["word"]) for e in data.get("edge", []))
        kw = {"collar": float(data["collar"])} if "collar" in data else {}
        return GraphDescription(verts, edges, **kw)
    except (tomli.TOMLDecodeError, TypeError, KeyError) as exc:
        raise ConfigError(f"{source}: malformed graph description: {exc}", field="graph") from None


def parse_loops(text: str, source: str = "<loops>") -> List[Loop]:
    """Loops from TOML: ``[[loop]]`` tables with ``name`` and a list of
    ``[[loop.leg]]`` tables ``{chart, start, end}``."""
    try:
        data = tomli.loads(text)
        loops = [Loop(lp["name"], tuple(Leg(leg["chart"], tuple(map(float, leg["start"])),
                                            tuple(map(float, leg["end"]))) for leg in lp["leg"]))
                 for lp in data["loop"]]
    except (tomli.TOMLDecodeError, TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"{source}: malformed loop description: {exc}", field="loop") from None
    if not loops:
        raise ConfigError(f"{source}: no loops given", field="loop")
    return loops


def _read(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise ConfigError(f"{what} file {path!r} does not exist", field=what)
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def cmd_build(args) -> int:
    if args.graph:
        atlas = build_graph_manifold(parse_graph(_read(args.graph, "graph"), args.graph),
                                     name=os.path.splitext(os.path.basename(args.graph))[0])
    else:
        cfg = config_from_args(args)
        atlas = _atlas(cfg)
        if atlas.transitions:
            validate_isometries(atlas)
    _write(export_atlas(atlas), args.output)
    return 0


def cmd_verify(args) -> int:
    cfg = config_from_args(args)
    report = run_suite(cfg)
    _write(report.to_json(), cfg.output)
    if cfg.csv_dir:
        os.makedirs(cfg.csv_dir, exist_ok=True)
        for key in sorted(report.series):
            fname = key.replace(":", "_") + ".csv"
            with open(os.path.join(cfg.csv_dir, fname), "w", encoding="utf-8") as fh:
                fh.write(emit_plot_data(report, key))
    for c in report.checks:
        mark = "PASS" if c["pass"] else "FAIL"
        print(f"{mark} {c['entry']:<11} {c['name']:<16} residual={c['max_residual']!s:<24} "
              f"tolerance={c['tolerance']}", file=sys.stderr)
    return 0 if report.passed else 1


def cmd_classify(args) -> int:
    cfg = config_from_args(args)
    atlas = _atlas(cfg)
    p = _point(atlas, args)
    pc = classify_point(atlas.chart(p[0]), p[1], strict=False)
    out = {"chart": p[0], "point": p[1], "class": pc.tag, "sign": pc.sign,
           "direction": pc.direction, "residuals": pc.residuals}
    _write(_dump(out), cfg.output)
    return 0


def cmd_geodesic(args) -> int:
    cfg = config_from_args(args)
    atlas = _atlas(cfg)
    p = _point(atlas, args)
    T = cfg.horizon
    tr = geodesic(atlas, p, _unit(atlas, p, args.direction), T,
                  t_eval=np.linspace(0.0, T, max(args.steps, 2)))
    out = {"t_end": tr.t_end, "truncated": tr.truncated, "speed_drift": tr.speed_drift(),
           "events": tr.events,
           "samples": [{"t": float(t), "chart": c, "x": x, "v": v}
                       for t, c, x, v in zip(tr.t, tr.chart, tr.x, tr.v)]}
    _write(_dump(out), cfg.output)
    return 0


def cmd_rank(args) -> int:
    cfg = config_from_args(args)
    atlas = _atlas(cfg)
    p = _point(atlas, args)
    rw = rank_estimate(atlas, p, _unit(atlas, p, args.direction), T=cfg.horizon)
    out = {"estimated_rank": rw.estimated_rank, "witness": rw.witness,
           "min_singular": rw.min_singular, "singular_values": rw.singular_values,
           "horizon": rw.horizon, "truncated": rw.truncated}
    _write(_dump(out), cfg.output)
    return 0


def cmd_frame_audit(args) -> int:
    cfg = config_from_args(args)
    name = cfg.zoo[0]
    atlas = _atlas(cfg)
    site = sites(name, atlas)
    results = []
    if "f_ode" in site:
        results.append(check_f_ode(atlas, site["f_ode"], cfg.tolerance("f_ode"))[0])
    if "table" in site:
        results.append(check_frame_audit(atlas, site["table"], cfg.tolerance("frame_table")))
    if not results:
        raise ConfigError(f"zoo entry {name!r} has no adapted-frame sites", field="--zoo")
    _write(_dump({"entry": name, "checks": [r.to_dict() for r in results]}), cfg.output)
    return 0 if all(r.passed for r in results) else 1


def cmd_holonomy(args) -> int:
    cfg = config_from_args(args)
    atlas = _atlas(cfg)
    loops = parse_loops(_read(args.loops, "loops"), args.loops) if args.loops \
        else default_loops(atlas)
    res = splitting_detect(atlas, loops, tol_split=cfg.tolerance("split"))
    out = {"entry": cfg.zoo[0],
           "loops": [{"name": lp.name, "holonomy": holonomy(atlas, lp)} for lp in loops],
           "fixed_line": None if res.projector is None else res.best,
           "residual": res.residual, "fixed_dim": res.fixed_dim,
           "loop_residuals": res.loop_residuals}
    _write(_dump(out), cfg.output)
    return 0


def cmd_zoo(args) -> int:
    rows = [{"name": e.name, "description": e.description, "sign": e.sign,
             "expected": e.expected, "incomplete": e.incomplete, "checks": list(e.checks)}
            for e in zoo_list()]
    _write(_dump(rows), args.output)
    return 0


def cmd_report(args) -> int:
    report = json.loads(_read(args.report, "report"))
    _write(emit_plot_data(report, args.series), args.output)
    return 0


COMMANDS = {"build": cmd_build, "verify": cmd_verify, "classify": cmd_classify,
            "geodesic": cmd_geodesic, "rank": cmd_rank, "frame-audit": cmd_frame_audit,
            "holonomy": cmd_holonomy, "zoo": cmd_zoo, "report": cmd_report}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except UnknownSeries as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GeometryError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
