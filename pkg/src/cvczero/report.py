"""Verification suite, report assembly and plot-data export.

Every check produces one record ``{name, anchor, n_samples, max_residual,
tolerance, pass, excluded_count}`` with ``pass`` equivalent to
``max_residual < tolerance``.  Checks whose natural statement is a lower
bound (a quantity must stay *above* a threshold) report reciprocals, so the
same rule applies.  Randomised checks draw sample ``i`` from the generator
``default_rng([seed, index-of-check, i])``; work is split by sample index so
the report does not depend on the number of worker processes.
"""
from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .config import CHECK_NAMES, RunConfig
from .errors import (AmbiguousSpectrum, GeometryError, LeftAtlas, MixedRegion, OutOfDomain,
                     StepUnderflow, UnknownSeries)
from .flows import rank_estimate
from .frames import (adapted_frame, christoffel_table_residual, f_ode_check, flat_sheet_check,
                     rank_line_field)
from .global_structure import (connecting_geodesic_angle, default_loops, evolution_residual,
                               line_field_L, line_geodesic_residual,
                               splitting_detect, xp_parallel_check)
from .gluing import transition_consistency
from .metric_core import curvature_operator_at, gram_schmidt, metric_at
from .pointwise import (ISOTROPIC, NONISOTROPIC, classify_curvature, cvc0_sample)
from .zoo import get

REPORT_SCHEMA = "cvczero-report/1"

ANCHORS = {
    "oracle-fd": "numeric-curvature-matches-closed-form",
    "oracle-closed": "numeric-curvature-matches-closed-form",
    "cvc0-scan": "every-direction-lies-in-a-flat-plane",
    "signedness": "pointwise-signed-sectional-curvature",
    "classify": "isotropic-or-nonisotropic-classification",
    "rank-scan": "geodesic-rank-from-parallel-jacobi-fields",
    "f-ode": "jacobi-fields-t-E1-and-f-E2",
    "frame-audit": "adapted-frame-connection-table",
    "flats": "exponential-image-of-planes-through-the-line-is-flat",
    "line-field": "line-field-integral-curves-are-geodesics",
    "evolution": "shape-operator-trace-evolution",
    "xp-parallel": "transported-line-field-is-parallel",
    "holonomy": "common-fixed-line-of-holonomy",
    "transitions": "gluing-maps-are-isometries",
    "connecting-angle": "transported-lines-of-adjacent-pieces-disagree",
}


@dataclass
class CheckResult:
    name: str
    anchor: str
    n_samples: int
    max_residual: float
    tolerance: float
    excluded_count: int = 0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_residual < self.tolerance)

    def to_dict(self) -> dict:
        return {"name": self.name, "anchor": self.anchor, "n_samples": int(self.n_samples),
                "max_residual": _num(self.max_residual), "tolerance": _num(self.tolerance),
                "pass": self.passed, "excluded_count": int(self.excluded_count),
                "details": _jsonable(self.details)}


def _num(x):
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def _inverted(value: float) -> float:
    return float("inf") if value <= 0 else 1.0 / value


# ---------------------------------------------------------------------------
# sampling


_ATLAS_CACHE: Dict[str, object] = {}


def atlas_for(name: str):
    if name not in _ATLAS_CACHE:
        _ATLAS_CACHE[name] = get(name).build()
    return _ATLAS_CACHE[name]


def sample_point(atlas, rng, margin_factor: float = 0.01):
    """Uniform point of a randomly chosen chart sample box, rejecting points
    too close to the chart boundary for finite differences."""
    charts = [c for c in atlas.charts.values() if c.sample_lo is not None]
    for _ in range(1000):
        c = charts[int(rng.integers(len(charts)))]
        x = c.wrap(rng.uniform(c.sample_lo, c.sample_hi))
        if c.contains(x, margin_factor * c.length_scale):
            return c.id, x
    raise OutOfDomain(f"could not sample a point of atlas {atlas.name!r}")


def sample_unit(atlas, point, rng):
    cid, x = point
    g = metric_at(atlas.chart(cid), x)
    u = rng.normal(size=3)
    return gram_schmidt(g) @ (u / np.linalg.norm(u))


def _curvature(atlas, point, mode):
    ch = atlas.chart(point[0])
    if mode == "oracle":
        return curvature_operator_at(ch, point[1])
    return curvature_operator_at(ch, point[1], numeric=True, closed_christoffel=True)


def sample_task(args):
    """Evaluate one randomised sample.  Returns a tuple of floats or None
    when the sample is excluded (left the atlas, ambiguous spectrum)."""
    name, check, seed, check_index, i, mode, horizon = args
    atlas = atlas_for(name)
    rng = np.random.default_rng([seed, check_index, i])
    try:
        p = sample_point(atlas, rng)
        if check == "oracle":
            ch = atlas.chart(p[0])
            ref = ch.curvature_oracle(p[1])
            den = max(float(np.linalg.norm(ref)), 1.0)
            fd = curvature_operator_at(ch, p[1], numeric=True, closed_christoffel=False)
            cl = curvature_operator_at(ch, p[1], numeric=True, closed_christoffel=True)
            return (float(np.linalg.norm(fd.operator - ref)) / den,
                    float(np.linalg.norm(cl.operator - ref)) / den)
        cd = _curvature(atlas, p, mode)
        if check == "cvc0-scan":
            vf = rng.normal(size=3)
            jac, second = cvc0_sample(cd, vf)
            return (max(jac, second),)
        if check == "signedness":
            lam = np.linalg.eigvalsh(cd.operator) / cd.scale
            return (float(lam.min()), float(lam.max()))
        if check == "classify":
            pc = classify_curvature(cd)
            return (1.0 if pc.tag in (ISOTROPIC, NONISOTROPIC) else 0.0,)
        if check == "rank-scan":
            v = sample_unit(atlas, p, rng)
            rw = rank_estimate(atlas, p, v, T=horizon)
            return (float(rw.estimated_rank), float(rw.min_singular))
        if check == "line-field":
            # rejection sampling: the line field only exists at nonisotropic points
            for _ in range(200):
                if classify_curvature(cd, strict=False).tag == NONISOTROPIC:
                    lf = line_field_L(atlas)
                    return (line_geodesic_residual(lf, p, T=0.3, n_samples=4),)
                p = sample_point(atlas, rng)
                cd = _curvature(atlas, p, mode)
            return None
    except (AmbiguousSpectrum, LeftAtlas, OutOfDomain, StepUnderflow, MixedRegion):
        return None
    raise ValueError(f"unknown sampled check {check!r}")


def run_samples(name, check, seed, check_index, n, mode="numeric", horizon=10.0, jobs=1):
    tasks = [(name, check, seed, check_index, i, mode, horizon) for i in range(n)]
    if jobs <= 1 or n < 2 * jobs:
        return [sample_task(t) for t in tasks]
    chunk = max(1, n // (4 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(sample_task, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# site-based checks


def _ramp_point(atlas):
    """Nonisotropic base point used by the glued atlases."""
    if "graph" in atlas.meta:
        info = atlas.meta["vertex_info"][0]
        rq = info["profile"].radius_for_slope(0.75)
        return (info["main"], np.array([rq, 0.1, 0.2])), np.array([0.0, 0.0, 1.0])
    b1 = atlas.meta["blocks"][0]
    rq = b1["profile"].radius_for_slope(0.75)
    return (b1["polar"], np.array([rq, np.pi, 0.0])), np.array([0.0, 0.0, 1.0])


def sites(name: str, atlas) -> dict:
    """Base points, directions and horizons for the site-based checks."""
    e3 = np.array([0.0, 0.0, 1.0])
    if name == "flat3":
        p = ("flat3", np.zeros(3))
        return {"f_ode": (p, [1, 0, 0], [0, 1, 0], "t", True),
                "table": [(p, e3, [0.6, 0.0, 0.8], 0.7)]}
    if name == "round3":
        p = ("round3:N", np.zeros(3))
        return {"f_ode": (p, [0.5, 0, 0], [0, 0.5, 0], "sin", False)}
    if name == "prodS2R":
        p = ("prodS2R:N", np.array([0.3, 0.2, 0.0]))
        g = metric_at(atlas.chart(p[0]), p[1])
        s = 1.0 / np.sqrt(g[0, 0])
        return {"f_ode": (p, [s, 0, 0], e3, "sin", True),
                "table": [(p, e3, [0.6, 0.3, 0.5], 0.6)],
                "flats": (p, [1.0, 0.0, 0.0], 0.8), "xp": (p, 1.0)}
    if name == "prodH2R":
        p = ("prodH2R", np.zeros(3))
        return {"f_ode": (p, [1, 0, 0], e3, "sinh", True),
                "table": [(p, e3, [0.6, 0.0, 0.8], 0.7), (p, e3, [0.2, 0.7, 0.4], 0.5)],
                "flats": (p, [1.0, 0.0, 0.0], 0.8), "xp": (p, 1.0)}
    if name == "twisted":
        p = ("twisted", np.array([1.0, 0.0, 0.0]))
        return {"flats": (p, [0.0, 1.0, 0.0], 0.5), "evolution": (p, 3.0)}
    base, xi = _ramp_point(atlas)
    g = metric_at(atlas.chart(base[0]), base[1])
    radial = np.array([1.0, 0.0, 0.0]) / np.sqrt(g[0, 0])
    out = {"table": [(base, xi, [0.3, 0.02, 0.5], 0.08)], "xp": (base, 0.35)}
    if name == "r3_blocks":
        out = {"table": [(base, xi, [0.3, 0.5, 0.5], 0.05)], "xp": (base, 1.2)}
    out["rank_site"] = (base, radial)
    if name == "s3_graph":
        start = ("v0:polar", np.array([0.32, 0.1, 0.2]))
        out["f_ode"] = (start, [1, 0, 0], e3, "t", True)
    return out


_EXACT = {"t": lambda t: t, "sin": np.sin, "sinh": np.sinh}


def check_f_ode(atlas, site, tol_f):
    p, v, w, exact, flat = site
    g = metric_at(atlas.chart(p[0]), p[1])
    v = np.asarray(v, float) / np.sqrt(np.asarray(v, float) @ g @ np.asarray(v, float))
    w = np.asarray(w, float) / np.sqrt(np.asarray(w, float) @ g @ np.asarray(w, float))
    ts = np.linspace(0.1, 1.5, 15) if exact != "t" or atlas.name == "flat3" \
        else np.linspace(0.01, 0.2, 20)
    fr = adapted_frame(atlas, p, v, w, float(ts[-1]), t_eval=ts, require_flat=flat)
    dev = f_ode_check(fr)
    f_err = float(np.max(np.abs(fr.f - _EXACT[exact](fr.t))))
    worst = max(f_err, dev["J2"], dev["J1"] if flat else 0.0)
    series = {"columns": ["t", "f", "f_exact"],
              "rows": [[float(t), float(f), float(_EXACT[exact](t))] for t, f in zip(fr.t, fr.f)]}
    return CheckResult("f-ode", ANCHORS["f-ode"], len(ts), worst, tol_f,
                       details={"f_error": f_err, "J2": dev["J2"], "J1": dev["J1"],
                                "exact": exact}), series


def check_frame_audit(atlas, table_sites, tol_table):
    worst, rows = 0.0, []
    entries = {}
    for p, xi, v, t0 in table_sites:
        ct = christoffel_table_residual(atlas, p, v, rank_line_field(xi), t0)
        worst = max(worst, ct.worst, abs(ct.a1))
        for k, val in ct.entries.items():
            entries[k] = max(entries.get(k, 0.0), val)
        rows.append({"t": ct.t, "a1": ct.a1, "a2": ct.a2, "f": ct.f})
    entries["a1"] = max(abs(r["a1"]) for r in rows)
    return CheckResult("frame-audit", ANCHORS["frame-audit"], len(table_sites), worst, tol_table,
                       details={"entries": entries, "sites": rows})


def check_flats(atlas, site, tol_flat):
    p, v, radius = site
    rep = flat_sheet_check(atlas, p, v, radius=radius)
    return CheckResult("flats", ANCHORS["flats"], rep.n_samples, rep.worst, tol_flat,
                       details={"normal": rep.normal, "closure": rep.closure,
                                "foliation": rep.foliation})


def check_evolution(atlas, site, tol_evo):
    p, T = site
    lf = line_field_L(atlas)
    ev = evolution_residual(atlas, lf, p, T)
    series = {"columns": ["s", "trS", "detS", "dtrS", "residual"],
              "rows": [[float(a), float(b), float(c), float(d), float(e)]
                       for a, b, c, d, e in zip(ev.s, ev.tr, ev.det, ev.dtr, ev.residual)]}
    return CheckResult("evolution", ANCHORS["evolution"], len(ev.s), ev.worst, tol_evo), series


def check_xp(atlas, site, tol_xp, seed):
    p, T = site
    rep = xp_parallel_check(atlas, p, T, n_arcs=8, seed=seed)
    return CheckResult("xp-parallel", ANCHORS["xp-parallel"], rep.n_arcs - rep.excluded,
                       rep.residual, tol_xp, rep.excluded,
                       details={"max_angle_to_L": rep.max_angle_to_L,
                                "compared_to_L": rep.n_compared_to_L, "horizon": T})


def check_holonomy(atlas, expect_line, cfg):
    res = splitting_detect(atlas, default_loops(atlas), tol_split=cfg.tolerance("split"))
    det = {"fixed_dim": res.fixed_dim, "best_residual": res.residual,
           "loop_residuals": res.loop_residuals,
           "fixed_line": None if res.projector is None else res.best.tolist()}
    n = len(res.holonomies)
    if expect_line:
        return CheckResult("holonomy", ANCHORS["holonomy"], n, res.residual,
                           cfg.tolerance("split"), details=det), res
    return CheckResult("holonomy", ANCHORS["holonomy"], n, _inverted(res.residual),
                       1.0 / cfg.tolerance("no_split"), details=det), res


def check_transitions(atlas, cfg, seed):
    rep = transition_consistency(atlas, n_samples=10, seed=seed)
    worst = max(rep.round_trip, rep.isometry)
    return CheckResult("transitions", ANCHORS["transitions"], rep.n_samples, worst,
                       cfg.tolerance("transitions"),
                       details={"round_trip": rep.round_trip, "isometry": rep.isometry,
                                "jacobian": rep.jacobian, "handoff": rep.handoff})


def check_connecting_angle(atlas, cfg):
    ang, tr = connecting_geodesic_angle(atlas)
    return CheckResult("connecting-angle", ANCHORS["connecting-angle"], 1, _inverted(ang),
                       1.0 / cfg.tolerance("connecting_angle"),
                       details={"angle": ang, "length": tr.t_end,
                                "crossings": sum(e["kind"] == "gluing" for e in tr.events)})


# ---------------------------------------------------------------------------
# suite


@dataclass
class VerificationReport:
    tool_version: str
    config_hash: str
    seed: int
    entries: List[dict]
    series: Dict[str, dict]
    wall_time: Optional[float] = None

    @property
    def checks(self) -> List[dict]:
        return [dict(c, entry=e["name"]) for e in self.entries for c in e["checks"]]

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_json(self) -> str:
        d = {"schema": REPORT_SCHEMA, "tool_version": self.tool_version,
             "config_hash": self.config_hash, "seed": int(self.seed),
             "entries": self.entries, "series": self.series,
             "all_pass": self.passed, "wall_time": self.wall_time}
        return json.dumps(_jsonable_keep_order(d), indent=2) + "\n"


def _jsonable_keep_order(d):
    if isinstance(d, dict):
        return {k: _jsonable_keep_order(v) for k, v in d.items()}
    if isinstance(d, list):
        return [_jsonable_keep_order(v) for v in d]
    return _jsonable(d)


def _entry_checks(cfg: RunConfig, entry) -> List[str]:
    wanted = cfg.checks if cfg.checks is not None else list(CHECK_NAMES)
    own = set(entry.checks) | {"oracle"}
    return [c for c in CHECK_NAMES if c in wanted and c in own]


def run_entry(cfg: RunConfig, name: str, jobs: int = 1):
    entry = get(name)
    atlas = atlas_for(name)
    exp = entry.expected
    site = sites(name, atlas)
    checks: List[CheckResult] = []
    series = {}
    observed = {}
    n = cfg.samples
    for check in _entry_checks(cfg, entry):
        ci = CHECK_NAMES.index(check)
        if check == "oracle":
            vals = run_samples(name, "oracle", cfg.seed, ci, n, jobs=jobs)
            ok = [v for v in vals if v is not None]
            ex = len(vals) - len(ok)
            checks.append(CheckResult("oracle-fd", ANCHORS["oracle-fd"], len(ok),
                                      max(v[0] for v in ok), cfg.tolerance("oracle_fd"), ex))
            checks.append(CheckResult("oracle-closed", ANCHORS["oracle-closed"], len(ok),
                                      max(v[1] for v in ok), cfg.tolerance("oracle_closed"), ex))
            continue
        if check in ("cvc0-scan", "signedness", "classify", "rank-scan", "line-field"):
            count = cfg.rank_samples if check in ("rank-scan",) else n
            if check == "line-field":
                count = max(4, n // 10)
            vals = run_samples(name, check, cfg.seed, ci, count, cfg.curvature,
                               cfg.horizon, jobs)
            ok = [v for v in vals if v is not None]
            ex = len(vals) - len(ok)
            if check == "cvc0-scan":
                worst = max(v[0] for v in ok)
                best = min(v[0] for v in ok)
                observed["cvc0"] = worst < cfg.tolerance("cvc0")
                if exp["cvc0"]:
                    res, tl = worst, cfg.tolerance("cvc0")
                else:
                    res, tl = _inverted(best), 1.0 / cfg.tolerance("cvc0")
                checks.append(CheckResult(check, ANCHORS[check], len(ok), res, tl, ex,
                                          details={"largest": worst, "smallest": best}))
            elif check == "signedness":
                lo = min(v[0] for v in ok)
                hi = max(v[1] for v in ok)
                sign = entry.sign
                if sign == "NonNeg":
                    res = max(0.0, -lo)
                elif sign == "NonPos":
                    res = max(0.0, hi)
                elif sign == "Zero":
                    res = max(abs(lo), abs(hi))
                else:
                    res = max(min(max(0.0, -v[0]), max(0.0, v[1])) for v in ok)
                checks.append(CheckResult(check, ANCHORS[check], len(ok), res,
                                          cfg.tolerance("sign"), ex,
                                          details={"expected": sign, "min_eig": lo,
                                                   "max_eig": hi}))
            elif check == "classify":
                good = sum(v[0] for v in ok)
                frac = good / len(ok)
                mismatch = (1.0 - frac) if exp["cvc0"] else frac
                checks.append(CheckResult(check, ANCHORS[check], len(ok), mismatch,
                                          cfg.tolerance("classify"), ex,
                                          details={"cvc0_fraction": frac}))
            elif check == "rank-scan":
                ranks = [v[0] for v in ok]
                if "rank_site" in site:
                    sp, sv = site["rank_site"]
                    try:
                        ranks.append(float(rank_estimate(atlas, sp, sv, T=cfg.horizon)
                                           .estimated_rank))
                    except GeometryError:
                        ex += 1
                frac_hi = float(np.mean([r >= 2 for r in ranks])) if ranks else 0.0
                observed["higher_rank"] = bool(frac_hi == 1.0)
                hist = {str(k): int(sum(r == k for r in ranks)) for k in (1, 2, 3)}
                if exp["higher_rank"] is None:
                    continue
                if exp["higher_rank"]:
                    res, tl = 1.0 - frac_hi, cfg.tolerance("rank_fraction")
                else:
                    res, tl = frac_hi, 1.0
                checks.append(CheckResult(check, ANCHORS[check], len(ranks), res, tl, ex,
                                          details={"rank_histogram": hist,
                                                   "horizon": cfg.horizon}))
            else:
                res = max(v[0] for v in ok) if ok else float("inf")
                checks.append(CheckResult(check, ANCHORS[check], len(ok), res,
                                          cfg.tolerance("line_field"), ex))
            continue
        try:
            if check == "f-ode" and "f_ode" in site:
                c, s = check_f_ode(atlas, site["f_ode"], cfg.tolerance("f_ode"))
                checks.append(c)
                series["f"] = s
            elif check == "frame-audit" and "table" in site:
                checks.append(check_frame_audit(atlas, site["table"], cfg.tolerance("frame_table")))
            elif check == "flats" and "flats" in site:
                checks.append(check_flats(atlas, site["flats"], cfg.tolerance("flats")))
            elif check == "evolution" and "evolution" in site:
                c, s = check_evolution(atlas, site["evolution"], cfg.tolerance("evolution"))
                checks.append(c)
                series["trS"] = s
            elif check == "xp-parallel" and "xp" in site:
                checks.append(check_xp(atlas, site["xp"], cfg.tolerance("xp_parallel"), cfg.seed))
            elif check == "holonomy":
                c, res = check_holonomy(atlas, bool(exp["has_parallel_line"]), cfg)
                observed["has_parallel_line"] = res.projector is not None
                checks.append(c)
            elif check == "transitions":
                checks.append(check_transitions(atlas, cfg, cfg.seed))
            elif check == "connecting-angle":
                checks.append(check_connecting_angle(atlas, cfg))
        except GeometryError as exc:
            checks.append(CheckResult(check, ANCHORS[check], 0, float("inf"), 1.0, 1,
                                      details={"error": f"{type(exc).__name__}: {exc}"}))
    return {"name": name, "expected": exp, "sign": entry.sign,
            "incomplete": entry.incomplete, "observed": observed,
            "checks": [c.to_dict() for c in checks]}, series


def run_suite(cfg: RunConfig, jobs: Optional[int] = None) -> VerificationReport:
    """Run every configured check on every configured zoo entry."""
    t0 = time.perf_counter()
    jobs = cfg.jobs if jobs is None else jobs
    jobs = jobs if jobs and jobs > 0 else (os.cpu_count() or 1)
    entries, series = [], {}
    for name in cfg.zoo:
        e, s = run_entry(cfg, name, jobs)
        entries.append(e)
        for k, v in s.items():
            series[f"{name}:{k}"] = v
    wall = time.perf_counter() - t0 if cfg.timing else None
    return VerificationReport(__version__, cfg.digest(), cfg.seed, entries, series, wall)


def emit_plot_data(report, which: str) -> str:
    """CSV text of the named series (``entry:series`` or a unique series
    suffix such as ``f`` or ``trS``), header row first, full precision."""
    series = report.series if isinstance(report, VerificationReport) else report.get("series", {})
    if not which:
        raise UnknownSeries("empty series selection")
    key = which if which in series else None
    if key is None:
        matches = [k for k in series if k.split(":", 1)[-1] == which]
        if len(matches) != 1:
            raise UnknownSeries(f"unknown or ambiguous series {which!r}; available: {sorted(series)}")
        key = matches[0]
    s = series[key]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(s["columns"])
    for row in s["rows"]:
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()
