"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py -s`` to see only the summary
lines; they are also printed without ``-s``.
"""
import subprocess
import sys
import time

import numpy as np
import pytest

from cvczero.config import RunConfig
from cvczero.flows import rank_estimate
from cvczero.frames import (adapted_frame, christoffel_table_residual, f_ode_check,
                            flat_sheet_check, rank_line_field)
from cvczero.global_structure import (connecting_geodesic_angle, default_loops,
                                      evolution_residual, line_field_L, splitting_detect)
from cvczero.metric_core import gram_schmidt, metric_at
from cvczero.pointwise import classify_point, flat_plane_kernel
from cvczero.report import _ramp_point, atlas_for, run_samples, run_suite, sample_point, sample_unit

E1, E2, E3 = np.eye(3)


@pytest.fixture
def report_line(capsys):
    def emit(n, ok, text):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {text}")
    return emit


def _metric_angle(g, a, b):
    c = abs(a @ g @ b) / np.sqrt((a @ g @ a) * (b @ g @ b))
    return float(np.arccos(min(c, 1.0)))


def test_criterion_1_oracle_equivalence(report_line):
    t0 = time.perf_counter()
    worst_fd = worst_closed = 0.0
    counts = []
    for name in ("flat3", "round3", "prodS2R", "prodH2R", "twisted"):
        vals = [v for v in run_samples(name, "oracle", 2024, 0, 1000) if v is not None]
        counts.append(len(vals))
        worst_fd = max(worst_fd, max(v[0] for v in vals))
        worst_closed = max(worst_closed, max(v[1] for v in vals))
    dt = time.perf_counter() - t0
    ok = worst_fd < 1e-5 and worst_closed < 1e-9 and dt < 30 and min(counts) == 1000
    report_line(1, ok, f"fd={worst_fd:.2e} closed={worst_closed:.2e} time={dt:.1f}s")
    assert min(counts) == 1000
    assert worst_fd < 1e-5
    assert worst_closed < 1e-9
    assert dt < 30


def test_criterion_2_cvc0_and_sign_scans(report_line):
    worst, worst_sign, round_min = 0.0, 0.0, np.inf
    signs = {"flat3": "Zero", "prodS2R": "NonNeg", "prodH2R": "NonPos", "twisted": "NonPos",
             "s3_graph": "NonNeg", "s2s1_graph": "Pointwise", "r3_blocks": "NonNeg"}
    for name, sign in signs.items():
        vals = run_samples(name, "cvc0-scan", 7, 1, 1000)
        assert all(v is not None for v in vals)
        worst = max(worst, max(v[0] for v in vals))
        eig = run_samples(name, "signedness", 7, 2, 1000)
        lo = min(v[0] for v in eig)
        hi = max(v[1] for v in eig)
        res = {"Zero": max(-lo, hi), "NonNeg": -lo, "NonPos": hi,
               "Pointwise": max(min(-v[0], v[1]) for v in eig)}[sign]
        worst_sign = max(worst_sign, res)
    vals = run_samples("round3", "cvc0-scan", 7, 1, 1000)
    round_min = min(v[0] for v in vals)
    ok = worst < 1e-6 and worst_sign < 1e-6 and round_min >= 1e-6
    report_line(2, ok, f"cvc0 worst={worst:.2e} sign worst={worst_sign:.2e} "
                       f"round3 smallest={round_min:.2e}")
    assert worst < 1e-6
    assert worst_sign < 1e-6
    assert round_min >= 1e-6


def test_criterion_3_rank(report_line):
    vals = run_samples("prodS2R", "rank-scan", 11, 4, 500, horizon=10.0)
    ranks = np.array([v[0] for v in vals if v is not None])
    frac = float(np.mean(ranks >= 2)) if len(ranks) == 500 else 0.0
    r_round = [v[0] for v in run_samples("round3", "rank-scan", 11, 4, 100, horizon=10.0)]
    r_flat = [v[0] for v in run_samples("flat3", "rank-scan", 11, 4, 100, horizon=10.0)]
    # witness against the flat-plane kernel at nonisotropic points
    atlas = atlas_for("prodS2R")
    worst_angle = 0.0
    for i in range(40):
        rng = np.random.default_rng([11, 99, i])
        p = sample_point(atlas, rng)
        v = sample_unit(atlas, p, rng)
        rw = rank_estimate(atlas, p, v, T=10.0)
        ch = atlas.chart(p[0])
        assert classify_point(ch, p[1]).tag == "Nonisotropic"
        ker = flat_plane_kernel(ch, p[1], v)
        assert len(ker) == 1 and rw.witness is not None
        worst_angle = max(worst_angle, _metric_angle(metric_at(ch, p[1]), rw.witness, ker[0]))
    ok = (frac >= 0.99 and all(r == 1 for r in r_round) and all(r == 3 for r in r_flat)
          and worst_angle < 1e-4)
    report_line(3, ok, f"prodS2R rank>=2 fraction={frac:.3f} round3 rank1={np.mean(np.equal(r_round, 1)):.2f} "
                       f"flat3 rank3={np.mean(np.equal(r_flat, 3)):.2f} witness angle={worst_angle:.2e}")
    assert frac >= 0.99
    assert all(r == 1 for r in r_round)
    assert all(r == 3 for r in r_flat)
    assert worst_angle < 1e-4


def test_criterion_4_adapted_frame(report_line):
    ts = np.linspace(0.1, 1.5, 29)
    fr = adapted_frame(atlas_for("flat3"), ("flat3", np.zeros(3)), E1, E2, 1.5, t_eval=ts)
    err_flat = float(np.max(np.abs(fr.f - ts)))
    err_flat = max(err_flat, f_ode_check(fr)["J2"])
    fr = adapted_frame(atlas_for("round3"), ("round3:N", np.zeros(3)), 0.5 * E1, 0.5 * E2, 1.5,
                       t_eval=ts, require_flat=False)
    err_round = max(float(np.max(np.abs(fr.f - np.sin(ts)))), f_ode_check(fr)["J2"])
    H = atlas_for("prodH2R")
    ct_h = christoffel_table_residual(H, ("prodH2R", np.zeros(3)), [0.6, 0.0, 0.8],
                                      rank_line_field(E3), 0.7)
    S = atlas_for("s3_graph")
    base, xi = _ramp_point(S)
    ct_s = christoffel_table_residual(S, base, [0.3, 0.02, 0.5], rank_line_field(xi), 0.08)
    table = max(ct_h.worst, ct_s.worst)
    a1 = max(abs(ct_h.a1), abs(ct_s.a1))
    ok = err_flat < 1e-7 and err_round < 1e-7 and table < 1e-4 and a1 < 1e-4
    report_line(4, ok, f"f=t err={err_flat:.2e} f=sin err={err_round:.2e} "
                       f"table prodH2R={ct_h.worst:.2e} S3={ct_s.worst:.2e} a1={a1:.2e}")
    assert err_flat < 1e-7
    assert err_round < 1e-7
    assert table < 1e-4
    assert a1 < 1e-4


def test_criterion_5_flat_sheets(report_line):
    rep_s = flat_sheet_check(atlas_for("prodS2R"), ("prodS2R:N", np.array([0.3, 0.2, 0.0])),
                             E1, radius=0.8)
    rep_t = flat_sheet_check(atlas_for("twisted"), ("twisted", np.array([1.0, 0.0, 0.0])), E2)
    ok = rep_s.worst < 1e-5 and rep_t.worst < 1e-5
    report_line(5, ok, f"prodS2R={rep_s.worst:.2e} twisted={rep_t.worst:.2e}")
    assert rep_s.worst < 1e-5
    assert rep_t.worst < 1e-5


def test_criterion_6_evolution(report_line):
    tw = atlas_for("twisted")
    lf = line_field_L(tw)
    ev = evolution_residual(tw, lf, ("twisted", np.array([1.0, 0.0, 0.0])), 3.0)
    w = 1.0 + ev.s
    closed = float(np.max(np.abs(ev.tr + 1.0 / w)))
    ok = ev.worst < 1e-5 and closed < 1e-5
    report_line(6, ok, f"evolution residual={ev.worst:.2e} trS vs -1/w={closed:.2e} "
                       f"on w in [{w[0]:g}, {w[-1]:g}]")
    assert ev.worst < 1e-5
    assert closed < 1e-5


def test_criterion_7_splitting_on_products(report_line):
    worst_res = worst_ang = 0.0
    for name in ("prodS2R", "prodH2R"):
        a = atlas_for(name)
        loops = default_loops(a)
        res = splitting_detect(a, loops)
        assert res.projector is not None
        cid, x = loops[0].base
        g = metric_at(a.chart(cid), x)
        F = gram_schmidt(g)
        factor = np.linalg.solve(F, np.asarray(a.meta["factor_line"][cid], float))
        factor /= np.linalg.norm(factor)
        ang = float(np.arccos(min(1.0, abs(factor @ res.best) / np.linalg.norm(res.best))))
        worst_res, worst_ang = max(worst_res, res.residual), max(worst_ang, ang)
    ok = worst_res < 1e-6 and worst_ang < 1e-4
    report_line(7, ok, f"residual={worst_res:.2e} angle to factor={worst_ang:.2e}")
    assert worst_res < 1e-6
    assert worst_ang < 1e-4


def test_criterion_8_glued_examples(report_line):
    t0 = time.perf_counter()
    cfg = RunConfig(zoo=["s3_graph", "r3_blocks"], seed=7)
    rep = run_suite(cfg, jobs=1)
    dt_suite = time.perf_counter() - t0
    by = {(c["entry"], c["name"]): c for c in rep.checks}
    scans = all(by[(n, k)]["pass"] for n in ("s3_graph", "r3_blocks")
                for k in ("cvc0-scan", "signedness"))
    xp = max(float(by[(n, "xp-parallel")]["max_residual"]) for n in ("s3_graph", "r3_blocks"))
    angles, bests, nones = [], [], []
    for n in ("s3_graph", "r3_blocks"):
        a = atlas_for(n)
        angles.append(connecting_geodesic_angle(a)[0])
        res = splitting_detect(a, default_loops(a))
        nones.append(res.projector is None)
        bests.append(res.residual)
    ok = (scans and xp < 1e-4 and min(angles) > 0.5 and all(nones) and min(bests) > 0.1
          and dt_suite < 300)
    report_line(8, ok, f"scans={'ok' if scans else 'bad'} xp={xp:.2e} "
                       f"angles={[round(x, 6) for x in angles]} split=none:{all(nones)} "
                       f"best={min(bests):.3f} suite time={dt_suite:.1f}s")
    assert scans
    assert xp < 1e-4
    assert min(angles) > 0.5
    assert all(nones) and min(bests) > 0.1
    assert dt_suite < 300


def test_criterion_9_determinism(report_line, tmp_path):
    outs = []
    for i, jobs in enumerate(("1", "1", "2")):
        path = tmp_path / f"r{i}.json"
        cmd = [sys.executable, "-m", "cvczero", "verify", "--zoo", "prodS2R", "--zoo", "twisted",
               "--seed", "7", "--samples", "30", "--jobs", jobs, "--output", str(path)]
        subprocess.run(cmd, check=True, capture_output=True)
        outs.append(path.read_bytes())
    ok = outs[0] == outs[1] == outs[2]
    report_line(9, ok, f"{len(outs)} runs, {len(outs[0])} bytes, identical={ok}")
    assert ok
