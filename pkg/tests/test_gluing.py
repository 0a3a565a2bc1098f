import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from cvczero.errors import DanglingBoundary, GluingNotIsometric, InfeasibleRamp
from cvczero.gluing import (ConeProfile, Edge, GraphDescription, Vertex, build_disk_profile,
                            build_graph_manifold, export_atlas, r3_blocks, s2s1_graph, s3_graph,
                            smoothstep, smoothstep_d, smoothstep_integral, transition_consistency,
                            validate_isometries)
from cvczero.metric_core import curvature_operator_at


def test_smoothstep_endpoints_and_derivatives():
    assert smoothstep(0.0) == 0.0 and smoothstep(1.0) == 1.0
    assert smoothstep_d(0.0) == 0.0 and smoothstep_d(1.0) == 0.0
    u = np.linspace(0.0, 1.0, 11)
    h = 1e-6
    fd = (smoothstep(np.clip(u + h, 0, 1)) - smoothstep(np.clip(u - h, 0, 1))) / (
        np.clip(u + h, 0, 1) - np.clip(u - h, 0, 1))
    np.testing.assert_allclose(fd, smoothstep_d(u), atol=1e-6)
    val, _ = quad(smoothstep, 0.0, 0.6)
    assert smoothstep_integral(0.6) == pytest.approx(val, abs=1e-14)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.7, 1.8))
def test_disk_profile_reaches_target_circumference(c):
    prof = build_disk_profile(0.1, 0.3, c)
    integral, _ = quad(prof.dphi, 0.0, prof.r1, points=[prof.r0], epsabs=1e-13, limit=200)
    assert integral == pytest.approx(c / (2 * np.pi), abs=1e-10)
    assert prof.phi(0.5) == pytest.approx(c / (2 * np.pi), abs=1e-15)
    rs = np.linspace(0.0, 0.3, 31)
    assert all(prof.ddphi(r) <= 1e-12 for r in rs)          # concave: curvature >= 0
    assert all(prof.sec(r) >= -1e-12 for r in rs[1:])


def test_infeasible_ramp_reports_interval():
    with pytest.raises(InfeasibleRamp) as err:
        build_disk_profile(0.1, 0.3, 5.0)
    lo, hi = err.value.feasible
    assert lo == pytest.approx(2 * np.pi * 0.1) and hi == pytest.approx(2 * np.pi * 0.3)


def test_cone_profile_has_half_slope_beyond_ramp():
    prof = ConeProfile(0.1, 0.5)
    assert prof.dphi(0.05) == 1.0
    assert prof.dphi(0.8) == pytest.approx(0.5)
    assert prof.phi(0.8) == pytest.approx(0.4 + prof.c0, abs=1e-12)


def test_dangling_boundary_rejected():
    desc = GraphDescription((Vertex("disk"), Vertex("disk")), ())
    with pytest.raises(DanglingBoundary):
        build_graph_manifold(desc)
    desc = GraphDescription((Vertex("disk"),), (Edge((0, 0), (0, 1), "B"),))
    with pytest.raises(DanglingBoundary):
        build_graph_manifold(desc)


def test_mismatched_circles_are_not_isometric():
    desc = GraphDescription((Vertex("disk", circumference=1.0), Vertex("disk", circumference=1.2)),
                            (Edge((0, 0), (1, 0), "A"),))
    with pytest.raises(GluingNotIsometric):
        build_graph_manifold(desc)


@pytest.mark.parametrize("factory", [s3_graph, s2s1_graph, r3_blocks])
def test_gluings_are_isometries(factory):
    atlas = factory()
    rep = transition_consistency(atlas, n_samples=8, seed=1)
    assert rep.n_samples > 0
    assert rep.round_trip < 1e-12
    assert rep.isometry < 1e-12
    assert rep.jacobian < 1e-8
    assert rep.handoff < 1e-8
    validate_isometries(atlas)


def test_disk_curvature_matches_profile():
    atlas = s3_graph()
    info = atlas.meta["vertex_info"][0]
    prof = info["profile"]
    r = prof.radius_for_slope(0.5)
    cd = curvature_operator_at(atlas.chart(info["main"]), np.array([r, 0.3, 0.1]), numeric=True)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(cd.operator)), [0, 0, prof.sec(r)],
                               atol=1e-6)


def test_export_is_deterministic_json():
    a, b = export_atlas(s3_graph()), export_atlas(s3_graph())
    assert a == b
    d = json.loads(a)
    assert d["schema"] == "cvczero-atlas/1"
    assert {c["id"] for c in d["charts"]} >= {"v0:polar", "v1:polar"}
