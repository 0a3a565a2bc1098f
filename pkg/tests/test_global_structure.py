import numpy as np
import pytest

from cvczero.errors import MixedRegion
from cvczero.flows import geodesic
from cvczero.global_structure import (Leg, Loop, connecting_geodesic_angle, default_loops,
                                      evolution_residual, holonomy, kernel_direction,
                                      line_field_L, line_geodesic_residual, parallel_residual,
                                      shape_operator, splitting_detect, totally_geodesic_residual,
                                      xp_parallel_check)
from cvczero.gluing import r3_blocks, s3_graph
from cvczero.pointwise import line_angle
from cvczero.zoo import flat_torus, prodH2R, prodS2R, round3, twisted

E3 = np.array([0.0, 0.0, 1.0])


@pytest.fixture(scope="module")
def tw():
    return twisted()


def test_kernel_direction_rejects_isotropic_points():
    fn = kernel_direction(round3())
    with pytest.raises(MixedRegion):
        fn("round3:N", np.zeros(3))


@pytest.mark.parametrize("w", [1.0, 2.0, 0.5])
def test_twisted_shape_operator_trace(tw, w):
    lf = line_field_L(tw)
    sh = shape_operator(tw, lf, ("twisted", np.array([w, 0.0, 0.0])),
                        ref=np.array([1.0, 0.0, 0.0]))
    assert sh.tr == pytest.approx(-1.0 / w, abs=1e-8)
    assert sh.det == pytest.approx(0.0, abs=1e-8)


def test_twisted_line_field_is_geodesic(tw):
    lf = line_field_L(tw)
    assert line_geodesic_residual(lf, ("twisted", np.array([1.0, 0.2, 0.1])), T=0.5) < 1e-8


def test_twisted_evolution_equation(tw):
    lf = line_field_L(tw)
    ev = evolution_residual(tw, lf, ("twisted", np.array([1.0, 0.0, 0.0])), 3.0)
    assert ev.worst < 1e-5
    np.testing.assert_allclose(ev.tr, -1.0 / (1.0 + ev.s), atol=1e-8)


def test_twisted_line_field_is_not_parallel(tw):
    lf = line_field_L(tw)
    p = ("twisted", np.array([1.0, 0.0, 0.0]))
    along_y = geodesic(tw, p, np.array([0.0, 0.0, 1.0]), 1.0)
    along_line = geodesic(tw, p, np.array([1.0, 0.0, 0.0]), 1.0)
    assert parallel_residual(lf, [along_y]) > 0.5
    assert parallel_residual(lf, [along_line]) < 1e-8


def test_orthogonal_distribution_not_totally_geodesic_on_twisted(tw):
    lf = line_field_L(tw)
    r = totally_geodesic_residual(tw, lf, [("twisted", np.array([1.0, 0.0, 0.0]))])
    assert r > 0.5


def test_orthogonal_distribution_totally_geodesic_on_product():
    a = prodH2R()
    lf = line_field_L(a)
    assert totally_geodesic_residual(a, lf, [("prodH2R", np.array([0.1, 0.2, 0.0]))]) < 1e-8


def test_holonomy_is_orthogonal_and_trivial_on_torus():
    a = flat_torus()
    for lp in default_loops(a):
        H = holonomy(a, lp)
        np.testing.assert_allclose(H, np.eye(3), atol=1e-10)


def test_holonomy_of_sphere_rectangle_rotates_about_factor():
    a = prodS2R()
    lp = Loop("square", (Leg("prodS2R:N", (0.0, 0.0, 0.0), (0.5, 0.0, 0.0)),
                         Leg("prodS2R:N", (0.5, 0.0, 0.0), (0.5, 0.5, 0.0)),
                         Leg("prodS2R:N", (0.5, 0.5, 0.0), (0.0, 0.5, 0.0)),
                         Leg("prodS2R:N", (0.0, 0.5, 0.0), (0.0, 0.0, 0.0))))
    H = holonomy(a, lp)
    np.testing.assert_allclose(H.T @ H, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(H @ E3, E3, atol=1e-9)
    assert np.linalg.norm(H - np.eye(3)) > 1e-2


@pytest.mark.parametrize("factory", [prodS2R, prodH2R])
def test_splitting_found_on_products(factory):
    a = factory()
    res = splitting_detect(a, default_loops(a))
    assert res.projector is not None
    assert res.residual < 1e-6
    assert line_angle(res.projector, np.outer(E3, E3)) < 1e-4


@pytest.mark.parametrize("factory", [s3_graph, r3_blocks])
def test_no_splitting_on_glued_examples(factory):
    a = factory()
    res = splitting_detect(a, default_loops(a))
    assert res.projector is None
    assert res.residual > 0.1


@pytest.mark.parametrize("factory", [s3_graph, r3_blocks])
def test_connecting_angle_is_right_angle(factory):
    ang, tr = connecting_geodesic_angle(factory())
    assert ang == pytest.approx(np.pi / 2, abs=1e-6)
    assert any(e["kind"] == "gluing" for e in tr.events)


def test_transported_line_parallel_on_product():
    a = prodH2R()
    rep = xp_parallel_check(a, ("prodH2R", np.zeros(3)), 1.0, n_arcs=4)
    assert rep.residual < 1e-4
    assert rep.max_angle_to_L < 1e-4


def test_transported_line_differs_from_kernel_line_on_twisted(tw):
    # twisted is incomplete and not of higher rank, so radial transport of the
    # line neither stays parallel nor reproduces the kernel line field
    rep = xp_parallel_check(tw, ("twisted", np.array([1.0, 0.0, 0.0])), 0.5, n_arcs=4)
    assert rep.n_compared_to_L > 0
    assert rep.max_angle_to_L > 1e-2
