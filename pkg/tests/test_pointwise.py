import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvczero.errors import AmbiguousSpectrum
from cvczero.metric_core import CurvatureData, curvature_operator_at
from cvczero.pointwise import (ISOTROPIC, NONISOTROPIC, NOT_CVC0, NOT_SIGNED, classify_curvature,
                               classify_point, cvc0_sample, fibonacci_sphere, flat_plane_kernel,
                               line_angle, projector, sign_class, signedness)
from cvczero.zoo import flat3, prodH2R, prodS2R, round3, twisted


def _data(op):
    I = np.eye(3)
    return CurvatureData(np.zeros(3), np.asarray(op, float), I, I, I)


def test_classification_tags():
    assert classify_curvature(_data(np.zeros((3, 3)))).tag == ISOTROPIC
    pc = classify_curvature(_data(np.diag([0.0, 0.0, 2.0])))
    assert pc.tag == NONISOTROPIC
    np.testing.assert_allclose(pc.line, projector([0, 0, 1]), atol=1e-14)
    assert classify_curvature(_data(np.eye(3))).tag == NOT_CVC0
    assert classify_curvature(_data(np.diag([1.0, -1.0, 0.0]))).tag == NOT_SIGNED


def test_ambiguous_spectrum_raised_near_threshold():
    with pytest.raises(AmbiguousSpectrum):
        classify_curvature(_data(np.diag([2e-6, 0.0, 0.0])))
    assert classify_curvature(_data(np.diag([2e-6, 0.0, 0.0])), strict=False).tag == NONISOTROPIC
    assert classify_curvature(_data(np.diag([5e-7, 0.0, 0.0])), strict=False).tag == ISOTROPIC


def test_sign_class():
    assert sign_class([0.0, 0.0, 0.0]) == "Zero"
    assert sign_class([0.0, 0.5, 1.0]) == "NonNeg"
    assert sign_class([-1.0, 0.0, 0.0]) == "NonPos"
    assert sign_class([-1.0, 0.0, 1.0]) == "Mixed"


def test_product_line_is_the_factor_direction():
    a = prodS2R()
    cid = "prodS2R:N"
    p = np.array([0.3, -0.2, 0.7])
    pc = classify_point(a.chart(cid), p)
    assert pc.tag == NONISOTROPIC and pc.sign == "NonNeg"
    d = pc.direction
    assert abs(d[2]) == pytest.approx(np.linalg.norm(d), abs=1e-12)


def test_signedness_examples():
    assert signedness(prodH2R().chart("prodH2R"), np.array([0.1, 0.2, 0.3])) == "NonPos"
    assert signedness(round3().chart("round3:N"), np.array([0.1, 0.2, 0.3])) == "NonNeg"
    assert signedness(flat3().chart("flat3"), np.zeros(3)) == "Zero"


def test_flat_plane_kernel_contains_line_on_twisted():
    ch = twisted().chart("twisted")
    p = np.array([1.0, 0.2, 0.0])
    ker = flat_plane_kernel(ch, p, np.array([0.0, 1.0, 0.0]))
    assert len(ker) == 1
    # the one-dimensional flat-plane kernel of a direction is the common line
    pc = classify_point(ch, p)
    cd = curvature_operator_at(ch, p)
    u = cd.to_frame(ker[0])
    w = cd.to_frame(pc.direction)
    assert line_angle(projector(u), projector(w)) < 1e-6


def test_round_sphere_fails_cvc0():
    ch = round3().chart("round3:N")
    cd = curvature_operator_at(ch, np.array([0.1, 0.0, -0.2]))
    jac, second = cvc0_sample(cd, [0.3, 0.4, 0.5])
    assert jac > 0.1 and second > 0.1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3))
def test_cvc0_holds_for_every_direction_on_products(v):
    ch = prodH2R().chart("prodH2R")
    cd = curvature_operator_at(ch, np.array([0.2, -0.3, 0.1]), numeric=True)
    jac, second = cvc0_sample(cd, v)
    assert jac < 1e-6 and second < 1e-6


def test_fibonacci_sphere_is_deterministic_and_unit():
    a = fibonacci_sphere(50, seed=3)
    b = fibonacci_sphere(50, seed=3)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-14)
