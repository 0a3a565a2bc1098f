import numpy as np
import pytest

from cvczero.errors import WitnessNotFlat
from cvczero.frames import (adapted_frame, christoffel_table_residual, f_ode_check,
                            flat_sheet_check, rank_line_field)
from cvczero.metric_core import metric_at
from cvczero.zoo import flat3, prodH2R, prodS2R, round3, twisted

TS = np.linspace(0.1, 1.5, 15)
E1, E2, E3 = np.eye(3)


def test_f_equals_t_on_flat_space():
    fr = adapted_frame(flat3(), ("flat3", np.zeros(3)), E1, E2, 1.5, t_eval=TS)
    np.testing.assert_allclose(fr.f, TS, atol=1e-12)
    dev = f_ode_check(fr)
    assert dev["J1"] < 1e-10 and dev["J2"] < 1e-10
    assert fr.orthonormality() < 1e-10


def test_f_equals_sin_on_round_sphere():
    a = round3()
    p = ("round3:N", np.zeros(3))
    fr = adapted_frame(a, p, 0.5 * E1, 0.5 * E2, 1.5, t_eval=TS, require_flat=False)
    np.testing.assert_allclose(fr.f, np.sin(TS), atol=1e-9)
    np.testing.assert_allclose(fr.sec02, 1.0, atol=1e-9)
    assert f_ode_check(fr)["J2"] < 1e-9


def test_round_sphere_has_no_flat_witness():
    with pytest.raises(WitnessNotFlat):
        adapted_frame(round3(), ("round3:N", np.zeros(3)), 0.5 * E1, 0.5 * E2, 1.0)


def test_f_equals_sinh_on_hyperbolic_product():
    a = prodH2R()
    p = ("prodH2R", np.zeros(3))
    g = metric_at(a.chart(p[0]), p[1])
    v = E1 / np.sqrt(g[0, 0])
    fr = adapted_frame(a, p, v, E3, 1.5, t_eval=TS)
    np.testing.assert_allclose(fr.f, np.sinh(TS), atol=1e-9)
    np.testing.assert_allclose(fr.sec01, 0.0, atol=1e-9)


def test_f_positive_on_product_sphere_before_conjugate_point():
    a = prodS2R()
    p = ("prodS2R:N", np.array([0.3, 0.2, 0.0]))
    g = metric_at(a.chart(p[0]), p[1])
    v = E1 / np.sqrt(g[0, 0])
    fr = adapted_frame(a, p, v, E3, 3.0, t_eval=np.linspace(0.1, 3.0, 12))
    assert np.all(fr.f > 0)
    np.testing.assert_allclose(fr.f, np.sin(fr.t), atol=1e-9)


def test_christoffel_table_on_hyperbolic_product():
    a = prodH2R()
    ct = christoffel_table_residual(a, ("prodH2R", np.zeros(3)), [0.6, 0.0, 0.8],
                                    rank_line_field(E3), 0.7)
    assert ct.worst < 1e-6
    assert abs(ct.a1) < 1e-8


def test_christoffel_table_detects_wrong_line():
    # a field that is not a rank direction breaks the table
    a = prodH2R()
    ct = christoffel_table_residual(a, ("prodH2R", np.zeros(3)), [0.6, 0.0, 0.8],
                                    rank_line_field(E2), 0.7)
    assert ct.worst > 1e-3


def test_flat_sheets_on_twisted_and_product():
    rep = flat_sheet_check(twisted(), ("twisted", np.array([1.0, 0.0, 0.0])), [0.0, 1.0, 0.0])
    assert rep.worst < 1e-8
    a = prodS2R()
    rep = flat_sheet_check(a, ("prodS2R:N", np.array([0.3, 0.2, 0.0])), [1.0, 0.0, 0.0],
                           radius=0.8)
    assert rep.worst < 1e-5


def test_flat_sheet_fails_on_curved_plane():
    rep = flat_sheet_check(round3(), ("round3:N", np.zeros(3)), E1, radius=0.5, xi=E3)
    assert rep.worst > 1e-3
