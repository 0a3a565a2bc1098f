import numpy as np
import pytest

from cvczero.gluing import rotational_chart
from cvczero.metric_core import curvature_operator_at
from cvczero.zoo import get, oracle_curvature, twisted, zoo_list

# Curvature operators computed symbolically with tests/cas.py at (3/10, -1/5, 1/2).
POINT = np.array([0.3, -0.2, 0.5])
FROZEN = {
    ("round3", "round3:N"): np.eye(3),
    ("prodS2R", "prodS2R:N"): np.diag([0.0, 0.0, 1.0]),
    ("prodH2R", "prodH2R"): np.diag([0.0, 0.0, -1.0]),
}
# B(x) = x^3 + x^2/2, so w = t + B(x)
TWISTED_CUBIC = np.diag([0.6410256410256411, 0.0, 0.0])
# dr^2 + psi(r)^2 da^2 + dz^2 with psi = sin r + r^3/10
ROTATIONAL = np.diag([0.0, 0.0, 0.3873654570715422])


@pytest.mark.parametrize("key", sorted(FROZEN))
def test_numeric_curvature_matches_symbolic(key):
    name, cid = key
    ch = get(name).build().chart(cid)
    for closed in (True, False):
        cd = curvature_operator_at(ch, POINT, numeric=True, closed_christoffel=closed)
        np.testing.assert_allclose(cd.operator, FROZEN[key], atol=1e-7)
    np.testing.assert_allclose(ch.curvature_oracle(POINT), FROZEN[key], atol=1e-14)


def test_twisted_cubic_oracle_matches_symbolic():
    ch = twisted(coeffs=(0.0, 0.0, 0.5, 1.0)).chart("twisted")
    np.testing.assert_allclose(ch.curvature_oracle(POINT), TWISTED_CUBIC, atol=1e-14)
    cd = curvature_operator_at(ch, POINT, numeric=True, closed_christoffel=False)
    np.testing.assert_allclose(cd.operator, TWISTED_CUBIC, atol=1e-6)


def test_rotational_chart_matches_symbolic():
    psi = lambda r: np.sin(r) + r ** 3 / 10
    dpsi = lambda r: np.cos(r) + 3 * r ** 2 / 10
    ddpsi = lambda r: -np.sin(r) + 6 * r / 10
    ch = rotational_chart("rot", psi, dpsi, ddpsi, (0.05, -10, -10), (1.0, 10, 10),
                          (None, None, None), None, None, 1.0)
    np.testing.assert_allclose(ch.curvature_oracle(POINT), ROTATIONAL, atol=1e-14)
    cd = curvature_operator_at(ch, POINT, numeric=True, closed_christoffel=False)
    np.testing.assert_allclose(cd.operator, ROTATIONAL, atol=1e-6)


def test_registry_contents():
    names = [e.name for e in zoo_list()]
    assert names == ["flat3", "round3", "prodS2R", "prodH2R", "twisted", "s3_graph",
                     "s2s1_graph", "r3_blocks"]
    assert get("twisted").incomplete
    assert get("round3").expected["cvc0"] is False
    with pytest.raises(KeyError):
        get("nonexistent")


def test_oracle_curvature_helper():
    op = oracle_curvature(get("prodH2R"), ("prodH2R", np.zeros(3)))
    np.testing.assert_allclose(op, np.diag([0.0, 0.0, -1.0]))
