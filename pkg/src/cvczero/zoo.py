"""Shipped metric families with closed-form connection and curvature.

Every closed form here was checked against an independent symbolic
computation (see ``tests/cas.py``).  Curvature operators are written in the
Gram-Schmidt frame of the coordinate vectors, bivector basis
``{e2^e3, e3^e1, e1^e2}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .atlas import Atlas, TransitionMap
from .metric_core import ChartMetric

BIG = 1e3


# ---------------------------------------------------------------------------
# flat space


def _zeros3(x):
    return np.zeros((3, 3, 3))


def _zero_op(x):
    return np.zeros((3, 3))


def _identity(x):
    return np.eye(3)


def flat_chart(cid="flat3", lo=(-BIG,) * 3, hi=(BIG,) * 3, periods=(None,) * 3,
               sample=1.0, **kw) -> ChartMetric:
    return ChartMetric(cid, lo, hi, _identity, _zeros3, _zero_op, periods=periods,
                       sample_lo=kw.pop("sample_lo", (-sample,) * 3),
                       sample_hi=kw.pop("sample_hi", (sample,) * 3), **kw)


def flat3() -> Atlas:
    return Atlas("flat3", [flat_chart()])


def flat_torus(size: float = 1.0) -> Atlas:
    ch = flat_chart("torus3", (0.0,) * 3, (size,) * 3, periods=(size,) * 3,
                    sample_lo=(0.0,) * 3, sample_hi=(size,) * 3)
    return Atlas("torus3", [ch])


# ---------------------------------------------------------------------------
# conformally flat stereographic charts


def _conformal_christoffel(u: np.ndarray, dims) -> np.ndarray:
    """Christoffel symbols of ``lambda^2 delta`` on the coordinates ``dims``
    with ``u = grad log lambda``."""
    G = np.zeros((3, 3, 3))
    for k in dims:
        for i in dims:
            for j in dims:
                G[k, i, j] = ((i == k) * u[j] + (j == k) * u[i] - (i == j) * u[k])
    return G


def _inversion(kappa):
    def fwd(x):
        r2 = x @ x
        return x / (kappa * r2)

    def jac(x):
        r2 = x @ x
        return (np.eye(3) - 2.0 * np.outer(x, x) / r2) / (kappa * r2)

    return fwd, jac


def round3(kappa: float = 1.0) -> Atlas:
    """Round 3-sphere of curvature kappa: two stereographic charts."""
    s = 1.0 / np.sqrt(kappa)

    def metric(x):
        return (4.0 / (1.0 + kappa * (x @ x)) ** 2) * np.eye(3)

    def christ(x):
        u = -2.0 * kappa * x / (1.0 + kappa * (x @ x))
        return _conformal_christoffel(u, (0, 1, 2))

    def oracle(x):
        return kappa * np.eye(3)

    box = 2.5 * s
    charts = [ChartMetric(f"round3:{h}", (-box,) * 3, (box,) * 3, metric, christ, oracle,
                          length_scale=s, sample_lo=(-s,) * 3, sample_hi=(s,) * 3,
                          description="stereographic chart")
              for h in ("N", "S")]
    fwd, jac = _inversion(kappa)
    trig = lambda x: np.sqrt(kappa * (x @ x)) - 1.5
    ov = lambda x: x @ x > 0
    trs = [TransitionMap(a, b, fwd, fwd, jac, trig, ov, "chart", {"map": "inversion", "kappa": kappa})
           for a, b in (("round3:N", "round3:S"), ("round3:S", "round3:N"))]
    return Atlas(f"round3({kappa:g})", charts, trs,
                 pieces={c.id: "round3" for c in charts}, meta={"kappa": kappa})


def _inversion2(x):
    r2 = x[0] ** 2 + x[1] ** 2
    return np.array([x[0] / r2, x[1] / r2, x[2]])


def _inversion2_jac(x):
    r2 = x[0] ** 2 + x[1] ** 2
    J = np.eye(3)
    xy = x[:2]
    J[:2, :2] = (np.eye(2) - 2.0 * np.outer(xy, xy) / r2) / r2
    return J


def prodS2R() -> Atlas:
    """Unit 2-sphere times a line; stereographic charts on the sphere factor."""

    def metric(x):
        f = 4.0 / (1.0 + x[0] ** 2 + x[1] ** 2) ** 2
        return np.diag([f, f, 1.0])

    def christ(x):
        u = np.zeros(3)
        u[:2] = -2.0 * x[:2] / (1.0 + x[0] ** 2 + x[1] ** 2)
        return _conformal_christoffel(u, (0, 1))

    def oracle(x):
        return np.diag([0.0, 0.0, 1.0])

    charts = [ChartMetric(f"prodS2R:{h}", (-2.5, -2.5, -BIG), (2.5, 2.5, BIG), metric,
                          christ, oracle, sample_lo=(-1, -1, -1), sample_hi=(1, 1, 1),
                          description="stereographic sphere factor times line")
              for h in ("N", "S")]
    trig = lambda x: np.hypot(x[0], x[1]) - 1.5
    ov = lambda x: x[0] ** 2 + x[1] ** 2 > 0
    trs = [TransitionMap(a, b, _inversion2, _inversion2, _inversion2_jac, trig, ov, "chart",
                         {"map": "planar inversion"})
           for a, b in (("prodS2R:N", "prodS2R:S"), ("prodS2R:S", "prodS2R:N"))]
    return Atlas("prodS2R", charts, trs, pieces={c.id: "prodS2R" for c in charts},
                 meta={"factor_line": {"prodS2R:N": [0, 0, 1], "prodS2R:S": [0, 0, 1]}})


def prodH2R() -> Atlas:
    """Hyperbolic plane ``dt^2 + e^{2t} dx^2`` times a line ``dy^2``."""

    def metric(x):
        return np.diag([1.0, np.exp(2.0 * x[0]), 1.0])

    def christ(x):
        G = np.zeros((3, 3, 3))
        G[0, 1, 1] = -np.exp(2.0 * x[0])
        G[1, 0, 1] = G[1, 1, 0] = 1.0
        return G

    def oracle(x):
        return np.diag([0.0, 0.0, -1.0])

    ch = ChartMetric("prodH2R", (-12.0, -BIG, -BIG), (12.0, BIG, BIG), metric, christ, oracle,
                     sample_lo=(-1, -1, -1), sample_hi=(1, 1, 1),
                     description="upper half-plane model in horospherical coordinates")
    return Atlas("prodH2R", [ch], meta={"factor_line": {"prodH2R": [0, 0, 1]}})


# ---------------------------------------------------------------------------
# twisted family dt^2 + dx^2 + w^2 dy^2 with w = t + B(x)


def polynomial(coeffs):
    """Polynomial ``B`` with its first two derivatives (ascending coefficients).

    Plain Horner closures: these sit in the innermost loops.
    """
    c0 = [float(a) for a in coeffs]
    c1 = [k * a for k, a in enumerate(c0)][1:] or [0.0]
    c2 = [k * a for k, a in enumerate(c1)][1:] or [0.0]

    def horner(c):
        rev = c[::-1]

        def p(x):
            acc = 0.0
            for a in rev:
                acc = acc * x + a
            return acc
        return p

    return horner(c0), horner(c1), horner(c2)


def twisted(coeffs=(0.0, 0.0, 1.0), w_min: float = 0.2) -> Atlas:
    """Metric ``dt^2 + dx^2 + w^2 dy^2`` with ``w(t, x) = t + B(x)``.

    Since w is affine in t the Hessian determinant of w vanishes, so at most
    one sectional curvature is nonzero at each point.  The chart is clipped
    to ``w >= w_min``; the metric is incomplete there.
    """
    B, dB, ddB = polynomial(coeffs)

    def w(x):
        return x[0] + B(x[1])

    def metric(x):
        return np.diag([1.0, 1.0, w(x) ** 2])

    def christ(x):
        ww, wx = w(x), dB(x[1])
        G = np.zeros((3, 3, 3))
        G[0, 2, 2] = -ww
        G[1, 2, 2] = -ww * wx
        G[2, 0, 2] = G[2, 2, 0] = 1.0 / ww
        G[2, 1, 2] = G[2, 2, 1] = wx / ww
        return G

    def oracle(x):
        return np.diag([-ddB(x[1]) / w(x), 0.0, 0.0])

    ch = ChartMetric("twisted", (-6.0, -3.0, -20.0), (12.0, 3.0, 20.0), metric, christ, oracle,
                     valid_fn=lambda x: w(x) - w_min,
                     sample_lo=(0.5, -1.0, -1.0), sample_hi=(3.0, 1.0, 1.0),
                     description="twisted product, incomplete domain")
    return Atlas("twisted", [ch], meta={"coeffs": list(map(float, coeffs)), "w_min": w_min,
                                         "w": w})


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class ZooEntry:
    """A named manifold with expected structural properties.

    ``expected`` maps flag names to booleans (None when the flag does not
    apply); ``sign`` is the expected pointwise sign class.
    """

    name: str
    factory: Callable[..., Atlas]
    expected: dict
    sign: str
    checks: tuple
    description: str = ""
    incomplete: bool = False
    params: dict = field(default_factory=dict)

    def build(self, **kw) -> Atlas:
        args = dict(self.params)
        args.update(kw)
        return self.factory(**args)


def _entries() -> Dict[str, ZooEntry]:
    from . import gluing  # local import: gluing depends on this module

    basic = ("cvc0-scan", "signedness", "classify", "rank-scan")
    return {e.name: e for e in [
        ZooEntry("flat3", flat3,
                 dict(cvc0=True, signed=True, higher_rank=True, has_parallel_line=True,
                      nonisotropic_L_parallel=None),
                 "Zero", basic + ("f-ode", "frame-audit", "holonomy"), "Euclidean space"),
        ZooEntry("round3", round3,
                 dict(cvc0=False, signed=True, higher_rank=False, has_parallel_line=False,
                      nonisotropic_L_parallel=None),
                 "NonNeg", basic + ("f-ode",), "round 3-sphere",
                 params={"kappa": 1.0}),
        ZooEntry("prodS2R", prodS2R,
                 dict(cvc0=True, signed=True, higher_rank=True, has_parallel_line=True,
                      nonisotropic_L_parallel=True),
                 "NonNeg", basic + ("f-ode", "frame-audit", "flats", "line-field",
                                    "xp-parallel", "holonomy"), "unit 2-sphere times a line"),
        ZooEntry("prodH2R", prodH2R,
                 dict(cvc0=True, signed=True, higher_rank=True, has_parallel_line=True,
                      nonisotropic_L_parallel=True),
                 "NonPos", basic + ("f-ode", "frame-audit", "flats", "line-field",
                                    "xp-parallel", "holonomy"), "hyperbolic plane times a line"),
        ZooEntry("twisted", twisted,
                 dict(cvc0=True, signed=True, higher_rank=None, has_parallel_line=False,
                      nonisotropic_L_parallel=False),
                 "NonPos", ("cvc0-scan", "signedness", "classify", "flats", "line-field",
                            "evolution"),
                 "twisted product dt^2+dx^2+(t+B(x))^2dy^2", incomplete=True,
                 params={"coeffs": (0.0, 0.0, 1.0)}),
        ZooEntry("s3_graph", gluing.s3_graph,
                 dict(cvc0=True, signed=True, higher_rank=False, has_parallel_line=False,
                      nonisotropic_L_parallel=True),
                 "NonNeg", basic + ("f-ode", "frame-audit", "line-field", "xp-parallel",
                                    "holonomy", "transitions", "connecting-angle"),
                 "two solid tori glued by the swap word"),
        ZooEntry("s2s1_graph", gluing.s2s1_graph,
                 dict(cvc0=True, signed=True, higher_rank=False, has_parallel_line=False,
                      nonisotropic_L_parallel=True),
                 "Pointwise", basic + ("frame-audit", "line-field", "holonomy", "transitions"),
                 "disk, bumped cylinder and disk glued by swap words"),
        ZooEntry("r3_blocks", gluing.r3_blocks,
                 dict(cvc0=True, signed=True, higher_rank=False, has_parallel_line=False,
                      nonisotropic_L_parallel=True),
                 "NonNeg", basic + ("frame-audit", "line-field", "xp-parallel", "holonomy",
                            "transitions", "connecting-angle"),
                 "two half-plane blocks glued along their boundary planes"),
    ]}


_REGISTRY: Optional[Dict[str, ZooEntry]] = None


def zoo_list():
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = _entries()
    return list(_REGISTRY.values())


def get(name: str) -> ZooEntry:
    zoo_list()
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown zoo entry {name!r}; known: {sorted(_REGISTRY)}") from None


def oracle_curvature(entry_or_atlas, point) -> np.ndarray:
    """Closed-form curvature operator at ``point = (chart id, x)``."""
    atlas = entry_or_atlas.build() if isinstance(entry_or_atlas, ZooEntry) else entry_or_atlas
    cid, x = point
    ch = atlas.chart(cid)
    x = ch.check(ch.wrap(x))
    if ch.curvature_oracle is None:
        raise ValueError(f"chart {cid!r} has no closed-form curvature")
    return np.asarray(ch.curvature_oracle(x), dtype=float)
