"""Adapted frames along geodesics and checks of their structure equations.

An adapted frame along a unit-speed geodesic is the parallel orthonormal
frame ``{E0, E1, E2}`` with ``E0`` the velocity and ``E1`` a flat witness:
``sec(E0, E1) = 0`` all along.  The initially vanishing normal Jacobi fields
are then ``t E1`` and ``f E2`` with ``f'' + sec(E0, E2) f = 0``.

Around a base point ``p`` a field ``e1`` on the unit sphere of ``T_pM``
induces such frames on a neighbourhood through the exponential map.  This
module evaluates the Levi-Civita connection of those frame fields by finite
differences in exponential coordinates (radius and sphere direction) and
compares it with the closed-form table in terms of ``t``, ``f``, ``E1(f)``
and the bracket coefficients ``[e1, e2] = a1 e1 + a2 e2`` on the sphere.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from . import tolerances as tol
from .atlas import Atlas, Point
from .errors import SingularExpMap, WitnessNotFlat
from .flows import (GeodesicTrace, curvature_fast, frame_components,
                    integrate_flow, jacobi_evolve)
from .metric_core import christoffel_at, cross, metric_at, norm, normalize
from .pointwise import NONISOTROPIC, classify_point

FRAME_STEP_CTRL = 1e-12


# ---------------------------------------------------------------------------
# adapted frames along one geodesic


def _f_aux(chart, t, x, v, W, a):
    cd = curvature_fast(chart, x)
    K = frame_components(cd, np.column_stack([v, W[:, 0], W[:, 1]]))
    return np.array([a[1], -K[2, 2] * a[0]])


@dataclass
class AdaptedFrame:
    """Parallel orthonormal frame along ``trace`` with the solution of the
    f-equation.  ``E0``, ``E1``, ``E2`` are arrays of coordinate vectors per
    sample; ``f`` and ``fp`` hold f and its derivative."""

    trace: GeodesicTrace
    E0: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    sec01: np.ndarray
    sec02: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return self.trace.t

    def orthonormality(self) -> float:
        worst = 0.0
        for i in range(len(self.t)):
            g = self.trace.metric(i)
            E = np.column_stack([self.E0[i], self.E1[i], self.E2[i]])
            worst = max(worst, float(np.max(np.abs(E.T @ g @ E - np.eye(3)))))
        return worst


def adapted_frame(atlas: Atlas, p: Point, v, w, T: float, t_eval=None,
                  step_ctrl: float = FRAME_STEP_CTRL,
                  flat_tol: float = 1e-5, require_flat: bool = True) -> AdaptedFrame:
    """Adapted frame along the geodesic from ``p`` with velocity ``v`` and
    flat witness ``w`` (unit, orthogonal to ``v``).

    Raises :class:`WitnessNotFlat` if ``sec(E0, E1)`` exceeds
    ``flat_tol * (1 + |curvature operator|)`` at some sample, unless
    ``require_flat`` is False (used for frames on curved space forms, where
    only the f-equation is of interest).
    """
    cid, x0 = atlas.locate(*p)
    g = metric_at(atlas.chart(cid), x0)
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    if abs(norm(g, v) - 1) > tol.UNIT_TOL or abs(norm(g, w) - 1) > tol.UNIT_TOL:
        raise ValueError("velocity and witness must be unit vectors")
    if abs(v @ g @ w) > tol.UNIT_TOL:
        raise ValueError("witness must be orthogonal to the velocity")
    e2 = cross(g, v, w)
    tr = integrate_flow(atlas, (cid, x0), v, T, W0=np.column_stack([w, e2]),
                        aux0=np.array([0.0, 1.0]), aux_fn=_f_aux, t_eval=t_eval,
                        step_ctrl=step_ctrl)
    n = len(tr.t)
    sec01 = np.empty(n)
    sec02 = np.empty(n)
    for i in range(n):
        cd = curvature_fast(atlas.chart(tr.chart[i]), tr.x[i])
        K = frame_components(cd, np.column_stack([tr.v[i], tr.W[i]]))
        sec01[i], sec02[i] = K[1, 1], K[2, 2]
        if require_flat and abs(K[1, 1]) > flat_tol * cd.scale:
            raise WitnessNotFlat(f"sec(E0, E1) = {K[1, 1]:.3e} at t = {tr.t[i]:.6g}")
    return AdaptedFrame(tr, tr.v.copy(), tr.W[:, :, 0].copy(), tr.W[:, :, 1].copy(),
                        tr.aux[:, 0].copy(), tr.aux[:, 1].copy(), sec01, sec02)


def f_ode_check(frame: AdaptedFrame) -> Dict[str, float]:
    """Compare ``f E2`` and ``t E1`` with independently integrated Jacobi
    fields vanishing at the start with derivatives ``E2(0)`` and ``E1(0)``.

    Returns the largest metric-norm deviations ``{"J2": ..., "J1": ...}``.
    """
    tr = frame.trace
    J2 = jacobi_evolve(tr, np.zeros(3), tr.W0[:, 1])
    J1 = jacobi_evolve(tr, np.zeros(3), tr.W0[:, 0])
    d1 = d2 = 0.0
    for i in range(len(tr.t)):
        g = tr.metric(i)
        d2 = max(d2, norm(g, J2.J[i] - frame.f[i] * frame.E2[i]))
        d1 = max(d1, norm(g, J1.J[i] - tr.t[i] * frame.E1[i]))
    return {"J2": d2, "J1": d1}


# ---------------------------------------------------------------------------
# exponential-coordinate frame fields


def rank_line_field(xi) -> Callable:
    """Sphere field ``e1(u) = normalise(xi - <xi, u> u)`` in the metric ``g``:
    the rank direction when ``xi`` spans a parallel flat direction."""
    xi = np.asarray(xi, float)

    def e1(g, u):
        return normalize(g, xi - (xi @ g @ u) * u)

    return e1


@dataclass
class _ExpSample:
    chart: str
    x: np.ndarray
    v: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    f: float
    fp: float


def _exp_sample(atlas, p, g, u, e1_field, t0, step_ctrl) -> _ExpSample:
    u = normalize(g, u)
    e1 = e1_field(g, u)
    e2 = cross(g, u, e1)
    tr = integrate_flow(atlas, p, u, t0, W0=np.column_stack([e1, e2]),
                        aux0=np.array([0.0, 1.0]), aux_fn=_f_aux, t_eval=[t0],
                        step_ctrl=step_ctrl)
    return _ExpSample(tr.chart[-1], tr.x[-1], tr.v[-1], tr.W[-1][:, 0], tr.W[-1][:, 1],
                      float(tr.aux[-1, 0]), float(tr.aux[-1, 1]))


def _in_chart(atlas, s: _ExpSample, cid):
    """Position and (v, E1, E2) of a sample re-expressed in chart ``cid``."""
    if s.chart == cid:
        return s.x, np.column_stack([s.v, s.E1, s.E2])
    y, V = atlas.express((s.chart, s.x), cid, np.column_stack([s.v, s.E1, s.E2]))
    return y, V


def _chart_diff(chart, a, b):
    d = np.asarray(a, float) - np.asarray(b, float)
    for k, per in enumerate(chart.periods):
        if per is not None:
            d[k] = (d[k] + per / 2) % per - per / 2
    return d


def _covariant_derivative(atlas, center, plus, minus, eps):
    """Central covariant derivative of (v, E1, E2) along a curve through the
    center sample, per unit of the curve parameter."""
    cid = center.chart
    chart = atlas.chart(cid)
    xp, Vp = _in_chart(atlas, plus, cid)
    xm, Vm = _in_chart(atlas, minus, cid)
    xdot = _chart_diff(chart, xp, xm) / (2 * eps)
    dV = (Vp - Vm) / (2 * eps)
    G = christoffel_at(chart, center.x)
    V0 = np.column_stack([center.v, center.E1, center.E2])
    return dV + np.einsum("kij,i,jm->km", G, xdot, V0)


@dataclass
class ChristoffelTable:
    """Residuals of the adapted-frame connection table at one point.

    ``entries`` maps ``"i,j"`` (for the derivative of ``E_j`` along ``E_i``)
    to the metric norm of computed minus predicted; ``a1`` and ``a2`` are the
    bracket coefficients of the sphere frame; ``f``, ``fp``, ``E1f`` the
    ingredients of the prediction.
    """

    t: float
    entries: Dict[str, float]
    a1: float
    a2: float
    f: float
    fp: float
    E1f: float
    geodesic_e1: float

    @property
    def worst(self) -> float:
        return max(self.entries.values())


def christoffel_table_residual(atlas: Atlas, p: Point, v, e1_field: Callable, t0: float,
                               eps: float = 1e-2,
                               step_ctrl: float = FRAME_STEP_CTRL) -> ChristoffelTable:
    """Connection of the frame fields induced by ``e1_field`` at ``exp_p(t0 v)``.

    ``e1_field(g, u)`` returns a unit vector orthogonal to the unit vector
    ``u`` (both in the inner product ``g`` of ``T_pM``).  Derivatives along
    ``E1`` and ``E2`` are taken along the great circles of the sphere through
    ``v`` in the directions ``e1(v)`` and ``e2(v)``, rescaled by the Jacobi
    lengths ``t0`` and ``f(t0)``; every difference quotient is Richardson
    extrapolated from steps ``eps`` and ``eps/2``.

    Raises :class:`SingularExpMap` when ``t0 f(t0) < 1e-8``.
    """
    p = atlas.locate(*p)
    g = metric_at(atlas.chart(p[0]), p[1])
    v = normalize(g, np.asarray(v, float))
    e1 = e1_field(g, v)
    e2 = cross(g, v, e1)
    sample = lambda u, t=t0: _exp_sample(atlas, p, g, u, e1_field, t, step_ctrl)
    c = sample(v)
    if t0 * c.f < 1e-8:
        raise SingularExpMap(f"Jacobi determinant t f = {t0 * c.f:.3e} at t = {t0}")

    def along(direction, h):
        sp = sample(np.cos(h) * v + np.sin(h) * direction)
        sm = sample(np.cos(h) * v - np.sin(h) * direction)
        return _covariant_derivative(atlas, c, sp, sm, h), (sp.f - sm.f) / (2 * h)

    def rich(direction):
        D1, f1 = along(direction, eps)
        D2, f2 = along(direction, eps / 2)
        return (4 * D2 - D1) / 3, (4 * f2 - f1) / 3

    D_e1, df_e1 = rich(e1)
    D_e2, _ = rich(e2)
    # radial derivative: covariant derivative in t along the central geodesic
    tp, tm = sample(v, t0 + eps), sample(v, t0 - eps)
    tp2, tm2 = sample(v, t0 + eps / 2), sample(v, t0 - eps / 2)
    D_e0 = (4 * _covariant_derivative(atlas, c, tp2, tm2, eps / 2)
            - _covariant_derivative(atlas, c, tp, tm, eps)) / 3

    nab = {0: D_e0, 1: D_e1 / t0, 2: D_e2 / c.f}
    E1f = df_e1 / t0

    # sphere bracket coefficients from derivatives of e1 in T_pM
    def sphere_derivative(direction, h):
        up = np.cos(h) * v + np.sin(h) * direction
        um = np.cos(h) * v - np.sin(h) * direction
        return (e1_field(g, up) - e1_field(g, um)) / (2 * h)

    def sphere_rich(direction):
        return (4 * sphere_derivative(direction, eps / 2) - sphere_derivative(direction, eps)) / 3

    a1 = -float(e2 @ g @ sphere_rich(e1))
    a2 = -float(sphere_rich(e2) @ g @ e2)

    t, f, fp = t0, c.f, c.fp
    E0, E1, E2 = c.v, c.E1, c.E2
    mix = E1f / f - a2 / t
    predicted = {
        (0, 0): 0 * E0, (0, 1): 0 * E0, (0, 2): 0 * E0,
        (1, 0): E1 / t, (1, 1): -E0 / t - (a1 / f) * E2, (1, 2): (a1 / f) * E1,
        (2, 0): (fp / f) * E2, (2, 1): mix * E2, (2, 2): -(fp / f) * E0 - mix * E1,
    }
    gx = metric_at(atlas.chart(c.chart), c.x)
    entries = {f"{i},{j}": norm(gx, nab[i][:, j] - predicted[(i, j)])
               for i in range(3) for j in range(3)}
    geo = abs(float(nab[1][:, 1] @ gx @ E2))
    return ChristoffelTable(t0, entries, a1, a2, f, fp, E1f, geo)


# ---------------------------------------------------------------------------
# flat sheets


@dataclass
class FlatSheetReport:
    normal: float
    closure: float
    foliation: float
    n_samples: int

    @property
    def worst(self) -> float:
        return max(self.normal, self.closure, self.foliation)


def _exp_point(atlas, p, g, vec, W0=None, step_ctrl=FRAME_STEP_CTRL):
    r = norm(g, vec)
    if r == 0:
        return p[0], p[1].copy(), None if W0 is None else np.array(W0, float)
    tr = integrate_flow(atlas, p, vec / r, r, W0=W0, t_eval=[r], step_ctrl=step_ctrl)
    return tr.chart[-1], tr.x[-1], None if W0 is None else tr.W[-1]


def flat_sheet_check(atlas: Atlas, p: Point, v, radius: float = 0.5,
                     n_radii: int = 3, n_angles: int = 8, eps: float = 1e-3,
                     xi=None) -> FlatSheetReport:
    """Check that ``exp_p`` maps the plane spanned by the distinguished line
    and ``v`` onto a flat, totally geodesic sheet foliated by lines parallel
    to the image of the line.

    For grid points ``F(a, b) = exp_p(a xi + b v)`` three residuals are
    measured: the transported unit normal against a finite-difference tangent
    of the sheet; the endpoint of the broken path (along ``xi`` for ``a``,
    then along the transported ``v`` for ``b``) against ``F(a, b)``; the
    derivative ``dF/da`` against the transport of ``xi`` along the radial
    geodesic.
    """
    p = atlas.locate(*p)
    chart = atlas.chart(p[0])
    g = metric_at(chart, p[1])
    if xi is None:
        pc = classify_point(chart, p[1], strict=False)
        if pc.tag != NONISOTROPIC:
            raise ValueError(f"flat_sheet_check needs a nonisotropic base point, got {pc.tag}")
        xi = pc.direction
    xi = normalize(g, np.asarray(xi, float))
    v = np.asarray(v, float)
    v = normalize(g, v - (v @ g @ xi) * xi)
    nrm = cross(g, xi, v)
    worst_n = worst_c = worst_f = 0.0
    count = 0
    for ir in range(1, n_radii + 1):
        r = radius * ir / n_radii
        for k in range(n_angles):
            th = 2 * np.pi * (k + 0.5) / n_angles
            a, b = r * np.sin(th), r * np.cos(th)
            cid, x, W = _exp_point(atlas, p, g, a * xi + b * v,
                                   W0=np.column_stack([nrm, xi, v]))
            cx = atlas.chart(cid)
            gx = metric_at(cx, x)
            n_t, xi_t = W[:, 0], W[:, 1]

            def grid(da, db):
                c2, y, _ = _exp_point(atlas, p, g, (a + da) * xi + (b + db) * v)
                if c2 != cid:
                    y, _ = atlas.express((c2, y), cid)
                return y

            dFa = _chart_diff(cx, grid(eps, 0), grid(-eps, 0)) / (2 * eps)
            dFb = _chart_diff(cx, grid(0, eps), grid(0, -eps)) / (2 * eps)
            for d in (dFa, dFb):
                worst_n = max(worst_n, abs(float(n_t @ gx @ d)) / norm(gx, d))
            worst_f = max(worst_f, norm(gx, dFa - xi_t))
            # broken path: along xi for a, then along transported v for b
            c1, y1, W1 = _exp_point(atlas, p, g, a * xi, W0=v.reshape(3, 1))
            g1 = metric_at(atlas.chart(c1), y1)
            c2, y2, _ = _exp_point(atlas, (c1, y1), g1, b * W1[:, 0])
            if c2 != cid:
                y2, _ = atlas.express((c2, y2), cid)
            worst_c = max(worst_c, norm(gx, _chart_diff(cx, y2, x)))
            count += 1
    return FlatSheetReport(worst_n, worst_c, worst_f, count)
