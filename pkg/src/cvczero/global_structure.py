"""Global structure: the line field on the nonisotropic set, its shape
operator, transported line fields from a base point, and holonomy.

Line fields are compared through their lines only (never through a chosen
orientation): angles use ``|g(u, w)|`` and projectors are written in the
Gram-Schmidt orthonormal frame of the chart at each point.  Unit sections are
oriented locally (against a reference vector) whenever a derivative is
needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize

from .atlas import Atlas, Point
from .errors import LeftAtlas, MixedRegion, OutOfDomain
from .flows import GeodesicTrace, geodesic, integrate_flow
from .integrate import solve
from .metric_core import (christoffel_at, gram_schmidt, metric_at, norm, normalize,
                          orthonormal_complement)
from .pointwise import NONISOTROPIC, classify_point, fibonacci_sphere

FROM_KERNEL = "FromKernel"
FROM_TRANSPORT = "FromTransport"


def line_angle_between(g, u, w) -> float:
    """Angle in [0, pi/2] between the lines spanned by u and w."""
    c = abs(float(u @ g @ w)) / (norm(g, u) * norm(g, w))
    return float(np.arccos(min(c, 1.0)))


def frame_projector(g, u) -> np.ndarray:
    """Projector onto span(u) in the Gram-Schmidt orthonormal frame of g."""
    uf = gram_schmidt(g).T @ g @ np.asarray(u, float)
    uf = uf / np.linalg.norm(uf)
    return np.outer(uf, uf)


def _chart_diff(chart, a, b):
    d = np.asarray(a, float) - np.asarray(b, float)
    for k, per in enumerate(chart.periods):
        if per is not None:
            d[k] = (d[k] + per / 2) % per - per / 2
    return d


# ---------------------------------------------------------------------------
# line fields


@dataclass
class LineField:
    """A line field given by a direction sampler.

    ``direction_fn(chart_id, x)`` returns a coordinate vector spanning the
    line (any length or sign).  ``provenance`` records how the field was
    obtained: ``{"kind": "FromKernel"}`` or ``{"kind": "FromTransport",
    "base": ..., "xi": ...}``.  ``samples`` optionally lists precomputed
    ``(chart_id, x, unit vector)`` triples.
    """

    atlas: Atlas
    direction_fn: Callable[[str, np.ndarray], np.ndarray]
    provenance: dict
    samples: list = field(default_factory=list)
    excluded: int = 0

    def unit(self, point: Point, ref=None) -> np.ndarray:
        cid, x = point
        g = metric_at(self.atlas.chart(cid), x)
        u = normalize(g, np.asarray(self.direction_fn(cid, x), float))
        if ref is not None and float(u @ g @ np.asarray(ref, float)) < 0:
            u = -u
        return u

    def projector(self, point: Point) -> np.ndarray:
        cid, x = point
        return frame_projector(metric_at(self.atlas.chart(cid), x), self.unit(point))


def kernel_direction(atlas: Atlas, strict: bool = False):
    """Direction sampler returning the distinguished line of a nonisotropic
    point; raises :class:`MixedRegion` elsewhere."""

    def fn(cid, x):
        pc = classify_point(atlas.chart(cid), x, strict=strict)
        if pc.tag != NONISOTROPIC:
            raise MixedRegion(f"point {x} of chart {cid!r} is {pc.tag}, not Nonisotropic")
        return pc.direction

    return fn


def line_field_L(atlas: Atlas, points: Sequence[Point] = ()) -> LineField:
    """The kernel line field.  Every point in ``points`` must classify as
    Nonisotropic (otherwise :class:`MixedRegion`)."""
    fn = kernel_direction(atlas)
    lf = LineField(atlas, fn, {"kind": FROM_KERNEL})
    for cid, x in points:
        u = lf.unit((cid, np.asarray(x, float)))
        lf.samples.append((cid, np.asarray(x, float), u))
    return lf


def line_geodesic_residual(field: LineField, p: Point, T: float = 1.0,
                           n_samples: int = 11) -> float:
    """Largest angle between the velocity of the geodesic tangent to the
    field at p and the field along it, over ``[0, T]``.  Zero when the
    integral curves of the field are geodesics."""
    atlas = field.atlas
    u = field.unit(p)
    tr = geodesic(atlas, p, u, T, t_eval=np.linspace(0.0, T, n_samples))
    worst = 0.0
    for i in range(len(tr.t)):
        g = tr.metric(i)
        worst = max(worst, line_angle_between(g, tr.v[i], field.unit(tr.point(i))))
    return worst


# ---------------------------------------------------------------------------
# shape operator


@dataclass
class ShapeSample:
    """Shape operator ``S(w) = -(nabla_w V)`` restricted to ``L^perp``,
    written in the orthonormal basis ``basis`` (coordinate columns)."""

    point: Point
    direction: np.ndarray
    basis: np.ndarray
    S: np.ndarray

    @property
    def tr(self) -> float:
        return float(np.trace(self.S))

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.S))


def field_derivative(field: LineField, p: Point, w, ref=None, h: Optional[float] = None):
    """Covariant derivative ``nabla_w V`` of the unit section V oriented by
    ``ref`` (default: the field's own direction at p), by central differences
    along the coordinate line through p in direction w (Richardson
    extrapolated)."""
    cid, x = p
    chart = field.atlas.chart(cid)
    x = np.asarray(x, float)
    w = np.asarray(w, float)
    V0 = field.unit(p, ref)
    h = 1e-3 * chart.length_scale if h is None else h

    def central(hh):
        a = field.unit((cid, chart.wrap(x + hh * w)), V0)
        b = field.unit((cid, chart.wrap(x - hh * w)), V0)
        return (a - b) / (2 * hh)

    dV = (4 * central(h / 2) - central(h)) / 3
    G = christoffel_at(chart, x)
    return dV + np.einsum("kij,i,j->k", G, w, V0), V0


def shape_operator(atlas: Atlas, field: LineField, p: Point, ref=None,
                   h: Optional[float] = None) -> ShapeSample:
    """Shape operator of the unit section of ``field`` at p on an
    orthonormal basis of the orthogonal complement."""
    cid, x = atlas.locate(*p)
    g = metric_at(atlas.chart(cid), x)
    V = field.unit((cid, x), ref)
    basis = orthonormal_complement(g, V)
    S = np.empty((2, 2))
    for a in range(2):
        dV, _ = field_derivative(field, (cid, x), basis[:, a], V, h)
        for b in range(2):
            S[b, a] = -float(basis[:, b] @ g @ dV)
    return ShapeSample((cid, x), V, basis, S)


@dataclass
class EvolutionReport:
    s: np.ndarray
    tr: np.ndarray
    det: np.ndarray
    dtr: np.ndarray
    residual: np.ndarray

    @property
    def worst(self) -> float:
        return float(np.max(np.abs(self.residual)))


def evolution_residual(atlas: Atlas, field: LineField, p: Point, T: float,
                       n_samples: int = 31, h: float = 1e-2) -> EvolutionReport:
    """Check ``d/ds tr S = (tr S)^2 - 2 det S`` along the integral curve of
    the field through p for ``s`` in ``[0, T]``.

    The curve is the geodesic tangent to the field (its integral curves are
    geodesics); V is oriented along the velocity, and ``d/ds tr S`` uses a
    five-point stencil of spacing ``h``.
    """
    p = atlas.locate(*p)
    V = field.unit(p)
    s = np.linspace(0.0, T, n_samples)
    offsets = np.array([-2, -1, 1, 2]) * h
    fwd_times = sorted(set(np.round(np.concatenate([s, (s[:, None] + offsets).ravel()]), 12)))
    fwd_times = [t for t in fwd_times if t > 0]
    back_times = [2 * h, h]
    fwd = integrate_flow(atlas, p, V, max(fwd_times), t_eval=fwd_times)
    back = integrate_flow(atlas, p, -V, 2 * h, t_eval=back_times)
    pos = {}
    for i, t in enumerate(fwd.t):
        pos[round(float(t), 12)] = (fwd.chart[i], fwd.x[i], fwd.v[i])
    for i, t in enumerate(back.t):
        pos[round(-float(t), 12)] = (back.chart[i], back.x[i], -back.v[i])
    pos[0.0] = (p[0], p[1], V)

    def trace_at(t):
        cid, x, vel = pos[round(float(t), 12)]
        return shape_operator(atlas, field, (cid, x), ref=vel)

    trs, dets, dtr = [], [], []
    for si in s:
        sh = trace_at(si)
        trs.append(sh.tr)
        dets.append(sh.det)
        vals = [trace_at(si + o).tr for o in offsets]
        dtr.append((vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h))
    trs, dets, dtr = map(np.array, (trs, dets, dtr))
    return EvolutionReport(s, trs, dets, dtr, dtr - (trs ** 2 - 2 * dets))


def totally_geodesic_residual(atlas: Atlas, field: LineField, points: Sequence[Point],
                              n_dirs: int = 8, tau: float = 1e-2, seed: int = 0) -> float:
    """Largest normalised rate ``|d/dt g(gamma', V)|`` at t = 0 over geodesics
    fired in directions Z orthogonal to the field.

    The rate equals ``|g(nabla_Z Z, V)| = |g(S Z, Z)|`` and vanishes for all Z
    exactly when the orthogonal distribution is totally geodesic.  It is
    estimated from the geodesics of Z and -Z at time ``tau``: the rate is
    even in Z while the second-order term is odd, so their mean cancels it.
    """
    worst = 0.0
    for k, (cid, x) in enumerate(points):
        cid, x = atlas.locate(cid, x)
        g = metric_at(atlas.chart(cid), x)
        V0 = field.unit((cid, x))
        basis = orthonormal_complement(g, V0)
        rng = np.random.default_rng([seed, k])
        for ang in rng.uniform(0, np.pi, n_dirs):
            Z = np.cos(ang) * basis[:, 0] + np.sin(ang) * basis[:, 1]
            q = []
            for sgn in (1.0, -1.0):
                tr = integrate_flow(atlas, (cid, x), sgn * Z, tau, t_eval=[tau])
                gx = tr.metric(-1)
                V = field.unit(tr.end, _transport_ref(atlas, (cid, x), sgn * Z, tau, V0))
                q.append(float(tr.v[-1] @ gx @ V))
            worst = max(worst, abs(q[0] + q[1]) / (2 * tau))
    return worst


def _transport_ref(atlas, p, v, T, w):
    tr = integrate_flow(atlas, p, v, T, W0=np.asarray(w, float).reshape(3, 1), t_eval=[T])
    return tr.W[-1][:, 0]


# ---------------------------------------------------------------------------
# transported line field from a base point


@dataclass
class XpSample:
    direction: np.ndarray   # unit initial velocity at the base point
    t: float
    chart: str
    x: np.ndarray
    V: np.ndarray           # transported xi


def _sphere_directions(g, n, seed):
    F = gram_schmidt(g)
    return [F @ u for u in fibonacci_sphere(n, seed)]


def build_Xp(atlas: Atlas, p: Point, T: float, n_dirs: int = 32, n_times: int = 4,
             seed: int = 0, xi=None) -> LineField:
    """Line field spanned by the parallel transport of the distinguished
    direction ``xi`` of p along the radial geodesics from p.

    Samples are taken at ``n_times`` radii in ``(0, T]`` along ``n_dirs``
    seeded directions; geodesics leaving the atlas are excluded and counted.
    The returned field evaluates other points by inverting the exponential
    map (Newton iteration started from the nearest sample).
    """
    cid, x = atlas.locate(*p)
    chart = atlas.chart(cid)
    g = metric_at(chart, x)
    if xi is None:
        pc = classify_point(chart, x, strict=False)
        if pc.tag != NONISOTROPIC:
            raise MixedRegion(f"base point classifies as {pc.tag}; a nonisotropic point is required")
        xi = pc.direction
    xi = normalize(g, np.asarray(xi, float))
    times = T * np.arange(1, n_times + 1) / n_times
    samples, excluded = [], 0
    for w in _sphere_directions(g, n_dirs, seed):
        try:
            tr = integrate_flow(atlas, (cid, x), w, T, W0=xi.reshape(3, 1), t_eval=times)
        except (LeftAtlas, OutOfDomain):
            excluded += 1
            continue
        for i in range(len(tr.t)):
            samples.append(XpSample(w, float(tr.t[i]), tr.chart[i], tr.x[i], tr.W[i][:, 0]))
    field_ = LineField(atlas, None, {"kind": FROM_TRANSPORT, "base": (cid, x.tolist()),
                                     "xi": xi.tolist(), "horizon": T},
                       samples=[(s.chart, s.x, s.V) for s in samples], excluded=excluded)
    base = (cid, x)

    def direction(c2, y):
        return xp_value(atlas, base, xi, (c2, np.asarray(y, float)), samples)

    field_.direction_fn = direction
    field_.xp_samples = samples
    return field_


def xp_value(atlas: Atlas, base: Point, xi, point: Point, samples: List[XpSample] = (),
             tol_newton: float = 1e-12, max_iter: int = 30) -> np.ndarray:
    """Transport of ``xi`` along the radial geodesic from ``base`` to
    ``point`` (inverse exponential map by Newton iteration)."""
    cid0, x0 = base
    g0 = metric_at(atlas.chart(cid0), x0)
    cid, y = point
    chart = atlas.chart(cid)
    if cid == cid0 and np.allclose(_chart_diff(chart, y, x0), 0.0, atol=1e-14):
        return np.asarray(xi, float)
    guess = None
    best = np.inf
    for s in samples:
        if s.chart != cid:
            continue
        d = np.linalg.norm(_chart_diff(chart, s.x, y))
        if d < best:
            best, guess = d, s.direction * s.t
    if guess is None:
        if cid != cid0:
            raise OutOfDomain(f"no starting guess for inverting the exponential map at {cid!r}")
        guess = _chart_diff(chart, y, x0)

    def expmap(vec, W0=None):
        r = norm(g0, vec)
        tr = integrate_flow(atlas, (cid0, x0), vec / r, r, W0=W0, t_eval=[r])
        end = tr.end
        if end[0] != cid:
            yy, _ = atlas.express(end, cid)
        else:
            yy = end[1]
        return yy, tr

    vec = np.asarray(guess, float)
    for _ in range(max_iter):
        yy, _ = expmap(vec)
        res = _chart_diff(chart, yy, y)
        if np.max(np.abs(res)) < tol_newton:
            break
        h = 1e-6 * max(norm(g0, vec), 1e-3)
        Jm = np.column_stack([_chart_diff(chart, expmap(vec + h * e)[0],
                                          expmap(vec - h * e)[0]) / (2 * h)
                              for e in np.eye(3)])
        vec = vec - np.linalg.solve(Jm, res)
    _, tr = expmap(vec, np.asarray(xi, float).reshape(3, 1))
    V = tr.W[-1][:, 0]
    if tr.chart[-1] != cid:
        _, V = atlas.express(tr.end, cid, V.reshape(3, 1))
        V = V[:, 0]
    return V


# ---------------------------------------------------------------------------
# transport along general curves


def transport_segment(atlas: Atlas, cid: str, a, b, W0, rtol: float = 1e-11):
    """Parallel transport of the columns of W0 along the coordinate segment
    from a to b (b may be unwrapped across a periodic coordinate)."""
    chart = atlas.chart(cid)
    a, b = np.asarray(a, float), np.asarray(b, float)
    delta = b - a
    gam = chart.christoffel_fn or (lambda x: christoffel_at(chart, x, numeric=True))
    W0 = np.asarray(W0, float)
    m = W0.shape[1]

    def rhs(s, y):
        x = chart.wrap(a + s * delta)
        G = np.asarray(gam(x), float)
        return (-np.einsum("kij,i,jm->km", G, delta, y.reshape(3, m))).ravel()

    _, ys = solve(rhs, 0.0, W0.ravel(), 1.0, rtol=rtol, atol=rtol, h_max=0.05, t_eval=[1.0])
    return chart.wrap(b), ys[-1].reshape(3, m)


def transport_spline(atlas: Atlas, cid: str, s, xs, W0, n_sub: int = 8):
    """Parallel transport along the cubic spline through the chart points
    ``xs`` at parameters ``s`` (classical RK4 with ``n_sub`` steps per knot
    interval)."""
    chart = atlas.chart(cid)
    xs = np.array(xs, float)
    for i in range(1, len(xs)):
        xs[i] = xs[i - 1] + _chart_diff(chart, xs[i], xs[i - 1])
    sp = CubicSpline(s, xs, axis=0)
    dsp = sp.derivative()
    gam = chart.christoffel_fn or (lambda x: christoffel_at(chart, x, numeric=True))
    W = np.asarray(W0, float).copy()

    def f(t, W):
        G = np.asarray(gam(chart.wrap(sp(t))), float)
        return -np.einsum("kij,i,jm->km", G, dsp(t), W)

    for i in range(len(s) - 1):
        h = (s[i + 1] - s[i]) / n_sub
        t = s[i]
        for _ in range(n_sub):
            k1 = f(t, W)
            k2 = f(t + h / 2, W + h / 2 * k1)
            k3 = f(t + h / 2, W + h / 2 * k2)
            k4 = f(t + h, W + h * k3)
            W = W + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
    return W


def parallel_residual(field: LineField, curves: Sequence[GeodesicTrace]) -> float:
    """Largest Frobenius deviation between the transported projector of the
    field and the field's own projector at the end of each curve."""
    worst = 0.0
    for tr in curves:
        u0 = field.unit(tr.start)
        moved = integrate_flow(tr.atlas, tr.start, tr.v0, tr.t_end, W0=u0.reshape(3, 1),
                               t_eval=[tr.t_end], step_ctrl=tr.step_ctrl)
        end = moved.end
        g = moved.metric(-1)
        P1 = frame_projector(g, moved.W[-1][:, 0])
        P2 = frame_projector(g, field.unit(end))
        worst = max(worst, float(np.linalg.norm(P1 - P2)))
    return worst


@dataclass
class XpParallelReport:
    n_arcs: int
    excluded: int
    residual: float
    max_angle_to_L: float
    n_compared_to_L: int


def xp_parallel_check(atlas: Atlas, p: Point, T: float, n_arcs: int = 16,
                      arc_length: float = 0.6, n_knots: int = 25, seed: int = 0,
                      xi=None, compare_L: bool = True) -> XpParallelReport:
    """Parallelism of the transported field along exponential arcs.

    Each arc is ``s -> exp_p(t c(s))`` for a great-circle arc ``c`` of the
    unit sphere; the field is known exactly at every knot from the radial
    transports, and the value at the first knot is parallel transported
    along the spline through the knots.  Also records the angle to the
    kernel line at nonisotropic knots.
    """
    cid, x = atlas.locate(*p)
    chart = atlas.chart(cid)
    g = metric_at(chart, x)
    if xi is None:
        pc = classify_point(chart, x, strict=False)
        if pc.tag != NONISOTROPIC:
            raise MixedRegion(f"base point classifies as {pc.tag}; a nonisotropic point is required")
        xi = pc.direction
    xi = normalize(g, np.asarray(xi, float))
    F = gram_schmidt(g)
    worst, excluded, angle_L, n_L = 0.0, 0, 0.0, 0
    Lfn = kernel_direction(atlas)
    for k in range(n_arcs):
        rng = np.random.default_rng([seed, k])
        u0 = rng.normal(size=3)
        u0 /= np.linalg.norm(u0)
        d = rng.normal(size=3)
        d -= (d @ u0) * u0
        d /= np.linalg.norm(d)
        t = T * rng.uniform(0.3, 1.0)
        s = np.linspace(0.0, arc_length, n_knots)
        knots = []
        try:
            for si in s:
                w = F @ (np.cos(si) * u0 + np.sin(si) * d)
                tr = integrate_flow(atlas, (cid, x), w, t, W0=xi.reshape(3, 1), t_eval=[t])
                knots.append((tr.chart[-1], tr.x[-1], tr.W[-1][:, 0]))
        except (LeftAtlas, OutOfDomain):
            excluded += 1
            continue
        c_ref = knots[0][0]
        pts, Vs = [], []
        ok = True
        for c2, y, V in knots:
            if c2 != c_ref:
                got = atlas.try_express((c2, y), c_ref, V.reshape(3, 1))
                if got is None:
                    ok = False
                    break
                y, V = got[0], got[1][:, 0]
            pts.append(y)
            Vs.append(V)
        if not ok:
            excluded += 1
            continue
        W = transport_spline(atlas, c_ref, s, pts, Vs[0].reshape(3, 1))
        gend = metric_at(atlas.chart(c_ref), pts[-1])
        worst = max(worst, float(np.linalg.norm(frame_projector(gend, W[:, 0])
                                                - frame_projector(gend, Vs[-1]))))
        if compare_L:
            for (c2, y, V) in knots[::6]:
                try:
                    L = Lfn(c2, y)
                except MixedRegion:
                    continue
                n_L += 1
                angle_L = max(angle_L, line_angle_between(metric_at(atlas.chart(c2), y), V, L))
    return XpParallelReport(n_arcs, excluded, worst, angle_L, n_L)


# ---------------------------------------------------------------------------
# loops and holonomy


@dataclass(frozen=True)
class Leg:
    """Coordinate segment in one chart from ``start`` to ``end`` (``end``
    may be unwrapped across periodic coordinates)."""

    chart: str
    start: tuple
    end: tuple


@dataclass(frozen=True)
class Loop:
    name: str
    legs: Tuple[Leg, ...]

    @property
    def base(self) -> Point:
        return self.legs[0].chart, np.asarray(self.legs[0].start, float)


def holonomy(atlas: Atlas, loop: Loop, close_tol: float = 1e-8) -> np.ndarray:
    """Holonomy of ``loop`` as an orthogonal matrix in the Gram-Schmidt frame
    at the base point."""
    cid0, x0 = loop.base
    ch0 = atlas.chart(cid0)
    x0 = ch0.wrap(x0)
    F = gram_schmidt(metric_at(ch0, x0))
    W = F.copy()
    cur_c, cur_x = cid0, x0
    for leg in loop.legs:
        start = atlas.chart(leg.chart).wrap(np.asarray(leg.start, float))
        if leg.chart != cur_c:
            y, W = atlas.express((cur_c, cur_x), leg.chart, W)
        else:
            y = cur_x
        if np.max(np.abs(_chart_diff(atlas.chart(leg.chart), y, start))) > close_tol:
            raise ValueError(f"loop {loop.name!r}: leg in {leg.chart!r} does not start where "
                             f"the previous leg ended ({y} vs {start})")
        cur_x, W = transport_segment(atlas, leg.chart, start, leg.end, W)
        cur_c = leg.chart
    if cur_c != cid0:
        cur_x, W = atlas.express((cur_c, cur_x), cid0, W)
    if np.max(np.abs(_chart_diff(ch0, cur_x, x0))) > close_tol:
        raise ValueError(f"loop {loop.name!r} does not close")
    return F.T @ metric_at(ch0, x0) @ W


@dataclass
class SplittingResult:
    """Outcome of the common-fixed-line search.

    ``projector`` is None when no line is fixed within tolerance.
    ``residual`` is the largest sine of the angle by which a holonomy moves
    the best line; ``fixed_dim`` the dimension of the common fixed space of
    the holonomies acting on vectors.
    """

    projector: Optional[np.ndarray]
    residual: float
    best: np.ndarray
    fixed_dim: int
    loop_residuals: Dict[str, float]
    holonomies: Dict[str, np.ndarray]


def _line_residuals(H: Sequence[np.ndarray], v) -> np.ndarray:
    v = v / np.linalg.norm(v)
    return np.array([np.sqrt(max(1.0 - float(v @ h @ v) ** 2, 0.0)) for h in H])


def _rotation_axis(H):
    lam, U = np.linalg.eig(H)
    i = int(np.argmin(np.abs(lam - 1.0)))
    return np.real(U[:, i])


def splitting_detect(atlas: Atlas, loops: Sequence[Loop], tol_split: float = 1e-6,
                     fixed_tol: float = 1e-8) -> SplittingResult:
    """Search for a line fixed by the holonomy of every loop.

    The averaged constraint operator on traceless symmetric matrices gives
    one candidate, eigenvectors of ``sum (I -+ H)^T (I -+ H)`` and rotation
    axes give more, and the best is refined by minimising
    ``sum_i (1 - (v^T H_i v)^2)`` over the unit sphere.
    """
    Hs = {lp.name: holonomy(atlas, lp) for lp in loops}
    H = list(Hs.values())
    I3 = np.eye(3)
    fixed_op = sum((I3 - h).T @ (I3 - h) for h in H)
    lam_fixed, U_fixed = np.linalg.eigh(fixed_op)
    fixed_dim = int(np.sum(lam_fixed < fixed_tol * max(1, len(H))))
    cands = [U_fixed[:, i] for i in range(3)]
    flip_op = sum((I3 + h).T @ (I3 + h) for h in H)
    cands += [np.linalg.eigh(flip_op)[1][:, i] for i in range(3)]
    cands += [_rotation_axis(h) for h in H]
    # averaged conjugation action on traceless symmetric matrices
    basis = []
    for i in range(3):
        for j in range(i, 3):
            E = np.zeros((3, 3))
            E[i, j] = E[j, i] = 1.0
            basis.append(E)
    basis = [b - np.trace(b) / 3 * I3 for b in basis]
    B = np.array([b.ravel() for b in basis]).T
    Q, _ = np.linalg.qr(B)
    Q = Q[:, :5]
    A = sum(np.eye(5) - Q.T @ np.kron(h, h) @ Q for h in H)
    A = 0.5 * (A + A.T)
    X = (Q @ np.linalg.eigh(A)[1][:, 0]).reshape(3, 3)
    cands += list(np.linalg.eigh(0.5 * (X + X.T))[1].T)

    def obj(v):
        return float(np.sum(_line_residuals(H, v) ** 2))

    best, best_res = None, np.inf
    for c in cands:
        c = np.real(np.asarray(c, float))
        if np.linalg.norm(c) < 1e-12:
            continue
        r = minimize(obj, c / np.linalg.norm(c), method="BFGS", options={"gtol": 1e-14})
        v = r.x / np.linalg.norm(r.x)
        res = float(np.max(_line_residuals(H, v))) if H else 0.0
        if res < best_res - 1e-15:
            best, best_res = v, res
    if best is None:
        best, best_res = I3[:, 0], 0.0
    elif H and best_res >= tol_split:
        # the least-squares optimum need not minimise the largest residual
        grid = fibonacci_sphere(400, seed=0, jitter=0.0)
        start = min(grid, key=lambda v: float(np.max(_line_residuals(H, v))))
        r = minimize(lambda v: float(np.max(_line_residuals(H, v))), start,
                     method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12})
        v = r.x / np.linalg.norm(r.x)
        res = float(np.max(_line_residuals(H, v)))
        if res < best_res:
            best, best_res = v, res
    per = dict(zip(Hs.keys(), _line_residuals(H, best).tolist()))
    proj = np.outer(best, best) if best_res < tol_split else None
    return SplittingResult(proj, best_res, best, fixed_dim, per, Hs)


# ---------------------------------------------------------------------------
# loop libraries


def _coordinate_circle(chart, center, k, name):
    end = list(center)
    end[k] = center[k] + chart.periods[k]
    return Loop(name, (Leg(chart.id, tuple(center), tuple(end)),))


def _rectangle(cid, x0, du, dv, name):
    x0 = np.asarray(x0, float)
    pts = [x0, x0 + du, x0 + du + dv, x0 + dv, x0]
    return Loop(name, tuple(Leg(cid, tuple(a), tuple(b)) for a, b in zip(pts[:-1], pts[1:])))


def _graph_loops(atlas: Atlas):
    """Base in the ramp of piece 0 where the profile slope is 3/4; a circle
    around the base angle, a circle around the fiber, and theta loops that
    cross each gluing of piece 0 and circle the ramp of the next piece."""
    info = atlas.meta["vertex_info"]
    desc = atlas.meta["graph"]
    prof0 = info[0]["profile"]
    rq = prof0.radius_for_slope(0.75)
    cid0 = info[0]["main"]
    base = np.array([rq, 0.1, 0.2])
    loops = [_coordinate_circle(atlas.chart(cid0), base, 1, "base-circle"),
             _coordinate_circle(atlas.chart(cid0), base, 2, "fiber-circle")]
    for tr in atlas.transitions_from(cid0):
        if tr.kind != "gluing":
            continue
        Rb = tr.params["src_boundary"]
        jv = tr.params["dst_vertex"]
        dst = atlas.chart(tr.dst)
        pb = np.array([Rb, base[1], base[2]])
        y = dst.wrap(tr.forward(pb))
        vj = desc.vertices[jv]
        if vj.kind == "disk":
            r_target = info[jv]["profile"].radius_for_slope(0.75)
        else:
            m = desc.collar
            r_target = m + 0.25 * (vj.length - 2 * m)
        inner = np.array([r_target, y[1], y[2]])
        circ_end = inner.copy()
        circ_end[1] += 1.0
        loops.append(Loop(f"theta-{tr.dst}", (
            Leg(cid0, tuple(base), tuple(pb)),
            Leg(tr.dst, tuple(y), tuple(inner)),
            Leg(tr.dst, tuple(inner), tuple(circ_end)),
            Leg(tr.dst, tuple(inner), tuple(y)),
            Leg(cid0, tuple(pb), tuple(base)),
        )))
    return loops


def _block_loops(atlas: Atlas):
    b1, b2 = atlas.meta["blocks"]
    prof = b1["profile"]
    rq = prof.radius_for_slope(0.75)
    d, c0 = b1["d"], b1["c0"]
    n_mid = 0.35
    rho_mid = d - n_mid - 2 * c0
    base = np.array([rq, np.pi, 0.0])
    out = np.array([rho_mid, np.pi, 0.0])
    f1 = np.array([0.0, n_mid, 0.0])
    f1b = np.array([0.0, 0.0, 0.0])
    f2b = np.array([0.0, 0.0, 0.0])
    f2 = np.array([0.0, n_mid, 0.0])
    p2_out = np.array([rho_mid, np.pi, 0.0])
    p2_in = np.array([rq, np.pi, 0.0])
    circ = p2_in.copy()
    circ[1] += 2 * np.pi
    base_circle = base.copy()
    base_circle[1] += 2 * np.pi
    return [
        Loop("base-circle", (Leg(b1["polar"], tuple(base), tuple(base_circle)),)),
        Loop("theta-block2", (
            Leg(b1["polar"], tuple(base), tuple(out)),
            Leg(b1["fermi"], tuple(f1), tuple(f1b)),
            Leg(b2["fermi"], tuple(f2b), tuple(f2)),
            Leg(b2["polar"], tuple(p2_out), tuple(p2_in)),
            Leg(b2["polar"], tuple(p2_in), tuple(circ)),
            Leg(b2["polar"], tuple(p2_in), tuple(p2_out)),
            Leg(b2["fermi"], tuple(f2), tuple(f2b)),
            Leg(b1["fermi"], tuple(f1b), tuple(f1)),
            Leg(b1["polar"], tuple(out), tuple(base)),
        )),
    ]


def default_loops(atlas: Atlas) -> List[Loop]:
    """Loop library used for holonomy checks on the shipped atlases."""
    name = atlas.name
    if "graph" in atlas.meta:
        return _graph_loops(atlas)
    if "blocks" in atlas.meta:
        return _block_loops(atlas)
    if name in ("torus3",):
        ch = next(iter(atlas.charts.values()))
        c = np.array([0.3, 0.4, 0.5]) * np.array(ch.periods)
        return [_coordinate_circle(ch, c, k, f"circle-{k}") for k in range(3)]
    cid = next(iter(atlas.charts))
    if name == "prodH2R":
        return [_rectangle(cid, [0.0, 0.0, 0.0], [0.6, 0, 0], [0, 0.8, 0], "tx-rectangle"),
                _rectangle(cid, [0.0, 0.0, 0.0], [0.3, 0, 0.2], [0, 0.5, 0.3], "tilted-rectangle")]
    return [_rectangle(cid, [0.1, 0.1, 0.0], [0.5, 0, 0], [0, 0.5, 0], "xy-rectangle"),
            _rectangle(cid, [0.1, 0.1, 0.0], [0.4, 0, 0.3], [0, 0.6, -0.2], "tilted-rectangle")]


def connecting_geodesic_angle(atlas: Atlas, T: float = None) -> Tuple[float, GeodesicTrace]:
    """Angle between the transport of the piece-0 line along a radial
    geodesic into the next piece and that piece's own line at the end.

    For graph atlases the geodesic runs from the piece-0 ramp (slope 3/4)
    outward through the first gluing to the ramp of the adjacent piece.  For
    the block atlas it runs from the ramp of block 1 through the gluing to
    the ramp of block 2.
    """
    if "graph" in atlas.meta:
        info = atlas.meta["vertex_info"]
        desc = atlas.meta["graph"]
        cid0 = info[0]["main"]
        rq = info[0]["profile"].radius_for_slope(0.75)
        tr_g = next(t for t in atlas.transitions_from(cid0) if t.kind == "gluing")
        jv = tr_g.params["dst_vertex"]
        vj = desc.vertices[jv]
        rj = info[jv]["profile"].radius_for_slope(0.75) if vj.kind == "disk" else vj.length / 2
        Rb, Rc = tr_g.params["src_boundary"], tr_g.params["dst_boundary"]
        T = (Rb - rq) + abs(Rc - rj) if T is None else T
        p = (cid0, np.array([rq, 0.1, 0.2]))
        v = np.array([1.0, 0.0, 0.0])
    else:
        b1 = atlas.meta["blocks"][0]
        rq = b1["profile"].radius_for_slope(0.75)
        d, c0 = b1["d"], b1["c0"]
        u_q = rq + 2 * c0
        T = 2 * (d - u_q) if T is None else T
        p = (b1["polar"], np.array([rq, np.pi, 0.0]))
        v = np.array([1.0, 0.0, 0.0])
    Lfn = kernel_direction(atlas)
    xi = Lfn(*p)
    g = metric_at(atlas.chart(p[0]), p[1])
    xi = normalize(g, xi)
    tr = integrate_flow(atlas, p, v, T, W0=xi.reshape(3, 1), t_eval=[T])
    end = tr.end
    ge = tr.metric(-1)
    return line_angle_between(ge, tr.W[-1][:, 0], Lfn(*end)), tr
