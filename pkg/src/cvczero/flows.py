"""Geodesics, parallel transport and Jacobi fields across charts; rank estimation.

All flows share one driver, :func:`integrate_flow`.  Its state is the
position and velocity, an optional block of transported vectors, and optional
auxiliary components that do not depend on the chart (for example Jacobi
field components in a parallel frame).  Chart handoffs happen when a
transition trigger becomes positive; the crossing time is localised by
bisection and the step is re-run to that time before the coordinates are
changed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import tolerances as tol
from .atlas import Atlas, Point
from .errors import LeftAtlas, OutOfDomain, StepUnderflow
from .integrate import dopri_step, error_norm, next_step
from .metric_core import (CurvatureData, christoffel_at, curvature_operator_at,
                          metric_at, norm, orthonormal_complement)

BISECT_TOL = 1e-10
DEFAULT_STEP_CTRL = 1e-10


@dataclass
class GeodesicTrace:
    """Samples of a unit-speed geodesic, possibly crossing several charts.

    ``W`` holds the parallel-transported vectors (3 x m per sample) and
    ``aux`` any auxiliary components integrated alongside.  ``events`` lists
    chart transitions as dicts ``{t, src, dst}``.  ``truncated`` is set when
    the geodesic left the atlas before the requested time; ``t_end`` is the
    last time reached.
    """

    atlas: Atlas
    t: np.ndarray
    chart: List[str]
    x: np.ndarray
    v: np.ndarray
    W: Optional[np.ndarray] = None
    aux: Optional[np.ndarray] = None
    events: list = field(default_factory=list)
    start: Optional[Point] = None
    v0: Optional[np.ndarray] = None
    W0: Optional[np.ndarray] = None
    T: float = 0.0
    t_end: float = 0.0
    truncated: bool = False
    step_ctrl: float = DEFAULT_STEP_CTRL

    def __len__(self):
        return len(self.t)

    @property
    def end(self) -> Point:
        return self.chart[-1], self.x[-1]

    def point(self, i) -> Point:
        return self.chart[i], self.x[i]

    def metric(self, i) -> np.ndarray:
        return metric_at(self.atlas.chart(self.chart[i]), self.x[i])

    def speed_drift(self) -> float:
        return max(abs(norm(self.metric(i), self.v[i]) - 1.0) for i in range(len(self)))

    def position_at(self, s: float) -> Point:
        """Cubic Hermite interpolation of the position between samples that
        lie in the same chart."""
        i = int(np.searchsorted(self.t, s))
        if i == 0:
            return self.point(0)
        if i >= len(self.t):
            return self.point(-1)
        j = i - 1
        if self.chart[i] != self.chart[j]:
            return self.point(j) if s - self.t[j] < self.t[i] - s else self.point(i)
        h = self.t[i] - self.t[j]
        u = (s - self.t[j]) / h
        x0, x1 = self.x[j], self.x[i].copy()
        ch = self.atlas.chart(self.chart[i])
        for k, per in enumerate(ch.periods):
            if per is not None:
                x1[k] = x0[k] + ((x1[k] - x0[k] + per / 2) % per - per / 2)
        h00 = 2 * u ** 3 - 3 * u ** 2 + 1
        h10 = u ** 3 - 2 * u ** 2 + u
        h01 = -2 * u ** 3 + 3 * u ** 2
        h11 = u ** 3 - u ** 2
        x = h00 * x0 + h10 * h * self.v[j] + h01 * x1 + h11 * h * self.v[i]
        return self.chart[i], ch.wrap(x)


@dataclass
class RankWitness:
    """Result of a rank estimate along a geodesic.

    ``min_singular`` is the smallest normalised singular value of the stacked
    Jacobi constraints; ``best`` is the corresponding unit vector even when
    no kernel was detected.  ``horizon`` is the time actually certified in
    each direction.
    """

    v: np.ndarray
    estimated_rank: int
    witness: Optional[np.ndarray]
    min_singular: float
    best: np.ndarray
    singular_values: np.ndarray
    horizon: float
    truncated: bool


# ---------------------------------------------------------------------------
# curvature and right-hand sides


def curvature_fast(chart, x) -> CurvatureData:
    """Curvature at a point, preferring the chart's closed form."""
    return curvature_operator_at(chart, x, check_symmetry=False)


def _make_rhs(chart, m: int, aux_fn):
    gam = chart.christoffel_fn
    if gam is None:
        gam = lambda x: christoffel_at(chart, x, numeric=True)

    def rhs(t, y):
        x = y[:3]
        v = y[3:6]
        G = np.asarray(gam(x), dtype=float)
        Gv = np.einsum("kij,i->kj", G, v)
        dy = np.empty_like(y)
        dy[:3] = v
        dy[3:6] = -Gv @ v
        W = None
        if m:
            W = y[6:6 + 3 * m].reshape(3, m)
            dy[6:6 + 3 * m] = (-Gv @ W).ravel()
        if aux_fn is not None:
            dy[6 + 3 * m:] = aux_fn(chart, t, x, v, W, y[6 + 3 * m:])
        return dy

    return rhs


def _event_value(atlas: Atlas, cid: str, x):
    """Largest trigger value at x and the transition achieving it, together
    with the domain margin."""
    chart = atlas.chart(cid)
    best, which = -np.inf, None
    if np.all(np.isfinite(x)):
        for tr in atlas.triggers_from(cid):
            val = float(tr.trigger(x))
            if val > 0 and not tr.applies(x):
                continue
            if val > best:
                best, which = val, tr
        margin = chart.margin(x)
    else:
        margin = -np.inf
    return best, which, margin


def _apply(tr, atlas, y, m):
    x = y[:3]
    J = np.asarray(tr.jacobian(x), dtype=float)
    new = y.copy()
    new[:3] = atlas.chart(tr.dst).wrap(tr.forward(x))
    new[3:6] = J @ y[3:6]
    if m:
        new[6:6 + 3 * m] = (J @ y[6:6 + 3 * m].reshape(3, m)).ravel()
    return new


def _wrap(chart, y):
    if any(p is not None for p in chart.periods):
        y = y.copy()
        y[:3] = chart.wrap(y[:3])
    return y


def integrate_flow(atlas: Atlas, start: Point, v0, T: float, W0=None,
                   aux0=None, aux_fn: Optional[Callable] = None,
                   t_eval: Optional[Sequence[float]] = None,
                   step_ctrl: float = DEFAULT_STEP_CTRL, h_max: float = 0.1,
                   h_min: float = 1e-13, max_handoffs: int = 10000) -> GeodesicTrace:
    """Integrate the geodesic through ``start`` with velocity ``v0`` for time T.

    ``t_eval`` times are hit exactly; when omitted every accepted step is
    recorded.  Raises :class:`LeftAtlas` (with ``.partial`` holding the trace
    so far) if the geodesic exits every chart before T.
    """
    cid, x0 = start
    chart = atlas.chart(cid)
    x0 = chart.wrap(np.asarray(x0, dtype=float))
    chart.check(x0)
    v0 = np.asarray(v0, dtype=float)
    W0 = None if W0 is None else np.asarray(W0, dtype=float).reshape(3, -1)
    m = 0 if W0 is None else W0.shape[1]
    naux = 0 if aux0 is None else len(aux0)
    parts = [x0, v0]
    if m:
        parts.append(W0.ravel())
    if naux:
        parts.append(np.asarray(aux0, dtype=float))
    y = np.concatenate(parts)

    stops = sorted(set(float(s) for s in t_eval)) if t_eval is not None else []
    record_all = t_eval is None
    stops = [s for s in stops if 0 < s <= T]
    if not stops or stops[-1] < T:
        stops.append(float(T))
    want_zero = record_all or (t_eval is not None and any(abs(s) < 1e-15 for s in t_eval))

    ts, charts, ys, events = [], [], [], []

    def record(t, c, yy):
        ts.append(t)
        charts.append(c)
        ys.append(yy.copy())

    def result(truncated, t_end):
        Y = np.array(ys) if ys else np.zeros((0, len(y)))
        return GeodesicTrace(
            atlas=atlas, t=np.array(ts), chart=list(charts), x=Y[:, :3], v=Y[:, 3:6],
            W=Y[:, 6:6 + 3 * m].reshape(-1, 3, m) if m else None,
            aux=Y[:, 6 + 3 * m:] if naux else None, events=events,
            start=(start[0], x0), v0=v0, W0=W0, T=float(T), t_end=float(t_end),
            truncated=truncated, step_ctrl=step_ctrl)

    def settle(t, c, yy):
        """Apply any transition whose trigger is already positive."""
        for _ in range(8):
            val, tr, margin = _event_value(atlas, c, yy[:3])
            if tr is not None and val > 0:
                yy = _apply(tr, atlas, yy, m)
                events.append({"t": t, "src": c, "dst": tr.dst, "kind": tr.kind})
                c = tr.dst
                continue
            if margin < 0:
                raise OutOfDomain(f"point {yy[:3]} outside chart {c!r}")
            return c, yy
        raise StepUnderflow("transition cycle detected")

    t = 0.0
    cid, y = settle(0.0, cid, y)
    if want_zero:
        record(0.0, cid, y)
    rhs = _make_rhs(atlas.chart(cid), m, aux_fn)
    k1 = None
    h = min(h_max, T) if T > 0 else 0.0
    idx = 0
    handoffs = 0
    while idx < len(stops) and T > 0:
        target = stops[idx]
        step = min(h, target - t)
        hit = step >= target - t - 1e-14
        if hit:
            step = target - t
        if step <= 0:
            idx += 1
            continue
        y_new, err, k_new = dopri_step(rhs, t, y, step, k1)
        en = error_norm(err, y, y_new, step_ctrl, step_ctrl)
        if not en <= 1.0:
            h = next_step(step, en if np.isfinite(en) else 1e10)
            if h < h_min:
                raise StepUnderflow(f"step size underflow at t={t:.6g} in chart {cid!r}")
            continue
        val, tr, margin = _event_value(atlas, cid, y_new[:3])
        if val > 0 or margin < 0:
            lo, hi = 0.0, step
            y_hi = y_new
            while hi - lo > BISECT_TOL:
                mid = 0.5 * (lo + hi)
                y_mid = dopri_step(rhs, t, y, mid, k1)[0]
                vm, _, mm = _event_value(atlas, cid, y_mid[:3])
                if vm > 0 or mm < 0:
                    hi, y_hi = mid, y_mid
                else:
                    lo = mid
            t_star = t + hi
            val, tr, margin = _event_value(atlas, cid, y_hi[:3])
            if tr is not None and val > 0:
                y = _apply(tr, atlas, y_hi, m)
                events.append({"t": t_star, "src": cid, "dst": tr.dst, "kind": tr.kind})
                handoffs += 1
                if handoffs > max_handoffs:
                    raise StepUnderflow("too many chart handoffs")
                cid = tr.dst
                cid, y = settle(t_star, cid, y)
                rhs = _make_rhs(atlas.chart(cid), m, aux_fn)
                k1 = None
                t = t_star
                if record_all:
                    record(t, cid, y)
                if abs(t - target) < 1e-14:
                    if not record_all:
                        record(t, cid, y)
                    idx += 1
                continue
            exc = LeftAtlas(f"geodesic left chart {cid!r} at t={t_star:.6g}",
                            t_exit=t_star, chart=cid, point=y_hi[:3].copy())
            exc.partial = result(True, t)
            raise exc
        t = target if hit else t + step
        y = _wrap(atlas.chart(cid), y_new)
        k1 = k_new
        if hit:
            idx += 1
            record(t, cid, y)
        elif record_all:
            record(t, cid, y)
        h = min(h_max, next_step(step, en))
    return result(False, t)


# ---------------------------------------------------------------------------
# public operations


def _check_unit(atlas, p, v):
    g = metric_at(atlas.chart(p[0]), p[1])
    if abs(norm(g, np.asarray(v, float)) - 1.0) > tol.UNIT_TOL:
        raise ValueError("initial velocity must be a unit vector")
    return g


def geodesic(atlas: Atlas, p: Point, v, T: float, step_ctrl: float = DEFAULT_STEP_CTRL,
             t_eval=None, frame=None, h_max: float = 0.1) -> GeodesicTrace:
    """Unit-speed geodesic from ``p`` with initial velocity ``v`` up to time T.

    ``frame`` optionally gives vectors (3 x m, coordinate columns) to be
    transported along.
    """
    _check_unit(atlas, p, v)
    return integrate_flow(atlas, p, v, T, W0=frame, t_eval=t_eval,
                          step_ctrl=step_ctrl, h_max=h_max)


def _replay(trace: GeodesicTrace, W0=None, aux0=None, aux_fn=None) -> GeodesicTrace:
    t_eval = trace.t if len(trace.t) else None
    T = trace.t_end if trace.truncated else trace.T
    return integrate_flow(trace.atlas, trace.start, trace.v0, T, W0=W0, aux0=aux0,
                          aux_fn=aux_fn, t_eval=t_eval, step_ctrl=trace.step_ctrl)


def transport_along(trace: GeodesicTrace, W0) -> GeodesicTrace:
    """Re-integrate ``trace`` carrying the vectors ``W0`` (3 x m)."""
    return _replay(trace, W0=np.asarray(W0, float).reshape(3, -1))


def transport(trace: GeodesicTrace, w0) -> np.ndarray:
    """Parallel transport of ``w0`` (at the start) to the end of the trace.

    The result is in the coordinates of the chart of the final sample.
    """
    out = transport_along(trace, np.asarray(w0, float).reshape(3, 1))
    return out.W[-1][:, 0]


def frame_components(cd: CurvatureData, E: np.ndarray) -> np.ndarray:
    """Matrix ``K[a, b] = R(E_a, E_0, E_0, E_b)`` for the columns of E."""
    Ef = cd.coframe @ E
    B = np.cross(Ef.T, Ef[:, 0]).T
    return B.T @ cd.operator @ B


def _jacobi_aux(chart, t, x, v, W, a):
    cd = curvature_fast(chart, x)
    E = np.column_stack([v, W[:, 0], W[:, 1]])
    K = frame_components(cd, E)
    return np.concatenate([a[3:6], -K @ a[:3]])


@dataclass
class JacobiSamples:
    t: np.ndarray
    chart: List[str]
    J: np.ndarray
    Jp: np.ndarray
    trace: GeodesicTrace


def jacobi_evolve(trace: GeodesicTrace, J0, J0p) -> JacobiSamples:
    """Jacobi field along ``trace`` with initial value J0 and derivative J0p.

    The field is integrated through its components in a parallel frame
    ``{velocity, w1, w2}``, so chart changes need no special handling.
    """
    atlas = trace.atlas
    cid, x0 = trace.start
    g = metric_at(atlas.chart(cid), x0)
    v0 = trace.v0
    basis = orthonormal_complement(g, v0)
    E = np.column_stack([v0, basis])
    a0 = np.concatenate([E.T @ g @ np.asarray(J0, float), E.T @ g @ np.asarray(J0p, float)])
    out = _replay(trace, W0=basis, aux0=a0, aux_fn=_jacobi_aux)
    J = np.empty((len(out.t), 3))
    Jp = np.empty((len(out.t), 3))
    for i in range(len(out.t)):
        Ei = np.column_stack([out.v[i], out.W[i]])
        J[i] = Ei @ out.aux[i, :3]
        Jp[i] = Ei @ out.aux[i, 3:6]
    return JacobiSamples(out.t, out.chart, J, Jp, out)


def chebyshev_times(T: float, K: int) -> np.ndarray:
    k = np.arange(K)
    return np.sort(T * np.cos((2 * k + 1) * np.pi / (2 * K)))


def rank_estimate(atlas: Atlas, p: Point, v, T: float = 10.0, K: int = 33,
                  tol_rank: float = tol.RANK_TOL,
                  step_ctrl: float = DEFAULT_STEP_CTRL) -> RankWitness:
    """Estimate the rank of the geodesic through ``p`` with velocity ``v``.

    An orthonormal basis of the complement of ``v`` is transported over
    ``[-T, T]``; the Jacobi operator matrices at K Chebyshev times are stacked
    and their common numerical kernel gives the parallel Jacobi fields.
    Singular values are normalised by ``sqrt(K) (1 + max |M_k|)``.
    """
    v = np.asarray(v, float)
    g = _check_unit(atlas, p, v)
    basis = orthonormal_complement(g, v)
    times = chebyshev_times(T, K)
    blocks = []
    truncated = False
    reached = T
    for sign in (1.0, -1.0):
        sel = times[times * sign >= 0] * sign
        try:
            tr = integrate_flow(atlas, p, sign * v, T, W0=basis, t_eval=sel,
                                step_ctrl=step_ctrl)
        except LeftAtlas as exc:
            tr = exc.partial
            truncated = True
            reached = min(reached, exc.t_exit)
        for i in range(len(tr.t)):
            if sign < 0 and tr.t[i] == 0.0:
                continue
            cd = curvature_fast(atlas.chart(tr.chart[i]), tr.x[i])
            blocks.append(cd.jacobi_matrix(tr.v[i], tr.W[i]))
    M = np.vstack(blocks)
    scale = np.sqrt(len(blocks)) * (1.0 + max(np.linalg.norm(b, 2) for b in blocks))
    _, s, vt = np.linalg.svd(M)
    s = s / scale
    d = int(np.sum(s < tol_rank))
    best = basis @ vt[-1]
    witness = best if d >= 1 else None
    return RankWitness(v=v, estimated_rank=d + 1, witness=witness,
                       min_singular=float(s[-1]), best=best, singular_values=s,
                       horizon=float(reached), truncated=truncated)
