"""Embedded Dormand-Prince 5(4) stepping with step-size control.

Only the single-step kernel and a plain driver live here; the multi-chart
geodesic driver in :mod:`cvczero.flows` builds on :func:`dopri_step`.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import StepUnderflow

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
               187 / 2100, 1 / 40])
E = B5 - B4

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


def dopri_step(f: Callable, t: float, y: np.ndarray, h: float,
               k1: Optional[np.ndarray] = None):
    """One Dormand-Prince step.

    Returns ``(y_new, err, k_last)`` where ``err`` is the embedded error
    estimate vector and ``k_last`` is the derivative at the new point (first
    stage of the next step).  Non-finite stages propagate as NaN so that the
    caller can reject the step.
    """
    k = [f(t, y) if k1 is None else k1]
    for s in range(1, 7):
        ys = y + h * sum(a * kk for a, kk in zip(A[s], k) if a != 0.0)
        k.append(f(t + C[s] * h, ys))
    y_new = y + h * sum(b * kk for b, kk in zip(B5, k) if b != 0.0)
    err = h * sum(e * kk for e, kk in zip(E, k) if e != 0.0)
    return y_new, err, k[6]


def error_norm(err, y0, y1, rtol, atol) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    with np.errstate(invalid="ignore", over="ignore"):
        val = float(np.sqrt(np.mean((err / scale) ** 2)))
    return val if np.isfinite(val) else np.inf


def next_step(h: float, err: float) -> float:
    if err == 0.0:
        return h * MAX_FACTOR
    return h * min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** (-0.2)))


def solve(f: Callable, t0: float, y0, t1: float, rtol: float = 1e-10,
          atol: float = 1e-12, h0: Optional[float] = None, h_max: float = 0.1,
          h_min: float = 1e-14, t_eval: Optional[Sequence[float]] = None):
    """Integrate ``y' = f(t, y)`` from t0 to t1 (t1 > t0).

    Every time in ``t_eval`` is hit exactly by a step endpoint.  Returns
    ``(ts, ys)`` at the requested times (or at every accepted step when
    ``t_eval`` is None).
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    span = t1 - t0
    if span <= 0:
        raise ValueError("solve integrates forward in time only")
    h = min(h_max, span) if h0 is None else h0
    stops = sorted(set(float(s) for s in (t_eval if t_eval is not None else [])))
    stops = [s for s in stops if t0 < s <= t1]
    if t1 not in stops:
        stops.append(t1)
    out_t, out_y = [], []
    if t_eval is not None and any(abs(s - t0) < 1e-15 for s in t_eval):
        out_t.append(t0)
        out_y.append(y.copy())
    k1 = f(t, y)
    idx = 0
    while idx < len(stops):
        target = stops[idx]
        step = min(h, target - t)
        hit = step >= target - t - 1e-15
        if hit:
            step = target - t
        y_new, err, k_new = dopri_step(f, t, y, step, k1)
        en = error_norm(err, y, y_new, rtol, atol)
        if en <= 1.0:
            t = target if hit else t + step
            y = y_new
            k1 = k_new
            if hit:
                if t_eval is not None:
                    out_t.append(t)
                    out_y.append(y.copy())
                idx += 1
            elif t_eval is None:
                out_t.append(t)
                out_y.append(y.copy())
            h = min(h_max, next_step(step, en))
        else:
            h = next_step(step, en if np.isfinite(en) else 1e10)
            if h < h_min:
                raise StepUnderflow(f"step size underflow at t={t:.6g}")
    if t_eval is None:
        out_t.append(t)
        out_y.append(y.copy())
    return np.array(out_t), np.array(out_y)
