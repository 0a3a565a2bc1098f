"""Pointwise metric, Levi-Civita connection and curvature in a single chart.

Conventions
-----------
* ``Gamma[k, i, j]`` is the Christoffel symbol of the second kind, the
  coefficient of the k-th coordinate vector in the covariant derivative of the
  j-th coordinate vector along the i-th.
* ``R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z`` and the
  lowered tensor is ``R(X, Y, Z, W) = g(R(X, Y)Z, W)``.  With this sign the
  sectional curvature of the plane spanned by ``v, w`` is
  ``R(v, w, w, v) / |v ^ w|^2``.
* The curvature operator acts on bivectors by
  ``<R(X ^ Y), Z ^ W> = R(X, Y, W, Z)``.  It is stored as a symmetric 3x3
  matrix in the bivector basis ``{e2^e3, e3^e1, e1^e2}`` of an orthonormal
  frame ``{e1, e2, e3}``.  In frame components the bivector ``x ^ y``
  corresponds to the cross product ``x x y``, which keeps most formulas short.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import tolerances as tol
from .errors import (DegeneratePlane, NotSPD, OutOfDomain, ResidualTooLarge,
                     SingularMetric)

# (i, j) index pairs of the bivector basis {e2^e3, e3^e1, e1^e2}
PAIRS = ((1, 2), (2, 0), (0, 1))

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ChartMetric:
    """A coordinate chart on an axis-aligned box carrying a smooth metric.

    ``periods[i]`` is not None for periodic coordinates; those axes are never
    used for domain exits.  ``valid_fn`` optionally carves a sub-region out of
    the box: a point is inside when ``valid_fn(x) >= 0``.  ``length_scale`` is
    the typical feature size of the metric and sets finite-difference steps.
    ``sample_lo``/``sample_hi`` bound the region used for random sampling.
    """

    id: str
    lo: tuple
    hi: tuple
    metric_fn: ArrayFn
    christoffel_fn: Optional[ArrayFn] = None
    curvature_oracle: Optional[ArrayFn] = None
    periods: tuple = (None, None, None)
    valid_fn: Optional[Callable[[np.ndarray], float]] = None
    length_scale: float = 1.0
    sample_lo: Optional[tuple] = None
    sample_hi: Optional[tuple] = None
    description: str = ""

    def __post_init__(self):
        lo = tuple(float(a) for a in self.lo)
        hi = tuple(float(b) for b in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"chart {self.id!r}: empty or malformed domain box")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "periods", tuple(self.periods))
        if self.sample_lo is None:
            object.__setattr__(self, "sample_lo", lo)
        if self.sample_hi is None:
            object.__setattr__(self, "sample_hi", hi)

    # -- domain handling ---------------------------------------------------
    def wrap(self, x) -> np.ndarray:
        """Reduce periodic coordinates into ``[lo, lo + period)``."""
        x = np.array(x, dtype=float)
        for i, per in enumerate(self.periods):
            if per is not None:
                x[i] = self.lo[i] + np.mod(x[i] - self.lo[i], per)
        return x

    def margin(self, x) -> float:
        """Signed distance-like margin to the domain boundary (>= 0 inside)."""
        m = np.inf
        for i, per in enumerate(self.periods):
            if per is None:
                m = min(m, x[i] - self.lo[i], self.hi[i] - x[i])
        if self.valid_fn is not None:
            m = min(m, float(self.valid_fn(x)))
        return float(m)

    def contains(self, x, margin: float = 0.0) -> bool:
        return bool(np.all(np.isfinite(x))) and self.margin(x) >= margin

    def check(self, x, margin: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (3,) or not self.contains(x, margin):
            raise OutOfDomain(f"point {x} outside chart {self.id!r} "
                              f"(required margin {margin:g})")
        return x


@dataclass(frozen=True)
class CurvatureData:
    """Curvature operator at a point together with the frame it is written in.

    ``coframe`` is the inverse of ``frame``; it maps coordinate components of a
    tangent vector to orthonormal frame components.
    """

    point: np.ndarray
    operator: np.ndarray
    frame: np.ndarray
    coframe: np.ndarray
    metric: np.ndarray
    asymmetry: float = 0.0
    source: str = "oracle"

    @property
    def scale(self) -> float:
        return 1.0 + float(np.max(np.abs(np.linalg.eigvalsh(self.operator))))

    def to_frame(self, v) -> np.ndarray:
        return self.coframe @ np.asarray(v, dtype=float)

    def from_frame(self, u) -> np.ndarray:
        return self.frame @ np.asarray(u, dtype=float)

    def curvature_form(self, x, y, z, w) -> float:
        """R(x, y, z, w) for coordinate vectors."""
        a, b, c, d = (self.to_frame(u) for u in (x, y, z, w))
        return float(np.cross(a, b) @ self.operator @ np.cross(d, c))

    def sectional(self, v, u) -> float:
        a, b = self.to_frame(v), self.to_frame(u)
        biv = np.cross(a, b)
        area2 = float(biv @ biv)
        if area2 < tol.PLANE_TOL:
            raise DegeneratePlane(f"Gram determinant {area2:.3e} below plane tolerance")
        return float(biv @ self.operator @ biv) / area2

    def jacobi_matrix(self, v, basis) -> np.ndarray:
        """Matrix ``M[a, b] = R(w_a, v, v, w_b)`` for the columns of ``basis``."""
        vf = self.to_frame(v)
        B = np.cross((self.coframe @ np.asarray(basis, dtype=float)).T, vf).T
        return B.T @ self.operator @ B

    def jacobi_apply(self, v, w) -> np.ndarray:
        """Coordinate components of ``R(w, v)v``."""
        vf, wf = self.to_frame(v), self.to_frame(w)
        return self.from_frame(np.cross(vf, self.operator @ np.cross(wf, vf)))

    def riemann(self) -> np.ndarray:
        """Coordinate components ``R[i, j, k, l] = R(d_i, d_j, d_k, d_l)``."""
        return riemann_from_operator(self.operator, self.coframe)


# ---------------------------------------------------------------------------
# basic linear algebra in the metric


def gram_schmidt(g: np.ndarray, order: Sequence[int] = (0, 1, 2)) -> np.ndarray:
    """Orthonormalise coordinate vectors (in ``order``) with respect to ``g``.

    Returns F with ``F.T @ g @ F = I``; column ``a`` is the a-th frame vector,
    built from the coordinate vector ``order[a]``.
    """
    F = np.zeros((3, 3))
    for a, k in enumerate(order):
        e = np.zeros(3)
        e[k] = 1.0
        for b in range(a):
            e = e - (F[:, b] @ g @ e) * F[:, b]
        n2 = e @ g @ e
        if not n2 > 0:
            raise SingularMetric("Gram-Schmidt met a null vector")
        F[:, a] = e / np.sqrt(n2)
    return F


def norm(g, v) -> float:
    return float(np.sqrt(max(v @ g @ v, 0.0)))


def normalize(g, v) -> np.ndarray:
    return v / norm(g, v)


def cross(g, u, v, frame=None) -> np.ndarray:
    """Metric cross product of two coordinate vectors (positively oriented
    with respect to the coordinate orientation)."""
    F = gram_schmidt(g) if frame is None else frame
    Finv = F.T @ g
    return F @ np.cross(Finv @ u, Finv @ v)


def orthonormal_complement(g, v, frame=None) -> np.ndarray:
    """Deterministic orthonormal basis (3x2, coordinate columns) of ``v``'s
    orthogonal complement, oriented so that ``(v, w1, w2)`` is positive."""
    F = gram_schmidt(g) if frame is None else frame
    Finv = F.T @ g
    vf = Finv @ v
    vf = vf / np.linalg.norm(vf)
    k = int(np.argmin(np.abs(vf)))
    e = np.zeros(3)
    e[k] = 1.0
    w1 = e - (e @ vf) * vf
    w1 /= np.linalg.norm(w1)
    w2 = np.cross(vf, w1)
    return F @ np.column_stack([w1, w2])


def riemann_from_operator(op: np.ndarray, coframe: np.ndarray) -> np.ndarray:
    """Expand a curvature operator to the 4-index coordinate tensor."""
    E = np.eye(3)
    Rf = np.zeros((3, 3, 3, 3))
    for i in range(3):
        for j in range(3):
            bij = np.cross(E[i], E[j])
            if not bij.any():
                continue
            left = bij @ op
            for k in range(3):
                for l in range(3):
                    Rf[i, j, k, l] = left @ np.cross(E[l], E[k])
    C = coframe
    return np.einsum("abcd,ai,bj,ck,dl->ijkl", Rf, C, C, C, C, optimize=True)


def operator_from_riemann(R4: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """Curvature operator matrix from the coordinate 4-tensor and a frame."""
    Rf = np.einsum("ijkl,ia,jb,kc,ld->abcd", R4, frame, frame, frame, frame,
                   optimize=True)
    O = np.empty((3, 3))
    for A, (i, j) in enumerate(PAIRS):
        for B, (k, l) in enumerate(PAIRS):
            O[A, B] = Rf[i, j, l, k]
    return O


# ---------------------------------------------------------------------------
# pointwise operations


def metric_at(chart: ChartMetric, p) -> np.ndarray:
    """Metric components at ``p``; validates symmetry and positivity."""
    p = chart.check(p)
    g = np.asarray(chart.metric_fn(p), dtype=float)
    if g.shape != (3, 3) or not np.all(np.isfinite(g)):
        raise NotSPD(f"chart {chart.id!r}: metric is not a finite 3x3 matrix at {p}")
    if np.max(np.abs(g - g.T)) > tol.SPD_TOL * (1.0 + np.max(np.abs(g))):
        raise NotSPD(f"chart {chart.id!r}: metric not symmetric at {p}")
    lam = np.linalg.eigvalsh(g)
    if lam[0] <= tol.SPD_TOL:
        raise NotSPD(f"chart {chart.id!r}: metric eigenvalue {lam[0]:.3e} at {p}")
    return g


def _richardson(fn, p, h, k):
    """Derivative of ``fn`` along coordinate ``k`` by central differences
    at steps h and h/2 combined by Richardson extrapolation."""
    e = np.zeros(3)
    e[k] = 1.0
    d1 = (fn(p + h * e) - fn(p - h * e)) / (2 * h)
    h2 = 0.5 * h
    d2 = (fn(p + h2 * e) - fn(p - h2 * e)) / (2 * h2)
    return (4.0 * d2 - d1) / 3.0


def _fd_margin_check(chart, p, h):
    for k in range(3):
        if chart.periods[k] is None:
            if p[k] - h < chart.lo[k] or p[k] + h > chart.hi[k]:
                raise OutOfDomain(
                    f"point {p} too close to the boundary of chart {chart.id!r} "
                    f"for finite differences with step {h:g}")
    if chart.valid_fn is not None:
        for k in range(3):
            for s in (-h, h):
                q = p.copy()
                q[k] += s
                if chart.valid_fn(q) < 0:
                    raise OutOfDomain(
                        f"finite-difference stencil at {p} leaves chart {chart.id!r}")


def metric_derivatives(chart: ChartMetric, p, h: Optional[float] = None) -> np.ndarray:
    """``dg[l, i, j] = d_l g_ij`` by Richardson-extrapolated central differences."""
    p = chart.check(p)
    h = tol.FD_METRIC_STEP * chart.length_scale if h is None else h
    _fd_margin_check(chart, p, h)
    fn = lambda q: np.asarray(chart.metric_fn(q), dtype=float)
    return np.stack([_richardson(fn, p, h, k) for k in range(3)])


def christoffel_from_derivatives(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise SingularMetric(str(exc)) from exc
    # lower[l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    lower = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
    return np.einsum("kl,lij->kij", ginv, lower)


def _christoffel_raw(chart: ChartMetric, p, h: float, numeric: bool) -> np.ndarray:
    """Christoffel symbols without domain validation (callers check once)."""
    if chart.christoffel_fn is not None and not numeric:
        return np.asarray(chart.christoffel_fn(p), dtype=float)
    fn = lambda q: np.asarray(chart.metric_fn(q), dtype=float)
    dg = np.stack([_richardson(fn, p, h, k) for k in range(3)])
    G = christoffel_from_derivatives(fn(p), dg)
    return 0.5 * (G + G.transpose(0, 2, 1))


def christoffel_at(chart: ChartMetric, p, h: Optional[float] = None,
                   numeric: bool = False) -> np.ndarray:
    """Christoffel symbols ``Gamma[k, i, j]``.

    The closed form is used when the chart provides one, unless ``numeric`` is
    set; otherwise the metric is differentiated numerically.
    """
    p = chart.check(p)
    h = tol.FD_METRIC_STEP * chart.length_scale if h is None else h
    if chart.christoffel_fn is None or numeric:
        metric_at(chart, p)
        _fd_margin_check(chart, p, h)
    return _christoffel_raw(chart, p, h, numeric)


def riemann_coordinate(chart: ChartMetric, p, numeric: bool = False,
                       h: Optional[float] = None) -> np.ndarray:
    """Coordinate Riemann tensor ``R[i, j, k, l] = g(R(d_i, d_j)d_k, d_l)``
    by differentiating Christoffel symbols numerically."""
    p = chart.check(p)
    g = metric_at(chart, p)
    h2 = tol.FD_CHRISTOFFEL_STEP * chart.length_scale if h is None else h
    h1 = tol.FD_METRIC_STEP * chart.length_scale
    _fd_margin_check(chart, p, h2 + h1)
    gam = lambda q: _christoffel_raw(chart, q, h1, numeric)
    dG = np.stack([_richardson(gam, p, h2, m) for m in range(3)])  # dG[m,k,i,j]
    G = gam(p)
    A = dG.transpose(1, 0, 2, 3)                  # A[l,i,j,k] = d_i Gamma^l_jk
    quad = np.einsum("lim,mjk->lijk", G, G)       # Gamma^l_im Gamma^m_jk
    R_up = A - A.transpose(0, 2, 1, 3) + quad - quad.transpose(0, 2, 1, 3)
    return np.einsum("lm,mijk->ijkl", g, R_up)


def curvature_operator_at(chart: ChartMetric, p, numeric: bool = False,
                          closed_christoffel: bool = True,
                          order: Sequence[int] = (0, 1, 2),
                          check_symmetry: bool = True) -> CurvatureData:
    """Curvature operator at ``p`` in the Gram-Schmidt frame of ``order``.

    With ``numeric=False`` and a chart oracle the closed form is returned.
    Otherwise Christoffel symbols (closed form if ``closed_christoffel`` and
    available, else finite differences of the metric) are differentiated.
    """
    p = chart.check(p)
    g = metric_at(chart, p)
    F = gram_schmidt(g, order)
    Finv = F.T @ g
    if chart.curvature_oracle is not None and not numeric and tuple(order) == (0, 1, 2):
        O = np.asarray(chart.curvature_oracle(p), dtype=float)
        return CurvatureData(p, 0.5 * (O + O.T), F, Finv, g, 0.0, "oracle")
    if chart.curvature_oracle is not None and not numeric:
        R4 = riemann_from_operator(np.asarray(chart.curvature_oracle(p), dtype=float),
                                   gram_schmidt(g).T @ g)
        return CurvatureData(p, operator_from_riemann(R4, F), F, Finv, g, 0.0, "oracle")
    R4 = riemann_coordinate(chart, p, numeric=not closed_christoffel)
    O = operator_from_riemann(R4, F)
    asym = float(np.max(np.abs(O - O.T)))
    if check_symmetry and asym > tol.CURV_TOL * (1.0 + np.max(np.abs(O))):
        raise ResidualTooLarge(
            f"curvature operator asymmetry {asym:.3e} at {p} in chart {chart.id!r}")
    source = "fd-christoffel" if (not closed_christoffel or chart.christoffel_fn is None) \
        else "closed-christoffel"
    return CurvatureData(p, 0.5 * (O + O.T), F, Finv, g, asym, source)


def sectional(chart: ChartMetric, p, v, u, **kw) -> float:
    """Sectional curvature of the plane spanned by ``v`` and ``u``."""
    g = metric_at(chart, p)
    v, u = np.asarray(v, float), np.asarray(u, float)
    gram = (v @ g @ v) * (u @ g @ u) - (v @ g @ u) ** 2
    if gram < tol.PLANE_TOL:
        raise DegeneratePlane(f"Gram determinant {gram:.3e} below plane tolerance")
    return curvature_operator_at(chart, p, **kw).sectional(v, u)


def jacobi_operator(chart: ChartMetric, p, v, **kw):
    """Orthonormal basis of ``v``'s complement and the Jacobi operator on it.

    Returns ``(basis, M)`` with ``basis`` a 3x2 array of coordinate columns
    and ``M[a, b] = R(w_a, v, v, w_b)``.
    """
    cd = curvature_operator_at(chart, p, **kw)
    v = np.asarray(v, float)
    if abs(norm(cd.metric, v) - 1.0) > tol.UNIT_TOL:
        raise ValueError("jacobi_operator expects a unit vector")
    basis = orthonormal_complement(cd.metric, v, cd.frame)
    return basis, cd.jacobi_matrix(v, basis)


def ricci_from_operator(op: np.ndarray) -> np.ndarray:
    """Ricci tensor ``Ric(e_i, e_j) = sum_a R(e_a, e_i, e_j, e_a)`` in the
    orthonormal frame of the operator."""
    R4 = riemann_from_operator(op, np.eye(3))
    return np.einsum("aija->ij", R4)
