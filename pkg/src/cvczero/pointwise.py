"""Pointwise classification through the flat-planes distribution.

A unit vector ``v`` spans a flat plane with ``w`` exactly when ``w`` lies in
the kernel of the Jacobi operator of ``v``.  Under pointwise signed curvature
the curvature operator of a cvc(0) point has at least a double kernel; at a
nonisotropic point the common line of all flat planes is the frame dual of
the eigenbivector carrying the nonzero eigenvalue.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import tolerances as tol
from .errors import AmbiguousSpectrum
from .metric_core import (ChartMetric, CurvatureData, curvature_operator_at,
                          jacobi_operator)

ISOTROPIC = "Isotropic"
NONISOTROPIC = "Nonisotropic"
NOT_CVC0 = "NotCvc0"
NOT_SIGNED = "NotSigned"

NONNEG, NONPOS, MIXED, ZERO = "NonNeg", "NonPos", "Mixed", "Zero"


@dataclass
class PointClass:
    """Classification of a point.

    ``line`` is the rank-1 projector of the distinguished line in orthonormal
    frame components (frame stored in ``frame``); ``direction`` gives a unit
    coordinate vector spanning it.
    """

    tag: str
    line: Optional[np.ndarray] = None
    sign: Optional[str] = None
    residuals: Dict[str, float] = field(default_factory=dict)
    frame: Optional[np.ndarray] = None

    @property
    def direction(self) -> Optional[np.ndarray]:
        if self.line is None:
            return None
        w, U = np.linalg.eigh(self.line)
        return self.frame @ U[:, -1]

    def coordinate_projector(self) -> Optional[np.ndarray]:
        """The orthogonal projector onto the line in coordinate components
        (independent of the frame used)."""
        if self.line is None:
            return None
        Finv = np.linalg.inv(self.frame)
        return self.frame @ self.line @ Finv


def projector(u) -> np.ndarray:
    u = np.asarray(u, float)
    u = u / np.linalg.norm(u)
    return np.outer(u, u)


def line_angle(P, Q) -> float:
    """Angle between the lines of two rank-1 projectors (same frame)."""
    c = np.sqrt(max(min(float(np.trace(P @ Q)), 1.0), 0.0))
    return float(np.arccos(c))


def flat_plane_kernel(chart: ChartMetric, p, v, tol_kernel: float = tol.CURV_TOL,
                      **kw) -> List[np.ndarray]:
    """Orthonormal basis of the numerical kernel of the Jacobi operator of v."""
    basis, M = jacobi_operator(chart, p, v, **kw)
    lam, U = np.linalg.eigh(M)
    thresh = tol_kernel * (1.0 + np.max(np.abs(lam)))
    return [basis @ U[:, i] for i in np.argsort(np.abs(lam)) if abs(lam[i]) < thresh]


def sign_class(eigs, iso_tol: float = tol.ISO_TOL) -> str:
    eigs = np.asarray(eigs)
    if np.all(np.abs(eigs) < iso_tol):
        return ZERO
    if eigs.min() > -iso_tol:
        return NONNEG
    if eigs.max() < iso_tol:
        return NONPOS
    return MIXED


def signedness(chart: ChartMetric, p, iso_tol: float = tol.ISO_TOL, **kw) -> str:
    """Sign class of the sectional curvatures at p.

    In dimension three the curvature operator is diagonal in the bivector
    basis of a Ricci-diagonalising frame, so its eigenvalues are the
    sectional curvatures of the three coordinate planes of that frame, which
    bound all sectional curvatures at p.
    """
    cd = curvature_operator_at(chart, p, **kw)
    return sign_class(np.linalg.eigvalsh(cd.operator), iso_tol)


def classify_curvature(cd: CurvatureData, tol_kernel: float = tol.CURV_TOL,
                       iso_tol: float = tol.ISO_TOL, strict: bool = True) -> PointClass:
    """Classify from precomputed curvature data; see :func:`classify_point`."""
    lam, U = np.linalg.eigh(cd.operator)
    order = np.argsort(-np.abs(lam))
    lam, U = lam[order], U[:, order]
    top, second = abs(lam[0]), abs(lam[1])
    scale = 1.0 + top
    res = {"lambda_max": float(top), "lambda_second": float(second),
           "lambda_min": float(abs(lam[2])), "asymmetry": float(cd.asymmetry)}
    band = tol.AMBIGUITY_FACTOR
    if strict and iso_tol / band <= top < iso_tol * band:
        raise AmbiguousSpectrum(f"largest curvature eigenvalue {top:.3e} is within "
                                f"the ambiguity band of the isotropy threshold")
    if top < iso_tol:
        return PointClass(ISOTROPIC, sign=ZERO, residuals=res, frame=cd.frame)
    sgn = sign_class(lam, iso_tol)
    if sgn == MIXED:
        return PointClass(NOT_SIGNED, sign=MIXED, residuals=res, frame=cd.frame)
    thresh = tol_kernel * scale
    if strict and thresh / band <= second < thresh * band:
        raise AmbiguousSpectrum(f"second curvature eigenvalue {second:.3e} is within "
                                f"the ambiguity band of the kernel threshold")
    if second < thresh:
        line = projector(U[:, 0])
        return PointClass(NONISOTROPIC, line=line, sign=sgn, residuals=res, frame=cd.frame)
    return PointClass(NOT_CVC0, sign=sgn, residuals=res, frame=cd.frame)


def classify_point(chart: ChartMetric, p, tol_kernel: float = tol.CURV_TOL,
                   iso_tol: float = tol.ISO_TOL, strict: bool = True, **kw) -> PointClass:
    """Classify p as Isotropic, Nonisotropic, NotCvc0 or NotSigned.

    Raises :class:`AmbiguousSpectrum` when a deciding eigenvalue lies within
    a factor ``AMBIGUITY_FACTOR`` of its threshold (``strict=False`` turns
    this off).
    """
    cd = curvature_operator_at(chart, p, **kw)
    return classify_curvature(cd, tol_kernel, iso_tol, strict)


# ---------------------------------------------------------------------------
# sampling the unit sphere


GOLDEN = np.pi * (3.0 - np.sqrt(5.0))


def fibonacci_sphere(n: int, seed: int = 0, jitter: float = 0.25) -> np.ndarray:
    """``n`` unit vectors from a Fibonacci lattice with seeded jitter.

    Each sample's jitter comes from its own generator ``default_rng([seed, i])``
    so the i-th vector does not depend on ``n`` beyond the lattice layout.
    """
    out = np.empty((n, 3))
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        dz, dphi = rng.uniform(-jitter, jitter, 2)
        z = np.clip(1.0 - (2.0 * (i + 0.5 + dz)) / n, -1.0, 1.0)
        r = np.sqrt(max(1.0 - z * z, 0.0))
        phi = (i + dphi) * GOLDEN
        out[i] = (r * np.cos(phi), r * np.sin(phi), z)
    return out


def unit_from_frame(cd: CurvatureData, u) -> np.ndarray:
    """Coordinate unit vector with orthonormal-frame components u."""
    u = np.asarray(u, float)
    return cd.frame @ (u / np.linalg.norm(u))


@dataclass
class AuditReport:
    n_samples: int
    n_planes: int
    jacobi_residual: float
    line_angle: float
    tag: str


def sphere_distribution_audit(chart: ChartMetric, p, n_samples: int = 64, seed: int = 0,
                              tol_kernel: float = tol.CURV_TOL, n_times: int = 8,
                              **kw) -> AuditReport:
    """Check that flat planes are closed under rotation along great circles.

    For sampled ``v`` and each kernel vector ``w`` of its Jacobi operator,
    ``|R(c', c)c|`` is evaluated along ``c(t) = cos t v + sin t w``; at a
    nonisotropic point the angle between each flat plane and the
    distinguished line is also recorded.
    """
    cd = curvature_operator_at(chart, p, **kw)
    pc = classify_curvature(cd, tol_kernel, strict=False)
    if pc.tag not in (ISOTROPIC, NONISOTROPIC):
        raise ValueError(f"audit requires an isotropic or nonisotropic point, got {pc.tag}")
    O = cd.operator
    L = None if pc.line is None else np.linalg.eigh(pc.line)[1][:, -1]
    worst, worst_angle, planes = 0.0, 0.0, 0
    ts = np.linspace(0.0, np.pi, n_times, endpoint=False)
    for vf in fibonacci_sphere(n_samples, seed):
        v = cd.frame @ vf
        for w in flat_plane_kernel(chart, p, v, tol_kernel, **kw):
            wf = cd.coframe @ w
            planes += 1
            for t in ts:
                c = np.cos(t) * vf + np.sin(t) * wf
                cdot = -np.sin(t) * vf + np.cos(t) * wf
                r = np.cross(c, O @ np.cross(cdot, c))
                worst = max(worst, float(np.linalg.norm(r)))
            if L is not None:
                nrm = np.cross(vf, wf)
                s = abs(float(nrm @ L)) / np.linalg.norm(nrm)
                worst_angle = max(worst_angle, float(np.arcsin(min(s, 1.0))))
    return AuditReport(n_samples, planes, worst, worst_angle, pc.tag)


def cvc0_sample(cd: CurvatureData, vf) -> tuple:
    """Scale-normalised cvc(0) residuals at one (point, direction) sample.

    Returns ``(smallest Jacobi eigenvalue, second-largest curvature
    eigenvalue)``, both divided by ``1 + |curvature operator|``.
    """
    vf = np.asarray(vf, float)
    vf = vf / np.linalg.norm(vf)
    k = int(np.argmin(np.abs(vf)))
    e = np.zeros(3)
    e[k] = 1.0
    w1 = e - (e @ vf) * vf
    w1 /= np.linalg.norm(w1)
    w2 = np.cross(vf, w1)
    B = np.column_stack([np.cross(w1, vf), np.cross(w2, vf)])
    M = B.T @ cd.operator @ B
    lam = np.linalg.eigvalsh(cd.operator)
    scale = 1.0 + float(np.max(np.abs(lam)))
    jac = float(np.min(np.abs(np.linalg.eigvalsh(M))))
    second = float(np.sort(np.abs(lam))[1])
    return jac / scale, second / scale
