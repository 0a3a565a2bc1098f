"""Graph-manifold and half-plane-block constructions, glued isometrically.

Each piece is a product of a rotationally symmetric surface with a circle or a
line.  Near every boundary torus the metric is an exact flat product on a
collar of width ``COLLAR``; gluings identify collars by affine maps that swap
or keep the two circle directions.  Coordinates used throughout:

* polar piece chart ``(r, a, b)``: radius, base angle and fiber angle, the
  two angles measured in turns (period 1), metric
  ``dr^2 + psi(r)^2 da^2 + db^2`` with ``psi = 2 pi phi``;
* collar depth ``d``: distance from the boundary into the piece;
* half-plane block charts ``(rho, theta, z)`` with ``theta`` in radians and a
  flat Fermi chart ``(s, n, z)`` along the boundary line.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .atlas import Atlas, TransitionMap
from .errors import (DanglingBoundary, GluingNotIsometric, InfeasibleRamp, LeftAtlas,
                     OutOfDomain)
from .metric_core import ChartMetric
from .zoo import flat_chart

COLLAR = 0.2
BOUNDARY_GAP = 0.05
EXPORT_SCHEMA = "cvczero-atlas/1"
TWO_PI = 2.0 * np.pi

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


# ---------------------------------------------------------------------------
# profiles


def smoothstep(u):
    """Septic smoothstep: 0 at u<=0, 1 at u>=1, three vanishing derivatives
    at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return np.clip(u ** 4 * (35.0 - 84.0 * u + 70.0 * u ** 2 - 20.0 * u ** 3), 0.0, 1.0)


def smoothstep_d(u):
    u = np.clip(u, 0.0, 1.0)
    return 140.0 * u ** 3 * (1.0 - u) ** 3


def smoothstep_integral(u):
    u = np.clip(u, 0.0, 1.0)
    return u ** 5 * (7.0 - 14.0 * u + 10.0 * u ** 2 - 2.5 * u ** 3)


@dataclass(frozen=True)
class DiskProfile:
    """Concave radial profile of a disk capped by a flat cylinder.

    ``phi' = 1`` on ``[0, r0]``, then decreases through a smoothstep ramp to 0
    at ``r1`` and stays 0, so the boundary circles beyond ``r1`` have length
    ``circumference``.  In ``mode="power"`` the ramp is ``(1 - S)^k``; in
    ``mode="complement"`` it is ``1 - S^k``.
    """

    r0: float
    r1: float
    circumference: float
    mode: str
    exponent: float

    def _slope_u(self, u):
        S = smoothstep(u)
        if self.mode == "power":
            return (1.0 - S) ** self.exponent
        return 1.0 - S ** self.exponent

    def _ramp_integral(self, u):
        half = 0.5 * u
        return half * float(_GL_W @ self._slope_u(half * (_GL_X + 1.0)))

    def phi(self, r: float) -> float:
        if r <= self.r0:
            return float(r)
        if r >= self.r1:
            return self.circumference / TWO_PI
        u = (r - self.r0) / (self.r1 - self.r0)
        return self.r0 + (self.r1 - self.r0) * self._ramp_integral(u)

    def dphi(self, r: float) -> float:
        if r <= self.r0:
            return 1.0
        if r >= self.r1:
            return 0.0
        return float(self._slope_u((r - self.r0) / (self.r1 - self.r0)))

    def ddphi(self, r: float) -> float:
        if r <= self.r0 or r >= self.r1:
            return 0.0
        w = self.r1 - self.r0
        u = (r - self.r0) / w
        S, dS = smoothstep(u), smoothstep_d(u)
        k = self.exponent
        if self.mode == "power":
            return float(-k * (1.0 - S) ** (k - 1.0) * dS / w) if S < 1 else 0.0
        return float(-k * S ** (k - 1.0) * dS / w) if S > 0 else 0.0

    def sec(self, r: float) -> float:
        """Gaussian curvature ``-phi''/phi`` of the disk."""
        return -self.ddphi(r) / self.phi(r)

    def radius_for_slope(self, slope: float) -> float:
        """Radius in the ramp where ``phi' = slope`` (0 < slope < 1)."""
        return brentq(lambda r: self.dphi(r) - slope, self.r0, self.r1, xtol=1e-15)


def build_disk_profile(r0: float, r1: float, circumference: float = 1.0) -> DiskProfile:
    """Solve for the ramp exponent so that the boundary circle has the given
    length.  Raises :class:`InfeasibleRamp` with the feasible circumference
    interval when no concave ramp on ``[r0, r1]`` reaches it."""
    if not (0 < r0 < r1):
        raise InfeasibleRamp(f"need 0 < r0 < r1, got r0={r0}, r1={r1}",
                             feasible=None)
    feasible = (TWO_PI * r0, TWO_PI * r1)
    target = circumference / TWO_PI
    if not (r0 < target < r1):
        raise InfeasibleRamp(
            f"circumference {circumference} not in the open interval "
            f"({feasible[0]:.6g}, {feasible[1]:.6g}) reachable with ramp [{r0}, {r1}]",
            feasible=feasible)
    mid = r0 + 0.5 * (r1 - r0)
    mode = "power" if target <= mid else "complement"

    def excess(k):
        prof = DiskProfile(r0, r1, circumference, mode, k)
        return r0 + (r1 - r0) * prof._ramp_integral(1.0) - target

    hi = 2.0
    while excess(hi) * (1 if mode == "power" else -1) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise InfeasibleRamp("ramp exponent search diverged", feasible=feasible)
    k = 1.0 if abs(excess(1.0)) < 1e-15 else brentq(excess, 1.0, hi, xtol=1e-15, rtol=1e-15)
    return DiskProfile(r0, r1, circumference, mode, float(k))


@dataclass(frozen=True)
class ConeProfile:
    """Profile of a smoothed cone of total angle pi.

    ``phi' = 1 - S/2`` on the ramp ``[rho0, rho1]``, so beyond ``rho1`` the
    profile is ``rho/2 + c0`` and the surface is a flat cone of angle pi.
    """

    rho0: float
    rho1: float

    @property
    def c0(self) -> float:
        return self.phi(self.rho1) - 0.5 * self.rho1

    def phi(self, r):
        if r <= self.rho0:
            return float(r)
        w = self.rho1 - self.rho0
        if r >= self.rho1:
            return self.rho0 + 0.75 * w + 0.5 * (r - self.rho1)
        u = (r - self.rho0) / w
        return float(self.rho0 + w * (u - 0.5 * smoothstep_integral(u)))

    def dphi(self, r):
        if r <= self.rho0:
            return 1.0
        if r >= self.rho1:
            return 0.5
        return float(1.0 - 0.5 * smoothstep((r - self.rho0) / (self.rho1 - self.rho0)))

    def ddphi(self, r):
        if r <= self.rho0 or r >= self.rho1:
            return 0.0
        w = self.rho1 - self.rho0
        return float(-0.5 * smoothstep_d((r - self.rho0) / w) / w)

    def sec(self, r):
        return -self.ddphi(r) / self.phi(r)

    def radius_for_slope(self, slope: float) -> float:
        return brentq(lambda r: self.dphi(r) - slope, self.rho0, self.rho1, xtol=1e-15)


@dataclass(frozen=True)
class BumpProfile:
    """Cylinder profile ``psi = circumference (1 + A beta(r))`` with a
    compactly supported bump ``beta`` on ``[margin, length - margin]``."""

    length: float
    amplitude: float
    margin: float
    circumference: float = 1.0

    def _u(self, r):
        return (r - self.margin) / (self.length - 2 * self.margin)

    def psi(self, r):
        u = self._u(r)
        if u <= 0 or u >= 1:
            return self.circumference
        return self.circumference * (1.0 + self.amplitude * (4 * u * (1 - u)) ** 4)

    def dpsi(self, r):
        u = self._u(r)
        if u <= 0 or u >= 1:
            return 0.0
        q = 4 * u * (1 - u)
        return self.circumference * self.amplitude * 4 * q ** 3 * 4 * (1 - 2 * u) \
            / (self.length - 2 * self.margin)

    def ddpsi(self, r):
        u = self._u(r)
        if u <= 0 or u >= 1:
            return 0.0
        q = 4 * u * (1 - u)
        dq = 4 * (1 - 2 * u)
        w = self.length - 2 * self.margin
        return self.circumference * self.amplitude * (12 * q ** 2 * dq ** 2 - 32 * q ** 3) / w ** 2


# ---------------------------------------------------------------------------
# rotationally symmetric product chart


def rotational_chart(cid, psi, dpsi, ddpsi, lo, hi, periods, sample_lo, sample_hi,
                     length_scale, valid_fn=None, description="") -> ChartMetric:
    """Chart with metric ``dr^2 + psi(r)^2 da^2 + dz^2``."""

    def metric(x):
        p = psi(x[0])
        return np.diag([1.0, p * p, 1.0])

    def christ(x):
        p, dp = psi(x[0]), dpsi(x[0])
        G = np.zeros((3, 3, 3))
        G[0, 1, 1] = -p * dp
        G[1, 0, 1] = G[1, 1, 0] = dp / p
        return G

    def oracle(x):
        return np.diag([0.0, 0.0, -ddpsi(x[0]) / psi(x[0])])

    return ChartMetric(cid, lo, hi, metric, christ, oracle, periods=periods,
                       valid_fn=valid_fn, length_scale=length_scale,
                       sample_lo=sample_lo, sample_hi=sample_hi, description=description)


def _core_polar_transitions(core, polar, angle_period, r_out, r_in, r_polar_min):
    """Cartesian core <-> polar transitions for a piece whose center is flat."""
    c = TWO_PI / angle_period

    def to_polar(x):
        r = np.hypot(x[0], x[1])
        return np.array([r, np.mod(np.arctan2(x[1], x[0]) / c, angle_period), x[2]])

    def to_polar_jac(x):
        r2 = x[0] ** 2 + x[1] ** 2
        r = np.sqrt(r2)
        return np.array([[x[0] / r, x[1] / r, 0.0],
                         [-x[1] / (c * r2), x[0] / (c * r2), 0.0],
                         [0.0, 0.0, 1.0]])

    def to_core(x):
        ang = c * x[1]
        return np.array([x[0] * np.cos(ang), x[0] * np.sin(ang), x[2]])

    def to_core_jac(x):
        ang = c * x[1]
        ca, sa = np.cos(ang), np.sin(ang)
        return np.array([[ca, -c * x[0] * sa, 0.0],
                         [sa, c * x[0] * ca, 0.0],
                         [0.0, 0.0, 1.0]])

    return [
        TransitionMap(core, polar, to_polar, to_core, to_polar_jac,
                      trigger=lambda x: np.hypot(x[0], x[1]) - r_out,
                      overlap=lambda x: np.hypot(x[0], x[1]) > r_polar_min,
                      kind="chart", params={"map": "cartesian-to-polar"}),
        TransitionMap(polar, core, to_core, to_polar, to_core_jac,
                      trigger=lambda x: r_in - x[0],
                      overlap=lambda x: x[0] < 0.99 * r_out / 0.6 * 0.7,
                      kind="chart", params={"map": "polar-to-cartesian"}),
    ]


# ---------------------------------------------------------------------------
# graph descriptions


@dataclass(frozen=True)
class Vertex:
    """A piece Sigma x S^1.  ``kind`` is "disk", "cylinder" or "torus"."""

    kind: str
    r0: float = 0.1
    r1: float = 0.3
    length: float = 1.0
    amplitude: float = 0.0
    circumference: float = 1.0
    fiber_length: float = 1.0

    @property
    def n_boundaries(self) -> int:
        return {"disk": 1, "cylinder": 2, "torus": 0}[self.kind]


@dataclass(frozen=True)
class Edge:
    a: Tuple[int, int]
    b: Tuple[int, int]
    word: str


@dataclass(frozen=True)
class GraphDescription:
    vertices: Tuple[Vertex, ...]
    edges: Tuple[Edge, ...] = ()
    collar: float = COLLAR

    def validate(self):
        seen = {}
        for e in self.edges:
            if e.word not in ("A", "B"):
                raise ValueError(f"unsupported gluing word {e.word!r} (only A and B)")
            for end in (e.a, e.b):
                v, b = end
                if not (0 <= v < len(self.vertices)) or not (0 <= b < self.vertices[v].n_boundaries):
                    raise DanglingBoundary(f"edge endpoint {end} names no boundary circle")
                if end in seen:
                    raise DanglingBoundary(f"boundary {end} appears in two edges")
                seen[end] = e
        for i, v in enumerate(self.vertices):
            if v.kind not in ("disk", "cylinder", "torus"):
                raise ValueError(f"unsupported surface kind {v.kind!r}")
            for b in range(v.n_boundaries):
                if (i, b) not in seen:
                    raise DanglingBoundary(f"boundary ({i}.{b}) is not glued")
        for e in self.edges:
            va, vb = self.vertices[e.a[0]], self.vertices[e.b[0]]
            if e.word == "B":
                pairs = [(va.circumference, vb.fiber_length), (va.fiber_length, vb.circumference)]
            else:
                pairs = [(va.circumference, vb.circumference), (va.fiber_length, vb.fiber_length)]
            for x, y in pairs:
                if abs(x - y) > 1e-12:
                    raise GluingNotIsometric(
                        f"edge {e.a}-{e.word}-{e.b}: boundary circle lengths {x} and {y} differ")
            for v in (va, vb):
                if abs(v.circumference - 1.0) > 1e-12 or abs(v.fiber_length - 1.0) > 1e-12:
                    raise GluingNotIsometric("boundary circles must have unit length")


def _boundary_geometry(v: Vertex, b: int, collar: float):
    """(R, sigma) with depth ``d = sigma (R - r)``."""
    if v.kind == "disk":
        return v.r1 + collar / 2 + BOUNDARY_GAP, 1.0
    if v.kind == "cylinder":
        return (0.0, -1.0) if b == 0 else (v.length, 1.0)
    raise ValueError("torus pieces have no boundary")


def gluing_transition(src, dst, Rb, sb, Rc, sc, word, collar, src_vertex=None,
                      dst_vertex=None) -> TransitionMap:
    """Collar identification: depth d goes to -d, the circle coordinates are
    swapped (word B) or the fiber is reversed (word A)."""
    flip = -sb * sc
    reach = collar / 2 + 0.02

    if word == "B":
        def fwd(x):
            return np.array([Rc + sc * sb * (Rb - x[0]), x[2], x[1]])

        def inv(y):
            return np.array([Rb + sb * sc * (Rc - y[0]), y[2], y[1]])

        J = np.array([[flip, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    else:
        def fwd(x):
            return np.array([Rc + sc * sb * (Rb - x[0]), x[1], -x[2]])

        def inv(y):
            return np.array([Rb + sb * sc * (Rc - y[0]), y[1], -y[2]])

        J = np.diag([flip, 1.0, -1.0])

    return TransitionMap(
        src, dst, fwd, inv, lambda x: J,
        trigger=lambda x: -sb * (Rb - x[0]),
        overlap=lambda x: abs(Rb - x[0]) <= reach,
        kind="gluing",
        params={"word": word, "src_boundary": Rb, "dst_boundary": Rc,
                "src_sign": sb, "dst_sign": sc, "collar": collar,
                "src_vertex": src_vertex, "dst_vertex": dst_vertex})


def _vertex_charts(i: int, v: Vertex, collar: float):
    pre = f"v{i}"
    reach = collar / 2 + 0.02
    if v.kind == "torus":
        ch = flat_chart(f"{pre}:torus", (0.0, 0.0, 0.0), (1.0, 1.0, v.fiber_length),
                        periods=(1.0, 1.0, v.fiber_length),
                        sample_lo=(0.0, 0.0, 0.0), sample_hi=(1.0, 1.0, v.fiber_length),
                        description="flat square torus times circle")
        return [ch], [], {"main": ch.id}
    if v.kind == "disk":
        prof = build_disk_profile(v.r0, v.r1, v.circumference)
        Rb = v.r1 + collar / 2 + BOUNDARY_GAP
        psi = lambda r: TWO_PI * prof.phi(r)
        dpsi = lambda r: TWO_PI * prof.dphi(r)
        ddpsi = lambda r: TWO_PI * prof.ddphi(r)
        polar = rotational_chart(
            f"{pre}:polar", psi, dpsi, ddpsi, (0.3 * v.r0, 0.0, 0.0),
            (Rb + reach, 1.0, v.fiber_length), (None, 1.0, v.fiber_length),
            (0.5 * v.r0, 0.0, 0.0), (Rb + collar / 2, 1.0, v.fiber_length),
            length_scale=min(v.r0, v.r1 - v.r0),
            description="polar chart of a capped disk times circle")
        core = flat_chart(f"{pre}:core", (-0.7 * v.r0, -0.7 * v.r0, 0.0),
                          (0.7 * v.r0, 0.7 * v.r0, v.fiber_length),
                          periods=(None, None, v.fiber_length),
                          sample_lo=(-0.45 * v.r0, -0.45 * v.r0, 0.0),
                          sample_hi=(0.45 * v.r0, 0.45 * v.r0, v.fiber_length),
                          length_scale=v.r0, description="flat center of a disk piece")
        trs = _core_polar_transitions(core.id, polar.id, 1.0, 0.6 * v.r0, 0.45 * v.r0, 0.3 * v.r0)
        return [core, polar], trs, {"main": polar.id, "profile": prof, "core": core.id}
    prof = BumpProfile(v.length, v.amplitude, collar, v.circumference)
    cyl = rotational_chart(
        f"{pre}:cyl", prof.psi, prof.dpsi, prof.ddpsi, (-reach, 0.0, 0.0),
        (v.length + reach, 1.0, v.fiber_length), (None, 1.0, v.fiber_length),
        (-collar / 2, 0.0, 0.0), (v.length + collar / 2, 1.0, v.fiber_length),
        length_scale=min(0.1, v.length / 4),
        description="cylinder with a rotational bump times circle")
    return [cyl], [], {"main": cyl.id, "profile": prof}


def build_graph_manifold(desc: GraphDescription, validate: bool = True,
                         name: str = "graph") -> Atlas:
    """Atlas of the graph manifold described by ``desc``."""
    desc.validate()
    charts, trs, pieces, info = [], [], {}, []
    for i, v in enumerate(desc.vertices):
        c, t, meta = _vertex_charts(i, v, desc.collar)
        charts += c
        trs += t
        for ch in c:
            pieces[ch.id] = f"v{i}"
        info.append(meta)
    for e in desc.edges:
        (ia, ba), (ib, bb) = e.a, e.b
        Ra, sa = _boundary_geometry(desc.vertices[ia], ba, desc.collar)
        Rb, sb = _boundary_geometry(desc.vertices[ib], bb, desc.collar)
        ca, cb = info[ia]["main"], info[ib]["main"]
        trs.append(gluing_transition(ca, cb, Ra, sa, Rb, sb, e.word, desc.collar, ia, ib))
        trs.append(gluing_transition(cb, ca, Rb, sb, Ra, sa, e.word, desc.collar, ib, ia))
    atlas = Atlas(name, charts, trs, pieces,
                  meta={"graph": desc, "vertex_info": info, "collar": desc.collar})
    if validate:
        validate_isometries(atlas)
    return atlas


def s3_graph(r0: float = 0.1, r1: float = 0.3) -> Atlas:
    """Two solid tori glued by the swap word: a cvc(0) metric on the 3-sphere."""
    desc = GraphDescription((Vertex("disk", r0, r1), Vertex("disk", r0, r1)),
                            (Edge((0, 0), (1, 0), "B"),))
    return build_graph_manifold(desc, name="s3_graph")


def s2s1_graph(r0: float = 0.1, r1: float = 0.3, length: float = 1.0,
               amplitude: float = 0.2) -> Atlas:
    """Disk, bumped cylinder and disk glued by swap words: a metric on S^2 x S^1."""
    desc = GraphDescription((Vertex("disk", r0, r1),
                             Vertex("cylinder", length=length, amplitude=amplitude),
                             Vertex("disk", r0, r1)),
                            (Edge((0, 0), (1, 0), "B"), Edge((1, 1), (2, 0), "B")))
    return build_graph_manifold(desc, name="s2s1_graph")


def torus3_graph() -> Atlas:
    return build_graph_manifold(GraphDescription((Vertex("torus"),)), name="torus3")


# ---------------------------------------------------------------------------
# half-plane blocks


FERMI_N = (-0.15, 0.6)
FERMI_BOX = 8.0
FERMI_IN, FERMI_OUT = 0.3, 0.45


def build_halfplane_block(rho1: float = 0.5, d: float = 1.5, rho0: Optional[float] = None,
                          prefix: str = "b1", zmax: float = FERMI_BOX):
    """One block ``(H, h) x R`` where H is a smoothed cone of angle pi cut
    along a boundary geodesic at distance d from the development origin.

    Returns ``(charts, transitions, info)``.  ``info`` holds the profile, the
    constant ``c0`` and the chart ids.
    """
    rho0 = 0.2 * rho1 if rho0 is None else rho0
    if not (0 < rho0 < rho1):
        raise InfeasibleRamp(f"need 0 < rho0 < rho1, got {rho0}, {rho1}")
    prof = ConeProfile(rho0, rho1)
    c0 = prof.c0
    if not (rho1 + 2 * c0 + FERMI_N[1] < d):
        raise InfeasibleRamp(f"boundary distance {d} too small for ramp radius {rho1}",
                             feasible=(rho1 + 2 * c0 + FERMI_N[1], np.inf))
    rho_max = np.hypot(FERMI_BOX + 0.3, d + 0.2) - 2 * c0

    def n_of(x):
        return d - (x[0] + 2 * c0) * np.sin(0.5 * x[1])

    polar = rotational_chart(
        f"{prefix}:polar", prof.phi, prof.dphi, prof.ddphi,
        (0.3 * rho0, 0.0, -zmax), (rho_max, TWO_PI, zmax), (None, TWO_PI, None),
        (0.5 * rho0, 0.0, -1.0), (d, TWO_PI, 1.0), length_scale=min(rho0, rho1 - rho0),
        valid_fn=lambda x: n_of(x) - FERMI_N[0],
        description="polar chart of a smoothed cone of angle pi times line")
    core = flat_chart(f"{prefix}:core", (-0.7 * rho0, -0.7 * rho0, -zmax),
                      (0.7 * rho0, 0.7 * rho0, zmax),
                      sample_lo=(-0.45 * rho0, -0.45 * rho0, -1.0),
                      sample_hi=(0.45 * rho0, 0.45 * rho0, 1.0),
                      length_scale=rho0, description="flat tip of the cone")
    fermi = flat_chart(f"{prefix}:fermi", (-FERMI_BOX, FERMI_N[0], -zmax),
                       (FERMI_BOX, FERMI_N[1], zmax),
                       sample_lo=(-2.0, 0.0, -1.0), sample_hi=(2.0, FERMI_N[1], 1.0),
                       description="Fermi chart along the boundary line")

    def p2f(x):
        u, th = x[0] + 2 * c0, 0.5 * x[1]
        return np.array([u * np.cos(th), d - u * np.sin(th), x[2]])

    def p2f_jac(x):
        u, th = x[0] + 2 * c0, 0.5 * x[1]
        c, s = np.cos(th), np.sin(th)
        return np.array([[c, -0.5 * u * s, 0.0], [-s, -0.5 * u * c, 0.0], [0.0, 0.0, 1.0]])

    def f2p(y):
        X, Y = y[0], d - y[1]
        u = np.hypot(X, Y)
        return np.array([u - 2 * c0, 2.0 * np.arctan2(Y, X), y[2]])

    def f2p_jac(y):
        X, Y = y[0], d - y[1]
        u2 = X * X + Y * Y
        u = np.sqrt(u2)
        return np.array([[X / u, -Y / u, 0.0], [-2 * Y / u2, -2 * X / u2, 0.0],
                         [0.0, 0.0, 1.0]])

    def p2f_overlap(x):
        if x[0] < rho1:
            return False
        y = p2f(x)
        return abs(y[0]) <= FERMI_BOX and FERMI_N[0] <= y[1] <= FERMI_N[1]

    trs = _core_polar_transitions(core.id, polar.id, TWO_PI, 0.6 * rho0, 0.45 * rho0, 0.3 * rho0)
    trs += [
        TransitionMap(polar.id, fermi.id, p2f, f2p, p2f_jac,
                      trigger=lambda x: FERMI_IN - n_of(x), overlap=p2f_overlap, kind="chart",
                      params={"map": "development", "c0": c0, "d": d}),
        TransitionMap(fermi.id, polar.id, f2p, p2f, f2p_jac,
                      trigger=lambda y: y[1] - FERMI_OUT, overlap=lambda y: True, kind="chart",
                      params={"map": "inverse development", "c0": c0, "d": d}),
    ]
    info = {"profile": prof, "c0": c0, "d": d, "polar": polar.id, "core": core.id,
            "fermi": fermi.id}
    return [core, polar, fermi], trs, info


def r3_blocks(rho1: float = 0.5, d: float = 1.5, validate: bool = True) -> Atlas:
    """Two half-plane blocks glued along their boundary planes by the swap
    ``(s, n, z) -> (z, -n, s)``: a cvc(0) metric on R^3 (clipped to a box)."""
    c1, t1, i1 = build_halfplane_block(rho1, d, prefix="b1")
    c2, t2, i2 = build_halfplane_block(rho1, d, prefix="b2")
    swap = lambda y: np.array([y[2], -y[1], y[0]])
    J = np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]])
    glue = [TransitionMap(a, b, swap, swap, lambda y: J, trigger=lambda y: -y[1],
                          overlap=lambda y: abs(y[1]) <= 0.17, kind="gluing",
                          params={"word": "B", "map": "(s,n,z)->(z,-n,s)"})
            for a, b in ((i1["fermi"], i2["fermi"]), (i2["fermi"], i1["fermi"]))]
    pieces = {c.id: "b1" for c in c1}
    pieces.update({c.id: "b2" for c in c2})
    atlas = Atlas("r3_blocks", c1 + c2, t1 + t2 + glue, pieces,
                  meta={"blocks": [i1, i2], "rho1": rho1, "d": d})
    if validate:
        validate_isometries(atlas)
    return atlas


# ---------------------------------------------------------------------------
# consistency


def _periodic_diff(chart, a, b):
    d = np.asarray(a, float) - np.asarray(b, float)
    for k, per in enumerate(chart.periods):
        if per is not None:
            d[k] = (d[k] + per / 2) % per - per / 2
    return d


def _overlap_samples(atlas, tr, n, rng, max_tries=20000):
    src, dst = atlas.chart(tr.src), atlas.chart(tr.dst)
    out = []
    lo, hi = np.array(src.lo), np.array(src.hi)
    for _ in range(max_tries):
        if len(out) >= n:
            break
        x = rng.uniform(lo, hi)
        if not src.contains(x, 1e-3 * src.length_scale) or not tr.applies(x):
            continue
        y = dst.wrap(tr.forward(x))
        if dst.contains(y, 1e-3 * dst.length_scale):
            out.append(x)
    return out


@dataclass
class ConsistencyReport:
    n_samples: int
    round_trip: float
    isometry: float
    jacobian: float
    handoff: float
    per_transition: list = field(default_factory=list)

    @property
    def worst(self) -> float:
        return max(self.round_trip, self.isometry, self.jacobian)


def transition_consistency(atlas: Atlas, n_samples: int = 50, seed: int = 0,
                           handoff: bool = True, handoff_time: float = 0.05) -> ConsistencyReport:
    """Round trips, metric pullbacks, Jacobians and geodesic handoffs of
    every transition, on points sampled in its overlap."""
    from .flows import integrate_flow

    rows = []
    tot = dict(n=0, rt=0.0, iso=0.0, jac=0.0, ho=0.0)
    for k, tr in enumerate(atlas.transitions):
        rng = np.random.default_rng([seed, k])
        src, dst = atlas.chart(tr.src), atlas.chart(tr.dst)
        rt = iso = jac = ho = 0.0
        pts = _overlap_samples(atlas, tr, n_samples, rng)
        single_src = Atlas("src", [src])
        single_dst = Atlas("dst", [dst])
        for j, x in enumerate(pts):
            y = tr.forward(x)
            rt = max(rt, float(np.max(np.abs(_periodic_diff(src, tr.inverse(y), x)))))
            gx = np.asarray(src.metric_fn(x), float)
            gy = np.asarray(dst.metric_fn(dst.wrap(y)), float)
            Jx = np.asarray(tr.jacobian(x), float)
            iso = max(iso, float(np.max(np.abs(Jx.T @ gy @ Jx - gx)) / max(1.0, np.max(np.abs(gx)))))
            h = 1e-5 * src.length_scale
            Jfd = np.column_stack([
                _periodic_diff(dst, tr.forward(x + h * e), tr.forward(x - h * e)) / (2 * h)
                for e in np.eye(3)])
            jac = max(jac, float(np.max(np.abs(Jfd - Jx)) / max(1.0, np.max(np.abs(Jx)))))
            if handoff and j < max(3, n_samples // 10):
                v = rng.normal(size=3)
                v = v / np.sqrt(v @ gx @ v)
                try:
                    a = integrate_flow(single_src, (src.id, x), v, handoff_time)
                    b = integrate_flow(single_dst, (dst.id, dst.wrap(y)), Jx @ v, handoff_time)
                except (LeftAtlas, OutOfDomain):
                    continue
                xa = a.x[-1]
                if not tr.applies(xa):
                    continue
                ho = max(ho, float(np.max(np.abs(_periodic_diff(dst, tr.forward(xa), b.x[-1])))))
        rows.append({"src": tr.src, "dst": tr.dst, "kind": tr.kind, "n": len(pts),
                     "round_trip": rt, "isometry": iso, "jacobian": jac, "handoff": ho})
        tot["n"] += len(pts)
        tot["rt"] = max(tot["rt"], rt)
        tot["iso"] = max(tot["iso"], iso)
        tot["jac"] = max(tot["jac"], jac)
        tot["ho"] = max(tot["ho"], ho)
    return ConsistencyReport(tot["n"], tot["rt"], tot["iso"], tot["jac"], tot["ho"], rows)


def validate_isometries(atlas: Atlas, n_samples: int = 12, tol_iso: float = 1e-9,
                        seed: int = 12345):
    """Raise :class:`GluingNotIsometric` unless every transition pulls the
    target metric back to the source metric."""
    rep = transition_consistency(atlas, n_samples, seed, handoff=False)
    for row in rep.per_transition:
        if row["n"] == 0:
            raise GluingNotIsometric(f"transition {row['src']}->{row['dst']} has an empty overlap")
        if row["isometry"] > tol_iso or row["round_trip"] > 1e-9:
            raise GluingNotIsometric(
                f"transition {row['src']}->{row['dst']} is not an isometry "
                f"(pullback residual {row['isometry']:.3e}, round trip {row['round_trip']:.3e})")
    return rep


def export_atlas(atlas: Atlas) -> str:
    """Versioned JSON dump of charts and transitions with a stable field order."""
    charts = [{"id": c.id, "lo": list(c.lo), "hi": list(c.hi),
               "periods": [None if p is None else float(p) for p in c.periods],
               "length_scale": float(c.length_scale), "piece": atlas.pieces.get(c.id),
               "description": c.description}
              for c in atlas.charts.values()]
    trs = [{"src": t.src, "dst": t.dst, "kind": t.kind,
            "has_trigger": t.trigger is not None,
            "params": {k: (float(v) if isinstance(v, (int, float, np.floating)) and
                           not isinstance(v, bool) else v)
                       for k, v in sorted(t.params.items())}}
           for t in atlas.transitions]
    return json.dumps({"schema": EXPORT_SCHEMA, "name": atlas.name, "charts": charts,
                       "transitions": trs}, indent=2)
