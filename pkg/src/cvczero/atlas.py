"""Atlases: charts plus invertible transition maps between them."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .errors import OutOfDomain
from .metric_core import ChartMetric

Point = Tuple[str, np.ndarray]


@dataclass(frozen=True)
class TransitionMap:
    """Coordinate change from chart ``src`` to chart ``dst``.

    ``jacobian(x)`` is the derivative of ``forward`` at a source point; it
    maps source vector components to target components.  ``trigger(x) > 0``
    marks the handoff region used by the geodesic integrator (None means the
    map is only used for explicit re-expression).  ``overlap(x)`` tells
    whether the map is meaningful at a source point.  ``kind`` is "chart" for
    transitions inside one piece and "gluing" for the isometric
    identifications between pieces.
    """

    src: str
    dst: str
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    trigger: Optional[Callable[[np.ndarray], float]] = None
    overlap: Optional[Callable[[np.ndarray], bool]] = None
    kind: str = "chart"
    params: dict = field(default_factory=dict)

    def applies(self, x) -> bool:
        return True if self.overlap is None else bool(self.overlap(x))


class Atlas:
    """Immutable collection of charts and transitions.

    ``pieces`` optionally groups chart ids into the pieces of a glued
    manifold (used for reporting only).
    """

    def __init__(self, name: str, charts: List[ChartMetric],
                 transitions: List[TransitionMap] = (), pieces: Optional[dict] = None,
                 meta: Optional[dict] = None):
        self.name = name
        self.charts: Dict[str, ChartMetric] = {c.id: c for c in charts}
        if len(self.charts) != len(charts):
            raise ValueError("duplicate chart ids")
        self.transitions: List[TransitionMap] = list(transitions)
        for tr in self.transitions:
            if tr.src not in self.charts or tr.dst not in self.charts:
                raise ValueError(f"transition {tr.src}->{tr.dst} references unknown chart")
        self._from: Dict[str, List[TransitionMap]] = {cid: [] for cid in self.charts}
        for tr in self.transitions:
            self._from[tr.src].append(tr)
        self.pieces = dict(pieces or {cid: cid for cid in self.charts})
        self.meta = dict(meta or {})

    def chart(self, cid: str) -> ChartMetric:
        return self.charts[cid]

    def transitions_from(self, cid: str) -> List[TransitionMap]:
        return self._from[cid]

    def triggers_from(self, cid: str) -> List[TransitionMap]:
        return [t for t in self._from[cid] if t.trigger is not None]

    def locate(self, cid: str, x) -> Point:
        """Validate a point, wrapping periodic coordinates."""
        ch = self.charts[cid]
        x = ch.wrap(np.asarray(x, dtype=float))
        ch.check(x)
        return cid, x

    def express(self, point: Point, target: str, vectors=None):
        """Re-express a point (and optional 3xm vector block) in another chart
        through a single direct transition."""
        cid, x = point
        if cid == target:
            return (x.copy(), None if vectors is None else np.array(vectors, float))
        for tr in self._from[cid]:
            if tr.dst != target or not tr.applies(x):
                continue
            y = self.charts[target].wrap(tr.forward(x))
            if not self.charts[target].contains(y):
                continue
            if vectors is None:
                return y, None
            return y, tr.jacobian(x) @ np.asarray(vectors, float)
        raise OutOfDomain(f"cannot express point of chart {cid!r} in chart {target!r}")

    def try_express(self, point: Point, target: str, vectors=None):
        try:
            return self.express(point, target, vectors)
        except OutOfDomain:
            return None

    def __repr__(self):
        return f"Atlas({self.name!r}, charts={list(self.charts)}, transitions={len(self.transitions)})"
