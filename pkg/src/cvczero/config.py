"""Run configuration: TOML files with named sections and explicit tolerances.

Example::

    [run]
    zoo = ["prodS2R", "s3_graph"]
    seed = 7
    samples = 200

    [tolerances]
    cvc0 = 1e-6

Unknown sections or keys, wrong types and unknown zoo entries raise
:class:`ConfigError` carrying the offending line and field.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import tomli

from .errors import ConfigError

CHECK_NAMES = ("oracle", "cvc0-scan", "signedness", "classify", "rank-scan", "f-ode",
               "frame-audit", "flats", "line-field", "evolution", "xp-parallel", "holonomy",
               "transitions", "connecting-angle")

DEFAULT_TOLERANCES = {
    "oracle_fd": 1e-5,
    "oracle_closed": 1e-9,
    "cvc0": 1e-6,
    "sign": 1e-6,
    "classify": 1e-12,
    "rank_fraction": 0.01,
    "f_ode": 1e-7,
    "frame_table": 1e-4,
    "flats": 1e-5,
    "line_field": 1e-6,
    "evolution": 1e-5,
    "xp_parallel": 1e-4,
    "split": 1e-6,
    "no_split": 0.1,
    "transitions": 1e-9,
    "connecting_angle": 0.5,
}


@dataclass
class RunConfig:
    zoo: List[str] = field(default_factory=lambda: ["prodS2R"])
    seed: int = 0
    samples: int = 100
    rank_samples: int = 20
    horizon: float = 10.0
    jobs: int = 0
    tol_scale: float = 1.0
    checks: Optional[List[str]] = None
    curvature: str = "numeric"
    tolerances: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output: Optional[str] = None
    csv_dir: Optional[str] = None
    timing: bool = False

    def tolerance(self, name: str) -> float:
        """Tolerance scaled by ``tol_scale`` (lower-bound thresholds are
        divided instead)."""
        t = self.tolerances[name]
        if name in ("no_split", "connecting_angle"):
            return t / self.tol_scale
        return t * self.tol_scale

    def canonical(self) -> dict:
        d = asdict(self)
        for k in ("jobs", "output", "csv_dir", "timing"):
            d.pop(k)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_RUN_KEYS = {"zoo": list, "seed": int, "samples": int, "rank_samples": int,
             "horizon": (int, float), "jobs": int, "tol_scale": (int, float),
             "checks": list, "curvature": str}
_OUTPUT_KEYS = {"report": str, "csv_dir": str, "timing": bool}


def _line_of(text: str, key: str, section: Optional[str] = None) -> Optional[int]:
    """1-based line of ``key = ...`` (inside ``[section]`` when given)."""
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if key == f"[{current}]":
                return i
            continue
        if (section is None or current == section) and re.match(rf"^{re.escape(key)}\s*=", s):
            return i
    return None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse TOML text into a :class:`RunConfig`."""
    from .zoo import zoo_list

    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"{source}: {exc}", line=int(m.group(1)) if m else None) from None
    cfg = RunConfig()
    for section in data:
        if section not in ("run", "tolerances", "output"):
            raise ConfigError(f"{source}: unknown section [{section}]",
                              line=_line_of(text, f"[{section}]"), field=section)
    run = data.get("run", {})
    for key, val in run.items():
        if key not in _RUN_KEYS:
            raise ConfigError(f"{source}: unknown key run.{key}",
                              line=_line_of(text, key, "run"), field=f"run.{key}")
        if isinstance(val, bool) or not isinstance(val, _RUN_KEYS[key]):
            raise ConfigError(f"{source}: run.{key} has the wrong type ({type(val).__name__})",
                              line=_line_of(text, key, "run"), field=f"run.{key}")
        setattr(cfg, key, float(val) if key in ("horizon", "tol_scale") else val)
    known = {e.name for e in zoo_list()}
    for name in cfg.zoo:
        if name not in known:
            raise ConfigError(f"{source}: unknown zoo entry {name!r}",
                              line=_line_of(text, "zoo", "run"), field="run.zoo")
    if cfg.checks is not None:
        for c in cfg.checks:
            if c not in CHECK_NAMES:
                raise ConfigError(f"{source}: unknown check {c!r}",
                                  line=_line_of(text, "checks", "run"), field="run.checks")
    if cfg.curvature not in ("numeric", "oracle"):
        raise ConfigError(f"{source}: run.curvature must be 'numeric' or 'oracle'",
                          line=_line_of(text, "curvature", "run"), field="run.curvature")
    for key in ("samples", "rank_samples"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{source}: run.{key} must be positive",
                              line=_line_of(text, key, "run"), field=f"run.{key}")
    for key, val in data.get("tolerances", {}).items():
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"{source}: unknown tolerance {key!r}",
                              line=_line_of(text, key, "tolerances"), field=f"tolerances.{key}")
        if isinstance(val, bool) or not isinstance(val, (int, float)) or val <= 0:
            raise ConfigError(f"{source}: tolerance {key!r} must be a positive number",
                              line=_line_of(text, key, "tolerances"), field=f"tolerances.{key}")
        cfg.tolerances[key] = float(val)
    for key, val in data.get("output", {}).items():
        if key not in _OUTPUT_KEYS or not isinstance(val, _OUTPUT_KEYS[key]):
            raise ConfigError(f"{source}: bad output setting {key!r}",
                              line=_line_of(text, key, "output"), field=f"output.{key}")
    out = data.get("output", {})
    cfg.output = out.get("report")
    cfg.csv_dir = out.get("csv_dir")
    cfg.timing = out.get("timing", False)
    return cfg


def load_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"configuration file {path!r} does not exist", field="--config")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), source=path)
