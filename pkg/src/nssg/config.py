"""Flat ``key = value`` experiment configuration.

One key per line; ``#`` starts a comment. Vectors are comma separated.
Errors carry the file name and line number of the offending entry.

Example::

    plant = brockett
    gamma = 0.1
    x0 = 0.2, 0.2, 0.2
    checks = decrease, norm-law, converged
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace
from importlib import resources
from typing import Optional

PLANTS = ("brockett", "string")
INTEGRATORS = ("rk4", "radau5")
GOALS = ("nonsmooth", "smooth")

BROCKETT_CHECKS = ("decrease", "norm-law", "reduced-rates", "no-switch", "control-jump", "converged")
STRING_CHECKS = ("decrease", "event-residual", "post-latch-drift", "energy-rate", "no-event", "final-goal")


class ConfigError(ValueError):
    """Invalid configuration; the message names the file, line and key."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    plant: str = "brockett"
    gamma: float = 0.1
    x0: tuple = ()
    v: tuple = (1.0, 0.0)
    omega0: float = 1.0
    k: float = 1.0
    h_star: float = 0.0
    goal: str = "nonsmooth"
    dt: float = 1e-3
    t_max: float = 100.0
    q_stop: Optional[float] = None
    record_stride: int = 1
    integrator: str = "rk4"
    event_tol: float = 1e-10
    checks: tuple = ()
    out: Optional[str] = None
    rates_tol: float = 1e-6
    decrease_tol: float = 1e-6
    residual_tol: float = 1e-8
    drift_tol: float = 1e-8
    final_goal_tol: float = 1e-4
    jump_factor: float = 10.0

    @property
    def effective_q_stop(self):
        """Brockett runs stop at ``Q < 1e-10`` by default; string runs are event driven."""
        if self.q_stop is not None:
            return self.q_stop
        return 1e-10 if self.plant == "brockett" else 0.0


_FLOATS = {
    "gamma", "omega0", "k", "h_star", "dt", "t_max", "q_stop", "event_tol",
    "rates_tol", "decrease_tol", "residual_tol", "drift_tol", "final_goal_tol", "jump_factor",
}
_VECTORS = {"x0", "v"}
_KEYS = {f.name for f in fields(ExperimentConfig)} - {"name"}


def _parse_float(text):
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"{text!r} is not finite")
    return v


def _convert(key, text):
    if key in _FLOATS:
        return _parse_float(text)
    if key in _VECTORS:
        parts = [p.strip() for p in text.split(",")]
        if not all(parts):
            raise ValueError(f"malformed vector {text!r}")
        return tuple(_parse_float(p) for p in parts)
    if key == "record_stride":
        return int(text)
    if key == "checks":
        return tuple(c.strip() for c in text.split(",") if c.strip())
    return text


def validate(cfg: ExperimentConfig, where="config"):
    """Raise :class:`ConfigError` unless every field satisfies its plant's constraints."""

    def bad(key, msg):
        raise ConfigError(f"{where}: {key}: {msg}")

    if cfg.plant not in PLANTS:
        bad("plant", f"must be one of {PLANTS}, got {cfg.plant!r}")
    if not cfg.gamma > 0.0:
        bad("gamma", f"must be positive, got {cfg.gamma}")
    dim = 3 if cfg.plant == "brockett" else 4
    if len(cfg.x0) != dim:
        bad("x0", f"needs {dim} components for plant {cfg.plant}, got {len(cfg.x0)}")
    if len(cfg.v) != 2 or abs(math.hypot(*cfg.v) - 1.0) > 1e-12:
        bad("v", f"must be a unit 2-vector, got {cfg.v}")
    if not cfg.omega0 > 0.0:
        bad("omega0", f"must be positive, got {cfg.omega0}")
    if not cfg.k > 0.0:
        bad("k", f"must be positive, got {cfg.k}")
    if not cfg.h_star >= 0.0:
        bad("h_star", f"must be nonnegative, got {cfg.h_star}")
    if cfg.goal not in GOALS:
        bad("goal", f"must be one of {GOALS}, got {cfg.goal!r}")
    if cfg.goal == "smooth" and cfg.plant != "string":
        bad("goal", "the smooth comparison goal exists for the string plant only")
    if not cfg.dt > 0.0:
        bad("dt", f"must be positive, got {cfg.dt}")
    if not cfg.t_max > cfg.dt:
        bad("t_max", f"must exceed dt, got {cfg.t_max}")
    if cfg.q_stop is not None and not cfg.q_stop >= 0.0:
        bad("q_stop", f"must be nonnegative, got {cfg.q_stop}")
    if cfg.record_stride < 1:
        bad("record_stride", f"must be >= 1, got {cfg.record_stride}")
    if cfg.integrator not in INTEGRATORS:
        bad("integrator", f"must be one of {INTEGRATORS}, got {cfg.integrator!r}")
    if cfg.integrator == "radau5" and cfg.plant != "brockett":
        bad("integrator", "radau5 is available for the brockett plant only")
    for key in ("event_tol", "rates_tol", "decrease_tol", "residual_tol", "drift_tol", "final_goal_tol", "jump_factor"):
        if not getattr(cfg, key) > 0.0:
            bad(key, f"must be positive, got {getattr(cfg, key)}")
    allowed = BROCKETT_CHECKS if cfg.plant == "brockett" else STRING_CHECKS
    for c in cfg.checks:
        if c not in allowed:
            bad("checks", f"unknown check {c!r} for plant {cfg.plant}; choose from {allowed}")
    return cfg


def parse_text(text, name="experiment", where="<string>") -> ExperimentConfig:
    values = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{where}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in _KEYS:
            raise ConfigError(f"{where}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{where}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        if not val:
            raise ConfigError(f"{where}:{lineno}: {key}: empty value")
        try:
            values[key] = _convert(key, val)
        except ValueError as exc:
            raise ConfigError(f"{where}:{lineno}: {key}: {exc}") from None
        seen[key] = lineno
    for req in ("plant", "x0"):
        if req not in values:
            raise ConfigError(f"{where}: missing required key {req!r}")
    return validate(ExperimentConfig(name=name, **values), where)


def load(path) -> ExperimentConfig:
    """Read a config file, or a shipped config by bare name (e.g. ``brockett_paper``)."""
    p = str(path)
    if not os.path.exists(p) and p in shipped_names():
        return parse_text(shipped_text(p), name=p, where=f"{p}.cfg")
    with open(p, encoding="utf-8") as fh:
        text = fh.read()
    stem = os.path.splitext(os.path.basename(p))[0]
    return parse_text(text, name=stem, where=p)


def override(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    """Apply non-None overrides and revalidate."""
    kw = {k: v for k, v in kw.items() if v is not None}
    return validate(replace(cfg, **kw), f"{cfg.name} (overrides)") if kw else cfg


def _configs_dir():
    return resources.files("nssg") / "configs"


def shipped_names():
    return sorted(
        e.name[:-4] for e in _configs_dir().iterdir() if e.name.endswith(".cfg")
    )


def shipped_text(name):
    return (_configs_dir() / f"{name}.cfg").read_text(encoding="utf-8")
