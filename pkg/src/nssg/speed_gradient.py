"""Generic nonsmooth speed-gradient law and assumption monitors.

The control is ``u = gamma * psi`` where ``psi`` makes a non-obtuse angle with
``-g`` and ``g = grad_u omega`` is the speed-gradient of the goal. Plants
supply ``g`` (through :class:`GoalEvaluation`); this module turns it into a
control and checks the convergence assumptions numerically.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Optional

import numpy as np


class ContractViolation(ValueError):
    """A custom psi broke the acute-angle condition g . psi <= 0."""


class EmptyRegionError(ValueError):
    """No grid point satisfies Q >= delta, |x| <= r, x outside C."""


NORMALIZED = "normalized"
RAW = "raw"
CUSTOM = "custom"
_MODES = (NORMALIZED, RAW, CUSTOM)


@dataclass(frozen=True)
class GoalEvaluation:
    q: float
    g: np.ndarray
    branch: Hashable = None

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.g, dtype=float))
        if not np.all(np.isfinite(g)):
            raise ValueError("speed-gradient must be finite")
        if not self.q >= 0.0:
            raise ValueError(f"goal value must be nonnegative, got {self.q}")
        object.__setattr__(self, "g", g)


@dataclass(frozen=True)
class PseudogradientLaw:
    """Scalar-gain pseudogradient law.

    ``mode`` is ``"normalized"`` (psi = -g/|g|), ``"raw"`` (psi = -g) or
    ``"custom"`` (psi supplied as ``psi(x, u, t)``; the caller vouches for
    local boundedness through ``bounded=True``).
    """

    gamma: float
    mode: str = NORMALIZED
    psi: Optional[Callable] = None
    zero_policy: Optional[np.ndarray] = None
    bounded: bool = False
    angle_tol: float = 1e-12

    def __post_init__(self):
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"gain must be positive and finite, got {self.gamma}")
        if self.mode not in _MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {_MODES}")
        if self.mode == CUSTOM:
            if self.psi is None:
                raise ValueError("custom mode needs a psi callable")
            if not self.bounded:
                raise ValueError("custom psi must be asserted locally bounded (bounded=True)")


def acute_angle_residual(g, psi) -> float:
    """Return ``g . psi``; the law is admissible where this is <= 0."""
    return float(np.dot(np.asarray(g, dtype=float), np.asarray(psi, dtype=float)))


def control_from_gradient(ev: GoalEvaluation, law: PseudogradientLaw, x=None, u=None, t=0.0):
    g = ev.g
    if law.mode == RAW:
        return -law.gamma * g
    if law.mode == NORMALIZED:
        m = float(np.max(np.abs(g))) if g.size else 0.0
        if m == 0.0:
            if law.zero_policy is None:
                return np.zeros_like(g)
            return np.asarray(law.zero_policy, dtype=float).copy()
        # rescale first so tiny gradients do not lose precision in |g|^2
        gs = g / m
        return -law.gamma * (gs / float(np.linalg.norm(gs)))
    psi = np.asarray(law.psi(x, u, t), dtype=float)
    res = acute_angle_residual(g, psi)
    if res > law.angle_tol * (1.0 + float(np.linalg.norm(g)) * float(np.linalg.norm(psi))):
        raise ContractViolation(f"g . psi = {res:.3e} > 0 at x = {np.asarray(x).tolist()}")
    return law.gamma * psi


@dataclass(frozen=True)
class AssumptionScanSpec:
    delta: float
    radius: float
    grid_resolution: int
    excluded: Optional[Callable] = None
    dim: int = 3

    def __post_init__(self):
        if not self.delta > 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.radius > 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if int(self.grid_resolution) != self.grid_resolution or self.grid_resolution < 2:
            raise ValueError(f"grid_resolution must be an integer >= 2, got {self.grid_resolution}")
        if self.dim < 1:
            raise ValueError("dim must be positive")


@dataclass(frozen=True)
class ScanResult:
    delta: float
    radius: float
    resolution: int
    a_lower_bound: Optional[float]
    argmin_point: Optional[tuple]
    admissible_points: int = 0

    @property
    def empty(self):
        return self.a_lower_bound is None

    def to_dict(self):
        return {
            "delta": self.delta,
            "radius": self.radius,
            "resolution": self.resolution,
            "a_lower_bound": self.a_lower_bound,
            "argmin_point": None if self.argmin_point is None else list(self.argmin_point),
            "admissible_points": self.admissible_points,
            "status": "empty_region" if self.empty else "ok",
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def scan_grid(spec: AssumptionScanSpec):
    """Points of the cube grid [-r, r]^dim (``grid_resolution`` per axis)."""
    axis = np.linspace(-spec.radius, spec.radius, int(spec.grid_resolution))
    return itertools.product(axis, repeat=spec.dim)


def scan_assumption4(goal_and_gradient, spec: AssumptionScanSpec, *, raise_on_empty=True) -> ScanResult:
    """Smallest ``|g(x)|`` over grid points with ``Q(x) >= delta``, ``|x| <= r``, ``x`` not in C.

    Ties are broken by first grid point in lexicographic order, so the result
    does not depend on evaluation order.
    """
    best = math.inf
    arg = None
    count = 0
    r2 = spec.radius * spec.radius
    for p in scan_grid(spec):
        x = np.array(p)
        if float(x @ x) > r2 * (1.0 + 1e-12):
            continue
        if spec.excluded is not None and spec.excluded(x):
            continue
        ev = goal_and_gradient(x)
        if ev.q < spec.delta:
            continue
        count += 1
        n = float(np.linalg.norm(ev.g))
        if n < best:
            best = n
            arg = tuple(float(v) for v in x)
    if arg is None:
        if raise_on_empty:
            raise EmptyRegionError(
                f"no admissible grid point for delta={spec.delta}, r={spec.radius}, "
                f"resolution={spec.grid_resolution}"
            )
        return ScanResult(spec.delta, spec.radius, int(spec.grid_resolution), None, None, 0)
    return ScanResult(spec.delta, spec.radius, int(spec.grid_resolution), best, arg, count)


@dataclass
class DecreaseReport:
    max_violation: float = 0.0
    violation_times: list = field(default_factory=list)
    violation_indices: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violation_indices


def monitor_decrease(qs, ts, tol: float = 1e-6) -> DecreaseReport:
    """Flag every sample where the goal rose by more than ``tol``.

    The violation time reported is that of the later sample.
    """
    qs = np.asarray(qs, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if qs.shape != ts.shape:
        raise ValueError("qs and ts must have equal length")
    if ts.size > 1 and not np.all(np.diff(ts) > 0):
        raise ValueError("timestamps must be strictly increasing")
    jumps = np.diff(qs)
    idx = np.nonzero(jumps > tol)[0]
    rep = DecreaseReport()
    if idx.size:
        rep.max_violation = float(jumps[idx].max())
        rep.violation_indices = [int(i) for i in idx]
        rep.violation_times = [float(ts[i + 1]) for i in idx]
    return rep
