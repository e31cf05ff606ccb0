"""Numeric directional derivatives and superdifferential support functions.

Both are used inside the plants and, independently, as test oracles for the
analytic derivative formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class EvaluationError(ArithmeticError):
    """The scalar field returned a non-finite value."""


class NonConvergenceError(ArithmeticError):
    """Difference quotients did not settle across the step schedule."""

    def __init__(self, spread: float, estimates):
        self.spread = spread
        self.estimates = list(estimates)
        super().__init__(f"difference quotients not Cauchy (spread {spread:.3e})")


@dataclass(frozen=True)
class FdSchedule:
    """Decreasing step sizes for the one-sided limit alpha -> +0.

    With ``richardson`` the first-order term of consecutive quotients is
    eliminated, leaving O(alpha^2) truncation error.
    """

    alphas: tuple = (1e-2, 1e-3, 1e-4, 1e-5)
    richardson: bool = True
    rtol: float = 1e-6

    def __post_init__(self):
        a = tuple(float(v) for v in self.alphas)
        if len(a) < 2:
            raise ValueError("schedule needs at least two step sizes")
        if any(not v > 0.0 for v in a):
            raise ValueError("step sizes must be positive")
        if any(a[i + 1] >= a[i] for i in range(len(a) - 1)):
            raise ValueError("step sizes must be strictly decreasing")
        if self.richardson and len(a) < 3:
            raise ValueError("Richardson extrapolation needs at least three step sizes")
        object.__setattr__(self, "alphas", a)


DEFAULT_SCHEDULE = FdSchedule()


def _value(f, x):
    v = float(f(x))
    if not math.isfinite(v):
        raise EvaluationError(f"non-finite value {v!r} at {np.asarray(x).tolist()}")
    return v


def fd_directional_derivative(f, x, h, sched: FdSchedule = DEFAULT_SCHEDULE) -> float:
    """Estimate the one-sided directional derivative of ``f`` at ``x`` along ``h``.

    Quotients ``(f(x + a h) - f(x)) / a`` are formed for every ``a`` in the
    schedule (forward differences only; central differences are wrong at
    kinks). ``h`` is used as given, not normalized.

    Raises
    ------
    EvaluationError
        ``f`` produced a non-finite value.
    NonConvergenceError
        The last two estimates differ by more than ``rtol * (1 + |estimate|)``.
    """
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(h)):
        raise EvaluationError("direction has non-finite components")
    if not np.any(h):
        return 0.0
    f0 = _value(f, x)
    quotients = [(_value(f, x + a * h) - f0) / a for a in sched.alphas]
    if sched.richardson:
        est = []
        for i in range(len(quotients) - 1):
            r = sched.alphas[i] / sched.alphas[i + 1]
            est.append((r * quotients[i + 1] - quotients[i]) / (r - 1.0))
    else:
        est = quotients
    spread = abs(est[-1] - est[-2])
    if spread > sched.rtol * (1.0 + abs(est[-1])):
        raise NonConvergenceError(spread, est)
    return est[-1]


@dataclass(frozen=True)
class SuperdiffVertexSet:
    """Extreme points of a polytope superdifferential."""

    vertices: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if v.size == 0:
            raise ValueError("superdifferential needs at least one vertex")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertices must be finite")
        object.__setattr__(self, "vertices", v)


def support_min(s, h) -> float:
    """Minimum of ``v . h`` over the convex hull of the vertices of ``s``.

    A linear function attains its minimum over a polytope at a vertex, so the
    vertex minimum is exact.
    """
    if not isinstance(s, SuperdiffVertexSet):
        s = SuperdiffVertexSet(s)
    h = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(h)):
        raise ValueError("direction has non-finite components")
    return float(np.min(s.vertices @ h))
