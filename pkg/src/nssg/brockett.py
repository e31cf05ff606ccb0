"""Brockett (nonholonomic) integrator under the nonsmooth speed-gradient law.

Dynamics ``x1' = u1, x2' = u2, x3' = x1 u2 - x2 u1`` with goal
``Q(x) = (sigma - |x3|)^2 + x3^2``, ``sigma = sqrt(x1^2 + x2^2)``. The control
has unit-gain direction ``-g/|g|`` with four branches selected by whether
``sigma`` and ``x3`` vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Optional

import numpy as np

from ._kernels import kernels
from .nonsmooth import SuperdiffVertexSet
from .speed_gradient import GoalEvaluation

SINGULAR_GRADIENT = 1e-12


class BranchTag(IntEnum):
    ORIGIN = 0
    PLANE_X3_ZERO = 1
    AXIS_SIGMA_ZERO = 2
    GENERIC = 3


AXIS = int(BranchTag.AXIS_SIGMA_ZERO)
GENERIC = int(BranchTag.GENERIC)


class SingularGradientError(ArithmeticError):
    """|grad_u omega| vanished in the generic branch (should be unreachable)."""


class DomainError(ValueError):
    pass


def _const_v(x3):
    return (1.0, 0.0)


@dataclass(frozen=True)
class BrockettControllerParams:
    gamma: float = 0.1
    v_selector: Optional[Callable[[float], tuple]] = None
    axis_eps: float = 0.0
    plane_eps: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.axis_eps < 0.0 or self.plane_eps < 0.0:
            raise ValueError("classification thresholds must be nonnegative")

    def v(self, x3):
        v1, v2 = (self.v_selector or _const_v)(x3)
        n = math.hypot(v1, v2)
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"v_selector must return a unit vector, got ({v1}, {v2})")
        return float(v1), float(v2)


def sigma(x) -> float:
    return math.hypot(x[0], x[1])


def rhs(x, u):
    return np.array([u[0], u[1], x[0] * u[1] - x[1] * u[0]], dtype=float)


def goal_q(x) -> float:
    x3 = float(x[2])
    d = math.hypot(x[0], x[1]) - abs(x3)
    return d * d + x3 * x3


def classify(x, params: Optional[BrockettControllerParams] = None) -> BranchTag:
    axis_eps = params.axis_eps if params else 0.0
    plane_eps = params.plane_eps if params else 0.0
    return BranchTag(kernels.brockett_mode(float(x[0]), float(x[1]), float(x[2]), axis_eps, plane_eps))


def in_excluded_set(x) -> bool:
    """Membership in C: the x3-axis without the origin."""
    return sigma(x) == 0.0 and x[2] != 0.0


def goal_q_dirderiv(x, h) -> float:
    """Analytic Hadamard directional derivative of Q at ``x`` along ``h``.

    Branches are chosen by exact zero tests on ``sigma`` and ``x3``.
    """
    x1, x2, x3 = (float(v) for v in x)
    h1, h2, h3 = (float(v) for v in h)
    s = math.hypot(x1, x2)
    if s == 0.0:
        return 4.0 * x3 * h3 - 2.0 * abs(x3) * math.hypot(h1, h2)
    if x3 == 0.0:
        return 2.0 * x1 * h1 + 2.0 * x2 * h2 - 2.0 * abs(h3) * s
    return (
        2.0 * x1 * h1 + 2.0 * x2 * h2 + 4.0 * x3 * h3
        - 2.0 * abs(x3) * (x1 * h1 + x2 * h2) / s
        - 2.0 * math.copysign(1.0, x3) * s * h3
    )


def goal_q_superdiff(x) -> SuperdiffVertexSet:
    """Vertex set of the superdifferential of Q where it is a polytope.

    Generic points give the gradient; the plane x3 = 0 gives a segment. On the
    x3-axis the superdifferential is a disc, which has no vertex form.
    """
    x1, x2, x3 = (float(v) for v in x)
    s = math.hypot(x1, x2)
    if s == 0.0:
        if x3 == 0.0:
            return SuperdiffVertexSet([[0.0, 0.0, 0.0]])
        raise DomainError("superdifferential on the x3-axis is a disc, not a polytope")
    if x3 == 0.0:
        return SuperdiffVertexSet([[2.0 * x1, 2.0 * x2, 2.0 * s], [2.0 * x1, 2.0 * x2, -2.0 * s]])
    k = 2.0 * abs(x3) / s
    return SuperdiffVertexSet([[
        2.0 * x1 - k * x1,
        2.0 * x2 - k * x2,
        4.0 * x3 - 2.0 * math.copysign(1.0, x3) * s,
    ]])


def grad_u_omega_expanded(x):
    """Generic-branch speed-gradient written term by term as the partial derivatives of omega."""
    x1, x2, x3 = (float(v) for v in x)
    s = math.hypot(x1, x2)
    sg = math.copysign(1.0, x3)
    d1 = 2.0 * x1 - 4.0 * x2 * x3 - 2.0 * abs(x3) * x1 / s + 2.0 * sg * x2 * s
    d2 = 2.0 * x2 + 4.0 * x1 * x3 - 2.0 * abs(x3) * x2 / s - 2.0 * sg * x1 * s
    return np.array([d1, d2])


def grad_u_omega(x, params: Optional[BrockettControllerParams] = None):
    """Speed-gradient ``g = grad_u omega`` and the branch that produced it.

    The generic branch uses the factored form ``g = (a x1 + b x2, a x2 - b x1)``
    with ``a = 2(1 - |x3|/sigma)`` and ``b = 2 sign(x3)(sigma - 2|x3|)``.
    """
    params = params or BrockettControllerParams()
    x1, x2, x3 = (float(v) for v in x)
    tag = classify(x, params)
    if tag is BranchTag.ORIGIN:
        return np.zeros(2), tag
    if tag is BranchTag.PLANE_X3_ZERO:
        return np.array([2.0 * x1, 2.0 * x2]), tag
    if tag is BranchTag.AXIS_SIGMA_ZERO:
        v1, v2 = params.v(x3)
        return np.array([-2.0 * abs(x3) * v1, -2.0 * abs(x3) * v2]), tag
    return _generic_g(x), tag


def goal_and_gradient(x, params: Optional[BrockettControllerParams] = None) -> GoalEvaluation:
    g, tag = grad_u_omega(x, params)
    return GoalEvaluation(goal_q(x), g, tag)


def control(x, params: Optional[BrockettControllerParams] = None, branch: Optional[BranchTag] = None):
    """Four-case feedback; ``|u| = gamma`` away from the origin.

    ``branch`` forces the formula of a given case (the simulator holds the
    branch fixed over a step); by default it is classified from ``x``.
    """
    params = params or BrockettControllerParams()
    tag = classify(x, params) if branch is None else BranchTag(branch)
    if tag is BranchTag.GENERIC:
        n = _generic_g_norm(x)
        if n < SINGULAR_GRADIENT:
            raise SingularGradientError(f"|grad_u omega| = {n:.3e} at x = {[float(v) for v in x]}")
    v1, v2 = params.v(float(x[2])) if tag is BranchTag.AXIS_SIGMA_ZERO else (1.0, 0.0)
    u1, u2 = kernels.brockett_control(float(x[0]), float(x[1]), float(x[2]), params.gamma, v1, v2, int(tag))
    return np.array([u1, u2])


def _generic_g_norm(x):
    # |g| = sigma |(a, b)|, evaluated without dividing by sigma
    x1, x2, x3 = (float(v) for v in x)
    s = math.hypot(x1, x2)
    return math.hypot(2.0 * (s - abs(x3)), 2.0 * s * (s - 2.0 * abs(x3)))


def _generic_g(x):
    x1, x2, x3 = (float(v) for v in x)
    s = math.hypot(x1, x2)
    e1, e2 = x1 / s, x2 / s
    a = 2.0 * (s - abs(x3))
    b = 2.0 * math.copysign(1.0, x3) * s * (s - 2.0 * abs(x3))
    return np.array([a * e1 + b * e2, a * e2 - b * e1])


def reduced_rates(x, params: Optional[BrockettControllerParams] = None):
    """Closed-form ``(dx3/dt, dsigma/dt)`` on the generic branch.

    ``|g|`` is taken from the term-by-term partial derivatives, not the
    factored form the controller uses.
    """
    params = params or BrockettControllerParams()
    x1, x2, x3 = (float(v) for v in x)
    s = math.hypot(x1, x2)
    if s == 0.0 or x3 == 0.0:
        raise DomainError("reduced rates exist only off the x3-axis and off the plane x3 = 0")
    gn = float(np.linalg.norm(grad_u_omega_expanded(x)))
    ax3 = abs(x3)
    g = params.gamma
    dx3 = -2.0 * g * s * s * math.copysign(1.0, x3) * (2.0 * ax3 - s) / gn
    ds = -2.0 * g * (s - ax3) / gn
    return dx3, ds


def closed_loop_field(x, params: Optional[BrockettControllerParams] = None):
    u = control(x, params)
    return rhs(x, u)


def make_system(params: Optional[BrockettControllerParams] = None, integrator: str = "rk4"):
    """Closed-loop system for :func:`nssg.sim.simulate`."""
    from .sim import ClosedLoopSystem

    params = params or BrockettControllerParams()
    if integrator not in ("rk4", "radau5"):
        raise ValueError(f"unknown integrator {integrator!r}")

    brockett_mode = kernels.brockett_mode
    axis_eps, plane_eps = params.axis_eps, params.plane_eps

    def mode(x):
        return brockett_mode(float(x[0]), float(x[1]), float(x[2]), axis_eps, plane_eps)

    def controller(x, m):
        x3 = float(x[2])
        v1, v2 = params.v(x3) if m == AXIS else (1.0, 0.0)
        return np.array(kernels.brockett_control(float(x[0]), float(x[1]), x3, params.gamma, v1, v2, int(m)))

    def make_stepper():
        return _BrockettStepper(params, integrator)

    return ClosedLoopSystem(
        dimension=3,
        control_dimension=2,
        rhs=rhs,
        controller=controller,
        goal=goal_q,
        mode=mode,
        zero_mode=int(BranchTag.ORIGIN),
        in_excluded_set=in_excluded_set,
        make_stepper=make_stepper,
        state_names=("x1", "x2", "x3"),
    )


class _BrockettStepper:
    """Per-run stepping context (holds the Radau warm start)."""

    def __init__(self, params, integrator):
        self.params = params
        self.radau = integrator == "radau5"
        self._z = (0.0,) * 6
        self._dt = None

    def __call__(self, x, dt, mode, commit=True):
        p = self.params
        x1, x2, x3 = float(x[0]), float(x[1]), float(x[2])
        v1, v2 = p.v(x3) if mode == AXIS else (1.0, 0.0)
        if not self.radau or mode != GENERIC:
            return np.array(kernels.brockett_rk4(x1, x2, x3, p.gamma, v1, v2, mode, dt))
        z0 = self._z
        if self._dt is not None and abs(dt - self._dt) > 1e-9 * self._dt:
            r = dt / self._dt
            z0 = tuple(v * r for v in z0)
        out, z = kernels.brockett_radau5(x1, x2, x3, p.gamma, v1, v2, mode, dt, z0)
        if commit:
            self._z, self._dt = z, dt
        return np.array(out)
