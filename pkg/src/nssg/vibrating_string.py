"""Single-mode nonlinear string with energy control.

State ``(q1, q2, p1, p2)``; dynamics ``q' = p``,
``p' = -omega0^2 (1 + K |q|^2) q + u``. The goal is ``|H - H*|`` and the
control ``u = -gamma sign(H - H*) p`` (with ``sign(0) = 0``) drives the energy
to the target level in finite time when ``H* > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import kernels

BLOWUP_FACTOR = 10.0


@dataclass(frozen=True)
class StringParams:
    """Plant and controller constants.

    ``smooth_goal`` switches to the comparison law ``u = -gamma (H - H*) p``
    (speed-gradient of ``(H - H*)^2 / 2``); it is not the default law.
    """

    omega0: float = 1.0
    K: float = 1.0
    gamma: float = 0.5
    h_star: float = 0.25
    smooth_goal: bool = False

    def __post_init__(self):
        for name in ("omega0", "K", "gamma"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not (self.h_star >= 0.0 and math.isfinite(self.h_star)):
            raise ValueError(f"h_star must be nonnegative, got {self.h_star}")


def hamiltonian(s, params: StringParams = StringParams()) -> float:
    q1, q2, p1, p2 = float(s[0]), float(s[1]), float(s[2]), float(s[3])
    r2 = q1 * q1 + q2 * q2
    w2 = params.omega0 * params.omega0
    return 0.5 * (p1 * p1 + p2 * p2) + 0.5 * w2 * r2 + 0.25 * w2 * params.K * r2 * r2


def rhs(s, u, params: StringParams = StringParams()):
    q1, q2, p1, p2 = (float(v) for v in s)
    k = -params.omega0 ** 2 * (1.0 + params.K * (q1 * q1 + q2 * q2))
    return np.array([p1, p2, k * q1 + u[0], k * q2 + u[1]])


def goal(s, params: StringParams = StringParams()) -> float:
    d = hamiltonian(s, params) - params.h_star
    if params.smooth_goal:
        return 0.5 * d * d
    return abs(d)


def energy_sign(s, params: StringParams = StringParams()) -> int:
    d = hamiltonian(s, params) - params.h_star
    return (d > 0.0) - (d < 0.0)


def control(s, params: StringParams = StringParams()):
    """``-gamma sign(H - H*) p``; zero exactly on the target level."""
    q1, q2, p1, p2 = (float(v) for v in s)
    m = energy_sign(s, params)
    return np.array(kernels.string_control(
        q1, q2, p1, p2, params.omega0, params.K, params.gamma, params.h_star, m, params.smooth_goal
    ))


def energy_rate(s, params: StringParams = StringParams()) -> float:
    """Closed-loop ``dH/dt = p . u``."""
    p = np.asarray(s, dtype=float)[2:]
    return float(p @ control(s, params))


def blowup_level(s0, params: StringParams) -> float:
    return BLOWUP_FACTOR * max(hamiltonian(s0, params), params.h_star)


def latch_event(params: StringParams, tolerance: float = 1e-10):
    """Event that switches the control off on the target level."""
    from .sim import LATCH, EventSpec

    return EventSpec("energy_target", lambda s: hamiltonian(s, params) - params.h_star, LATCH, tolerance)


def make_system(params: StringParams = StringParams(), energy_cap=None):
    """Closed-loop system; ``energy_cap`` trips ``energy_blowup`` when H exceeds it."""
    from .sim import ClosedLoopSystem

    w, k, g, hs, sm = params.omega0, params.K, params.gamma, params.h_star, params.smooth_goal

    def mode(s):
        return energy_sign(s, params)

    def controller(s, m):
        return np.array(kernels.string_control(
            float(s[0]), float(s[1]), float(s[2]), float(s[3]), w, k, g, hs, int(m), sm
        ))

    def stepper(s, dt, m, commit=True):
        return np.array(kernels.string_rk4(
            float(s[0]), float(s[1]), float(s[2]), float(s[3]), w, k, g, hs, int(m), sm, dt
        ))

    blowup = None
    if energy_cap is not None:
        cap = float(energy_cap)

        def blowup(s):
            return hamiltonian(s, params) > cap

    return ClosedLoopSystem(
        dimension=4,
        control_dimension=2,
        rhs=lambda s, u: rhs(s, u, params),
        controller=controller,
        goal=lambda s: goal(s, params),
        mode=mode,
        zero_mode=0,
        blowup=blowup,
        make_stepper=lambda: stepper,
        state_names=("q1", "q2", "p1", "p2"),
    )
