"""Fixed-step closed-loop integration with event localization.

The discrete branch of a discontinuous controller (``ClosedLoopSystem.mode``)
is evaluated once at the start of each step and held for every stage of that
step; the control itself is re-evaluated at the stage states. Sign changes of
event indicators and the crossing of ``Q < q_stop`` are located by bisection
on the step fraction, using uncommitted partial steps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._kernels import kernels

STOP = "stop"
LATCH = "latch"
RECORD = "record"
_ACTIONS = (STOP, LATCH, RECORD)

CONVERGED = "converged"
HORIZON = "horizon"
ENTERED_C = "entered_C"
SOLVER_FAILURE = "solver_failure"
ENERGY_BLOWUP = "energy_blowup"
STOPPED = "stopped"
TERMINATIONS = (CONVERGED, HORIZON, ENTERED_C, SOLVER_FAILURE, ENERGY_BLOWUP, STOPPED)

_PROBE_ITERS = 60


class SolverFailure(ArithmeticError):
    """A stage or step produced a non-finite state."""


class EventPreconditionError(ValueError):
    """The indicator does not change sign across the given step."""


def _zero_mode(x):
    return 0


@dataclass
class ClosedLoopSystem:
    """Plant plus feedback, in the form the simulator consumes.

    ``controller(x, mode)`` returns the control for the branch ``mode``;
    ``mode(x)`` classifies a state. ``zero_mode`` is the branch whose control
    is identically zero (used after convergence or a latch event).
    ``make_stepper`` may supply a per-run stepping object
    ``stepper(x, dt, mode, commit=True)``; RK4 is used otherwise.
    """

    dimension: int
    control_dimension: int
    rhs: Callable
    controller: Callable
    goal: Callable
    mode: Callable = _zero_mode
    zero_mode: Optional[int] = None
    in_excluded_set: Optional[Callable] = None
    blowup: Optional[Callable] = None
    make_stepper: Optional[Callable] = None
    state_names: Sequence[str] = ()
    control_names: Sequence[str] = ()

    def __post_init__(self):
        if self.dimension < 1 or self.control_dimension < 1:
            raise ValueError("dimensions must be positive")
        if not self.state_names:
            self.state_names = tuple(f"x{i + 1}" for i in range(self.dimension))
        if not self.control_names:
            self.control_names = tuple(f"u{i + 1}" for i in range(self.control_dimension))
        if len(self.state_names) != self.dimension or len(self.control_names) != self.control_dimension:
            raise ValueError("name tuples must match the dimensions")

    def control(self, x, mode=None):
        m = self.mode(x) if mode is None else mode
        if self.zero_mode is not None and m == self.zero_mode:
            return np.zeros(self.control_dimension)
        return np.asarray(self.controller(x, m), dtype=float)

    def field(self, x, mode):
        return np.asarray(self.rhs(x, self.control(x, mode)), dtype=float)


@dataclass(frozen=True)
class EventSpec:
    name: str
    indicator: Callable
    action: str = RECORD
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.action not in _ACTIONS:
            raise ValueError(f"unknown event action {self.action!r}; choose from {_ACTIONS}")
        if not self.tolerance > 0.0:
            raise ValueError(f"event tolerance must be positive, got {self.tolerance}")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_max: float = 100.0
    q_stop: float = 1e-10
    events: tuple = ()
    record_stride: int = 1
    converge_tol: float = 1e-12

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.t_max > 0.0 and math.isfinite(self.t_max)):
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if not self.dt < self.t_max:
            raise ValueError("dt must be smaller than t_max")
        if not self.q_stop >= 0.0:
            raise ValueError(f"q_stop must be nonnegative, got {self.q_stop}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError(f"record_stride must be a positive integer, got {self.record_stride}")
        object.__setattr__(self, "events", tuple(self.events))


@dataclass(frozen=True)
class Event:
    name: str
    t: float
    state: tuple

    def to_dict(self):
        return {"name": self.name, "t": self.t, "state": list(self.state)}


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    goals: np.ndarray
    modes: np.ndarray
    events: list = field(default_factory=list)
    termination: str = HORIZON
    t_converged: Optional[float] = None
    message: str = ""
    experimental: bool = False
    state_names: tuple = ()
    control_names: tuple = ()

    def __len__(self):
        return len(self.t)

    @property
    def final_state(self):
        return self.states[-1]

    def csv_text(self):
        head = ",".join(("t", *self.state_names, *self.control_names, "goal"))
        rows = [head]
        for i in range(len(self.t)):
            vals = (self.t[i], *self.states[i], *self.controls[i], self.goals[i])
            rows.append(",".join(format(float(v), ".17g") for v in vals))
        return "\n".join(rows) + "\n"

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.csv_text())

    def events_json(self):
        return json.dumps([e.to_dict() for e in self.events], indent=2) + "\n"

    def write_events(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.events_json())


def _check_finite(x, where):
    # a single reduction; any nan/inf component makes the sum non-finite
    if not math.isfinite(float(np.add.reduce(x))):
        raise SolverFailure(f"non-finite state {where}")
    return x


def step_rk4(sys: ClosedLoopSystem, s, dt, mode=None):
    """Classical RK4 step with the branch held at ``mode`` (classified from ``s`` if omitted)."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    s = np.asarray(s, dtype=float)
    m = sys.mode(s) if mode is None else mode
    k1 = _check_finite(sys.field(s, m), "at stage 1")
    k2 = _check_finite(sys.field(s + 0.5 * dt * k1, m), "at stage 2")
    k3 = _check_finite(sys.field(s + 0.5 * dt * k2, m), "at stage 3")
    k4 = _check_finite(sys.field(s + dt * k3, m), "at stage 4")
    return _check_finite(s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), "after step")


def _default_stepper(sys):
    def stepper(x, dt, mode, commit=True):
        return step_rk4(sys, x, dt, mode)
    return stepper


def _advance(stepper, x, dt, mode, commit=True):
    try:
        out = stepper(x, dt, mode, commit=commit)
    except SolverFailure:
        raise
    except (kernels.KernelError, ArithmeticError, FloatingPointError) as exc:
        raise SolverFailure(str(exc)) from exc
    return _check_finite(np.asarray(out, dtype=float), "after step")


def _crossed(a, b):
    return b == 0.0 or (a > 0.0) != (b > 0.0)


def _bisect(stepper, x, dt, mode, crossed, tol, hi=1.0, x_hi=None):
    """Shrink ``[0, hi]`` (step fractions) around the first crossing.

    ``crossed(state)`` is true on the far side. Returns the fraction and
    state at the far end of the final bracket.
    """
    lo = 0.0
    if x_hi is None:
        x_hi = _advance(stepper, x, hi * dt, mode, commit=False)
    while (hi - lo) * dt > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        xm = _advance(stepper, x, mid * dt, mode, commit=False)
        if crossed(xm):
            hi, x_hi = mid, xm
        else:
            lo = mid
    return hi, x_hi


def locate_event(sys: ClosedLoopSystem, spec: EventSpec, s_before, t_before, dt, mode=None, stepper=None):
    """Locate a sign change of ``spec.indicator`` inside one step.

    Returns ``(t_event, s_event)`` where ``s_event`` is the state at the
    upper end of the final bracket (already on or past the surface).
    """
    s_before = np.asarray(s_before, dtype=float)
    m = sys.mode(s_before) if mode is None else mode
    stepper = stepper or _default_stepper(sys)
    f0 = float(spec.indicator(s_before))
    s_after = _advance(stepper, s_before, dt, m, commit=False)
    f1 = float(spec.indicator(s_after))
    if f0 == 0.0 or not _crossed(f0, f1):
        raise EventPreconditionError(
            f"indicator {spec.name!r} does not change sign over the step ({f0:.3e} -> {f1:.3e})"
        )

    def crossed(xs):
        return _crossed(f0, float(spec.indicator(xs)))

    frac, s_event = _bisect(stepper, s_before, dt, m, crossed, spec.tolerance, x_hi=s_after)
    return t_before + frac * dt, s_event


def _probe_minimum(stepper, goal, x, dt, mode):
    """Golden-section search for the smallest goal value inside a step."""
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, 1.0
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc = goal(_advance(stepper, x, c * dt, mode, commit=False))
    fd = goal(_advance(stepper, x, d * dt, mode, commit=False))
    for _ in range(_PROBE_ITERS):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = goal(_advance(stepper, x, c * dt, mode, commit=False))
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = goal(_advance(stepper, x, d * dt, mode, commit=False))
    return (c, fc) if fc <= fd else (d, fd)


class _Recorder:
    def __init__(self, sys):
        self.sys = sys
        self.t, self.x, self.u, self.q, self.m = [], [], [], [], []

    def add(self, t, x, q, clamp, mode=None):
        if clamp:
            m = self.sys.zero_mode if self.sys.zero_mode is not None else self.sys.mode(x)
            u = np.zeros(self.sys.control_dimension)
        else:
            m = self.sys.mode(x) if mode is None else mode
            u = self.sys.control(x, m)
        row = (float(t), np.array(x, dtype=float), np.asarray(u, dtype=float), float(q), int(m))
        if self.t and self.t[-1] == row[0]:
            self.t[-1], self.x[-1], self.u[-1], self.q[-1], self.m[-1] = row
            return
        if self.t and row[0] < self.t[-1]:
            raise AssertionError("sample times must increase")
        for lst, v in zip((self.t, self.x, self.u, self.q, self.m), row):
            lst.append(v)

    def build(self, **kw):
        sys = self.sys
        return Trajectory(
            t=np.array(self.t),
            states=np.array(self.x).reshape(-1, sys.dimension),
            controls=np.array(self.u).reshape(-1, sys.control_dimension),
            goals=np.array(self.q),
            modes=np.array(self.m, dtype=int),
            state_names=tuple(sys.state_names),
            control_names=tuple(sys.control_names),
            **kw,
        )


def simulate(sys: ClosedLoopSystem, s0, cfg: SimConfig = SimConfig(), experimental: bool = False) -> Trajectory:
    """Integrate the closed loop from ``s0`` until convergence, a stop event or ``t_max``.

    Grid times are ``k * dt``; the last step is shortened to land on
    ``t_max``. Samples are recorded every ``record_stride`` steps, at every
    event and at the final state. After convergence or a latch the recorded
    control is zero.
    """
    x = np.array(s0, dtype=float).reshape(-1)
    if x.size != sys.dimension:
        raise ValueError(f"initial state has {x.size} components, expected {sys.dimension}")
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite")
    for ev in cfg.events:
        if ev.action == LATCH and sys.zero_mode is None:
            raise ValueError("latch events need a system with a zero_mode")

    stepper = sys.make_stepper() if sys.make_stepper is not None else _default_stepper(sys)
    rec = _Recorder(sys)
    events: list = []
    fired = [False] * len(cfg.events)
    latched = False
    dt, t_max, q_stop = cfg.dt, cfg.t_max, cfg.q_stop

    t = 0.0
    k = 0
    q = float(sys.goal(x))
    ind = [float(ev.indicator(x)) for ev in cfg.events]
    mode_x = sys.mode(x)
    rec.add(t, x, q, False, mode_x)

    def finish(termination, t_conv=None, message=""):
        return rec.build(
            events=events, termination=termination, t_converged=t_conv,
            message=message, experimental=experimental,
        )

    if q < q_stop:
        rec.add(t, x, q, True)
        return finish(CONVERGED, 0.0)

    while True:
        t_grid = (k + 1) * dt
        if t_grid >= t_max - 1e-9 * dt:
            t_grid = t_max
        h = t_grid - t
        mode = sys.zero_mode if latched else mode_x
        try:
            x_new = _advance(stepper, x, h, mode)
        except SolverFailure as exc:
            rec.add(t, x, q, latched)
            return finish(SOLVER_FAILURE, message=str(exc))
        q_new = float(sys.goal(x_new))

        # convergence inside the step
        if not latched and q_stop > 0.0:
            hit = None
            if q_new < q_stop:
                hit = 1.0
            elif q_new >= q:
                try:
                    theta, q_min = _probe_minimum(stepper, sys.goal, x, h, mode)
                except SolverFailure:
                    theta, q_min = 1.0, q_new
                if q_min < q_stop:
                    hit = theta
            if hit is not None:
                try:
                    frac, xc = _bisect(
                        stepper, x, h, mode,
                        lambda xs: float(sys.goal(xs)) < q_stop,
                        cfg.converge_tol, hi=hit,
                    )
                except SolverFailure as exc:
                    rec.add(t, x, q, False)
                    return finish(SOLVER_FAILURE, message=str(exc))
                tc = t + frac * h
                rec.add(tc, xc, float(sys.goal(xc)), True)
                return finish(CONVERGED, tc)

        # events: handle the earliest one, then resume from it
        first = None
        for j, ev in enumerate(cfg.events):
            if fired[j] and ev.action != RECORD:
                continue
            f1 = float(ev.indicator(x_new))
            if ind[j] != 0.0 and _crossed(ind[j], f1):
                f0 = ind[j]
                try:
                    frac, xe = _bisect(
                        stepper, x, h, mode,
                        lambda xs, ev=ev, f0=f0: _crossed(f0, float(ev.indicator(xs))),
                        ev.tolerance, x_hi=x_new,
                    )
                except SolverFailure as exc:
                    rec.add(t, x, q, latched)
                    return finish(SOLVER_FAILURE, message=str(exc))
                if first is None or frac < first[1]:
                    first = (j, frac, xe)
        if first is not None:
            j, frac, xe = first
            ev = cfg.events[j]
            te = t + frac * h
            fired[j] = True
            events.append(Event(ev.name, te, tuple(float(v) for v in xe)))
            if ev.action == LATCH:
                latched = True
            x, t, q = xe, te, float(sys.goal(xe))
            ind = [float(e.indicator(x)) for e in cfg.events]
            mode_x = sys.mode(x)
            rec.add(t, x, q, latched, mode_x)
            if ev.action == STOP:
                return finish(STOPPED)
            if frac < 1.0:
                continue
            # the event sits on the grid point; fall through as a completed step
            x_new, q_new = x, q
        else:
            ind = [float(e.indicator(x_new)) for e in cfg.events]

        x, t, q = x_new, t_grid, q_new
        k += 1
        mode_x = sys.mode(x)

        if sys.in_excluded_set is not None and sys.in_excluded_set(x):
            rec.add(t, x, q, latched)
            return finish(ENTERED_C, message=f"state entered the excluded set at t = {t!r}")
        if sys.blowup is not None and sys.blowup(x):
            rec.add(t, x, q, latched)
            return finish(ENERGY_BLOWUP, message=f"energy guard tripped at t = {t!r}")
        if t >= t_max:
            rec.add(t, x, q, latched)
            return finish(HORIZON)
        if k % cfg.record_stride == 0:
            rec.add(t, x, q, latched, mode_x)
