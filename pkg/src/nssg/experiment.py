"""Experiment runner: simulation, monitors, artifacts and summaries."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import brockett, sim
from . import vibrating_string as vs
from .config import ExperimentConfig, shipped_names
from .config import load as load_config
from .speed_gradient import AssumptionScanSpec, monitor_decrease, scan_assumption4

NORM_LAW_TOL = 1e-12


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: object = None
    threshold: object = None
    note: str = ""

    def to_dict(self):
        d = {"passed": bool(self.passed), "value": _clean(self.value), "threshold": _clean(self.threshold)}
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class RunResult:
    config: ExperimentConfig
    trajectory: sim.Trajectory
    report: dict
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def exit_code(self):
        return 0 if self.passed else 1


def _clean(v):
    """JSON-safe scalars: numpy types to Python, non-finite floats to None."""
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def build(cfg: ExperimentConfig):
    """System, initial state, simulator settings and parameter object for ``cfg``."""
    x0 = np.array(cfg.x0, dtype=float)
    if cfg.plant == "brockett":
        v = tuple(cfg.v)
        params = brockett.BrockettControllerParams(gamma=cfg.gamma, v_selector=lambda x3: v)
        system = brockett.make_system(params, integrator=cfg.integrator)
        events = ()
    else:
        params = vs.StringParams(
            omega0=cfg.omega0, K=cfg.k, gamma=cfg.gamma, h_star=cfg.h_star,
            smooth_goal=cfg.goal == "smooth",
        )
        system = vs.make_system(params, energy_cap=vs.blowup_level(x0, params))
        events = () if params.smooth_goal else (vs.latch_event(params, cfg.event_tol),)
    simcfg = sim.SimConfig(
        dt=cfg.dt, t_max=cfg.t_max, q_stop=cfg.effective_q_stop,
        events=events, record_stride=cfg.record_stride,
    )
    return system, x0, simcfg, params


def _pre_convergence(tr):
    n = len(tr)
    return n - 1 if tr.termination == sim.CONVERGED else n


def _uniform_triples(t, ok):
    """Interior indices ``i`` whose neighbours are equally spaced and all flagged ``ok``."""
    if len(t) < 3:
        return np.array([], dtype=int)
    i = np.arange(1, len(t) - 1)
    left, right = t[i] - t[i - 1], t[i + 1] - t[i]
    uniform = np.abs(left - right) <= 1e-9 * np.maximum(left, right)
    return i[uniform & ok[i - 1] & ok[i] & ok[i + 1]]


def _brockett_checks(cfg, tr, params, metrics):
    names = cfg.checks
    out = []
    n = _pre_convergence(tr)
    u = tr.controls[:n]
    unorm = np.hypot(u[:, 0], u[:, 1]) if n else np.zeros(0)
    if "norm-law" in names:
        err = float(np.max(np.abs(unorm - cfg.gamma))) if n else 0.0
        out.append(CheckResult("norm-law", err <= NORM_LAW_TOL, err, NORM_LAW_TOL))
    if "no-switch" in names:
        tags = sorted({int(m) for m in tr.modes[:n]})
        out.append(CheckResult("no-switch", len(tags) <= 1, tags, 1))
    if "control-jump" in names:
        bound = cfg.jump_factor * cfg.gamma * cfg.dt * cfg.record_stride
        jump = metrics["max_control_jump"]
        out.append(CheckResult("control-jump", jump is None or jump <= bound, jump, bound))
    if "reduced-rates" in names:
        ok = np.zeros(len(tr), dtype=bool)
        ok[:n] = tr.modes[:n] == int(brockett.BranchTag.GENERIC)
        idx = _uniform_triples(tr.t, ok)
        err = 0.0
        if idx.size:
            xs = tr.states
            sig = np.hypot(xs[:, 0], xs[:, 1])
            span = tr.t[idx + 1] - tr.t[idx - 1]
            fd_x3 = (xs[idx + 1, 2] - xs[idx - 1, 2]) / span
            fd_s = (sig[idx + 1] - sig[idx - 1]) / span
            rates = np.array([brockett.reduced_rates(xs[i], params) for i in idx])
            err = float(max(np.max(np.abs(fd_x3 - rates[:, 0])), np.max(np.abs(fd_s - rates[:, 1]))))
        out.append(CheckResult(
            "reduced-rates", bool(idx.size) and err <= cfg.rates_tol, err, cfg.rates_tol,
            "" if idx.size else "no generic-branch samples to difference",
        ))
    return out


def _string_checks(cfg, tr, params, metrics):
    names = cfg.checks
    out = []
    H = np.array([vs.hamiltonian(s, params) for s in tr.states])
    latch = [e for e in tr.events if e.name == "energy_target"]
    if "event-residual" in names:
        if latch:
            res = max(abs(vs.hamiltonian(e.state, params) - params.h_star) for e in latch)
            out.append(CheckResult("event-residual", res <= cfg.residual_tol, res, cfg.residual_tol))
        else:
            out.append(CheckResult("event-residual", False, None, cfg.residual_tol, "no target event fired"))
    if "post-latch-drift" in names:
        if latch:
            te = latch[0].t
            h0 = vs.hamiltonian(latch[0].state, params)
            drift = float(np.max(np.abs(H[tr.t >= te] - h0)))
            out.append(CheckResult("post-latch-drift", drift <= cfg.drift_tol, drift, cfg.drift_tol))
        else:
            out.append(CheckResult("post-latch-drift", False, None, cfg.drift_tol, "no target event fired"))
    if "energy-rate" in names:
        ok = np.ones(len(tr), dtype=bool)
        idx = _uniform_triples(tr.t, ok)
        idx = idx[(tr.modes[idx - 1] == tr.modes[idx]) & (tr.modes[idx + 1] == tr.modes[idx])]
        err = 0.0
        if idx.size:
            fd = (H[idx + 1] - H[idx - 1]) / (tr.t[idx + 1] - tr.t[idx - 1])
            p2 = np.sum(tr.states[idx, 2:] ** 2, axis=1)
            if params.smooth_goal:
                coef = np.where(tr.modes[idx] == 0, 0.0, H[idx] - params.h_star)
            else:
                coef = tr.modes[idx].astype(float)
            err = float(np.max(np.abs(fd + params.gamma * coef * p2)))
        out.append(CheckResult(
            "energy-rate", bool(idx.size) and err <= cfg.rates_tol, err, cfg.rates_tol,
            "" if idx.size else "no samples to difference",
        ))
    if "no-event" in names:
        out.append(CheckResult("no-event", not tr.events, len(tr.events), 0))
    if "final-goal" in names:
        q = float(tr.goals[-1])
        out.append(CheckResult("final-goal", q < cfg.final_goal_tol, q, cfg.final_goal_tol))
    return out


def _metrics(cfg, tr):
    n = _pre_convergence(tr)
    u = tr.controls[:n]
    rep = monitor_decrease(tr.goals, tr.t, cfg.decrease_tol)
    jumps = np.hypot(*np.diff(u, axis=0).T) if n > 1 else np.zeros(0)
    norms = np.hypot(tr.controls[:, 0], tr.controls[:, 1])
    return {
        "max_decrease_violation": rep.max_violation,
        "decrease_violations": len(rep.violation_indices),
        "first_violation_time": rep.violation_times[0] if rep.violation_times else None,
        "max_control_norm": float(norms.max()),
        "max_control_jump": float(jumps.max()) if jumps.size else None,
        "branch_tags": sorted({int(m) for m in tr.modes[:n]}),
    }, rep


def run(cfg: ExperimentConfig) -> RunResult:
    """Simulate ``cfg`` and evaluate its enabled checks (no files written)."""
    system, x0, simcfg, params = build(cfg)
    experimental = cfg.plant == "brockett" and brockett.in_excluded_set(x0)
    tr = sim.simulate(system, x0, simcfg, experimental=experimental)
    metrics, dec = _metrics(cfg, tr)
    checks = []
    if "decrease" in cfg.checks:
        checks.append(CheckResult("decrease", dec.ok, dec.max_violation, cfg.decrease_tol))
    if "converged" in cfg.checks:
        checks.append(CheckResult("converged", tr.termination == sim.CONVERGED, tr.termination, sim.CONVERGED))
    if cfg.plant == "brockett":
        checks += _brockett_checks(cfg, tr, params, metrics)
    else:
        checks += _string_checks(cfg, tr, params, metrics)
    order = {c: i for i, c in enumerate(cfg.checks)}
    checks.sort(key=lambda c: order.get(c.name, len(order)))

    report = {
        "name": cfg.name,
        "plant": cfg.plant,
        "gamma": cfg.gamma,
        "x0": list(cfg.x0),
        "dt": cfg.dt,
        "t_max": cfg.t_max,
        "integrator": cfg.integrator,
        "termination": tr.termination,
        "message": tr.message,
        "experimental": tr.experimental,
        "convergence_time": tr.t_converged,
        "t_end": float(tr.t[-1]),
        "final_state": [float(v) for v in tr.final_state],
        "final_goal": float(tr.goals[-1]),
        "samples": len(tr),
        "events": [e.to_dict() for e in tr.events],
        "first_event_time": tr.events[0].t if tr.events else None,
        **metrics,
    }
    if cfg.plant == "string":
        h0 = vs.hamiltonian(x0, params)
        trend = -vs.energy_sign(x0, params)
        report.update({
            "h_star": cfg.h_star,
            "omega0": cfg.omega0,
            "k": cfg.k,
            "goal_kind": cfg.goal,
            "initial_energy": h0,
            "initial_energy_trend": {1: "increasing", -1: "decreasing", 0: "constant"}[trend],
        })
    report["checks"] = {c.name: c.to_dict() for c in checks}
    report["passed"] = all(c.passed for c in checks)
    report = {k: _clean(v) for k, v in report.items()}
    return RunResult(cfg, tr, report, checks)


def write_artifacts(result: RunResult, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    result.trajectory.to_csv(os.path.join(out_dir, "trajectory.csv"))
    result.trajectory.write_events(os.path.join(out_dir, "events.json"))
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(dumps(result.report))


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Run ``cfg`` and write ``trajectory.csv``, ``events.json`` and ``report.json``.

    The report is written even when checks fail; ``RunResult.exit_code`` is
    nonzero iff an enabled check failed.
    """
    out_dir = out_dir or cfg.out or os.path.join("runs", cfg.name)
    result = run(cfg)
    write_artifacts(result, out_dir)
    return result


def run_shipped(out_root, names=None):
    """Run shipped configs into ``out_root/<name>``; returns ``{name: exit_code}``."""
    codes = {}
    for name in names or shipped_names():
        res = run_experiment(load_config(name), os.path.join(out_root, name))
        codes[name] = res.exit_code
    return codes


def run_scan(plant, spec: AssumptionScanSpec, out_dir=None, gamma=0.1):
    """Grid-scan the speed-gradient lower bound and write ``scan.json``."""
    if plant != "brockett":
        raise ValueError(f"assumption scan is implemented for the brockett plant, not {plant!r}")
    params = brockett.BrockettControllerParams(gamma=gamma)
    spec = AssumptionScanSpec(
        spec.delta, spec.radius, spec.grid_resolution, excluded=brockett.in_excluded_set, dim=3
    )
    res = scan_assumption4(lambda x: brockett.goal_and_gradient(x, params), spec, raise_on_empty=False)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        d = res.to_dict()
        d["plant"] = plant
        with open(os.path.join(out_dir, "scan.json"), "w", encoding="utf-8") as fh:
            fh.write(dumps(d))
    return res


SUMMARY_COLUMNS = (
    ("name", "name"),
    ("plant", "plant"),
    ("gamma", "gamma"),
    ("termination", "termination"),
    ("t_conv", "convergence_time"),
    ("t_event", "first_event_time"),
    ("max_|u|", "max_control_norm"),
    ("trend", "initial_energy_trend"),
    ("checks", None),
)


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def summarize(reports):
    """Comparison table of run reports; returns ``(text, rows)``."""
    if not reports:
        raise ValueError("summarize needs at least one report")
    rows = []
    for r in reports:
        checks = r.get("checks", {})
        failed = sorted(k for k, c in checks.items() if not c["passed"])
        row = {key: r.get(key) for _, key in SUMMARY_COLUMNS if key}
        row["checks"] = "all pass" if not failed else "FAIL: " + ",".join(failed)
        row["checks_passed"] = not failed
        rows.append(row)
    header = [h for h, _ in SUMMARY_COLUMNS]
    cells = [[_fmt(row[key or "checks"]) for _, key in SUMMARY_COLUMNS] for row in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(cell, widths)) for cell in cells]
    return "\n".join(lines) + "\n", rows


def load_reports(paths):
    out = []
    for p in paths:
        if os.path.isdir(p):
            p = os.path.join(p, "report.json")
        with open(p, encoding="utf-8") as fh:
            out.append(json.load(fh))
    return out
