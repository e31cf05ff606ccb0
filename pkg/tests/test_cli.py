import json
import os
import subprocess
import sys

import pytest

from nssg import cli
from nssg import experiment as ex
from nssg.config import ConfigError, load, override, parse_text, shipped_names, shipped_text

SHIPPED = {
    "brockett_paper", "brockett_plane", "brockett_axis_start", "brockett_small_gain",
    "string_damp", "string_pump", "string_zero_target", "string_smooth_goal_comparison",
}

PLANE = """\
plant = brockett
gamma = {gamma}
x0 = 1, 0, 0
t_max = {tmax}
record_stride = 100
checks = decrease, norm-law, no-switch, converged
"""


def write(tmp_path, name, text):
    p = tmp_path / f"{name}.cfg"
    p.write_text(text)
    return str(p)


def test_shipped_set():
    assert set(shipped_names()) == SHIPPED
    for name in SHIPPED:
        cfg = load(name)
        assert cfg.name == name and cfg.checks


def test_reference_config_values():
    cfg = load("brockett_paper")
    assert cfg.gamma == 0.1 and cfg.x0 == (0.2, 0.2, 0.2) and cfg.t_max == 100.0
    assert cfg.effective_q_stop == 1e-10


def test_parse_comments_and_defaults():
    cfg = parse_text("# c\nplant = string   # inline\nx0 = 1,0,0,0\n\nh_star = 0.5\n")
    assert cfg.plant == "string" and cfg.h_star == 0.5 and cfg.dt == 1e-3
    assert cfg.effective_q_stop == 0.0


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("plant = brockett\nx0 = 1,0,0\ngamma = 0\n", "gamma"),
        ("plant = brockett\nx0 = 1,0,0\nbogus = 1\n", ":3: unknown key 'bogus'"),
        ("plant = brockett\nplant = string\n", ":2: duplicate key 'plant'"),
        ("plant brockett\n", ":1: expected 'key = value'"),
        ("plant = brockett\nx0 = 1,,0\n", ":2: x0"),
        ("plant = brockett\nx0 = 1,0\n", "x0: needs 3 components"),
        ("plant = brockett\nx0 = 1,0,0\ndt = nan\n", ":3: dt"),
        ("plant = brockett\nx0 = 1,0,0\ngamma = abc\n", ":3: gamma"),
        ("plant = string\nx0 = 1,0,0,0\nintegrator = radau5\n", "integrator"),
        ("plant = string\nx0 = 1,0,0,0\nchecks = norm-law\n", "unknown check 'norm-law'"),
        ("plant = brockett\nx0 = 1,0,0\nv = 1, 1\n", "unit 2-vector"),
        ("plant = brockett\n", "missing required key 'x0'"),
        ("plant = brockett\nx0 = 1,0,0\nk = \n", "empty value"),
        ("plant = pendulum\nx0 = 1,0,0\n", "plant"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(ConfigError) as info:
        parse_text(text, where="f.cfg")
    assert fragment in str(info.value)


def test_override_revalidates():
    cfg = load("brockett_plane")
    assert override(cfg, dt=1e-2).dt == 1e-2
    assert override(cfg) is cfg
    with pytest.raises(ConfigError):
        override(cfg, gamma=-1.0)


def test_cli_gamma_zero_rejected_before_simulation(tmp_path, capsys):
    path = write(tmp_path, "bad", PLANE.format(gamma=0, tmax=20))
    code = cli.main(["run", path, "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_USAGE
    assert "gamma" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_cli_run_plane_and_overrides(tmp_path):
    path = write(tmp_path, "plane", PLANE.format(gamma=0.1, tmax=5))
    out = tmp_path / "o"
    # the horizon override wins over the file value
    assert cli.main(["run", path, "--out", str(out), "--tmax", "20"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["termination"] == "converged"
    assert rep["convergence_time"] == pytest.approx(10.0, abs=0.01)
    assert rep["max_control_norm"] == pytest.approx(0.1, abs=1e-12)
    assert rep["passed"] and all(c["passed"] for c in rep["checks"].values())
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,x1,x2,x3,u1,u2,goal"
    assert json.loads((out / "events.json").read_text()) == []


def test_cli_failing_check_writes_report_and_exits_nonzero(tmp_path):
    # the horizon is too short to converge
    path = write(tmp_path, "short", PLANE.format(gamma=0.1, tmax=5))
    out = tmp_path / "o"
    assert cli.main(["run", path, "--out", str(out)]) == cli.EXIT_CHECK_FAILED
    rep = json.loads((out / "report.json").read_text())
    assert rep["termination"] == "horizon"
    assert not rep["checks"]["converged"]["passed"] and not rep["passed"]


def test_cli_checks_and_stride_overrides(tmp_path):
    out = tmp_path / "o"
    code = cli.main(["run", "string_damp", "--out", str(out), "--tmax", "3", "--dt", "1e-4",
                     "--stride", "1", "--checks", "energy-rate,event-residual"])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert set(rep["checks"]) == {"energy-rate", "event-residual"}


def test_scan_cli(tmp_path, capsys):
    assert cli.main(["scan", "brockett", "--delta", "0.1", "--radius", "2", "--resolution", "11",
                     "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "scan.json").read_text())
    assert rep["status"] == "ok" and rep["a_lower_bound"] > 0 and rep["plant"] == "brockett"


def test_scan_empty_region_is_structured(tmp_path):
    assert cli.main(["scan", "brockett", "--delta", "100", "--radius", "1", "--resolution", "11",
                     "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "scan.json").read_text())
    assert rep["status"] == "empty_region" and rep["a_lower_bound"] is None


def test_scan_resolution_one_rejected(tmp_path):
    assert cli.main(["scan", "brockett", "--delta", "0.1", "--radius", "1", "--resolution", "1",
                     "--out", str(tmp_path)]) == cli.EXIT_USAGE


def test_summarize_gain_comparison(tmp_path):
    dirs = []
    for g in (0.1, 0.05):
        path = write(tmp_path, f"plane_{g}", PLANE.format(gamma=g, tmax=25))
        d = tmp_path / f"run_{g}"
        assert cli.main(["run", path, "--out", str(d)]) == 0
        dirs.append(str(d))
    out = tmp_path / "summary.json"
    assert cli.main(["summarize", *dirs, "--out", str(out)]) == 0
    rows = json.loads(out.read_text())
    assert [r["convergence_time"] for r in rows] == [pytest.approx(10.0, abs=0.01), pytest.approx(20.0, abs=0.02)]
    text = (tmp_path / "summary.txt").read_text()
    assert len(text.splitlines()) == 4 and "plane_0.05" in text


def test_summarize_single_report(tmp_path):
    path = write(tmp_path, "p", PLANE.format(gamma=0.1, tmax=20))
    res = ex.run_experiment(load(path), str(tmp_path / "r"))
    text, rows = ex.summarize([res.report])
    assert len(rows) == 1 and len(text.splitlines()) == 3
    with pytest.raises(ValueError):
        ex.summarize([])


def test_string_summary_trends(tmp_path):
    reports = []
    for name in ("string_damp", "string_pump"):
        cfg = override(load(name), t_max=5.0)
        reports.append(ex.run_experiment(cfg, str(tmp_path / name)).report)
    _, rows = ex.summarize(reports)
    assert all(0 < r["first_event_time"] < 5 for r in rows)
    assert {r["initial_energy_trend"] for r in rows} == {"decreasing", "increasing"}


def test_list_and_module_entry(capsys):
    assert cli.main(["list"]) == 0
    assert set(capsys.readouterr().out.split()) == SHIPPED
    out = subprocess.run([sys.executable, "-m", "nssg", "list"], capture_output=True, text=True, check=True)
    assert "brockett_paper" in out.stdout


def test_shipped_text_round_trips():
    for name in SHIPPED:
        assert parse_text(shipped_text(name), name=name) == load(name)


def test_reports_have_no_paths_or_timestamps(tmp_path):
    res = ex.run_experiment(override(load("brockett_plane"), t_max=1.0), str(tmp_path / "x"))
    blob = json.dumps(res.report)
    assert str(tmp_path) not in blob and os.sep + "tmp" not in blob
    assert all(k == k.lower() for k in res.report)
