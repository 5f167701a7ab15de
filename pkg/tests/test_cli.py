import csv
import json
import logging

import numpy as np
import pytest

from dichoscope.cli import Report, emit_plot_data, load_config, main, run_checks
from dichoscope.errors import ConfigError

BASE = {
    "growth_rate": "identity",
    "system": "paper_power:1",
    "interval": [1, 20],
    "grid": {"size": 12},
    "checks": [],
}


@pytest.fixture(autouse=True)
def _scratch_cwd(tmp_path, monkeypatch):
    # runs without --out write next to the working directory
    monkeypatch.chdir(tmp_path)


def _cfg(**kw):
    out = json.loads(json.dumps(BASE))
    out.update(kw)
    return out


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_bundled_paper_log(tmp_path, capsys):
    code = main(["run", "paper_log.example", "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "paper_log_report.json").read_text())
    assert report["schema_version"] == 1 and report["all_passed"]
    dich = next(c for c in report["checks"] if c["type"] == "dichotomy")
    assert dich["certificate"]["K"] == 1.000001 and dich["certificate"]["alpha"] == 1.0
    assert set(report["timings"]) == {c["name"] for c in report["checks"]}


def test_bundled_negative_control(tmp_path, capsys):
    code = main(["run", "zero_negative.example", "--out", str(tmp_path)])
    assert code == 2
    out = capsys.readouterr().out
    assert "FAIL  noncritical" in out and "witness" in out
    report = json.loads((tmp_path / "zero_negative_report.json").read_text())
    nc = next(c for c in report["checks"] if c["type"] == "noncritical")
    assert nc["report"]["witness"]


def test_bad_theta_exit_code(tmp_path, capsys):
    cfg = _cfg(checks=[{"type": "noncritical", "T": 2, "theta": 1.5}])
    assert main(["run", _write(tmp_path, cfg)]) == 1
    assert "theta must lie in (0,1)" in capsys.readouterr().err


@pytest.mark.parametrize("patch, path", [
    ({"growth_rate": "cubic"}, "growth_rate"),
    ({"system": {"n": 2, "entries": ["1"]}}, "system.entries"),
    ({"interval": [5, 1]}, "interval"),
    ({"interval": [-1, 5]}, "interval"),
    ({"grid": {"size": 1}}, "grid.size"),
    ({"seed": -3}, "seed"),
    ({"checks": [{"type": "frobnicate"}]}, "checks[0].type"),
    ({"checks": [{"type": "dichotomy", "K": 1.0, "alpha": 1.0}]}, "checks[0].projector"),
    ({"checks": [{"type": "dichotomy", "K": 0.5, "alpha": 1.0, "projector": [[1, 0], [0, 0]]}]}, "checks[0].K"),
    ({"checks": [{"type": "dichotomy", "K": 1, "alpha": 1, "projector": [[1, 0]]}]}, "checks[0].projector"),
    ({"checks": [{"type": "matrix_bound", "kind": "up", "K0": 1, "beta": 1}]}, "checks[0].kind"),
    ({"checks": [{"type": "noncritical", "T": "2 +", "theta": 0.5}]}, "checks[0].T"),
    ({"schema_version": 9}, "schema_version"),
])
def test_config_errors_carry_field_path(patch, path):
    with pytest.raises(ConfigError) as info:
        load_config(_cfg(**patch))
    assert info.value.path == path


def test_missing_file(capsys):
    assert main(["run", "/nonexistent/cfg.json"]) == 1


def test_invalid_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["run", str(p)]) == 1


def test_values_and_custom_pieces():
    cfg = load_config(_cfg(
        growth_rate={"h": "t", "h_inv": "t", "a0": 0},
        system={"n": 2, "entries": ["-1/t", "0", "0", "1/t"], "lo": 0},
        interval=["e - 1", {"h_value": 30}],
    ))
    assert cfg.grid[0] == pytest.approx(np.e - 1) and cfg.grid[-1] == pytest.approx(30.0)
    assert cfg.system.n == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    # the custom entry is undefined below t = 5
    cfg = _cfg(system={"n": 1, "entries": ["ln(t-5)"], "lo": 0},
               checks=[{"type": "expansive", "L": 1, "beta": 1}])
    assert main(["run", _write(tmp_path, cfg)]) == 1
    assert "error" in capsys.readouterr().err


def _full_cfg(tmp_path):
    return _cfg(seed=3, checks=[
        {"type": "dichotomy", "K": 1.000001, "alpha": 1, "projector": [[1, 0], [0, 0]]},
        {"type": "estimate_constants", "projector": [[1, 0], [0, 0]], "alphas": [0, 0.5, 1, 1.5, 2]},
        {"type": "noncritical", "T": 4, "theta": 0.5},
        {"type": "theta_curve", "T_values": [2, 3, 4]},
        {"type": "expansive", "L": 1.000001, "beta": 1},
        {"type": "growth_definition", "kind": "growth", "T": 2, "C_T": 2.000001},
        {"type": "matrix_bound", "kind": "both", "K0": 1.000001, "beta": 1},
        {"type": "alpha_beta", "projector": [[1, 0], [0, 0]]},
        {"type": "classify"},
        {"type": "split", "projector": [[1, 0], [0, 0]]},
        {"type": "invariance", "projector": [[1, 0], [0, 0]]},
        {"type": "oracle"},
        {"type": "cocycle", "points": 5},
        {"type": "elc", "projector": [[1, 0], [0, 0]], "K1": 1.000001, "K2": 1.000001, "M": 1, "alpha": 1},
        {"type": "extend", "projector": [[1, 0], [0, 0]], "K": 1.000001, "alpha": 1, "T1": 2},
        {"type": "group_suite", "size": 20},
        {"type": "pipeline", "K": 1.000001, "alpha": 1, "projector": [[1, 0], [0, 0]]},
    ])


def test_every_check_type_runs(tmp_path, capsys):
    path = _write(tmp_path, _full_cfg(tmp_path))
    assert main(["run", path, "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert len(report["checks"]) == 17
    pipe = report["checks"][-1]
    assert [s["stage"] for s in pipe["stages"]] == ["dichotomy", "expansive", "noncritical",
                                                      "dichotomy_from_noncritical"]
    assert all(s["report"]["pass"] for s in pipe["stages"])


def test_determinism_and_threads(tmp_path, capsys):
    path = _write(tmp_path, _full_cfg(tmp_path))
    texts = []
    for k, threads in enumerate(["1", "1", "4"]):
        out = tmp_path / f"o{k}"
        assert main(["run", path, "--out", str(out), "--threads", threads]) == 0
        data = json.loads((out / "report.json").read_text())
        data.pop("timings")
        texts.append(json.dumps(data, indent=2))
    assert texts[0] == texts[1] == texts[2]


def test_report_round_trips(tmp_path):
    cfg = load_config(_full_cfg(tmp_path))
    rep = run_checks(cfg, only={"dichotomy", "estimate_constants"})
    text = rep.dumps(with_timings=False)
    assert json.dumps(json.loads(text), indent=2) + "\n" == text


def test_seed_override_changes_sample(tmp_path, capsys):
    cfg = _cfg(checks=[{"type": "theta_curve", "T_values": [3]}])
    path = _write(tmp_path, cfg)
    main(["run", path, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["run", path, "--out", str(tmp_path / "b"), "--seed", "2"])
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["config"]["seed"] == 1 and b["config"]["seed"] == 2


def test_tol_override(tmp_path, capsys):
    cfg = _cfg(checks=[{"type": "dichotomy", "K": 1.0, "alpha": 1.02, "projector": [[1, 0], [0, 0]]}])
    path = _write(tmp_path, cfg)
    assert main(["run", path, "--out", str(tmp_path / "a")]) == 2
    assert main(["run", path, "--out", str(tmp_path / "b"), "--tol", "0.5"]) == 0


def test_subcommands_filter_checks(tmp_path, capsys):
    path = _write(tmp_path, _full_cfg(tmp_path))
    assert main(["bounds", path, "--out", str(tmp_path / "b")]) == 0
    types = [c["type"] for c in json.loads((tmp_path / "b" / "report.json").read_text())["checks"]]
    assert types == ["growth_definition", "matrix_bound", "alpha_beta"]
    assert main(["estimate", path, "--out", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "plots" / "alpha_K.csv").exists()
    assert main(["pipeline", path, "--out", str(tmp_path / "p")]) == 0
    assert main(["noncritical", "zero_negative.example", "--out", str(tmp_path / "n")]) == 2
    assert main(["expansive", "zero_negative.example", "--out", str(tmp_path / "x")]) == 2


def test_group_test_command(tmp_path, capsys):
    assert main(["group-test", "exp", "--size", "30", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "group_test.json").read_text())
    assert data["report"]["pass"] and data["schema_version"] == 1
    assert main(["group-test", "bogus"]) == 1


def test_plot_data(tmp_path, capsys):
    main(["run", "paper_log.example", "--out", str(tmp_path)])
    plots = tmp_path / "plots"
    with open(plots / "alpha_K.csv") as fh:
        rows = list(csv.DictReader(fh))
    Ks = [float(r["K"]) for r in rows]
    assert rows and all(b >= a for a, b in zip(Ks, Ks[1:]))
    with open(plots / "bound_vs_value_dichotomy.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["t", "s", "block", "value", "bound", "ratio"]
    # the stable block saturates the bound; the config uses K = 1.000001
    ratios = [1.000001 * float(r["ratio"]) for r in rows if r["block"] == "P"]
    assert max(abs(r - 1) for r in ratios) <= 1e-7
    with open(plots / "theta_T.csv") as fh:
        assert next(csv.reader(fh)) == ["T", "theta"]


def test_empty_plot_data(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        files = emit_plot_data(Report({}, [], {}), tmp_path / "nothing")
    assert files == [] and not (tmp_path / "nothing").exists()
    assert "no curves" in caplog.text


def test_log_level_env(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("DICHOSCOPE_LOG", "debug")
    assert main(["group-test", "identity", "--size", "10"]) == 0
