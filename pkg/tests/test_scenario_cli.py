import json

import pytest

from simulator.cli import main
from simulator.errors import ConfigError
from simulator.scenario import load_scenario, scenario_from_dict, scenario_hash
from simulator.storage import read_report_from_json
from simulator.workflow import describe


def _scenario(**changes):
    data = {
        "name": "damped_small",
        "hamiltonian": {"kind": "quadratic", "B": [[1.0, 0.0], [0.0, 1.0]]},
        "thermal": {"A": 0.2, "nu": 0.0},
        "state": {"kind": "coherent", "centres": [[0.0, 2.0]]},
        "grid": {"dims": 65, "half_width": 8.0},
        "times": [0.5],
        "methods": ["exact", "oracle"],
        "oracle": {"truncation": 30},
        "dt": 0.002,
    }
    data.update(changes)
    return data


def _write(tmp_path, data, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_load_scenario(tmp_path):
    scenario = load_scenario(_write(tmp_path, _scenario()), {"output_dir": str(tmp_path / "out"), "methods": None})
    assert scenario.system.gamma == pytest.approx(0.1)
    assert scenario.grid.dims == (65, 65)
    assert scenario.truncation == 30
    assert scenario.methods == ("exact", "oracle")
    assert scenario.output_dir == tmp_path / "out"


def test_relative_output_dir_uses_output_root(tmp_path):
    scenario = scenario_from_dict(_scenario(output_dir="sub"), base_dir=tmp_path)
    assert scenario.output_dir == tmp_path / "sub"


def test_hash_ignores_output_dir():
    first = scenario_from_dict(_scenario(output_dir="/tmp/a"))
    second = scenario_from_dict(_scenario(output_dir="/tmp/b"))
    third = scenario_from_dict(_scenario(times=[0.25]))
    assert scenario_hash(first) == scenario_hash(second)
    assert scenario_hash(first) != scenario_hash(third)


@pytest.mark.parametrize(
    "changes",
    [
        {"hamiltonian": {"kind": "quartic"}},
        {"times": [1.0, 0.5]},
        {"times": [-1.0]},
        {"methods": ["magic"]},
        {"state": {"kind": "fock", "fock_index": 40}},
        {"hamiltonian": {"kind": "pendulum"}, "methods": ["oracle"]},
        {"grid": {"dims": 64, "half_width": 8.0}},
        {"dt": 0.0},
    ],
)
def test_invalid_scenarios(changes):
    with pytest.raises(ConfigError):
        scenario_from_dict(_scenario(**changes))


def test_describe_damped():
    text = describe(scenario_from_dict(_scenario()))
    assert "gamma = 0.1" in text
    assert "t_dec at initial centroid" in text
    assert "window covariance" in text
    assert "small-chord plan" in text


def test_describe_unitary_quartic():
    scenario = scenario_from_dict(_scenario(hamiltonian={"kind": "quartic"}, thermal=None, methods=["oracle"]))
    text = describe(scenario)
    assert "unitary limit" in text
    assert "exact method unavailable" in text
    assert ": ∞" in text


def test_cli_describe(tmp_path, capsys):
    assert main(["describe", str(_write(tmp_path, _scenario()))]) == 0
    text = capsys.readouterr().out
    assert "gamma = 0.1" in text
    assert "window matrix M'" in text
    assert "chord generator at t = 0" in text


def test_cli_config_errors(tmp_path, capsys):
    assert main(["describe", str(tmp_path / "missing.json")]) == 2
    bad = _write(tmp_path, _scenario(hamiltonian={"kind": "quartic"}))
    assert main(["run", str(bad), "--out", str(tmp_path / "out")]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_run_writes_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", str(_write(tmp_path, _scenario())), "--out", str(out)]) == 0
    assert "t=0.5 exact-oracle: max-abs" in capsys.readouterr().out
    report = read_report_from_json(out / "report.json")
    assert report["methods"] == ["exact", "oracle"]
    assert report["flags"]["unitary_limit"] is False
    row = report["per_time"][0]
    assert row["pairs"]["exact-oracle"]["max_abs"] <= 1e-3
    assert row["methods"]["oracle"]["trace"] == pytest.approx(1.0, abs=1e-10)
    assert report["t_dec"]["t_dec"] == pytest.approx(3.4657, abs=1e-3)
    assert row["oracle_purity_gap"] <= 1e-4
    assert (out / "trajectory_centroid.csv").exists()
    for stem in ("exact_t0.5000", "oracle_t0.5000"):
        assert (out / f"{stem}.psg").exists()
        assert (out / f"{stem}_slices.csv").exists()
    assert (out / "oracle_t0.5000.dm").exists()
    assert (out / "decoherence_centroid.csv").exists()


def test_unitary_run_is_flagged_and_deterministic(tmp_path):
    path = _write(tmp_path, _scenario(thermal=None, times=[0.5, 1.0], methods=["exact"]))
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(path), "--out", str(first)]) == 0
    assert main(["run", str(path), "--out", str(second), "--methods", "exact"]) == 0
    report = read_report_from_json(first / "report.json")
    assert report["flags"]["unitary_limit"] is True
    assert report["flags"]["exact_purity_constant"] is True
    assert report["t_dec"]["t_dec"] == "inf"
    assert (first / "exact_t1.0000.psg").read_bytes() == (second / "exact_t1.0000.psg").read_bytes()


def test_damped_smallchord_run_agrees_with_exact(tmp_path):
    out = tmp_path / "smallchord"
    path = _write(tmp_path, _scenario(methods=["exact", "smallchord"], dt=0.001))
    assert main(["run", str(path), "--out", str(out)]) == 0
    report = read_report_from_json(out / "report.json")
    assert report["per_time"][0]["pairs"]["exact-smallchord"]["max_abs"] <= 1e-6
    assert (out / "smallchord_t0.5000.psg").exists()
