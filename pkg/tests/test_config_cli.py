import json
from pathlib import Path

import pytest
import tomli

from lorentzgas import cli
from lorentzgas import config as cf
from lorentzgas.acceptance import CheckResult
from lorentzgas.geometry import canonical_table

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(autouse=True)
def out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "out"))
    return tmp_path / "out"


# configuration files


def test_table_round_trip():
    t = canonical_table(2)
    back = cf.table_from_dict(tomli.loads(cf.dumps(cf.table_to_dict(t))))
    assert back == t


@pytest.mark.parametrize("name", ["tube_local_time.toml", "tube_flow.toml", "lazy1d_exact.toml"])
def test_experiment_round_trip(name):
    cfg = cf.experiment_from_dict(cf.load_toml(CONFIGS / name))
    text = cf.dumps(cfg.to_dict())
    again = cf.experiment_from_dict(tomli.loads(text))
    assert again.to_dict() == cfg.to_dict()
    assert cf.dumps(again.to_dict()) == text
    assert again.hash() == cfg.hash()


def test_step_forms():
    assert cf.step_from_dict({"name": "lazy2d"}).dim == 2
    s = cf.step_from_dict({"support": [{"offset": [1], "prob": 0.5}, {"offset": [-1], "prob": 0.5}]})
    assert s.support == {(1,): 0.5, (-1,): 0.5}
    st = cf.step_from_dict({"stable": {"alpha": 1.5, "cutoff": 100}})
    assert st.alpha is not None
    with pytest.raises(cf.ConfigError):
        cf.step_from_dict({"name": "lazy1d", "support": []})
    with pytest.raises(cf.ConfigError):
        cf.step_from_dict({"name": "nosuch"})


def test_unknown_field_rejected():
    doc = cf.load_toml(CONFIGS / "tube_local_time.toml")
    doc["experiment"]["trajectorys"] = 3
    with pytest.raises(cf.ConfigError, match="trajectorys"):
        cf.experiment_from_dict(doc)


def test_bad_range_rejected():
    doc = cf.load_toml(CONFIGS / "tube_local_time.toml")
    doc["experiment"]["checkpoints"] = [10**6]
    with pytest.raises(cf.ConfigError, match="checkpoints"):
        cf.experiment_from_dict(doc)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(cf.ConfigError, match="not found"):
        cf.load_toml(tmp_path / "nope.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[table\n")
    with pytest.raises(cf.ConfigError, match="malformed"):
        cf.load_toml(bad)


def test_manifest_fields():
    m = cf.manifest({"a": 1}, 7, ["x.csv"])
    assert m["seed"] == 7 and m["outputs"] == ["x.csv"]
    assert {"numpy", "scipy", "numba", "python", "lorentzgas"} <= set(m["versions"])
    assert m["config_hash"] == cf.manifest({"a": 1}, 8)["config_hash"]


# command line


def test_validate_canonical(capsys, out_dir):
    assert cli.main(["validate", "--config", str(CONFIGS / "table.toml")]) == 0
    assert capsys.readouterr().out.strip() == "infinite horizon, corridors: (1,0),(0,1)"
    assert (out_dir / "manifest.json").exists()


def test_validate_invalid_table(tmp_path, capsys):
    p = tmp_path / "t.toml"
    p.write_text("[table]\ndim = 2\n[[table.disks]]\ncenter = [0.5, 0.5]\nradius = 0.6\n")
    assert cli.main(["validate", "--config", str(p)]) == 1
    assert "radius >= 1/2" in capsys.readouterr().out


def test_missing_config_exit_code(capsys):
    assert cli.main(["validate", "--config", "does-not-exist.toml"]) == 1
    assert "not found" in capsys.readouterr().err


def test_oracle_occupation(capsys, out_dir):
    assert cli.main(["oracle-occupation", "--step", "lazy1d", "--n", "2", "--a", "0"]) == 0
    assert capsys.readouterr().out.strip() == "0.375"
    assert (out_dir / "occupation.csv").exists()


def test_oracle_occupation_bad_point(capsys):
    assert cli.main(["oracle-occupation", "--step", "lazy2d", "--n", "2", "--a", "0"]) == 1


def test_oracle_moments(capsys):
    assert cli.main(["oracle-moments", "--step", "lazy1d", "--n", "2", "--beta", "0:1;1:-1", "--moments", "2"]) == 0
    last = capsys.readouterr().out.strip().splitlines()[-1].split(",")
    assert float(last[1]) == pytest.approx(1.25) and float(last[2]) == pytest.approx(2.25)


def test_simulate_map_outputs(out_dir, capsys):
    code = cli.main(["simulate-map", "--config", str(CONFIGS / "tube_local_time.toml"), "--n", "200",
                     "--trajectories", "50", "--seed", "3"])
    assert code == 0
    man = json.loads((out_dir / "manifest.json").read_text())
    assert man["seed"] == 3 and "report.json" in man["outputs"]
    rep = json.loads((out_dir / "report.json").read_text())
    assert rep["config_hash"] == man["config_hash"]
    assert cli.main(["report", "--input", str(out_dir / "report.json")]) == 0


def test_simulate_map_zero_trajectories(capsys):
    assert cli.main(["simulate-map", "--config", str(CONFIGS / "tube_local_time.toml"), "--trajectories", "0"]) == 1


def test_simulate_map_exact(capsys):
    assert cli.main(["simulate-map", "--config", str(CONFIGS / "lazy1d_exact.toml"), "--n", "500"]) == 0
    assert "exact-dp" in capsys.readouterr().out


def test_limit_sample(out_dir, capsys):
    assert cli.main(["limit-sample", "--alpha", "2", "--d", "2", "--trajectories", "1000", "--seed", "1"]) == 0
    assert (out_dir / "limit_sample.csv").read_text().splitlines()[0] == "value"
    assert cli.main(["limit-sample", "--alpha", "1.5", "--d", "2"]) == 1


def test_verify_exit_codes(monkeypatch, capsys):
    from lorentzgas import acceptance

    monkeypatch.setattr(acceptance, "CHECKS", {"good": lambda: CheckResult("good", True, {}, 0.0),
                                               "bad": lambda: CheckResult("bad", False, {"x": 1}, 0.0)})
    assert cli.main(["verify", "good"]) == 0
    assert cli.main(["verify"]) == 2
    out = capsys.readouterr().out
    assert "[PASS] good" in out and "[FAIL] bad" in out
    assert cli.main(["verify", "nosuch"]) == 1


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "lorentzgas", "validate", "--config", str(CONFIGS / "table.toml")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "corridors" in r.stdout
