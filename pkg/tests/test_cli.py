import csv
import json

import pytest

from lrstrang import __version__
from lrstrang.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, config_to_argv, main
from lrstrang.errors import ConfigError


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_converge(tmp_path):
    out = tmp_path / "conv"
    code = main(["converge", "--problem", "heat", "--m", "16", "--T", "0.02",
                 "--taus", "0.004,0.002,0.001", "--ranks", "4", "--tau-ref", "1e-4", "--out", str(out)])
    assert code == EXIT_OK
    rows = read_csv(out / "convergence.csv")
    assert rows[0][:3] == ["problem", "m", "scheme"] and len(rows) == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "converge"
    assert manifest["config"]["taus"] == [0.004, 0.002, 0.001]
    assert manifest["versions"]["lrstrang"] == __version__
    assert manifest["wall_time_s"] > 0 and manifest["exit_code"] == 0


def test_converge_checkpointed_reference_reused(tmp_path):
    argv = ["converge", "--problem", "cubic", "--m", "12", "--T", "0.01", "--taus", "0.005",
            "--ranks", "2", "--tau-ref", "1e-3", "--reference", "checkpoint",
            "--checkpoint-dir", str(tmp_path / "ck"), "--out", str(tmp_path / "o")]
    assert main(argv) == EXIT_OK
    assert main(argv) == EXIT_OK
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert "checkpoint" in report["diagnostics"]["reference"]


def test_svdump_and_adaptive(tmp_path):
    assert main(["svdump", "--problem", "cubic", "--m", "16", "--T", "0.01", "--tau", "1e-3",
                 "--k", "4", "--out", str(tmp_path / "sv.csv")]) == EXIT_OK
    assert len(read_csv(tmp_path / "sv.csv")) == 5
    assert (tmp_path / "sv.manifest.json").exists()
    assert main(["adaptive", "--m", "16", "--T", "0.02", "--out", str(tmp_path / "ad.csv")]) == EXIT_OK
    assert read_csv(tmp_path / "ad.csv")[0] == ["step", "t", "rank", "tail_norm", "floored"]


def test_reference_command(tmp_path):
    assert main(["reference", "--problem", "cubic", "--m", "10", "--T", "0.01",
                 "--tau-ref", "1e-3", "--out", str(tmp_path)]) == EXIT_OK
    (d,) = [p for p in tmp_path.iterdir() if p.is_dir()]
    assert {p.name for p in d.iterdir()} == {"X.mtx", "manifest.json", "run-manifest.json"}


def test_run_config(tmp_path):
    cfg = {"command": "adaptive", "m": 12, "T": 0.02, "tau": 0.005, "theta": 1e3, "out": str(tmp_path / "a.csv")}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["run", "--config", str(tmp_path / "c.json")]) == EXIT_OK
    ranks = [r[2] for r in read_csv(tmp_path / "a.csv")[1:]]
    assert ranks == ["1"] * 4


def test_config_to_argv():
    argv = config_to_argv({"command": "converge", "taus": [0.1, 0.05], "timing": True, "workers": 2,
                           "tau_ref": 1e-4, "theta": None, "checkpoint_dir": "x"})
    assert argv == ["converge", "--taus", "0.1,0.05", "--timing", "--workers", "2",
                    "--tau-ref", "0.0001", "--checkpoint-dir", "x"]
    with pytest.raises(ConfigError):
        config_to_argv({"m": 3})


@pytest.mark.parametrize(
    "argv",
    [
        ["converge", "--problem", "nope", "--out", "x"],
        ["converge", "--problem", "heat", "--ranks", "0", "--out", "x"],
        ["converge", "--problem", "heat", "--taus", "a,b", "--out", "x"],
        ["converge", "--problem", "heat", "--reference", "checkpoint", "--out", "x"],
        ["svdump", "--problem", "cubic", "--m", "8", "--k", "9", "--out", "x"],
        ["adaptive", "--theta", "-1", "--out", "x"],
        ["converge", "--problem", "heat", "--domain", "0,1", "--out", "x"],
        ["frobnicate"],
    ],
)
def test_configuration_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_CONFIG


def test_run_config_errors(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["run", "--config", str(tmp_path / "bad.json")]) == EXIT_CONFIG
    (tmp_path / "loop.json").write_text(json.dumps({"command": "run", "config": "loop.json"}))
    assert main(["run", "--config", str(tmp_path / "loop.json")]) == EXIT_CONFIG


def test_divergence_exit_code(tmp_path):
    # u' = u^3 from a unit bump blows up before t = 2
    code = main(["converge", "--problem", "cubic", "--m", "12", "--T", "2", "--taus", "0.05",
                 "--ranks", "2", "--tau-ref", "0.01", "--out", str(tmp_path / "o")])
    assert code == EXIT_DIVERGED
