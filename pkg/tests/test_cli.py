import csv
import json

import numpy as np
import pytest

from wpinn.autodiff_net import init_params, load_params
from wpinn.cli import main, parse_overrides, read_config_file
from wpinn.errors import ConfigurationError
from wpinn.oracles import get_preset
from wpinn.reporting import read_profile
from wpinn.training import TrainingConfig, derived_seed

TINY = ["--set", "counts=64,16,16", "--set", "network.hidden_layers_theta=2", "--set", "width_theta=6",
        "--set", "hidden_layers_eta=1", "--set", "width_eta=4", "--set", "reset_frequency=0.5"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_train_zero_epochs_writes_initial_checkpoint(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--preset", "standing_shock", "--epochs", "0", "--out", str(out), "--no-errors", *TINY]) == 0
    theta = load_params(out / "theta.bin")
    assert theta == init_params((2, 6, 6, 1), "sin", derived_seed(0, 0))
    assert _rows(out / "loss.csv") == [["epoch", "J_pde", "J_u", "c_star", "reset", "degenerate"]]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train" and manifest["config"]["width_theta"] == 6
    assert {"git_describe", "seeds", "python"} <= set(manifest)
    names = [r[0] for r in _rows(out / "metrics.csv")[1:]]
    assert names == ["c_star", "training_error"]
    assert "training_error" in capsys.readouterr().out


def test_train_writes_errors_and_collocation(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--preset", "moving_shock", "--epochs", "3", "--out", str(out), "--dump-collocation",
                 "--seed", "4", *TINY]) == 0
    metrics = dict(_rows(out / "metrics.csv")[1:])
    assert set(metrics) == {"c_star", "training_error", "E_r_T", "E_r"}
    assert 0 <= float(metrics["E_r_T"]) < 10
    assert len(_rows(out / "loss.csv")) == 4
    assert len(_rows(out / "collocation.csv")) == 1 + 64 + 16 + 16
    assert json.loads((out / "manifest.json").read_text())["seeds"]["parameters"] == 4


def test_train_is_reproducible(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert main(["train", "--preset", "rarefaction", "--epochs", "6", "--out", str(d), *TINY]) == 0
    for name in ("theta.bin", "eta.bin", "loss.csv", "metrics.csv"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()


def test_default_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("WPINN_OUTPUT_ROOT", str(tmp_path))
    assert main(["train", "--preset", "standing_shock", "--epochs", "0", "--no-errors", *TINY]) == 0
    made = list(tmp_path.iterdir())
    assert len(made) == 1 and made[0].name.startswith("train-standing_shock-")


def test_config_file(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[network]\nwidth_theta = 7   ; inline comment\n[training]\nlam = 3.5\nresidual = naive\n"
                   "[entropy]\nc_count = 4\n[sampling]\ncounts = 10 5 5\nsampler = none\n")
    assert read_config_file(cfg) == {"width_theta": 7, "lam": 3.5, "residual": "naive", "c_count": 4,
                                     "counts": (10, 5, 5), "sampler": None}
    out = tmp_path / "run"
    assert main(["train", "--preset", "moving_shock", "--epochs", "0", "--config", str(cfg), "--out", str(out),
                 "--no-errors", "--set", "width_theta=5"]) == 0
    saved = json.loads((out / "manifest.json").read_text())["config"]
    assert saved["width_theta"] == 5 and saved["lam"] == 3.5 and saved["counts"] == [10, 5, 5]


@pytest.mark.parametrize("text", ["[network]\nwidth = 3\n", "[optimizer]\nkind = sgd\n", "[training]\nepochs = x\n"])
def test_bad_config_file(tmp_path, text, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(text)
    with pytest.raises(ConfigurationError):
        read_config_file(cfg)
    assert main(["train", "--preset", "moving_shock", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_overrides():
    assert parse_overrides(["training.lam=2", "seed=3"]) == {"lam": 2.0, "seed": 3}
    for bad in (["nope=1"], ["network.lam=2"], ["lam"], ["counts=1,2"]):
        with pytest.raises(ConfigurationError):
            parse_overrides(bad)


@pytest.mark.parametrize("argv", [
    ["train", "--preset", "blast_wave"],
    ["train", "--preset", "moving_shock", "--set", "colour=red"],
    ["train", "--preset", "moving_shock", "--set", "lam=-1"],
    ["train", "--preset", "moving_shock", "--epochs", "-3"],
    ["fv-reference", "--preset", "rarefaction", "--cells", "8"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.setenv("WPINN_OUTPUT_ROOT", str(tmp_path))
    assert main(argv) == 2


def test_fv_reference_sine(tmp_path):
    out = tmp_path / "fv"
    assert main(["fv-reference", "--preset", "sine", "--cells", "256", "--out", str(out)]) == 0
    rows = np.array([[float(v) for v in r] for r in _rows(out / "profile.csv")[1:]])
    assert len(rows) == 258
    assert rows[0, 1] == -1.0 and rows[-1, 1] == 1.0
    assert rows[0, 2] == 0.0 and rows[-1, 2] == 0.0
    assert np.all(rows[:, 0] == 1.0)
    assert json.loads((out / "manifest.json").read_text())["cells"] == 256


def test_fv_reference_t_end(tmp_path):
    out = tmp_path / "fv"
    assert main(["fv-reference", "--preset", "moving_shock", "--cells", "64", "--t-end", "0", "--out", str(out)]) == 0
    rows = np.array([[float(v) for v in r] for r in _rows(out / "profile.csv")[1:]])
    p = get_preset("moving_shock")
    np.testing.assert_allclose(rows[1:-1, 2], p.initial(rows[1:-1, 1]), atol=1e-15)


def test_check_lemmas(capsys):
    assert main(["check-lemmas"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_ensemble_and_dump_profile(tmp_path):
    out = tmp_path / "ens"
    argv = ["ensemble", "--preset", "moving_shock", "--grid", "single", "--n-theta", "2", "--epochs", "3",
            "--threads", "1", "--n-x", "11", "--out", str(out), *TINY]
    assert main(argv) == 0
    assert sorted(p.name for p in (out / "runs" / "config000").iterdir()) == ["run00", "run01"]
    assert len(_rows(out / "runs.csv")) == 3
    assert _rows(out / "summary.csv")[0] == ["preset", "M_int", "M_tb", "M_sb", "E_r", "E_r_T"]
    assert _rows(out / "selection.csv")[1][1] == "single"
    profile = read_profile(out / "profile.csv")
    assert len(profile) == 3 * 11

    dump = tmp_path / "dump"
    assert main(["dump-profile", "--preset", "moving_shock", str(out / "runs"), "--times", "0", "0.5",
                 "--n-x", "11", "--out", str(dump)]) == 0
    rows = read_profile(dump / "profile.csv")
    assert len(rows) == 2 * 11
    np.testing.assert_allclose([r[2] for r in rows if r[0] == 0.5], [r[2] for r in profile if r[0] == 0.5])


def test_dump_profile_without_checkpoints(tmp_path):
    assert main(["dump-profile", "--preset", "moving_shock", str(tmp_path), "--out", str(tmp_path / "o")]) == 2


def test_sine_defaults_to_sin_test_network(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--preset", "sine", "--epochs", "0", "--no-errors", "--out", str(out), *TINY]) == 0
    cfg = json.loads((out / "manifest.json").read_text())["config"]
    assert cfg["activation_eta"] == "sin" and cfg["epochs"] == 0
    assert TrainingConfig().activation_eta == "tanh"
