import csv

import numpy as np
import pytest

from archprune.baselines import load_mask
from archprune.cli import EXIT_OK, EXIT_USAGE, UsageError, build_settings, main
from archprune.models import load_checkpoint

SYN = ["--set", "dataset=synthetic", "--set", "synthetic_n=600", "--set", "synthetic_features=16"]


def read(path):
    return path.read_bytes()


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestSettings:
    def test_layering(self, tmp_path):
        cfg = tmp_path / "c.txt"
        cfg.write_text("t_l=500  # comment\nhidden=7\n")
        ap, proto = build_settings("ap-train", cfg, ["hidden=9"], seed=4)
        assert (ap.t_l, proto.hidden, ap.seed) == (500.0, 9, 4)

    def test_unknown_key(self):
        with pytest.raises(UsageError):
            build_settings("ap-train", overrides=["bogus=1"])

    def test_scale_shrinks(self):
        ap, proto = build_settings("transfer-grid", scale=0.1)
        assert ap.T == 300 and proto.retrain_iters == 50
        assert proto.sizes == "500,100,50,10,5"

    def test_explicit_values_not_rescaled(self):
        ap, proto = build_settings("transfer-grid", overrides=["T=777", "sizes=200"], scale=0.1)
        assert ap.T == 777 and proto.sizes == "200"


def test_unknown_key_exit_code(tmp_path, capsys):
    assert main(["ap-train", "--out", str(tmp_path), "--set", "nope=3"]) == EXIT_USAGE
    assert "unknown key" in capsys.readouterr().err


def test_missing_data_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("APDATA", str(tmp_path / "empty"))
    assert main(["convergence-demo", "--out", str(tmp_path / "o")]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "fetch-data" in err and "APDATA" in err


def test_ap_train_outputs(tmp_path):
    assert main(["ap-train", "--out", str(tmp_path), "--scale", "0.2", *SYN]) == EXIT_OK
    mask = load_mask(tmp_path / "mask.txt")
    model = load_checkpoint(tmp_path / "checkpoint.npz")
    np.testing.assert_array_equal(mask, (model.w > 0).astype(np.int8))
    assert rows(tmp_path / "history.csv")[0] == ["iter", "loss", "sparsity", "surviving", "frozen"]
    assert "t_l=100.0" in (tmp_path / "config.txt").read_text()


@pytest.mark.parametrize("method", ["rnd", "imp", "ours"])
def test_baseline_mask_counts(tmp_path, method):
    assert main(["baseline", "--out", str(tmp_path), "--scale", "0.2", "--set", f"method={method}", *SYN]) == EXIT_OK
    (path,) = tmp_path.glob(f"{method}_s0.9_seed0.txt")
    mask = load_mask(path)
    assert 0.1 <= mask.mean() <= 0.15


def test_convergence_demo_is_byte_identical(tmp_path, mnist_root):
    args = ["convergence-demo", "--scale", "0.05", "--set", "n_seeds=1", "--set", "t_s_grid=1000,10"]
    assert main([*args, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main([*args, "--out", str(tmp_path / "b"), "--jobs", "2"]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "convergence_summary.csv" in names and "convergence.gp" in names
    for name in names:
        assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name), name


def test_transfer_grid_is_byte_identical(tmp_path):
    args = ["transfer-grid", "--scale", "0.05", *SYN, "--set", "sparsities=0.5,0.9", "--set", "n_seeds=2",
            "--set", "sizes=200,50"]
    assert main([*args, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main([*args, "--out", str(tmp_path / "b"), "--jobs", "3"]) == EXIT_OK
    for name in ("transfer_results.csv", "transfer_summary.csv", "transfer_size50.dat"):
        assert read(tmp_path / "a" / name) == read(tmp_path / "b" / name)
    summary = rows(tmp_path / "a" / "transfer_summary.csv")
    assert summary[0] == ["source", "sparsity", "new_size", "mean", "std", "n_seeds"]
    assert len(summary) == 1 + 3 * 2 * 2
    assert len(list((tmp_path / "a" / "masks").iterdir())) == 3 * 2 * 2


def test_transfer_grid_partial_when_size_unavailable(tmp_path):
    args = ["transfer-grid", "--scale", "0.05", *SYN, "--set", "sparsities=0.5", "--set", "n_seeds=1",
            "--set", "sources=rnd", "--set", "sizes=100000,50"]
    assert main([*args, "--out", str(tmp_path)]) == 1
    assert len(rows(tmp_path / "transfer_summary.csv")) == 2


def test_bound_check_command(tmp_path):
    args = ["bound-check", "--out", str(tmp_path), "--set", "bound_seeds=3", "--set", "bound_steps=5000",
            "--set", "bound_T=50,100"]
    assert main(args) == EXIT_OK
    table = rows(tmp_path / "bound_check.csv")
    assert table[0][:3] == ["T", "gap", "bound"]
    assert [r[-1] for r in table[1:]] == ["1", "1"]
