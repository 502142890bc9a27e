"""End-to-end command line checks via subprocess: artifacts, determinism,
exit codes."""

import subprocess
import sys

import numpy as np
import pytest

from ssattn.checkpoint import load_checkpoint

RUN_CFG = """\
mode=ssa_hybrid
epochs=2
warmup_epochs=1
d_model=16
n_layers=1
n_heads=2
d_ff=24
max_len=16
batch_size=8
lr=0.005
alpha=0.7
beta=0.5
"""


def cli(*argv, cwd):
    return subprocess.run([sys.executable, "-m", "ssattn.cli", *argv],
                          capture_output=True, text=True, cwd=cwd)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    r = cli("synth", "--out", "data", "--seed", "0",
            "--set", "n_examples=120", "--set", "vocab_size=200",
            "--set", "len_hi=9", cwd=root)
    assert r.returncode == 0, r.stderr
    (root / "run.cfg").write_text(RUN_CFG, encoding="utf-8")
    return root


def test_synth_outputs_and_determinism(workdir):
    data = workdir / "data"
    for name in ("train.tsv", "dev.tsv", "test.tsv", "vocab.txt",
                 "spec.txt", "gold_test.tsv"):
        assert (data / name).exists(), name
    assert len((data / "train.tsv").read_text().splitlines()) == 96
    r = cli("synth", "--out", "data2", "--seed", "0",
            "--set", "n_examples=120", "--set", "vocab_size=200",
            "--set", "len_hi=9", cwd=workdir)
    assert r.returncode == 0
    for name in ("train.tsv", "vocab.txt", "gold_test.tsv"):
        assert (data / name).read_bytes() == (workdir / "data2" / name).read_bytes()


def test_train_writes_artifacts(workdir):
    r = cli("train", "--config", "run.cfg", "--data", "data", "--out", "run1",
            "--seed", "3", cwd=workdir)
    assert r.returncode == 0, r.stderr
    for name in ("model.ckpt", "best.ckpt", "epochs.csv", "labels.dump"):
        assert (workdir / "run1" / name).exists(), name
    csv = (workdir / "run1" / "epochs.csv").read_text()
    lines = csv.splitlines()
    assert lines[0] == "epoch,l_target,l_ssa,l_total,n_generated,dev_acc,dev_mcc,dev_f1"
    assert len(lines) == 3
    ck = load_checkpoint(workdir / "run1" / "model.ckpt")
    assert ck.extras["mode"] == "ssa_hybrid"
    assert len(ck.extras["vocab_hash"]) == 16


def test_train_rerun_byte_identical(workdir):
    r = cli("train", "--config", "run.cfg", "--data", "data", "--out", "run1b",
            "--seed", "3", cwd=workdir)
    assert r.returncode == 0, r.stderr
    for name in ("model.ckpt", "best.ckpt", "epochs.csv", "labels.dump"):
        a = (workdir / "run1" / name).read_bytes()
        b = (workdir / "run1b" / name).read_bytes()
        assert a == b, name


def test_train_parallel_probing_byte_identical(workdir):
    r = cli("train", "--config", "run.cfg", "--data", "data", "--out", "run1w",
            "--seed", "3", "--workers", "3", cwd=workdir)
    assert r.returncode == 0, r.stderr
    for name in ("model.ckpt", "labels.dump", "epochs.csv"):
        a = (workdir / "run1" / name).read_bytes()
        b = (workdir / "run1w" / name).read_bytes()
        assert a == b, name


def test_alpha_one_checkpoint_params_equal_baseline(workdir):
    r1 = cli("train", "--config", "run.cfg", "--data", "data", "--out", "base",
             "--seed", "5", "--set", "mode=baseline", cwd=workdir)
    r2 = cli("train", "--config", "run.cfg", "--data", "data", "--out", "co1",
             "--seed", "5", "--set", "mode=ssa_co", "--set", "alpha=1.0",
             cwd=workdir)
    assert r1.returncode == 0 and r2.returncode == 0
    a = load_checkpoint(workdir / "base" / "model.ckpt").arrays
    b = load_checkpoint(workdir / "co1" / "model.ckpt").arrays
    assert set(a) == set(b)
    for name in a:
        assert np.array_equal(a[name], b[name]), name


def test_eval_prints_metrics(workdir):
    r = cli("eval", "--ckpt", "run1/model.ckpt", "--data", "data",
            "--split", "test", cwd=workdir)
    assert r.returncode == 0, r.stderr
    assert "acc=" in r.stdout and "mcc=" in r.stdout and "f1=" in r.stdout


def test_eval_vocab_mismatch_exit2(workdir):
    r = cli("synth", "--out", "other", "--seed", "9",
            "--set", "n_examples=120", "--set", "vocab_size=210",
            "--set", "len_hi=9", cwd=workdir)
    assert r.returncode == 0
    r = cli("eval", "--ckpt", "run1/model.ckpt", "--data", "other", cwd=workdir)
    assert r.returncode == 2
    assert "hash mismatch" in r.stderr


def test_probe_dump_and_count(workdir):
    r = cli("probe", "--ckpt", "run1/model.ckpt", "--data", "data",
            "--out", "probe1", "--gamma", "1.5", "--workers", "2", cwd=workdir)
    assert r.returncode == 0, r.stderr
    n = int(r.stdout.strip().split("=")[1])
    lines = (workdir / "probe1" / "labels.dump").read_text().splitlines()
    assert len(lines) == n > 0
    for line in lines[:20]:
        origin, body = line.split("\t")
        int(origin)
        assert set(body.split(" ")) <= {"_", "0", "1"}


def test_probe_gamma_zero_exit2(workdir):
    r = cli("probe", "--ckpt", "run1/model.ckpt", "--data", "data",
            "--out", "probe0", "--gamma", "0", cwd=workdir)
    assert r.returncode == 2
    assert "gamma" in r.stderr


def test_sweep_single_cell_matches_train(workdir):
    r = cli("sweep", "--config", "run.cfg", "--data", "data", "--out", "sw1",
            "--gammas", "1.0", "--modes", "ssa_hybrid", "--seeds", "1",
            "--seed", "3", cwd=workdir)
    assert r.returncode == 0, r.stderr
    rows = (workdir / "sw1" / "sweep.csv").read_text().splitlines()
    assert rows[0] == "gamma,mode,seed,dev_acc"
    assert len(rows) == 2
    gamma, mode, seed, acc = rows[1].split(",")
    assert (gamma, mode, seed) == ("1", "ssa_hybrid", "3")
    # same cell as run1's config: final-epoch dev accuracy must agree
    epochs = (workdir / "run1" / "epochs.csv").read_text().splitlines()
    assert float(acc) == float(epochs[-1].split(",")[5])


def test_sweep_svg_one_polyline_per_mode(workdir):
    r = cli("sweep", "--config", "run.cfg", "--data", "data", "--out", "sw2",
            "--gammas", "0.6,1.0", "--modes", "ssa_co,mask_augment",
            "--seeds", "1", "--seed", "3", "--workers", "2", cwd=workdir)
    assert r.returncode == 0, r.stderr
    svg = (workdir / "sw2" / "sweep.svg").read_text()
    assert svg.count("<polyline") == 2
    assert 'data-series="ssa_co"' in svg and 'data-series="mask_augment"' in svg
    rows = (workdir / "sw2" / "sweep.csv").read_text().splitlines()
    assert len(rows) == 1 + 4


def test_sweep_usage_errors(workdir):
    r = cli("sweep", "--config", "run.cfg", "--data", "data", "--out", "swx",
            "--gammas", "", cwd=workdir)
    assert r.returncode == 2
    r = cli("sweep", "--config", "run.cfg", "--data", "data", "--out", "swx",
            "--gammas", "1.0", "--modes", "baseline", cwd=workdir)
    assert r.returncode == 2
    assert "baseline" in r.stderr


def test_explain_report(workdir):
    r = cli("explain", "--ckpt", "run1/model.ckpt", "--data", "data",
            "--out", "ex1", "--sentence", "a slick plot with superb acting",
            cwd=workdir)
    assert r.returncode == 0, r.stderr
    out = r.stdout.splitlines()
    assert out[0].startswith("token")
    body = [l for l in out[1:] if not l.startswith("label=")]
    weights = [float(l.split()[-1]) for l in body]
    assert sum(weights) == pytest.approx(1.0, abs=2e-3)
    for line in body:
        tok = line.split()[0]
        if tok in ("[CLS]", "[SEP]"):
            assert line.split()[-1] == "0.000"
    assert out[-1].startswith("label=")
    svg = (workdir / "ex1" / "explain.svg").read_text()
    assert "pooling weight" in svg and "<rect" in svg


def test_explain_too_long_exit2(workdir):
    sentence = " ".join(["word"] * 40)
    r = cli("explain", "--ckpt", "run1/model.ckpt", "--data", "data",
            "--out", "ex2", "--sentence", sentence, cwd=workdir)
    assert r.returncode == 2
    assert "max_len" in r.stderr


def test_unknown_command_and_key_exit2(workdir):
    r = cli("frobnicate", cwd=workdir)
    assert r.returncode == 2
    r = cli("train", "--config", "run.cfg", "--data", "data", "--out", "x",
            "--set", "bogus=1", cwd=workdir)
    assert r.returncode == 2
    assert "bogus" in r.stderr
