"""Smoke tests for the Python bindings: container I/O, the signal pipeline,
dataset preparation, a miniature training run, and the evaluation metrics."""

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.environ.get("XMDG_PY_SRC", ""))

import xmdg  # noqa: E402


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("smoke")


def test_array_round_trip(workdir):
    a = np.random.default_rng(1).normal(size=(5, 7)).astype(np.float32)
    path = str(workdir / "a.xmdg")
    xmdg.save_array(a, path)
    b = xmdg.load_array(path)
    assert b.shape == (5, 7)
    assert np.array_equal(a, b)


def test_sha256_known_value():
    # SHA-256 of the empty string is a published constant.
    assert (
        xmdg.sha256_hex("")
        == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )


def test_spectrogram_shape_and_peak():
    rate = 10000
    t = np.arange(38000) / rate
    tone = np.sin(2 * math.pi * 500.0 * t)
    spec = xmdg.compute_spectrogram(tone, xmdg.StftConfig(512, 128), rate)
    assert spec.shape == (257, 297)
    peak_bin = int(np.argmax(spec.sum(axis=1)))
    assert peak_bin == round(500.0 * 512 / rate)  # bin 26


def test_log_scale_round_trip():
    spec = np.abs(np.random.default_rng(2).normal(size=(16, 9))) + 0.5
    back = xmdg.unlog_scale(xmdg.log_scale(spec))
    assert np.allclose(back, spec, rtol=1e-9, atol=1e-9)


def test_phase_reconstruction_converges():
    rate = 10000
    tone = np.sin(2 * math.pi * 500.0 * np.arange(20000) / rate)
    cfg = xmdg.StftConfig(126, 64)
    spec = xmdg.compute_spectrogram(tone, cfg, rate)
    samples, consistency = xmdg.invert_spectrogram(spec, cfg, n_iters=100, seed=13)
    assert len(samples) > 0
    assert consistency[-1] < 0.1
    assert all(b <= a + 1e-9 for a, b in zip(consistency, consistency[1:]))


def test_dataset_and_training_flow(workdir):
    data_dir = str(workdir / "data")
    n_pairs, digest = xmdg.prepare_synthetic_dataset(
        data_dir, classes=2, originals=2, reps=5, image_size=32, seed=4
    )
    assert n_pairs == 20
    assert len(digest) == 64
    assert xmdg.manifest_pair_count(data_dir + "/manifest.txt") == 20

    clf_path = str(workdir / "clf_tactile.ckpt")
    val_acc, test_acc = xmdg.pretrain_classifier(data_dir, "tactile", 1, 1, clf_path)
    assert 0.0 <= val_acc <= 1.0
    assert 0.0 <= test_acc <= 1.0

    run_dir = str(workdir / "run")
    steps, ckpt = xmdg.train_gan(
        data_dir, clf_path, run_dir, direction="t2v", variant="E",
        steps=1, batch=2, seed=3, overwrite=True,
    )
    assert steps == 1
    assert os.path.exists(ckpt)

    manifest = open(data_dir + "/manifest.txt").read()
    tactile_payload = next(
        tok for line in manifest.splitlines() if line.startswith("pair ")
        for tok in [line.split()[7]]
    )
    payload = xmdg.load_array(os.path.join(data_dir, tactile_payload))
    generated, ood, max_softmax = xmdg.generate(run_dir, payload)
    assert generated.shape == (32, 32)
    assert 0.0 <= max_softmax <= 1.0
    assert isinstance(ood, bool)

    clf_vis = str(workdir / "clf_visual.ckpt")
    xmdg.pretrain_classifier(data_dir, "visual", 1, 1, clf_vis)
    accuracy, fid, noise_fid = xmdg.evaluate_run(run_dir, data_dir, clf_vis)
    assert 0.0 <= accuracy <= 1.0
    assert fid >= 0.0
    assert noise_fid > 0.0


def test_metrics():
    assert xmdg.dtw_distance([1.0, 2.0, 3.0], [1.0, 3.0]) == pytest.approx(1.0)
    cloud = np.random.default_rng(5).normal(size=(400, 4)).tolist()
    assert xmdg.fid(cloud, cloud) == pytest.approx(0.0, abs=1e-6)
    assert xmdg.intra_class_variance([[1.0, 2.0], [2.0, 2.0], [3.0, 2.0]]) == pytest.approx(0.5)
