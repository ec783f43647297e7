import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gansentinel.calibration import CalibrationError, Thresholds, calibrate_thresholds, effective_bests
from gansentinel.metrics import FeatureExtractor, SamplingConfig
from gansentinel.simulator import blob_distribution, simulate_images
from gansentinel.telemetry import ImageSet, load_image_dir, write_image_set

CFG = SamplingConfig(n_pairs=10, n_samples=20, extractor=FeatureExtractor(dim=8))


@pytest.fixture(scope="module")
def diverse():
    dist = blob_distribution(16, 64)
    return simulate_images(dist, 60, 1), simulate_images(dist, 40, 2)


def test_test_equal_to_train(diverse):
    train, _ = diverse
    th = calibrate_thresholds(train, train, 5, CFG)
    assert th.msssim_th1 == th.msssim_th2
    assert th.fid_th1 == th.fid_th2


def test_diverse_sets_give_small_reproducible_thresholds(diverse):
    train, test = diverse
    a = calibrate_thresholds(train, test, 3, CFG)
    b = calibrate_thresholds(train, test, 3, CFG)
    assert a.to_dict() == b.to_dict()
    assert 0 < a.fid_th1 < 1 and 0 < a.fid_th2 < 1


def test_identical_training_images():
    img = simulate_images(blob_distribution(1, 32, noise=0.0, jitter=0.0), 1, 0).images[0]
    train = ImageSet(np.repeat(img[None], 50, axis=0))
    th = calibrate_thresholds(train, train, 0, CFG)
    assert th.msssim_th1 == 1.0
    assert th.fid_th1 < 1e-6


def test_small_training_set_warns(caplog, diverse):
    train, test = diverse
    with caplog.at_level(logging.WARNING):
        calibrate_thresholds(train.subset(range(30)), test, 0, CFG)
    assert "overlapping" in caplog.text


def test_recalibration_after_reload(tmp_path, diverse):
    train, test = diverse
    write_image_set(tmp_path / "train", train)
    write_image_set(tmp_path / "test", test)
    reloaded = (load_image_dir(tmp_path / "train"), load_image_dir(tmp_path / "test"))
    assert calibrate_thresholds(*reloaded, 4, CFG) == calibrate_thresholds(*reloaded, 4, CFG)


def test_needs_two_images(diverse):
    train, _ = diverse
    with pytest.raises(CalibrationError):
        calibrate_thresholds(train.subset([0]), train, 0, CFG)


def test_effective_bests_examples():
    th = Thresholds(0.45, 0.50, 12.0, 15.0)
    assert effective_bests(th) == (0.45, 12.0)
    assert effective_bests(th, "max") == (0.50, 15.0)
    assert effective_bests(Thresholds(0.3, 0.3, 2.0, 2.0)) == (0.3, 2.0)
    with pytest.raises(CalibrationError):
        effective_bests(th, "mean")


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1e3), st.floats(0, 1e3))
def test_bests_never_exceed_thresholds(m1, m2, f1, f2):
    b = effective_bests(Thresholds(m1, m2, f1, f2))
    assert b.best_msssim <= min(m1, m2) and b.best_fid <= min(f1, f2)


def test_threshold_validation_and_round_trip(tmp_path):
    for bad in ((1.2, 0.5, 1, 1), (0.5, 0.5, -1, 1), (0.5, 0.5, float("nan"), 1)):
        with pytest.raises(CalibrationError):
            Thresholds(*bad)
    th = Thresholds(0.1, 0.2, 3.0, 4.5, seed=9, sampling=CFG.to_dict())
    path = tmp_path / "th.json"
    path.write_text(th.dumps())
    back = Thresholds.load(path)
    assert back == th and back.sampling == th.sampling
    with pytest.raises(CalibrationError):
        Thresholds.from_dict({"msssim_th1": 0.1})
