import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gansentinel.calibration import Thresholds
from gansentinel.loss_patterns import Label, classify_window
from gansentinel.metrics import FeatureExtractor, embed, fid, mean_ms_ssim
from gansentinel.simulator import (
    STEADY_LABEL, ImageDistribution, Scenario, ScenarioKind, Script, ScriptedEvaluation, SimulationError,
    blob_distribution, canonical_scenarios, emit_run, ground_truth_label, improving_script, label_windows,
    load_metrics_log, scripted_run, simulate_images, simulate_losses, simulate_run, steady_state_window,
)
from gansentinel.telemetry import load_image_dir, parse_loss_log


def test_healthy_levels():
    s = simulate_losses(Scenario(ScenarioKind.HEALTHY, 1000, seed=0, noise_sigma=0.01))
    assert abs(s.g[-100:].mean() - 1.0) <= 0.01
    assert abs(s.d[-100:].mean() - 0.5) <= 0.01


def test_mode_collapse_shape():
    sc = Scenario(ScenarioKind.MODE_COLLAPSE, seed=1)
    s = simulate_losses(sc)
    end = sc.collapse_epoch
    mask = (s.epochs > end - 50) & (s.epochs <= end)
    assert classify_window(s.g[mask], s.d[mask]).kind is Label.MODE_COLLAPSE
    assert s.d[end - 1] < 0.05
    assert s.g[end - 1] == pytest.approx(5.0, abs=0.05) and s.g[-1] == pytest.approx(70.0, abs=0.05)


def test_bands_of_flat_and_oscillating_regimes():
    s = simulate_losses(Scenario(ScenarioKind.INSTABILITY, seed=2, noise_sigma=0.0))
    assert s.g.min() >= 0.775 and s.g.max() <= 0.8 and s.d.min() >= 0.6 and s.d.max() <= 0.625
    sc = Scenario(ScenarioKind.NON_CONVERGENCE, seed=2, noise_sigma=0.0)
    s = simulate_losses(sc)
    tail = s.epochs > sc.transient_epoch
    for x in (s.g[tail], s.d[tail]):
        assert x.min() >= 0.6 - 1e-12 and x.max() <= 0.75 + 1e-12


def test_losses_deterministic_and_seed_dependent():
    sc = Scenario(ScenarioKind.NON_CONVERGENCE, seed=9)
    assert simulate_losses(sc).records == simulate_losses(sc).records
    assert simulate_losses(sc).records != simulate_losses(Scenario(ScenarioKind.NON_CONVERGENCE, seed=10)).records


def test_scenario_validation():
    with pytest.raises(SimulationError):
        Scenario(epochs=99)
    with pytest.raises(SimulationError):
        Scenario(noise_sigma=-0.1)
    with pytest.raises(SimulationError):
        Scenario(osc_band=(0.8, 0.6))
    with pytest.raises(SimulationError):
        Scenario(ScenarioKind.SCRIPTED)


def test_ground_truth_fidelity_over_twenty_seeds():
    for seed in range(20):
        for sc in canonical_scenarios(seed):
            s = simulate_losses(sc)
            lo, hi = steady_state_window(sc)
            mask = (s.epochs >= lo) & (s.epochs <= hi)
            assert classify_window(s.g[mask], s.d[mask]).kind is STEADY_LABEL[sc.kind], (sc.kind, seed)


def test_label_windows_tile():
    for sc in canonical_scenarios(0, epochs=333):
        wins = label_windows(sc)
        assert wins[0]["epoch_start"] == 1 and wins[-1]["epoch_end"] == 333
        for a, b in zip(wins, wins[1:]):
            assert b["epoch_start"] == a["epoch_end"] + 1
        assert all(w["label"] == ground_truth_label(sc, w["epoch_end"]).value for w in wins)


# -- images ------------------------------------------------------------------

def test_single_mode_without_noise_is_near_duplicate():
    imgs = simulate_images(blob_distribution(1, 128, noise=0.0), 40, seed=0)
    assert mean_ms_ssim(imgs, 20, 0) > 0.95


def test_diversity_ordering():
    scores = [mean_ms_ssim(simulate_images(blob_distribution(k, 64), 60, seed=4), 30, 4) for k in (1, 4, 16)]
    assert scores[0] > scores[1] > scores[2]


def test_disjoint_modes_are_farther_apart():
    fx = FeatureExtractor(dim=16)
    left, right = blob_distribution(8, 64, region="left"), blob_distribution(8, 64, region="right")
    a, b, c = (embed(simulate_images(d, 80, s), fx) for d, s in ((left, 1), (left, 2), (right, 3)))
    assert fid(a, b) < fid(a, c)


def test_distribution_validation():
    with pytest.raises(SimulationError):
        ImageDistribution(((5, 5),), (10,), 32)
    with pytest.raises(SimulationError):
        blob_distribution(0)
    with pytest.raises(SimulationError):
        simulate_images(blob_distribution(1, 32), 0, 0)


@settings(max_examples=15)
@given(st.integers(1, 25), st.integers(0, 2**31), st.floats(0, 0.3))
def test_images_in_unit_range_and_deterministic(n_modes, seed, noise):
    dist = blob_distribution(n_modes, 32, noise=noise)
    a, b = simulate_images(dist, 3, seed), simulate_images(dist, 3, seed)
    assert np.array_equal(a.images, b.images)
    assert a.images.min() >= 0 and a.images.max() <= 1


# -- scripts and runs --------------------------------------------------------

def test_script_validation():
    th = Thresholds(0.5, 0.5, 1, 1)
    with pytest.raises(SimulationError, match="aligned"):
        Script((ScriptedEvaluation(75, 0.4, 1.0),), th)
    with pytest.raises(SimulationError, match="increasing"):
        Script(((100, 0.4, 1.0), (50, 0.4, 1.0)), th)
    with pytest.raises(SimulationError, match="beyond"):
        scripted_run(Script(((1050, 0.4, 1.0),), th))


def test_script_round_trip(tmp_path):
    sc = improving_script(300)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(sc.to_dict()))
    assert Script.load(path) == sc


def test_scripted_snapshots_are_exact():
    run = scripted_run(improving_script())
    assert len(run.snapshots) == 20
    ev = run.scenario.script.evaluations[3]
    snap = run.snapshots[ev.epoch]
    assert (snap.msssim_synth, snap.fid_train_synth) == (ev.msssim, ev.fid)


def _digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_emit_round_trip_and_determinism(tmp_path):
    sc = Scenario(ScenarioKind.MODE_COLLAPSE, epochs=200, seed=3)
    run = simulate_run(sc, images=True, n_images=12, image_size=32, n_train=10, n_test=8)
    paths = emit_run(run, tmp_path / "a")
    emit_run(simulate_run(sc, images=True, n_images=12, image_size=32, n_train=10, n_test=8), tmp_path / "b")
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")

    assert parse_loss_log(paths["loss_log"]).records == run.series.records
    for epoch, imgs in run.snapshot_images.items():
        back = load_image_dir(paths["snapshots"] / f"epoch_{epoch}")
        assert np.max(np.abs(back.images - imgs.images)) <= 0.5 / 255 + 1e-12
    labels = json.loads(paths["labels"].read_text())
    assert labels["windows"] == run.labels and labels["scenario"] == "ModeCollapse"


def test_emit_scripted_run(tmp_path):
    run = scripted_run(improving_script(200), epochs=200)
    paths = emit_run(run, tmp_path, fmt="csv")
    assert load_metrics_log(paths["metrics"]) == run.snapshots
    assert Thresholds.load(paths["thresholds"]) == run.thresholds
    assert parse_loss_log(paths["loss_log"], "csv").records == run.series.records
