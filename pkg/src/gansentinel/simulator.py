"""Synthetic training runs with known ground truth.

Loss trajectories reproduce four regimes seen in DCGAN training logs:

* ``ModeCollapse``: discriminator loss decays towards zero while the
  generator loss climbs 0 -> 5 over the first 45% of epochs, then keeps
  climbing 5 -> 70 (the later part is ground-truth ``Instability``).
* ``NonConvergence``: a sharp opposing drift for the first 25% of epochs,
  with both losses oscillating inside [0.6, 0.75] throughout.
* ``Instability``: both losses flat at unhealthy levels (generator in
  [0.775, 0.8], discriminator in [0.6, 0.625]).
* ``Healthy``: generator settles at 1.0 and discriminator at 0.5.

Images are Gaussian blobs on a shared background; the number of blob
positions ("modes") controls set diversity.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .calibration import Thresholds
from .loss_patterns import Label
from .metrics import MetricsSnapshot
from .telemetry import ImageSet, LossKind, LossSeries, emit_loss_log, write_image_set


class SimulationError(ValueError):
    pass


class ScenarioKind(str, Enum):
    MODE_COLLAPSE = "ModeCollapse"
    NON_CONVERGENCE = "NonConvergence"
    INSTABILITY = "Instability"
    HEALTHY = "Healthy"
    SCRIPTED = "Scripted"


# ground-truth window label of each regime's steady state
STEADY_LABEL = {
    ScenarioKind.MODE_COLLAPSE: Label.MODE_COLLAPSE,
    ScenarioKind.NON_CONVERGENCE: Label.NON_CONVERGENCE,
    ScenarioKind.INSTABILITY: Label.INSTABILITY,
    ScenarioKind.HEALTHY: Label.STABLE,
}


@dataclass(frozen=True)
class ScriptedEvaluation:
    epoch: int
    msssim: float
    fid: float


@dataclass(frozen=True)
class Script:
    """Per-evaluation metric values for an exact replay."""

    evaluations: tuple
    thresholds: Thresholds
    eval_interval: int = 50
    loss_kind: ScenarioKind = ScenarioKind.HEALTHY
    name: str = "scripted"

    def __post_init__(self):
        evals = tuple(e if isinstance(e, ScriptedEvaluation) else ScriptedEvaluation(*e) for e in self.evaluations)
        object.__setattr__(self, "evaluations", evals)
        object.__setattr__(self, "loss_kind", ScenarioKind(self.loss_kind))
        if self.loss_kind is ScenarioKind.SCRIPTED:
            raise SimulationError("a script's loss scenario cannot itself be scripted")
        for ev in evals:
            if ev.epoch <= 0 or ev.epoch % self.eval_interval:
                raise SimulationError(f"scripted epoch {ev.epoch} is not aligned to eval_interval {self.eval_interval}")
        epochs = [ev.epoch for ev in evals]
        if epochs != sorted(set(epochs)):
            raise SimulationError("scripted epochs must be strictly increasing")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "eval_interval": self.eval_interval,
            "loss_scenario": self.loss_kind.value,
            "thresholds": self.thresholds.to_dict(),
            "evaluations": [asdict(e) for e in self.evaluations],
        }

    @classmethod
    def from_dict(cls, obj) -> "Script":
        try:
            evals = tuple(ScriptedEvaluation(int(e["epoch"]), float(e["msssim"]), float(e["fid"]))
                          for e in obj["evaluations"])
            return cls(evals, Thresholds.from_dict(obj["thresholds"]), int(obj.get("eval_interval", 50)),
                       ScenarioKind(obj.get("loss_scenario", "Healthy")), str(obj.get("name", "scripted")))
        except (KeyError, TypeError, ValueError) as exc:
            raise SimulationError(f"malformed script: {exc}") from None

    @classmethod
    def load(cls, path) -> "Script":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind = ScenarioKind.HEALTHY
    epochs: int = 1000
    seed: int = 0
    noise_sigma: float = 0.01
    # mode collapse
    collapse_fraction: float = 0.45
    g_collapse_peak: float = 5.0
    g_final: float = 70.0
    d_start: float = 1.0
    d_decay_epochs: float = 20.0
    # non-convergence
    transient_fraction: float = 0.25
    osc_band: tuple = (0.6, 0.75)
    osc_period: float = 8.0
    transient_drift: float = 0.6
    # instability
    g_band: tuple = (0.775, 0.8)
    d_band: tuple = (0.6, 0.625)
    # healthy
    g_level: float = 1.0
    d_level: float = 0.5
    settle_epochs: float = 15.0
    script: Optional[Script] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        if self.epochs < 100:
            raise SimulationError(f"a scenario needs at least 100 epochs, got {self.epochs}")
        if self.noise_sigma < 0:
            raise SimulationError("noise_sigma must be non-negative")
        for name in ("osc_band", "g_band", "d_band"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise SimulationError(f"{name} bounds out of order")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not 0 < self.collapse_fraction < 1 or not 0 < self.transient_fraction < 1:
            raise SimulationError("phase fractions must lie in (0, 1)")
        if self.kind is ScenarioKind.SCRIPTED and self.script is None:
            raise SimulationError("a Scripted scenario needs a script")

    @property
    def collapse_epoch(self) -> int:
        return int(round(self.collapse_fraction * self.epochs))

    @property
    def transient_epoch(self) -> int:
        return int(round(self.transient_fraction * self.epochs))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["script"] = self.script.to_dict() if self.script else None
        return d


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *stream])


def _irregular_phase(t: np.ndarray, period: float, rng: np.random.Generator) -> np.ndarray:
    # period jitter via a slow phase random walk
    steps = 2 * np.pi / period + rng.normal(0.0, 0.08, t.size)
    return rng.uniform(0, 2 * np.pi) + np.cumsum(steps)


def _clean_losses(sc: Scenario, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, Label, Label]:
    kind = sc.kind if sc.kind is not ScenarioKind.SCRIPTED else sc.script.loss_kind
    n = sc.epochs
    shape_rng = _rng(sc.seed, 7)
    if kind is ScenarioKind.MODE_COLLAPSE:
        t1 = sc.collapse_epoch
        g = np.where(
            t <= t1,
            sc.g_collapse_peak * t / t1,
            sc.g_collapse_peak + (sc.g_final - sc.g_collapse_peak) * (t - t1) / max(n - t1, 1),
        )
        d = sc.d_start * np.exp(-t / sc.d_decay_epochs)
        return g, d, Label.MODE_COLLAPSE, Label.INSTABILITY
    if kind is ScenarioKind.NON_CONVERGENCE:
        t0 = sc.transient_epoch
        lo, hi = sc.osc_band
        centre, half = (lo + hi) / 2, (hi - lo) / 2
        drift = sc.transient_drift * np.clip(1.0 - t / t0, 0.0, None)
        g = centre - drift + half * np.sin(_irregular_phase(t, sc.osc_period, shape_rng))
        d = centre + drift + half * np.sin(_irregular_phase(t, sc.osc_period, shape_rng))
        return g, d, Label.MODE_COLLAPSE, Label.NON_CONVERGENCE
    if kind is ScenarioKind.INSTABILITY:
        phases = shape_rng.uniform(0, 2 * np.pi, 2)
        out = []
        for (lo, hi), ph in zip((sc.g_band, sc.d_band), phases):
            out.append(lo + (hi - lo) * (0.5 + 0.4 * np.sin(2 * np.pi * t / 500.0 + ph)))
        return out[0], out[1], Label.INSTABILITY, Label.INSTABILITY
    # healthy
    settle = np.exp(-t / sc.settle_epochs)
    g = sc.g_level + 1.0 * settle
    d = sc.d_level - 0.6 * sc.d_level * settle
    return g, d, Label.STABLE, Label.STABLE


def _phase_boundary(sc: Scenario) -> int:
    kind = sc.kind if sc.kind is not ScenarioKind.SCRIPTED else sc.script.loss_kind
    if kind is ScenarioKind.MODE_COLLAPSE:
        return sc.collapse_epoch
    if kind is ScenarioKind.NON_CONVERGENCE:
        return sc.transient_epoch
    return sc.epochs


def simulate_losses(sc: Scenario) -> LossSeries:
    """Per-epoch losses for epochs ``1..sc.epochs`` plus seeded Gaussian noise."""
    t = np.arange(1, sc.epochs + 1, dtype=np.float64)
    g, d, _, _ = _clean_losses(sc, t)
    noise = _rng(sc.seed, 1).normal(0.0, sc.noise_sigma, (2, t.size)) if sc.noise_sigma > 0 else np.zeros((2, t.size))
    # BCE losses are non-negative
    g = np.clip(g + noise[0], 0.0, None)
    d = np.clip(d + noise[1], 0.0, None)
    kind = LossKind.BCE
    if sc.kind is ScenarioKind.SCRIPTED and sc.script.name.lower().startswith("msg"):
        kind = LossKind.RELATIVISTIC_HINGE
    return LossSeries.from_arrays(t.astype(np.int64), g, d, kind)


def ground_truth_label(sc: Scenario, epoch: int) -> Label:
    t = np.array([float(epoch)])
    _, _, head, tail = _clean_losses(sc, t)
    return head if epoch <= _phase_boundary(sc) else tail


def steady_state_window(sc: Scenario, width: int = 50) -> tuple[int, int]:
    """``(first, last)`` epoch of the window whose label is the scenario's
    defining regime: the end of the collapse ramp for ModeCollapse, the
    final epochs otherwise."""
    kind = sc.kind if sc.kind is not ScenarioKind.SCRIPTED else sc.script.loss_kind
    end = sc.collapse_epoch if kind is ScenarioKind.MODE_COLLAPSE else sc.epochs
    return end - width + 1, end


def label_windows(sc: Scenario, width: int = 50) -> list[dict]:
    """Ground-truth labels for consecutive, non-overlapping windows tiling
    ``1..epochs``; each window takes the regime of its last epoch."""
    out = []
    start = 1
    while start <= sc.epochs:
        end = min(start + width - 1, sc.epochs)
        out.append({"epoch_start": start, "epoch_end": end, "label": ground_truth_label(sc, end).value})
        start = end + 1
    return out


# ---------------------------------------------------------------------------
# Images

@dataclass(frozen=True)
class ImageDistribution:
    centers: tuple
    radii: tuple
    size: int = 128
    noise: float = 0.02
    jitter: float = 1.0
    amplitude: float = 0.6

    def __post_init__(self):
        centers = tuple((float(y), float(x)) for y, x in self.centers)
        radii = tuple(float(r) for r in self.radii)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)
        if not centers or len(centers) != len(radii):
            raise SimulationError("need one radius per mode and at least one mode")
        if self.size < 16:
            raise SimulationError("raster size must be at least 16")
        for (y, x), r in zip(centers, radii):
            if r <= 0 or y - r < 0 or x - r < 0 or y + r > self.size or x + r > self.size:
                raise SimulationError(f"blob at ({y}, {x}) with radius {r} does not fit a {self.size} raster")

    @property
    def n_modes(self) -> int:
        return len(self.centers)


def blob_distribution(n_modes: int, size: int = 128, noise: float = 0.02,
                      region: str = "full", jitter: float = 1.0, amplitude: float = 0.6) -> ImageDistribution:
    """Blob modes laid out on a grid inside ``region`` (``full``, ``left`` or ``right``)."""
    if n_modes < 1:
        raise SimulationError("n_modes must be >= 1")
    x_lo, x_hi = {"full": (0.0, 1.0), "left": (0.0, 0.5), "right": (0.5, 1.0)}[region]
    cols = math.ceil(math.sqrt(n_modes))
    rows = math.ceil(n_modes / cols)
    radius_max = size * 0.07
    centers, radii = [], []
    for i in range(n_modes):
        r, c = divmod(i, cols)
        fy = (r + 0.5) / rows
        fx = x_lo + (x_hi - x_lo) * (c + 0.5) / cols
        margin = radius_max + 2
        y = margin + fy * (size - 2 * margin)
        x = margin + fx * (size - 2 * margin)
        centers.append((y, x))
        radii.append(size * (0.04 + 0.03 * ((i * 3) % 5) / 4))
    return ImageDistribution(tuple(centers), tuple(radii), size, noise, jitter, amplitude)


def simulate_images(dist: ImageDistribution, n: int, seed: int) -> ImageSet:
    if n < 1:
        raise SimulationError("n must be >= 1")
    rng = _rng(seed, 3)
    modes = rng.integers(dist.n_modes, size=n)
    shift = rng.normal(0.0, dist.jitter, (n, 2)) if dist.jitter > 0 else np.zeros((n, 2))
    noise = rng.normal(0.0, dist.noise, (n, dist.size, dist.size)) if dist.noise > 0 else 0.0
    yy, xx = np.mgrid[0:dist.size, 0:dist.size].astype(np.float64)
    background = 0.15 + 0.15 * yy / (dist.size - 1)
    centers = np.asarray(dist.centers)[modes] + shift
    radii = np.asarray(dist.radii)[modes]
    dy = yy[None] - centers[:, 0, None, None]
    dx = xx[None] - centers[:, 1, None, None]
    blobs = dist.amplitude * np.exp(-(dy * dy + dx * dx) / (2.0 * radii[:, None, None] ** 2))
    return ImageSet(np.clip(background[None] + blobs + noise, 0.0, 1.0))


def synthetic_distribution(sc: Scenario, epoch: int, size: int = 128) -> ImageDistribution:
    """The generator's image distribution at ``epoch`` for a scenario."""
    kind = sc.kind if sc.kind is not ScenarioKind.SCRIPTED else sc.script.loss_kind
    if kind is ScenarioKind.MODE_COLLAPSE:
        frac = min(epoch / max(sc.collapse_epoch, 1), 1.0)
        return blob_distribution(max(1, int(round(16 * (1.0 - frac)))), size, noise=0.05)
    if kind is ScenarioKind.NON_CONVERGENCE:
        return blob_distribution(16, size, noise=0.05 + 0.1 * ((epoch // 50) % 2))
    if kind is ScenarioKind.INSTABILITY:
        return blob_distribution(16, size, noise=0.15, amplitude=0.3)
    return blob_distribution(16, size, noise=0.02 + 0.2 * math.exp(-epoch / 150.0))


# ---------------------------------------------------------------------------
# Runs

@dataclass
class RunBundle:
    scenario: Scenario
    series: LossSeries
    labels: list
    snapshots: dict = field(default_factory=dict)
    snapshot_images: dict = field(default_factory=dict)
    train: Optional[ImageSet] = None
    test: Optional[ImageSet] = None
    thresholds: Optional[Thresholds] = None


def simulate_run(sc: Scenario, images: bool = False, n_images: int = 100, image_size: int = 128,
                 n_train: int = 200, n_test: int = 100, eval_interval: int = 50,
                 label_width: int = 50) -> RunBundle:
    """Losses, labels and (optionally) per-evaluation synthetic images plus
    train/test sets drawn from the real-data distribution."""
    if sc.kind is ScenarioKind.SCRIPTED:
        return scripted_run(sc.script, sc)
    bundle = RunBundle(sc, simulate_losses(sc), label_windows(sc, label_width))
    if images:
        real = blob_distribution(16, image_size)
        bundle.train = simulate_images(real, n_train, sc.seed * 1000 + 1)
        bundle.test = simulate_images(real, n_test, sc.seed * 1000 + 2)
        for epoch in range(eval_interval, sc.epochs + 1, eval_interval):
            dist = synthetic_distribution(sc, epoch, image_size)
            bundle.snapshot_images[epoch] = simulate_images(dist, n_images, sc.seed * 1000 + 10 + epoch)
    return bundle


def scripted_run(script: Script, base: Optional[Scenario] = None, epochs: int = 1000) -> RunBundle:
    """A run whose metric snapshots are exactly the scripted values."""
    base = base or Scenario(ScenarioKind.SCRIPTED, epochs=epochs, script=script)
    sc = replace(base, kind=ScenarioKind.SCRIPTED, script=script)
    snaps = {}
    for ev in script.evaluations:
        if ev.epoch > sc.epochs:
            raise SimulationError(f"scripted epoch {ev.epoch} beyond the run's {sc.epochs} epochs")
        snaps[ev.epoch] = MetricsSnapshot(ev.epoch, ev.msssim, ev.fid, sc.seed, 0, 0)
    return RunBundle(sc, simulate_losses(sc), label_windows(sc), snapshots=snaps, thresholds=script.thresholds)


def _script_from_best(name: str, thresholds: Thresholds, best_epoch: int, epochs: int = 1000,
                      interval: int = 50) -> Script:
    evals = []
    best_ms, best_fid = min(thresholds.msssim_th1, thresholds.msssim_th2), min(thresholds.fid_th1, thresholds.fid_th2)
    for k, epoch in enumerate(range(interval, epochs + 1, interval), start=1):
        if epoch <= best_epoch:
            # joint improvement at every evaluation up to the best epoch
            best_ms = round(best_ms - 0.01, 6)
            best_fid = round(best_fid - 0.5, 6)
            evals.append(ScriptedEvaluation(epoch, best_ms, best_fid))
        else:
            # no joint improvement afterwards; alternate which metric lags
            lag = 0.005 * (k % 3)
            if k % 2:
                evals.append(ScriptedEvaluation(epoch, round(best_ms - 0.002, 6), round(best_fid + 1.0 + lag, 6)))
            else:
                evals.append(ScriptedEvaluation(epoch, round(best_ms + 0.02 + lag, 6), round(best_fid - 0.1, 6)))
    return Script(tuple(evals), thresholds, interval, ScenarioKind.HEALTHY, name)


def dcgan_script() -> Script:
    """Joint best scores at epoch 350, nothing better afterwards."""
    return _script_from_best("dcgan", Thresholds(0.45, 0.50, 12.0, 15.0), 350)


def msggan_script() -> Script:
    """Joint best scores at epoch 500, nothing better afterwards."""
    return _script_from_best("msggan", Thresholds(0.40, 0.42, 30.0, 34.0), 500)


def improving_script(epochs: int = 1000) -> Script:
    """Joint improvement at every evaluation through the final epoch."""
    return _script_from_best("improving", Thresholds(0.45, 0.50, 12.0, 15.0), epochs, epochs)


PRESET_SCRIPTS = {"dcgan": dcgan_script, "msggan": msggan_script, "improving": improving_script}


def emit_run(bundle: RunBundle, out_dir, fmt: str = "jsonl") -> dict:
    """Write a run in the telemetry formats; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    log_path = out / ("loss.jsonl" if fmt == "jsonl" else "loss.csv")
    with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
        emit_loss_log(bundle.series, fh, fmt)
    paths["loss_log"] = log_path

    labels_path = out / "labels.json"
    labels = {"scenario": bundle.scenario.kind.value, "seed": bundle.scenario.seed,
              "epochs": bundle.scenario.epochs, "windows": bundle.labels}
    labels_path.write_text(json.dumps(labels, indent=2) + "\n", encoding="utf-8")
    paths["labels"] = labels_path

    scenario_path = out / "scenario.json"
    scenario_path.write_text(json.dumps(bundle.scenario.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["scenario"] = scenario_path

    if bundle.snapshot_images:
        snap_root = out / "snapshots"
        for epoch, imgs in sorted(bundle.snapshot_images.items()):
            write_image_set(snap_root / f"epoch_{epoch}", imgs)
        paths["snapshots"] = snap_root
    for name in ("train", "test"):
        imgs = getattr(bundle, name)
        if imgs is not None:
            write_image_set(out / name, imgs)
            paths[name] = out / name
    if bundle.snapshots:
        metrics_path = out / "metrics.jsonl"
        with open(metrics_path, "w", encoding="utf-8", newline="\n") as fh:
            for epoch, snap in sorted(bundle.snapshots.items()):
                fh.write(json.dumps(snap.to_dict(), sort_keys=True) + "\n")
        paths["metrics"] = metrics_path
    if bundle.thresholds is not None:
        th_path = out / "thresholds.json"
        th_path.write_text(bundle.thresholds.dumps(), encoding="utf-8")
        paths["thresholds"] = th_path
    return paths


def load_metrics_log(path) -> dict:
    """Read ``metrics.jsonl`` (one snapshot per line) into ``{epoch: snapshot}``."""
    snaps = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                snap = MetricsSnapshot.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise SimulationError(f"{path} line {lineno}: {exc}") from None
            if snap.epoch in snaps:
                raise SimulationError(f"{path} line {lineno}: duplicate epoch {snap.epoch}")
            snaps[snap.epoch] = snap
    return snaps


def canonical_scenarios(seed: int = 0, epochs: int = 1000, noise_sigma: float = 0.01) -> list[Scenario]:
    kinds: Sequence[ScenarioKind] = (ScenarioKind.MODE_COLLAPSE, ScenarioKind.NON_CONVERGENCE,
                                     ScenarioKind.INSTABILITY, ScenarioKind.HEALTHY)
    return [Scenario(k, epochs, seed, noise_sigma) for k in kinds]
