"""Patience-based early stopping over loss windows and metric snapshots.

The sentinel is fed one loss record per epoch and, every ``eval_interval``
epochs, a metrics snapshot of the synthetic images. It stops training when

* the trailing loss window has looked pathological for ``patience`` epochs
  past the onset of the pathology (``LossPathologyPersistence``), or
* MS-SSIM and FID have not improved *jointly* on their best values for
  ``patience`` epochs (``MetricStagnation``), or
* ``max_epochs`` is reached (``MaxEpochsReached``).

Both patience counters are measured in epochs. Best scores start at the
calibrated real-data thresholds, so a snapshot only counts as an
improvement once the synthetic set is at least as diverse and as close to
the training data as the real baselines.
"""

from __future__ import annotations

import sys
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable, Mapping, NamedTuple, Optional

import numpy as np

from .calibration import THRESHOLD_MODES, Bests, Thresholds, effective_bests
from .loss_patterns import DetectorConfig, PathologyEvent, classify_window, detect_constancy
from .metrics import MetricsSnapshot
from .telemetry import LossRecord


class SentinelError(ValueError):
    pass


# without calibrated thresholds the first snapshot always counts as an improvement
NO_BASELINE = Bests(1.0, sys.float_info.max)


class StopReason(str, Enum):
    LOSS_PATHOLOGY = "LossPathologyPersistence"
    METRIC_STAGNATION = "MetricStagnation"
    MAX_EPOCHS = "MaxEpochsReached"
    NOT_STOPPED = "NotStopped"


class Status(str, Enum):
    CONTINUE = "continue"
    STOP = "stop"


@dataclass(frozen=True)
class SentinelConfig:
    max_epochs: int = 1000
    patience: int = 200
    eval_interval: int = 50
    gate_on_constancy: bool = False
    metrics_enabled: bool = True
    threshold_mode: str = "min"
    loss_patience: Optional[int] = None
    metric_patience: Optional[int] = None
    detector: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self):
        for name in ("max_epochs", "patience", "eval_interval"):
            if getattr(self, name) < 1:
                raise SentinelError(f"{name} must be positive")
        for name in ("loss_patience", "metric_patience"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise SentinelError(f"{name} must be positive")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise SentinelError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        if self.metrics_enabled and self.metric_patience_epochs < self.eval_interval:
            raise SentinelError(
                f"patience ({self.metric_patience_epochs}) must be at least eval_interval ({self.eval_interval})")

    @property
    def loss_patience_epochs(self) -> int:
        return self.patience if self.loss_patience is None else self.loss_patience

    @property
    def metric_patience_epochs(self) -> int:
        return self.patience if self.metric_patience is None else self.metric_patience

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StopDecision:
    stopped: bool
    stop_epoch: int
    reason: StopReason
    best_msssim: float
    best_fid: float
    best_epoch: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reason"] = self.reason.value
        return d

    @classmethod
    def from_dict(cls, obj) -> "StopDecision":
        return cls(bool(obj["stopped"]), int(obj["stop_epoch"]), StopReason(obj["reason"]),
                   float(obj["best_msssim"]), float(obj["best_fid"]), int(obj["best_epoch"]))


class Observation(NamedTuple):
    status: Status
    event: Optional[PathologyEvent]


@dataclass
class EpochRow:
    epoch: int
    g_loss: float
    d_loss: float
    label: str
    loss_problem_count: int
    epochs_since_improvement: int


class Sentinel:
    """Mutable early-stopping state; feed it epochs in increasing order."""

    def __init__(self, cfg: SentinelConfig, thresholds: Optional[Thresholds]):
        self.cfg = cfg
        self.thresholds = thresholds
        bests = NO_BASELINE if thresholds is None else effective_bests(thresholds, cfg.threshold_mode)
        self.best_msssim = bests.best_msssim
        self.best_fid = bests.best_fid
        self.best_epoch = 0
        self.current_epoch: Optional[int] = None
        self.loss_problem_count = 0
        self.pathology_onset: Optional[int] = None
        self.epochs_since_improvement = 0
        self.recent_g: deque = deque(maxlen=cfg.detector.window)
        self.recent_d: deque = deque(maxlen=cfg.detector.window)
        self.recent_epochs: deque = deque(maxlen=cfg.detector.window)
        self.timeline: list[PathologyEvent] = []
        self.evaluations: list[dict] = []
        self.rows: list[EpochRow] = []
        self._stop: Optional[tuple[int, StopReason]] = None

    @property
    def stopped(self) -> bool:
        return self._stop is not None

    def _record_event(self, ev: PathologyEvent) -> None:
        last = self.timeline[-1] if self.timeline else None
        if last is not None and last.kind is ev.kind and last.epoch_end < ev.epoch_end:
            self.timeline[-1] = PathologyEvent(last.kind, last.epoch_start, ev.epoch_end, last.evidence)
        else:
            self.timeline.append(PathologyEvent(ev.kind, ev.epoch_end, ev.epoch_end, ev.evidence))

    def observe_epoch(self, rec: LossRecord) -> Observation:
        if self.stopped:
            raise SentinelError(f"sentinel already stopped at epoch {self._stop[0]}")
        if self.current_epoch is not None and rec.epoch <= self.current_epoch:
            raise SentinelError(f"out-of-order epoch {rec.epoch} after {self.current_epoch}")
        self.current_epoch = rec.epoch
        self.recent_g.append(rec.g_loss)
        self.recent_d.append(rec.d_loss)
        self.recent_epochs.append(rec.epoch)

        event = None
        if len(self.recent_g) == self.cfg.detector.window:
            event = classify_window(np.fromiter(self.recent_g, float), np.fromiter(self.recent_d, float),
                                    self.cfg.detector, self.recent_epochs[0], rec.epoch)
            self._record_event(event)

        if event is not None and event.kind.is_pathology:
            if self.pathology_onset is None:
                self.pathology_onset = rec.epoch
            self.loss_problem_count = rec.epoch - self.pathology_onset
        else:
            self.pathology_onset = None
            self.loss_problem_count = 0
        self.epochs_since_improvement = rec.epoch - self.best_epoch

        self.rows.append(EpochRow(rec.epoch, rec.g_loss, rec.d_loss, event.kind.value if event else "",
                                  self.loss_problem_count, self.epochs_since_improvement))

        if self.loss_problem_count >= self.cfg.loss_patience_epochs:
            self._stop = (rec.epoch, StopReason.LOSS_PATHOLOGY)
        elif rec.epoch >= self.cfg.max_epochs:
            self._stop = (rec.epoch, StopReason.MAX_EPOCHS)
        return Observation(Status.STOP if self.stopped else Status.CONTINUE, event)

    def window_is_constant(self) -> bool:
        if len(self.recent_g) < 2:
            return False
        det = self.cfg.detector
        return (detect_constancy(np.fromiter(self.recent_g, float), det)["constant"]
                and detect_constancy(np.fromiter(self.recent_d, float), det)["constant"])

    def observe_evaluation(self, snap: MetricsSnapshot, thresholds: Optional[Thresholds] = None) -> Status:
        """Apply one metrics snapshot.

        ``thresholds``, when given, are freshly resampled baselines; the
        current bests are lowered to them if they are stricter.
        """
        if snap.epoch % self.cfg.eval_interval != 0:
            raise SentinelError(f"snapshot epoch {snap.epoch} is not a multiple of {self.cfg.eval_interval}")
        if self._stop is not None and not (self._stop[1] is StopReason.MAX_EPOCHS and snap.epoch == self._stop[0]):
            raise SentinelError(f"sentinel already stopped at epoch {self._stop[0]}")
        if self.evaluations and snap.epoch <= self.evaluations[-1]["epoch"]:
            raise SentinelError(f"out-of-order snapshot at epoch {snap.epoch}")

        if thresholds is not None:
            fresh = effective_bests(thresholds, self.cfg.threshold_mode)
            self.best_msssim = min(self.best_msssim, fresh.best_msssim)
            self.best_fid = min(self.best_fid, fresh.best_fid)

        entry = {"epoch": snap.epoch, "msssim": snap.msssim_synth, "fid": snap.fid_train_synth,
                 "applied": True, "improved": False}
        self.evaluations.append(entry)
        if self.cfg.gate_on_constancy and not self.window_is_constant():
            entry["applied"] = False
            return Status.STOP if self.stopped else Status.CONTINUE

        if snap.msssim_synth <= self.best_msssim and snap.fid_train_synth <= self.best_fid:
            self.best_msssim = snap.msssim_synth
            self.best_fid = snap.fid_train_synth
            self.best_epoch = snap.epoch
            entry["improved"] = True
        self.epochs_since_improvement = snap.epoch - self.best_epoch
        if self.rows and self.rows[-1].epoch == snap.epoch:
            self.rows[-1].epochs_since_improvement = self.epochs_since_improvement

        if (not self.stopped and self.cfg.metrics_enabled
                and self.epochs_since_improvement >= self.cfg.metric_patience_epochs):
            self._stop = (snap.epoch, StopReason.METRIC_STAGNATION)
        return Status.STOP if self.stopped else Status.CONTINUE

    def decision(self) -> StopDecision:
        if self._stop is None:
            return StopDecision(False, self.current_epoch or 0, StopReason.NOT_STOPPED,
                                self.best_msssim, self.best_fid, self.best_epoch)
        epoch, reason = self._stop
        return StopDecision(True, epoch, reason, self.best_msssim, self.best_fid, self.best_epoch)


def sentinel_new(cfg: SentinelConfig, th: Optional[Thresholds]) -> Sentinel:
    return Sentinel(cfg, th)


def replay(records: Iterable[LossRecord], snapshots: Mapping[int, MetricsSnapshot],
           cfg: SentinelConfig, th: Optional[Thresholds]) -> Sentinel:
    """Drive a sentinel over a recorded run in epoch order and return it.

    Within an epoch the loss window is checked first, then the snapshot (if
    one exists for that epoch), matching the order a live trainer would use.
    """
    s = Sentinel(cfg, th)
    for rec in records:
        s.observe_epoch(rec)
        if s.stopped and s.decision().reason is not StopReason.MAX_EPOCHS:
            break
        snap = snapshots.get(rec.epoch)
        if snap is not None and cfg.metrics_enabled and rec.epoch % cfg.eval_interval == 0:
            s.observe_evaluation(snap)
        if s.stopped:
            break
    return s


__all__ = [
    "SentinelError", "StopReason", "Status", "SentinelConfig", "StopDecision",
    "Observation", "EpochRow", "Sentinel", "sentinel_new", "replay", "NO_BASELINE",
]
