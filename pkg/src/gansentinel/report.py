"""Run reports written by ``gansentinel monitor`` and re-rendered by ``report``."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .calibration import Thresholds
from .loss_patterns import PathologyEvent
from .metrics import MetricsSnapshot
from .sentinel import EpochRow, StopDecision

REPORT_SCHEMA = 1
EPOCH_CSV_FIELDS = ("epoch", "g_loss", "d_loss", "label", "loss_problem_count", "epochs_since_improvement")


class ReportError(ValueError):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_tree(paths) -> str:
    """Digest of a set of files: names (not directories) plus contents, in the given order."""
    h = hashlib.sha256()
    for p in paths:
        p = Path(p)
        h.update(p.name.encode("utf-8") + b"\0")
        h.update(bytes.fromhex(sha256_file(p)))
    return h.hexdigest()


class HashingReader:
    """Wrap a binary line stream and digest every byte handed out."""

    def __init__(self, stream):
        self._stream = stream
        self._hash = hashlib.sha256()

    def __iter__(self):
        for line in self._stream:
            self._hash.update(line)
            yield line

    def hexdigest(self) -> str:
        return self._hash.hexdigest()


@dataclass
class RunReport:
    decision: StopDecision
    thresholds: Optional[Thresholds]
    snapshots: list = field(default_factory=list)
    events: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    version: str = ""
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        epochs = [s.epoch for s in self.snapshots]
        if epochs != sorted(epochs):
            raise ReportError("snapshots must be ordered by epoch")

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "version": self.version,
            "decision": self.decision.to_dict(),
            "thresholds": self.thresholds.to_dict() if self.thresholds else None,
            "snapshots": [s.to_dict() for s in self.snapshots],
            "evaluations": self.evaluations,
            "events": [e.to_dict() for e in self.events],
            "config": self.config,
            "inputs": self.inputs,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, obj) -> "RunReport":
        try:
            if obj.get("schema") != REPORT_SCHEMA:
                raise ReportError(f"unsupported report schema {obj.get('schema')!r}")
            th = obj["thresholds"]
            return cls(
                decision=StopDecision.from_dict(obj["decision"]),
                thresholds=Thresholds.from_dict(th) if th is not None else None,
                snapshots=[MetricsSnapshot.from_dict(s) for s in obj["snapshots"]],
                events=[PathologyEvent.from_dict(e) for e in obj["events"]],
                evaluations=list(obj["evaluations"]),
                config=dict(obj["config"]),
                version=str(obj["version"]),
                inputs=dict(obj["inputs"]),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ReportError(f"malformed report: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunReport":
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ReportError(f"{path}: {exc}") from None


def write_epoch_csv(rows: list[EpochRow], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(EPOCH_CSV_FIELDS)
    for r in rows:
        w.writerow([r.epoch, repr(r.g_loss), repr(r.d_loss), r.label, r.loss_problem_count,
                    r.epochs_since_improvement])


def render_text(rep: RunReport) -> str:
    d = rep.decision
    lines = []
    if d.stopped:
        lines.append(f"stopped at epoch {d.stop_epoch}: {d.reason.value}")
    else:
        lines.append(f"not stopped (last epoch {d.stop_epoch})")
    lines.append(f"best MS-SSIM {d.best_msssim:.6g}, best FID {d.best_fid:.6g} (epoch {d.best_epoch})")
    if rep.thresholds is not None:
        t = rep.thresholds
        lines.append(f"thresholds: MS-SSIM {t.msssim_th1:.6g}/{t.msssim_th2:.6g}, "
                     f"FID {t.fid_th1:.6g}/{t.fid_th2:.6g}")
    if rep.evaluations:
        lines.append("")
        lines.append("epoch     ms-ssim          fid  note")
        for ev in rep.evaluations:
            note = "improved" if ev["improved"] else ("skipped" if not ev["applied"] else "")
            lines.append(f"{ev['epoch']:>5}  {ev['msssim']:>10.6f}  {ev['fid']:>11.4f}  {note}")
    if rep.events:
        lines.append("")
        lines.append("loss timeline:")
        for e in rep.events:
            lines.append(f"  {e.epoch_start:>5}-{e.epoch_end:<5} {e.kind.value}")
    return "\n".join(lines) + "\n"


def render_plot_csv(rep: RunReport) -> str:
    """One row per evaluation, ready for plotting score curves."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "msssim", "fid", "applied", "improved"])
    for ev in rep.evaluations:
        w.writerow([ev["epoch"], repr(ev["msssim"]), repr(ev["fid"]), int(ev["applied"]), int(ev["improved"])])
    return buf.getvalue()
