"""Windowed detectors for pathological GAN loss behaviour.

Each detector looks at one window of a loss series (ordered reals, one per
epoch) and reports a verdict together with the statistics behind it.
:func:`classify_window` combines the detectors for the generator and
discriminator series into a single label using a fixed precedence:

0. ``Instability``   generator loss has blown past ``g_explode_level``
1. ``ModeCollapse``  discriminator loss near zero, generator not decreasing
2. ``ModeCollapse``  generator rising sharply while discriminator falls
3. ``NonConvergence`` both series oscillate
4. ``Stable``        both flat, generator about twice the discriminator
5. ``Instability``   an abrupt jump, or both flat at any other ratio
6. ``Indeterminate`` none of the above (or fewer than 5 samples)
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .config import apply_overrides, format_config, read_config

MIN_CLASSIFY_LENGTH = 5


class DetectorError(ValueError):
    pass


class Label(str, Enum):
    MODE_COLLAPSE = "ModeCollapse"
    NON_CONVERGENCE = "NonConvergence"
    INSTABILITY = "Instability"
    STABLE = "Stable"
    INDETERMINATE = "Indeterminate"

    @property
    def is_pathology(self) -> bool:
        return self in (Label.MODE_COLLAPSE, Label.NON_CONVERGENCE, Label.INSTABILITY)


@dataclass(frozen=True)
class DetectorConfig:
    window: int = 50
    const_rel_eps: float = 0.02
    const_abs_eps: float = 0.08
    jump_threshold: float = 0.5
    slope_threshold: float = 0.001
    osc_min_crossings: float = 0.2
    osc_min_amp: float = 0.1
    d_zero_eps: float = 0.05
    healthy_ratio_tol: float = 0.2
    g_explode_level: float = 5.0

    def __post_init__(self):
        if int(self.window) != self.window or self.window < 5:
            raise DetectorError(f"window must be an integer >= 5, got {self.window}")
        for name, value in asdict(self).items():
            if name == "window":
                continue
            # const_abs_eps may be 0 to get a purely relative constancy test
            if not math.isfinite(value) or value < 0 or (value == 0 and name != "const_abs_eps"):
                raise DetectorError(f"{name} must be positive, got {value}")

    @classmethod
    def from_file(cls, path) -> "DetectorConfig":
        return apply_overrides(cls(), read_config(path), strict=False)

    def to_text(self) -> str:
        return format_config(asdict(self))


@dataclass(frozen=True)
class PathologyEvent:
    kind: Label
    epoch_start: int
    epoch_end: int
    evidence: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.epoch_start > self.epoch_end:
            raise DetectorError("epoch_start must not exceed epoch_end")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "epoch_start": self.epoch_start,
            "epoch_end": self.epoch_end,
            "evidence": self.evidence,
        }

    @classmethod
    def from_dict(cls, obj) -> "PathologyEvent":
        return cls(Label(obj["kind"]), int(obj["epoch_start"]), int(obj["epoch_end"]), dict(obj.get("evidence", {})))


def _series(values, min_len: int) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise DetectorError("expected a 1-D series")
    if x.size < min_len:
        raise DetectorError(f"series needs at least {min_len} samples, got {x.size}")
    return x


def detect_constancy(series: Sequence[float], cfg: DetectorConfig = DetectorConfig()) -> dict:
    x = _series(series, 2)
    mean = float(x.mean())
    rng = float(x.max() - x.min())
    bound = max(cfg.const_abs_eps, cfg.const_rel_eps * abs(mean))
    return {"constant": rng <= bound, "range": rng, "mean": mean}


def ls_slope(x: np.ndarray) -> float:
    """Least-squares slope of ``x`` against its index."""
    n = x.size
    t = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    return float(np.dot(t, x - x.mean()) / np.dot(t, t))


def detect_sharp_change(series: Sequence[float], cfg: DetectorConfig = DetectorConfig()) -> dict:
    x = _series(series, 2)
    slope = ls_slope(x)
    if slope >= cfg.slope_threshold:
        direction = "increase"
    elif slope <= -cfg.slope_threshold:
        direction = "decrease"
    else:
        direction = "none"
    return {"direction": direction, "slope": slope, "max_jump": float(np.max(np.abs(np.diff(x))))}


def detrend_span(window: int) -> int:
    # centred moving average needs an odd span
    span = max(3, window // 5)
    return span if span % 2 else span + 1


def moving_average_residual(x: np.ndarray, span: int) -> np.ndarray:
    """``x`` minus its centred moving average, over the positions where the
    full span fits (no edge padding)."""
    kernel = np.full(span, 1.0 / span)
    trend = np.convolve(x, kernel, mode="valid")
    half = span // 2
    return x[half:x.size - half] - trend


def zero_crossings(r: np.ndarray) -> int:
    s = np.sign(r)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def detect_oscillation(series: Sequence[float], cfg: DetectorConfig = DetectorConfig()) -> dict:
    x = _series(series, cfg.window)
    resid = moving_average_residual(x, detrend_span(cfg.window))
    # rounding noise around an exact trend must not count as crossings
    resid[np.abs(resid) <= 1e-9 * max(1.0, float(np.max(np.abs(x))))] = 0.0
    rate = zero_crossings(resid) / (resid.size - 1)
    amp = float(resid.max() - resid.min())
    # absolute flatness only, so that adding a constant cannot flip the verdict
    flat = float(x.max() - x.min()) <= cfg.const_abs_eps
    oscillating = rate >= cfg.osc_min_crossings and amp >= cfg.osc_min_amp and not flat
    return {"oscillating": bool(oscillating), "crossing_rate": float(rate), "amplitude": amp}


def classify_window(
    g: Sequence[float],
    d: Sequence[float],
    cfg: DetectorConfig = DetectorConfig(),
    epoch_start: int = 0,
    epoch_end: int | None = None,
) -> PathologyEvent:
    """Label one window of generator/discriminator losses.

    Windows shorter than ``cfg.window`` are accepted (the head of a run);
    below 5 samples the label is ``Indeterminate`` without further analysis.
    """
    g = np.asarray(g, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if g.shape != d.shape or g.ndim != 1:
        raise DetectorError(f"generator and discriminator windows differ in length ({g.size} vs {d.size})")
    if epoch_end is None:
        epoch_end = epoch_start + max(g.size - 1, 0)
    if g.size < MIN_CLASSIFY_LENGTH:
        return PathologyEvent(Label.INDETERMINATE, epoch_start, epoch_end, {"n": int(g.size)})

    cg, cd = detect_constancy(g, cfg), detect_constancy(d, cfg)
    sg, sd = detect_sharp_change(g, cfg), detect_sharp_change(d, cfg)
    evidence = {
        "n": int(g.size),
        "g_mean": cg["mean"], "d_mean": cd["mean"],
        "g_range": cg["range"], "d_range": cd["range"],
        "g_slope": sg["slope"], "d_slope": sd["slope"],
        "g_max_jump": sg["max_jump"], "d_max_jump": sd["max_jump"],
    }
    if g.size >= cfg.window:
        og, od = detect_oscillation(g, cfg), detect_oscillation(d, cfg)
        evidence.update(
            g_crossing_rate=og["crossing_rate"], d_crossing_rate=od["crossing_rate"],
            g_osc_amplitude=og["amplitude"], d_osc_amplitude=od["amplitude"],
        )
        both_oscillate = og["oscillating"] and od["oscillating"]
    else:
        both_oscillate = False

    g_mean, d_mean = cg["mean"], cd["mean"]
    g_up_or_flat = sg["direction"] == "increase" or (cg["constant"] and sg["direction"] != "decrease")

    if g_mean >= cfg.g_explode_level:
        label = Label.INSTABILITY
    elif d_mean < cfg.d_zero_eps and g_up_or_flat:
        label = Label.MODE_COLLAPSE
    elif sg["direction"] == "increase" and sd["direction"] == "decrease":
        label = Label.MODE_COLLAPSE
    elif both_oscillate:
        label = Label.NON_CONVERGENCE
    elif cg["constant"] and cd["constant"] and abs(g_mean - 2.0 * d_mean) <= cfg.healthy_ratio_tol * abs(g_mean):
        label = Label.STABLE
    elif max(sg["max_jump"], sd["max_jump"]) >= cfg.jump_threshold or (cg["constant"] and cd["constant"]):
        label = Label.INSTABILITY
    else:
        label = Label.INDETERMINATE
    return PathologyEvent(label, epoch_start, epoch_end, evidence)


def analyze_loss_patterns(recent_g, recent_d, cfg: DetectorConfig = DetectorConfig()) -> bool:
    """True when the trailing window shows mode collapse, non-convergence or
    instability."""
    return classify_window(recent_g, recent_d, cfg).kind.is_pathology


def sliding_labels(g, d, cfg: DetectorConfig = DetectorConfig(), epochs=None) -> list[PathologyEvent]:
    """Classify the trailing window ending at every epoch of a run."""
    g = np.asarray(g, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if g.shape != d.shape:
        raise DetectorError("generator and discriminator series differ in length")
    epochs = np.arange(g.size) if epochs is None else np.asarray(epochs)
    out = []
    for i in range(g.size):
        lo = max(0, i + 1 - cfg.window)
        out.append(classify_window(g[lo:i + 1], d[lo:i + 1], cfg, int(epochs[lo]), int(epochs[i])))
    return out


def segment_timeline(events: Sequence[PathologyEvent]) -> list[PathologyEvent]:
    """Merge per-epoch events into maximal runs of the same label.

    Segments are keyed by the epoch each window ends at, so they tile the
    run without overlap. Evidence is taken from the first window of a run.
    """
    segments: list[PathologyEvent] = []
    for ev in events:
        if segments and segments[-1].kind is ev.kind:
            last = segments[-1]
            segments[-1] = PathologyEvent(last.kind, last.epoch_start, ev.epoch_end, last.evidence)
        else:
            segments.append(PathologyEvent(ev.kind, ev.epoch_end, ev.epoch_end, ev.evidence))
    return segments


def smooth_segments(segments: Sequence[PathologyEvent], min_length: int = 1) -> list[PathologyEvent]:
    """Absorb segments shorter than ``min_length`` epochs into the preceding
    segment, then re-merge equal neighbours.

    Windows straddling a regime change can flip label for a few epochs; this
    removes that flicker for display. ``min_length=1`` is the identity.
    """
    if min_length < 1:
        raise DetectorError("min_length must be at least 1")
    out: list[PathologyEvent] = []
    for seg in segments:
        short = seg.epoch_end - seg.epoch_start + 1 < min_length
        if out and (short or out[-1].kind is seg.kind):
            last = out[-1]
            out[-1] = PathologyEvent(last.kind, last.epoch_start, seg.epoch_end, last.evidence)
        else:
            out.append(seg)
    return out


def timeline(g, d, cfg: DetectorConfig = DetectorConfig(), epochs=None, include_head: bool = False,
             min_length: int = 1) -> list[PathologyEvent]:
    """Segmented sliding-window labels for a whole run.

    By default only full windows are classified, so the first segment starts
    at the epoch where the window first fills.
    """
    events = sliding_labels(g, d, cfg, epochs)
    if not include_head:
        events = events[cfg.window - 1:]
    return smooth_segments(segment_timeline(events), min_length)
