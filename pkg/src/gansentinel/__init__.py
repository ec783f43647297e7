"""Early stopping for GAN training.

Watches generator/discriminator losses for mode collapse, non-convergence
and instability, and tracks MS-SSIM diversity and Fréchet distance of
synthetic image snapshots against calibrated real-data baselines.
"""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .calibration import Thresholds, calibrate_thresholds, effective_bests
from .loss_patterns import DetectorConfig, Label, PathologyEvent, analyze_loss_patterns, classify_window, timeline
from .metrics import FeatureExtractor, backend, MetricsSnapshot, SamplingConfig, SsimParams, fid, mean_ms_ssim, ms_ssim, ssim
from .sentinel import Sentinel, SentinelConfig, StopDecision, StopReason, replay, sentinel_new
from .simulator import ImageDistribution, Scenario, ScenarioKind, simulate_images, simulate_losses, simulate_run
from .telemetry import ImageSet, LossRecord, LossSeries, load_image_dir, parse_loss_log

__all__ = [
    "__version__",
    "Thresholds", "calibrate_thresholds", "effective_bests",
    "DetectorConfig", "Label", "PathologyEvent", "analyze_loss_patterns", "classify_window", "timeline",
    "FeatureExtractor", "backend", "MetricsSnapshot", "SamplingConfig", "SsimParams", "fid", "mean_ms_ssim", "ms_ssim", "ssim",
    "Sentinel", "SentinelConfig", "StopDecision", "StopReason", "replay", "sentinel_new",
    "ImageDistribution", "Scenario", "ScenarioKind", "simulate_images", "simulate_losses", "simulate_run",
    "ImageSet", "LossRecord", "LossSeries", "load_image_dir", "parse_loss_log",
]
