"""Baseline MS-SSIM and FID thresholds from real train/test images."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .metrics import FeatureExtractor, SamplingConfig, embed_subset, fid, mean_ms_ssim
from .telemetry import ImageSet

log = logging.getLogger(__name__)

THRESHOLD_MODES = ("min", "max")


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class Thresholds:
    msssim_th1: float
    msssim_th2: float
    fid_th1: float
    fid_th2: float
    seed: int = 0
    sampling: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = (self.msssim_th1, self.msssim_th2, self.fid_th1, self.fid_th2)
        if not all(math.isfinite(v) for v in values):
            raise CalibrationError("thresholds must be finite")
        if self.fid_th1 < 0 or self.fid_th2 < 0:
            raise CalibrationError("FID thresholds must be non-negative")
        if not (0.0 <= self.msssim_th1 <= 1.0 and 0.0 <= self.msssim_th2 <= 1.0):
            raise CalibrationError("MS-SSIM thresholds must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "msssim_th1": self.msssim_th1,
            "msssim_th2": self.msssim_th2,
            "fid_th1": self.fid_th1,
            "fid_th2": self.fid_th2,
            "seed": self.seed,
            "sampling": self.sampling,
        }

    @classmethod
    def from_dict(cls, obj) -> "Thresholds":
        try:
            return cls(
                float(obj["msssim_th1"]), float(obj["msssim_th2"]),
                float(obj["fid_th1"]), float(obj["fid_th2"]),
                int(obj.get("seed", 0)), dict(obj.get("sampling", {})),
            )
        except (KeyError, TypeError) as exc:
            raise CalibrationError(f"malformed thresholds: {exc}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "Thresholds":
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise CalibrationError(f"{path}: {exc}") from None


class Bests(NamedTuple):
    best_msssim: float
    best_fid: float


def effective_bests(th: Thresholds, mode: str = "min") -> Bests:
    """Starting targets for the sentinel.

    ``min`` requires synthetic images to match both real-data baselines;
    ``max`` only the weaker of the two.
    """
    if mode not in THRESHOLD_MODES:
        raise CalibrationError(f"threshold mode must be one of {THRESHOLD_MODES}")
    pick = min if mode == "min" else max
    return Bests(pick(th.msssim_th1, th.msssim_th2), pick(th.fid_th1, th.fid_th2))


def _split_indices(n: int, k: int, rng_seed) -> tuple[np.ndarray, np.ndarray, bool]:
    rng = np.random.default_rng(rng_seed)
    perm = rng.permutation(n)
    if n >= 2 * k:
        return perm[:k], perm[k:2 * k], True
    # not enough images for disjoint halves: two overlapping draws
    m = min(n, k)
    return perm[:m], rng.permutation(n)[:m], False


def calibrate_thresholds(train: ImageSet, test: ImageSet, seed: int = 0,
                         cfg: SamplingConfig = SamplingConfig(),
                         train_fx: Optional[FeatureExtractor] = None,
                         test_fx: Optional[FeatureExtractor] = None) -> Thresholds:
    """Compute MS-SSIM of train and test images and the train-train and
    train-test FID baselines.

    The train-train FID compares two disjoint ``n_samples`` halves of the
    training set; the train-test FID compares the first half against a test
    subset drawn with the same permutation stream, so passing the training
    set as ``test`` reproduces the train-train value exactly.
    """
    if len(train) < 2 or len(test) < 2:
        raise CalibrationError("train and test sets need at least 2 images each")
    k = cfg.n_samples
    stream = [seed, 2]
    half_a, half_b, disjoint = _split_indices(len(train), k, stream)
    if not disjoint:
        log.warning("training set of %d images is too small for disjoint %d-sample halves; "
                    "using overlapping draws", len(train), k)
    _, test_idx, _ = _split_indices(len(test), k, stream)

    train_fx = train_fx or cfg.extractor
    test_fx = test_fx or cfg.extractor
    feats_a = embed_subset(train, half_a, train_fx)
    feats_b = embed_subset(train, half_b, train_fx)
    feats_test = embed_subset(test, test_idx, test_fx)

    return Thresholds(
        msssim_th1=mean_ms_ssim(train, cfg.n_pairs, seed, cfg.ssim),
        msssim_th2=mean_ms_ssim(test, cfg.n_pairs, seed, cfg.ssim),
        fid_th1=fid(feats_a, feats_b),
        fid_th2=fid(feats_a, feats_test),
        seed=int(seed),
        sampling=cfg.to_dict(),
    )
