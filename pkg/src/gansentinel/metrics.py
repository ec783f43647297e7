"""Diversity (MS-SSIM) and quality (Fréchet distance) scores for image sets.

MS-SSIM follows Wang et al.: Gaussian-weighted local statistics in valid
mode, contrast-structure terms at the finer scales and the full SSIM at the
coarsest, 2x2 mean pooling between scales. The Fréchet distance is computed
on a pluggable embedding (seeded random projection by default) rather than
Inception-v3, so absolute values are only comparable within this tool.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np

from . import _backend
from .telemetry import ImageSet

COV_EPS = 1e-6
DEFAULT_SCALE_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MAX_AUTO_SCALES = 5


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0
    scale_weights: tuple = DEFAULT_SCALE_WEIGHTS
    num_scales: Union[str, int] = "auto"

    def __post_init__(self):
        object.__setattr__(self, "scale_weights", tuple(float(w) for w in self.scale_weights))
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise MetricsError(f"window_size must be odd and >= 3, got {self.window_size}")
        if self.window_sigma <= 0:
            raise MetricsError("window_sigma must be positive")
        if not self.scale_weights or any(w <= 0 for w in self.scale_weights):
            raise MetricsError("scale_weights must be positive")
        if self.num_scales != "auto":
            if not isinstance(self.num_scales, int) or not 1 <= self.num_scales <= len(self.scale_weights):
                raise MetricsError(f"num_scales must be 'auto' or 1..{len(self.scale_weights)}")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


class SsimResult(NamedTuple):
    mean_ssim: float
    mean_cs: float


# ---------------------------------------------------------------------------
# SSIM / MS-SSIM

def _gaussian_1d(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalised 2-D Gaussian kernel (outer product of 1-D Gaussians)."""
    if size < 3 or size % 2 == 0:
        raise MetricsError(f"window size must be odd and >= 3, got {size}")
    if not sigma > 0:
        raise MetricsError(f"sigma must be positive, got {sigma}")
    g = _gaussian_1d(size, sigma)
    k = np.outer(g, g)
    return k / k.sum()


def _pair(a, b, min_side: int) -> tuple[np.ndarray, np.ndarray]:
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise MetricsError(f"images must be 2-D with equal shapes, got {a.shape} and {b.shape}")
    if min(a.shape) < min_side:
        raise MetricsError(f"images of {a.shape[0]}x{a.shape[1]} are smaller than the {min_side}-pixel window")
    return a, b


def ssim(a, b, p: SsimParams = SsimParams()) -> SsimResult:
    a, b = _pair(a, b, p.window_size)
    s, cs = _backend.ssim_stats(a, b, _gaussian_1d(p.window_size, p.window_sigma), p.c1, p.c2)
    return SsimResult(float(s), float(cs))


def resolve_scales(height: int, width: int, p: SsimParams = SsimParams()) -> int:
    """Number of pyramid scales for an image of the given size.

    ``auto`` picks the largest count (up to 5) for which the coarsest level,
    after repeated 2x2 pooling, still fits the window.
    """
    side = min(height, width)
    if side < p.window_size:
        raise MetricsError(f"images of {height}x{width} are too small for even one {p.window_size}-pixel scale")
    fits = 1
    while fits < MAX_AUTO_SCALES and (side >> fits) >= p.window_size:
        fits += 1
    fits = min(fits, len(p.scale_weights))
    if p.num_scales == "auto":
        return fits
    if p.num_scales > fits:
        raise MetricsError(f"{p.num_scales} scales requested but {height}x{width} images support only {fits}")
    return p.num_scales


def scale_weights(n_scales: int, p: SsimParams = SsimParams()) -> np.ndarray:
    w = np.asarray(p.scale_weights[:n_scales], dtype=np.float64)
    return w / w.sum()


def _pool2(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[0] // 2, x.shape[1] // 2
    return np.ascontiguousarray(x[: 2 * h, : 2 * w].reshape(h, 2, w, 2).mean(axis=(1, 3)))


def ms_ssim(a, b, p: SsimParams = SsimParams()) -> float:
    a, b = _pair(a, b, p.window_size)
    n = resolve_scales(a.shape[0], a.shape[1], p)
    weights = scale_weights(n, p)
    win = _gaussian_1d(p.window_size, p.window_sigma)
    score = 1.0
    for level in range(n):
        s, cs = _backend.ssim_stats(a, b, win, p.c1, p.c2)
        if level < n - 1:
            # negative correlation at a scale counts as zero similarity
            score *= max(cs, 0.0) ** weights[level]
            a, b = _pool2(a), _pool2(b)
        else:
            score *= max(s, 0.0) ** weights[level]
    return float(score)


def sample_pairs(n: int, n_pairs: int, rng: np.random.Generator) -> np.ndarray:
    """``(n_pairs, 2)`` index pairs with distinct members.

    Pairs are mutually disjoint when the set has at least ``2 * n_pairs``
    images; otherwise each pair is drawn independently.
    """
    if n < 2:
        raise MetricsError(f"need at least 2 images to form pairs, got {n}")
    if n_pairs < 1:
        raise MetricsError("n_pairs must be >= 1")
    if n >= 2 * n_pairs:
        return rng.permutation(n)[: 2 * n_pairs].reshape(n_pairs, 2)
    return np.array([rng.choice(n, size=2, replace=False) for _ in range(n_pairs)])


def mean_ms_ssim(images: ImageSet, n_pairs: int = 50, seed: int = 0, p: SsimParams = SsimParams()) -> float:
    """Mean MS-SSIM over randomly drawn pairs; lower means a more diverse set."""
    pairs = sample_pairs(len(images), n_pairs, np.random.default_rng(seed))
    data = images.images
    return float(np.mean([ms_ssim(data[i], data[j], p) for i, j in pairs]))


# ---------------------------------------------------------------------------
# Embeddings

EXTRACTOR_KINDS = ("pixel-downsample", "random-projection", "external-file")


@dataclass(frozen=True)
class FeatureExtractor:
    kind: str = "random-projection"
    dim: int = 64
    seed: int = 0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in EXTRACTOR_KINDS:
            raise MetricsError(f"unknown extractor {self.kind!r}; expected one of {EXTRACTOR_KINDS}")
        if self.dim < 1:
            raise MetricsError("feature dim must be positive")
        if self.kind == "pixel-downsample" and math.isqrt(self.dim) ** 2 != self.dim:
            raise MetricsError(f"pixel-downsample needs a square dim, got {self.dim}")
        if self.kind == "external-file" and not self.path:
            raise MetricsError("external-file extractor needs a path")


@functools.lru_cache(maxsize=8)
def projection_matrix(n_pixels: int, dim: int, seed: int) -> np.ndarray:
    """Seeded ``(dim, n_pixels)`` matrix with orthonormal rows."""
    if dim > n_pixels:
        raise MetricsError(f"cannot project {n_pixels} pixels onto {dim} dimensions")
    gauss = np.random.default_rng(seed).standard_normal((n_pixels, dim))
    q, r = np.linalg.qr(gauss)
    q *= np.sign(np.diag(r))
    out = np.ascontiguousarray(q.T)
    out.setflags(write=False)
    return out


def _block_bounds(length: int, blocks: int) -> np.ndarray:
    return np.linspace(0, length, blocks + 1).round().astype(np.int64)


def read_feature_csv(path) -> np.ndarray:
    try:
        feats = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise MetricsError(f"{path}: malformed feature file ({exc})") from None
    if not np.all(np.isfinite(feats)):
        raise MetricsError(f"{path}: feature file contains non-finite values")
    return feats


def embed(images: ImageSet, fx: FeatureExtractor = FeatureExtractor()) -> np.ndarray:
    """Map every image to a ``fx.dim`` feature vector."""
    data = images.images
    n, h, w = data.shape
    if fx.kind == "pixel-downsample":
        side = math.isqrt(fx.dim)
        if side > min(h, w):
            raise MetricsError(f"dim {fx.dim} needs at least {side}x{side} pixels, images are {h}x{w}")
        rows, cols = _block_bounds(h, side), _block_bounds(w, side)
        sums = np.add.reduceat(np.add.reduceat(data, rows[:-1], axis=1), cols[:-1], axis=2)
        area = np.outer(np.diff(rows), np.diff(cols))
        return (sums / area).reshape(n, fx.dim)
    if fx.kind == "random-projection":
        proj = projection_matrix(h * w, fx.dim, fx.seed)
        return data.reshape(n, h * w) @ proj.T
    feats = read_feature_csv(fx.path)
    if feats.shape[0] != n:
        raise MetricsError(f"{fx.path}: {feats.shape[0]} feature rows for {n} images")
    if feats.shape[1] != fx.dim:
        raise MetricsError(f"{fx.path}: {feats.shape[1]} feature columns, expected {fx.dim}")
    return feats


# ---------------------------------------------------------------------------
# Fréchet distance

class GaussianFit(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray


def fit_gaussian(features) -> GaussianFit:
    """Sample mean and unbiased covariance, regularised by ``1e-6 * I``."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise MetricsError("fit_gaussian needs a 2-D matrix with at least 2 rows")
    # shifting by the first row keeps identical rows exactly zero-variance
    shifted = x - x[0]
    offset = shifted.mean(axis=0)
    centred = shifted - offset
    cov = centred.T @ centred / (x.shape[0] - 1)
    cov = (cov + cov.T) / 2.0
    cov[np.diag_indices_from(cov)] += COV_EPS
    return GaussianFit(x[0] + offset, cov)


def sqrtm_psd(m) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues below zero (rounding noise) are clamped to zero.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise MetricsError("sqrtm_psd needs a square matrix")
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if np.max(np.abs(m - m.T)) > 1e-8 * scale:
        raise MetricsError("sqrtm_psd needs a symmetric matrix")
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    root = np.sqrt(np.clip(vals, 0.0, None))
    return (vecs * root) @ vecs.T


def frechet_distance(fit_a: GaussianFit, fit_b: GaussianFit) -> float:
    diff = fit_a.mean - fit_b.mean
    half = sqrtm_psd(fit_a.cov)
    inner = half @ fit_b.cov @ half
    inner = (inner + inner.T) / 2.0
    tr_covmean = float(np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(inner), 0.0, None))))
    value = float(diff @ diff) + float(np.trace(fit_a.cov)) + float(np.trace(fit_b.cov)) - 2.0 * tr_covmean
    return max(value, 0.0)


def fid(features_a, features_b) -> float:
    """Fréchet distance between Gaussians fitted to two feature matrices."""
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise MetricsError(f"feature matrices must share their dimension ({a.shape} vs {b.shape})")
    return frechet_distance(fit_gaussian(a), fit_gaussian(b))


# ---------------------------------------------------------------------------
# Snapshots

@dataclass(frozen=True)
class SamplingConfig:
    n_pairs: int = 50
    n_samples: int = 100
    fid_resamples: int = 1
    extractor: FeatureExtractor = field(default_factory=FeatureExtractor)
    ssim: SsimParams = field(default_factory=SsimParams)

    def __post_init__(self):
        if self.n_pairs < 1 or self.n_samples < 2 or self.fid_resamples < 1:
            raise MetricsError("n_pairs >= 1, n_samples >= 2 and fid_resamples >= 1 are required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ssim"]["scale_weights"] = list(d["ssim"]["scale_weights"])
        return d


@dataclass(frozen=True)
class MetricsSnapshot:
    epoch: int
    msssim_synth: float
    fid_train_synth: float
    sample_seed: int = 0
    n_pairs: int = 50
    n_samples: int = 100

    def __post_init__(self):
        if not 0.0 <= self.msssim_synth <= 1.0:
            raise MetricsError(f"MS-SSIM {self.msssim_synth} outside [0, 1]")
        if not (math.isfinite(self.fid_train_synth) and self.fid_train_synth >= 0.0):
            raise MetricsError(f"FID {self.fid_train_synth} must be finite and non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj) -> "MetricsSnapshot":
        return cls(
            int(obj["epoch"]), float(obj["msssim_synth"]), float(obj["fid_train_synth"]),
            int(obj.get("sample_seed", 0)), int(obj.get("n_pairs", 0)), int(obj.get("n_samples", 0)),
        )


def sample_indices(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``min(n, k)`` distinct indices, in draw order."""
    return rng.permutation(n)[: min(n, k)]


def embed_subset(images: ImageSet, idx: np.ndarray, fx: FeatureExtractor) -> np.ndarray:
    if fx.kind == "external-file":
        return embed(images, fx)[idx]
    return embed(images.subset(idx), fx)


def sampled_fid(a: ImageSet, b: ImageSet, seed: int, cfg: SamplingConfig,
                fx_a: Optional[FeatureExtractor] = None, fx_b: Optional[FeatureExtractor] = None) -> float:
    """Fréchet distance between seeded subsets of two sets, averaged over
    ``cfg.fid_resamples`` draws. Both sets are subsampled with the same
    stream, so identical inputs select identical subsets."""
    fx_a = fx_a or cfg.extractor
    fx_b = fx_b or cfg.extractor
    rng_a = np.random.default_rng([seed, 1])
    rng_b = np.random.default_rng([seed, 1])
    scores = []
    for _ in range(cfg.fid_resamples):
        ia = sample_indices(len(a), cfg.n_samples, rng_a)
        ib = sample_indices(len(b), cfg.n_samples, rng_b)
        if ia.size < 2 or ib.size < 2:
            raise MetricsError("FID needs at least 2 images per set")
        scores.append(fid(embed_subset(a, ia, fx_a), embed_subset(b, ib, fx_b)))
    return float(np.mean(scores))


def compute_snapshot(train: ImageSet, synth: ImageSet, epoch: int, seed: int,
                     cfg: SamplingConfig = SamplingConfig(),
                     train_fx: Optional[FeatureExtractor] = None,
                     synth_fx: Optional[FeatureExtractor] = None) -> MetricsSnapshot:
    """Score one evaluation point: synthetic-set MS-SSIM and train-vs-synthetic FID."""
    msssim = mean_ms_ssim(synth, cfg.n_pairs, seed, cfg.ssim)
    score = sampled_fid(train, synth, seed, cfg, train_fx, synth_fx)
    return MetricsSnapshot(int(epoch), min(max(msssim, 0.0), 1.0), score, int(seed), cfg.n_pairs, cfg.n_samples)


def backend() -> str:
    """Name of the SSIM kernel in use (``cython`` or ``python``)."""
    return _backend.BACKEND


def external_extractor(path, dim: Optional[int] = None) -> FeatureExtractor:
    feats = read_feature_csv(path)
    return FeatureExtractor("external-file", dim or feats.shape[1], 0, str(Path(path)))
