"""Pure-numpy single-scale SSIM statistics (fallback for the compiled kernel)."""

import numpy as np


def _filter_valid(planes: np.ndarray, win: np.ndarray) -> np.ndarray:
    # separable valid-mode filtering over the last two axes
    k = win.size
    wo = planes.shape[-1] - k + 1
    out = win[0] * planes[..., :, 0:wo]
    for t in range(1, k):
        out = out + win[t] * planes[..., :, t:t + wo]
    ho = out.shape[-2] - k + 1
    res = win[0] * out[..., 0:ho, :]
    for t in range(1, k):
        res = res + win[t] * out[..., t:t + ho, :]
    return res


def ssim_stats(a, b, win, c1, c2):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    win = np.asarray(win, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image dimensions differ")
    if a.shape[0] < win.size or a.shape[1] < win.size:
        raise ValueError("image smaller than the window")
    mu_a, mu_b, saa, sbb, sab = _filter_valid(np.stack([a, b, a * a, b * b, a * b]), win)
    var_a = saa - mu_a * mu_a
    var_b = sbb - mu_b * mu_b
    cov = sab - mu_a * mu_b
    lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = (2.0 * cov + c2) / (var_a + var_b + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))
