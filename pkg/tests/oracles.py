"""Independent reference implementations used as test oracles.

These deliberately avoid the package's code paths: 2-D kernels are built
directly rather than as outer products, filtering uses scipy, covariance is
accumulated with explicit loops, and matrix square roots use scipy.linalg.
"""

import math

import numpy as np
from scipy import linalg, signal


def gaussian_kernel_2d(size, sigma):
    half = (size - 1) / 2
    k = np.empty((size, size))
    for i in range(size):
        for j in range(size):
            k[i, j] = math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma * sigma))
    return k / k.sum()


def ssim_maps(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03, dynamic_range=1.0):
    """Per-pixel SSIM and contrast-structure maps in valid mode."""
    win = gaussian_kernel_2d(size, sigma)
    c1, c2 = (k1 * dynamic_range) ** 2, (k2 * dynamic_range) ** 2

    def f(x):
        return signal.correlate2d(x, win, mode="valid")

    mu_a, mu_b = f(a), f(b)
    var_a = f(a * a) - mu_a ** 2
    var_b = f(b * b) - mu_b ** 2
    cov = f(a * b) - mu_a * mu_b
    cs = (2 * cov + c2) / (var_a + var_b + c2)
    lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    return lum * cs, cs


def ssim(a, b, **kw):
    s, cs = ssim_maps(np.asarray(a, float), np.asarray(b, float), **kw)
    return float(s.mean()), float(cs.mean())


def pool2(x):
    h, w = x.shape[0] // 2 * 2, x.shape[1] // 2 * 2
    x = x[:h, :w]
    return (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2]) / 4


def ms_ssim(a, b, n_scales, weights=(0.0448, 0.2856, 0.3001, 0.2363, 0.1333)):
    w = np.array(weights[:n_scales]) / sum(weights[:n_scales])
    a, b = np.asarray(a, float), np.asarray(b, float)
    out = 1.0
    for level in range(n_scales):
        s, cs = ssim(a, b)
        if level == n_scales - 1:
            out *= max(s, 0) ** w[level]
        else:
            out *= max(cs, 0) ** w[level]
            a, b = pool2(a), pool2(b)
    return out


def covariance_two_pass(x):
    x = np.asarray(x, float)
    n, d = x.shape
    mean = [sum(x[i, j] for i in range(n)) / n for j in range(d)]
    cov = np.zeros((d, d))
    for j in range(d):
        for k in range(j, d):
            acc = sum((x[i, j] - mean[j]) * (x[i, k] - mean[k]) for i in range(n))
            cov[j, k] = cov[k, j] = acc / (n - 1)
    return np.array(mean), cov


def frechet(mu_a, cov_a, mu_b, cov_b):
    covmean = linalg.sqrtm(cov_a @ cov_b)
    covmean = np.real(covmean)
    return float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2 * np.trace(covmean))


def ls_slope(y):
    n = len(y)
    xbar = (n - 1) / 2
    ybar = sum(y) / n
    num = sum((i - xbar) * (y[i] - ybar) for i in range(n))
    den = sum((i - xbar) ** 2 for i in range(n))
    return num / den


def detrended_residual(y, span):
    half = span // 2
    return np.array([y[i] - sum(y[i - half:i + half + 1]) / span for i in range(half, len(y) - half)])


def exact_moment_samples(mean, var, n=1000):
    """1-D samples whose sample mean and unbiased variance are exactly the targets."""
    z = np.linspace(-1, 1, n)
    z = (z - z.mean()) / z.std(ddof=1)
    return mean + math.sqrt(var) * z
