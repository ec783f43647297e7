# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled single-scale SSIM statistics.

Same contract as ``_ssim_py.ssim_stats``: valid-mode separable Gaussian
filtering of a, b, a*a, b*b and a*b fused with the per-pixel SSIM map and
its spatial means.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def ssim_stats(const double[:, ::1] a, const double[:, ::1] b, const double[::1] win,
               double c1, double c2):
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1], k = win.shape[0]
    cdef Py_ssize_t ho = h - k + 1, wo = w - k + 1
    cdef Py_ssize_t i, j, t
    cdef double xa, xb, wt
    cdef double sa, sb, saa, sbb, sab
    cdef double mu_a, mu_b, var_a, var_b, cov, lum, cs
    cdef double total_ssim = 0.0, total_cs = 0.0

    if b.shape[0] != h or b.shape[1] != w:
        raise ValueError("image dimensions differ")
    if ho < 1 or wo < 1:
        raise ValueError("image smaller than the window")

    # horizontal pass: five filtered planes of shape (h, wo)
    cdef double[:, :, ::1] rows = np.empty((5, h, wo), dtype=np.float64)
    with nogil:
        for i in range(h):
            for j in range(wo):
                sa = 0.0; sb = 0.0; saa = 0.0; sbb = 0.0; sab = 0.0
                for t in range(k):
                    wt = win[t]
                    xa = a[i, j + t]
                    xb = b[i, j + t]
                    sa = sa + wt * xa
                    sb = sb + wt * xb
                    saa = saa + wt * (xa * xa)
                    sbb = sbb + wt * (xb * xb)
                    sab = sab + wt * (xa * xb)
                rows[0, i, j] = sa
                rows[1, i, j] = sb
                rows[2, i, j] = saa
                rows[3, i, j] = sbb
                rows[4, i, j] = sab

        # vertical pass fused with the SSIM map
        for i in range(ho):
            for j in range(wo):
                sa = 0.0; sb = 0.0; saa = 0.0; sbb = 0.0; sab = 0.0
                for t in range(k):
                    wt = win[t]
                    sa = sa + wt * rows[0, i + t, j]
                    sb = sb + wt * rows[1, i + t, j]
                    saa = saa + wt * rows[2, i + t, j]
                    sbb = sbb + wt * rows[3, i + t, j]
                    sab = sab + wt * rows[4, i + t, j]
                mu_a = sa
                mu_b = sb
                var_a = saa - mu_a * mu_a
                var_b = sbb - mu_b * mu_b
                cov = sab - mu_a * mu_b
                lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
                cs = (2.0 * cov + c2) / (var_a + var_b + c2)
                total_ssim = total_ssim + lum * cs
                total_cs = total_cs + cs

    return total_ssim / (ho * wo), total_cs / (ho * wo)
