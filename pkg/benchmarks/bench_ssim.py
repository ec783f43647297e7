"""Time the compiled SSIM kernel against the numpy fallback.

    python benchmarks/bench_ssim.py --size 128 --repeat 20
"""

import argparse
import logging
import sys
import timeit

import numpy as np

from gansentinel import _backend
from gansentinel.metrics import SsimParams, _gaussian_1d

log = logging.getLogger("bench_ssim")


def time_kernel(kernel, a, b, win, c1, c2, repeat: int) -> float:
    timer = timeit.Timer(lambda: kernel(a, b, win, c1, c2))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    p = SsimParams()
    win = _gaussian_1d(p.window_size, p.window_sigma)
    rng = np.random.default_rng(args.seed)
    names = sorted(_backend.KERNELS)
    if "cython" not in names:
        log.warning("compiled kernel not built; only the numpy fallback is timed")
    print("size  " + "  ".join(f"{n:>12}" for n in names) + "  speedup")
    for size in args.size:
        a = rng.random((size, size))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        results = {n: _backend.KERNELS[n](a, b, win, p.c1, p.c2) for n in names}
        if len(results) == 2:
            diff = max(abs(x - y) for x, y in zip(results["cython"], results["python"]))
            if diff > 1e-12:
                log.error("kernels disagree by %.3g at size %d", diff, size)
                return 1
        secs = {n: time_kernel(_backend.KERNELS[n], a, b, win, p.c1, p.c2, args.repeat) for n in names}
        speedup = secs["python"] / secs["cython"] if "cython" in secs else float("nan")
        print(f"{size:>4}  " + "  ".join(f"{secs[n] * 1e3:>10.3f}ms" for n in names) + f"  {speedup:6.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
