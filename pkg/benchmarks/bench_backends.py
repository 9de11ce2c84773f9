"""Throughput comparison of the compiled and numpy batch kernels.

Run: python benchmarks/bench_backends.py [batch_size]
"""
import sys
import time

import numpy as np

from ciodrelay._backend import BackendError, get_kernels
from ciodrelay.constellation import from_name
from ciodrelay.stbc import interleaved_pair_coords


def _inputs(n: int, rng):
    c = from_name("4qam-rotated")
    pts = c.point_array()
    t1, t2 = interleaved_pair_coords(pts)
    h = (rng.standard_normal((n, 4)) + 1j * rng.standard_normal((n, 4))) / np.sqrt(2)
    y = (rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))) * 0.7
    s = pts * np.exp(-1j * c.rotation)
    pam = np.unique(np.round(s.real, 12))
    mids = (pam[:-1] + pam[1:]) / 2.0
    return c, pts, t1, t2, h, y, s.real.copy(), s.imag.copy(), pam, mids


def _time(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
    rng = np.random.default_rng(7)
    c, pts, t1, t2, h, y, s_i, s_q, pam, mids = _inputs(n, rng)
    ha = h[:, 0].copy()
    hb = h[:, 1].copy()
    ys = y[:, 0].copy()

    backends = {}
    for name in ("python", "c"):
        try:
            backends[name] = get_kernels(name)
        except (BackendError, ImportError):
            print(f"{name}: not available")

    results = {}
    for name, kern in backends.items():
        t_siso, r1 = _time(lambda: kern.siso_ml_batch(ys, ha, hb, 1.0, pts))
        t_exh, r2 = _time(lambda: kern.scheme2_exhaustive_batch(y, h, 1.0, t1, t2))
        t_cond, r3 = _time(
            lambda: kern.scheme2_conditional_batch(
                y, h, 1.0, s_i, s_q, c.rotation, 1, pam, mids, t1, t2
            )
        )
        results[name] = (r1, r2, r3)
        print(f"{name:>7}: siso_ml {n / t_siso:12.0f}/s   "
              f"exhaustive {n / t_exh:12.0f}/s   conditional {n / t_cond:12.0f}/s")

    if len(results) == 2:
        pr, cr = results["python"], results["c"]
        agree = (
            np.array_equal(pr[0][0], cr[0][0])
            and np.array_equal(pr[0][1], cr[0][1])
            and np.array_equal(pr[1], cr[1])
            and np.array_equal(pr[2][0], cr[2][0])
        )
        print(f"decisions agree across backends: {agree}")


if __name__ == "__main__":
    main()
