#!/usr/bin/env python3
"""Time the jitted kernels against their pure-numpy twins.

Both backends are called explicitly, so one process covers the comparison;
the first jitted call is a discarded compilation warmup. Reported times are
the best of --repeat runs. The script also verifies that the two backends
return bit-identical arrays on the benchmark inputs.
"""

import argparse
import sys
import time

import numpy as np

from stereoseld.kernels import HAVE_NUMBA, gain_ramp_mix, remap_bilinear, remap_nearest
from stereoseld.projection import build_map


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def report(name, numpy_s, numba_s):
    if numba_s is None:
        print(f"{name:<28}{1e3 * numpy_s:>10.2f} ms{'':>12}{'':>10}")
    else:
        print(f"{name:<28}{1e3 * numpy_s:>10.2f} ms{1e3 * numba_s:>10.2f} ms"
              f"{numpy_s / numba_s:>9.1f}x")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="runs per timing (default 5)")
    parser.add_argument("--eq-width", type=int, default=1920,
                        help="equirectangular width for the remap workloads")
    args = parser.parse_args(argv)

    eq_w = args.eq_width
    eq_h = eq_w // 2
    rng = np.random.default_rng(0)
    pano = rng.uniform(0.0, 255.0, size=(eq_h, eq_w, 3))
    pmap = build_map(45.0, eq_w=eq_w, eq_h=eq_h)

    sr = 24000
    num_samples = 120 * sr
    signal = rng.standard_normal(num_samples)
    gains = rng.standard_normal((num_samples // (sr // 10), 4))

    cases = [
        ("remap_bilinear 640x360",
         lambda b: remap_bilinear(pano, pmap.src_cols, pmap.src_rows, backend=b)),
        ("remap_nearest 640x360",
         lambda b: remap_nearest(pano, pmap.src_cols, pmap.src_rows, backend=b)),
        ("gain_ramp_mix 120s x4ch",
         lambda b: gain_ramp_mix(signal, gains, sr // 10, backend=b)),
    ]

    if not HAVE_NUMBA:
        print("numba unavailable or disabled; timing the numpy backend only\n")
    print(f"{'kernel':<28}{'numpy':>13}{'numba':>13}{'speedup':>10}")
    for name, call in cases:
        if HAVE_NUMBA:
            out_numba = call("numba")  # compilation warmup
            if not np.array_equal(out_numba, call("numpy")):
                print(f"{name}: backends disagree", file=sys.stderr)
                return 1
            numba_s = best_time(lambda: call("numba"), args.repeat)
        else:
            numba_s = None
        numpy_s = best_time(lambda: call("numpy"), args.repeat)
        report(name, numpy_s, numba_s)
    return 0


if __name__ == "__main__":
    sys.exit(main())
