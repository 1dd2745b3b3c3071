"""Time the hot kernels on both backends and check they agree.

Usage: python benchmarks/bench_kernels.py [--repeats N]
The numba backend is compiled on a warmup call before timing, so the
numbers reflect steady-state cost, not JIT latency.
"""
import argparse
import time

import numpy as np

from mqmotion import _kernels as k


def median_time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def fmt(seconds: float) -> str:
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f}us"
    return f"{seconds * 1e3:8.2f}ms"


def bench_case(name, shape_note, np_fn, nb_fn, parity, repeats):
    t_np = median_time(np_fn, repeats)
    if nb_fn is None:
        print(f"{name:18s} {shape_note:22s} {fmt(t_np)}   (numpy only)")
        return
    nb_fn()  # warmup triggers compilation
    t_nb = median_time(nb_fn, repeats)
    print(f"{name:18s} {shape_note:22s} {fmt(t_np)} {fmt(t_nb)} "
          f"{t_np / t_nb:7.2f}x  {parity}")


def parity_note(pairs, exact: bool) -> str:
    for a, b in pairs:
        if exact and not np.array_equal(np.asarray(a), np.asarray(b)):
            return "MISMATCH"
        if not exact and not np.allclose(a, b, rtol=1e-12, atol=0.0):
            return "MISMATCH"
    return "bitwise" if exact else "close"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    has_nb = k.HAS_NUMBA
    print(f"numba available: {has_nb}  active default: "
          f"{'numba' if k.USE_NUMBA else 'numpy'}")
    print(f"{'kernel':18s} {'shape':22s} {'numpy':>10s} {'numba':>10s} "
          f"{'speedup':>8s}  parity")

    frames = rng.standard_normal((64, 36, 17, 3))
    parity = "-"
    if has_nb:
        parity = parity_note(
            zip(k.quotient_channels_numpy(frames, 0.04),
                k.quotient_channels_numba(frames, 0.04)), exact=True)
    bench_case("quotient_channels", "(64, 36, 17, 3)",
               lambda: k.quotient_channels_numpy(frames, 0.04),
               (lambda: k.quotient_channels_numba(frames, 0.04)) if has_nb else None,
               parity, args.repeats)

    start = rng.standard_normal((17, 3))
    vel = rng.standard_normal((999, 17, 3))
    parity = "-"
    if has_nb:
        parity = parity_note([(k.integrate_numpy(start, vel, 0.04),
                               k.integrate_numba(start, vel, 0.04))], exact=True)
    bench_case("integrate", "(999, 17, 3)",
               lambda: k.integrate_numpy(start, vel, 0.04),
               (lambda: k.integrate_numba(start, vel, 0.04)) if has_nb else None,
               parity, args.repeats)

    pred = rng.standard_normal((2500, 17, 3))
    truth = rng.standard_normal((2500, 17, 3))
    parity = "-"
    if has_nb:
        parity = parity_note([(k.mpjpe_numpy(pred, truth, 0),
                               k.mpjpe_numba(pred, truth, 0))], exact=False)
    bench_case("mpjpe_mean", "(2500, 17, 3)",
               lambda: k.mpjpe_numpy(pred, truth, 0),
               (lambda: k.mpjpe_numba(pred, truth, 0)) if has_nb else None,
               parity, args.repeats)

    n = 1 << 20
    g = rng.standard_normal(n)
    parity = "-"
    if has_nb:
        base = rng.standard_normal(n)
        a = (base.copy(), np.zeros(n), np.zeros(n))
        b = (base.copy(), np.zeros(n), np.zeros(n))
        k.adam_numpy(a[0], g, a[1], a[2], 1, 1e-3, 0.9, 0.999, 1e-8)
        k.adam_numba(b[0], g, b[1], b[2], 1, 1e-3, 0.9, 0.999, 1e-8)
        parity = parity_note(zip(a, b), exact=True)
    p1, m1, v1 = rng.standard_normal(n), np.zeros(n), np.zeros(n)
    p2, m2, v2 = p1.copy(), np.zeros(n), np.zeros(n)
    bench_case("adam_update", f"({n},)",
               lambda: k.adam_numpy(p1, g, m1, v1, 1, 1e-3, 0.9, 0.999, 1e-8),
               (lambda: k.adam_numba(p2, g, m2, v2, 1, 1e-3, 0.9, 0.999, 1e-8))
               if has_nb else None,
               parity, args.repeats)


if __name__ == "__main__":
    main()
