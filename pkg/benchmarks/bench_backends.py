"""Timing comparison of the numerical backends.

Times the three hot kernels of the bootstrap loop — the weighted Gram
accumulation, the equilibrated SPD solve, and the full per-replicate
transported-contrast computation — on the compiled extension and on the
pure-NumPy fallback, at design widths spanning the transport sets the
benchmark experiment uses (2 to 128 columns).  Agreement between backends
is checked before anything is timed.

Usage::

    python3 benchmarks/bench_backends.py [--n 2500] [--repeat 7] [--inner 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gtransport._rng import substream
from gtransport.backend import available_backends, get_impl


def make_problem(n: int, q: int, seed: int):
    """A realistic replicate: intercepted random expansion, binary exposure,
    multinomial resample weights, and a same-width target expansion."""
    gen = substream(seed, q)
    c_src = np.empty((n, q))
    c_src[:, 0] = 1.0
    if q > 1:
        c_src[:, 1:] = 1.0 + gen.standard_normal((n, q - 1))
    z = (gen.random(n) < 0.5).astype(np.float64)
    x = np.empty((n, 2 * q))
    x[:, 0::2] = c_src
    x[:, 1::2] = c_src * z[:, None]
    y = 100.0 + x @ gen.standard_normal(2 * q) + gen.standard_normal(n)
    w_src = np.bincount(gen.integers(0, n, n), minlength=n).astype(np.float64)
    c_tgt = np.empty((n, q))
    c_tgt[:, 0] = 1.0
    if q > 1:
        c_tgt[:, 1:] = 1.0 + 0.5 * gen.standard_normal((n, q - 1))
    w_tgt = np.bincount(gen.integers(0, n, n), minlength=n).astype(np.float64)
    zcol = np.arange(1, 2 * q, 2, dtype=np.int64)
    return x, y, w_src, c_tgt, w_tgt, zcol


def check_agreement(impls, problems) -> float:
    worst = 0.0
    for x, y, w_src, c_tgt, w_tgt, zcol in problems:
        values = []
        for impl in impls.values():
            phi, ok = impl.replicate_phi(x, y, w_src, c_tgt, w_tgt, zcol)
            assert ok, "replicate unexpectedly flagged as singular"
            values.append(phi)
        if len(values) == 2:
            denom = max(1.0, abs(values[0]))
            worst = max(worst, abs(values[0] - values[1]) / denom)
    return worst


def best_time(fn, repeat: int, inner: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2500,
                    help="rows per population (default 2500)")
    ap.add_argument("--repeat", type=int, default=7,
                    help="timing repetitions, best taken (default 7)")
    ap.add_argument("--inner", type=int, default=20,
                    help="calls per repetition (default 20)")
    ap.add_argument("--widths", type=int, nargs="+",
                    default=[1, 2, 4, 8, 16, 32, 64],
                    help="expansion widths q (design has 2q columns)")
    args = ap.parse_args()

    impls = {name: get_impl(name) for name in available_backends()}
    problems = [make_problem(args.n, q, seed=2024) for q in args.widths]

    worst = check_agreement(impls, problems)
    print(f"backends: {', '.join(impls)}   n={args.n} per population   "
          f"best of {args.repeat}x{args.inner}")
    if len(impls) == 2:
        print(f"cross-backend agreement on phi: {worst:.2e} relative\n")
    else:
        print("compiled extension unavailable; timing the pure backend only\n")

    header = f"{'kernel':<22}{'design':>8}"
    for name in impls:
        header += f"{name:>12}"
    if len(impls) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))

    rows = []
    for (x, y, w_src, c_tgt, w_tgt, zcol), q in zip(problems, args.widths):
        gram_a = {name: impl.weighted_gram(x, y, w_src)
                  for name, impl in impls.items()}
        cases = [
            ("weighted_gram", lambda impl: impl.weighted_gram(x, y, w_src)),
            ("solve_spd", lambda impl, g=gram_a: impl.solve_spd(
                *g[next(iter(impls))])),
            ("replicate_phi", lambda impl: impl.replicate_phi(
                x, y, w_src, c_tgt, w_tgt, zcol)),
        ]
        for label, call in cases:
            times = {name: best_time(lambda i=impl: call(i), args.repeat,
                                     args.inner)
                     for name, impl in impls.items()}
            line = f"{label:<22}{2 * q:>7}c"
            for name in impls:
                line += f"{times[name] * 1e6:>10.1f}us"
            if len(impls) == 2:
                ratio = times["pure"] / times["compiled"]
                line += f"{ratio:>9.2f}x"
            print(line)
            rows.append((label, q, times))
        print()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
