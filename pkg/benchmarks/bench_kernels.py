"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on the largest Infinity-2B scale (4096 tokens of 32 bits);
the last block times a full 13-scale embed with each backend patched in.
"""

import argparse
import timeit

import numpy as np

from bitmark import INFINITY_2B, kernels, parse_green_list
from bitmark.embed import EmbedConfig, embed_stream
from bitmark.synth import reference_source


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    r, m, n = 4096, 32, 2
    rng = np.random.default_rng(0)
    l0 = np.zeros(r * m)
    l1 = rng.normal(0, 8, r * m)
    u = rng.random(r * m)
    u_win = rng.random(r * (m - n + 1))
    b0, b1 = np.array([0.0, 2.0]), np.array([2.0, 0.0])
    mask = parse_green_list("01,10").green_mask
    bits = np.asarray(kernels.BACKENDS["python"].sample_scale(l0, l1, u, b0, b1, r, m, n))

    source = reference_source(1)
    config = EmbedConfig(2.0, parse_green_list("01,10"), 7)
    embed_stream(source, INFINITY_2B, config)  # warm the logit cache

    print(f"default backend: {kernels.BACKEND}")
    print(f"{'kernel':<14}" + "".join(f"{name:>14}" for name in sorted(kernels.BACKENDS)))
    rows = {
        "sample_scale": lambda k: lambda: k.sample_scale(l0, l1, u, b0, b1, r, m, n),
        "count_scale": lambda k: lambda: k.count_scale(bits, r, m, n, mask),
        "flip_scan": lambda k: lambda: k.flip_scan(bits.copy(), r, m, n, mask, u_win, 0.17),
    }
    for label, make in rows.items():
        times = [_best(make(kernels.BACKENDS[name]), args.repeat)
                 for name in sorted(kernels.BACKENDS)]
        print(f"{label:<14}" + "".join(f"{t * 1e3:>12.2f}ms" for t in times))

    saved = kernels.sample_scale
    times = []
    for name in sorted(kernels.BACKENDS):
        kernels.sample_scale = kernels.BACKENDS[name].sample_scale
        times.append(_best(lambda: embed_stream(source, INFINITY_2B, config), args.repeat))
    kernels.sample_scale = saved
    print(f"{'embed_stream':<14}" + "".join(f"{t * 1e3:>12.2f}ms" for t in times))


if __name__ == "__main__":
    main()
