"""Time the Cython kernels against their pure-Python twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Each kernel gets fresh copies of the same inputs per backend, so the two
backends do identical work; outputs are compared after timing.
"""

import argparse
import time

import numpy as np

from clickcascade import kernels
from clickcascade.netgen import barabasi_albert
from clickcascade.rng import Rng
from clickcascade.sim import init_round


def bernoulli_case(scale):
    n = int(600 * scale)
    block_of = np.repeat(np.arange(3, dtype=np.int64), [n // 3, n // 3, n - 2 * (n // 3)])
    P = np.array([[0.1, 0.01, 0.02], [0.01, 0.08, 0.01], [0.02, 0.01, 0.12]])

    def run(mod):
        return mod.bernoulli_pairs(block_of, P, Rng(1).state)

    return f"bernoulli_pairs n={n}", run


def cascade_case(scale):
    n = int(2000 * scale)
    indptr, indices = barabasi_albert(n, 3, seed=0).csr()
    base = init_round(n, Rng(2))
    probs = np.array([0.3, 0.35])

    def run(mod):
        exposed, pending, clicked = base.exposed.copy(), base.pending.copy(), base.clicked.copy()
        imp, clk = base.impressions.copy(), base.clicks.copy()
        state = Rng(3).state
        for _ in range(10):
            mod.cascade_step(indptr, indices, exposed, pending, clicked, probs, 0.5, True, imp, clk, state)
        return exposed, clicked, imp, clk

    return f"cascade_step n={n} x10", run


def gibbs_case(scale):
    n_docs, doc_len, vocab, k = int(200 * scale), 50, 500, 10
    gen = np.random.default_rng(0)
    words = gen.integers(0, vocab, size=n_docs * doc_len).astype(np.int64)
    doc_ptr = np.arange(0, n_docs * doc_len + 1, doc_len, dtype=np.int64)
    z0 = gen.integers(0, k, size=words.shape[0]).astype(np.int64)
    doc_of = np.repeat(np.arange(n_docs), doc_len)

    def run(mod):
        z = z0.copy()
        ndk = np.zeros((n_docs, k), dtype=np.int64)
        nkw = np.zeros((k, vocab), dtype=np.int64)
        np.add.at(ndk, (doc_of, z), 1)
        np.add.at(nkw, (z, words), 1)
        nk = nkw.sum(axis=1)
        state = Rng(4).state
        for _ in range(5):
            mod.gibbs_sweep(doc_ptr, words, z, ndk, nkw, nk, 0.1, 0.01, True, state)
        return z, nkw

    return f"gibbs_sweep {words.shape[0]} tokens x5", run


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--scale", type=float, default=1.0, help="multiplier on problem sizes")
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not importable; only the Python backend will be timed")
    print(f"{'kernel':34s} " + " ".join(f"{name:>10s}" for name in sorted(backends)) + "    speedup  match")
    for make in (bernoulli_case, cascade_case, gibbs_case):
        label, run = make(args.scale)
        timings, outputs = {}, {}
        for name in sorted(backends):
            timings[name], outputs[name] = best_time(lambda: run(backends[name]), args.repeat)
        cells = " ".join(f"{timings[n] * 1e3:8.2f}ms" for n in sorted(backends))
        if "cython" in backends:
            speedup = f"{timings['python'] / timings['cython']:9.1f}x"
            match = "yes" if same(outputs["python"], outputs["cython"]) else "NO"
        else:
            speedup, match = f"{'-':>10s}", "-"
        print(f"{label:34s} {cells} {speedup}  {match}")


if __name__ == "__main__":
    main()
