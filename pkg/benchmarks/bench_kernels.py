"""Compare the numba and numpy backends of the BP message kernels.

    python benchmarks/bench_kernels.py [--N 20] [--q 8 16 32] [--repeat 20]

Each row times one check phase, one variable phase and one full decode on
a fully connected Laplacian correlation graph with ``L = N - 4`` checks.
Numba compilation happens in a warm-up call and is not timed.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from rlncbp._kernels import HAVE_NUMBA
from rlncbp.coding import make_batch, preprocess, random_coding_matrix
from rlncbp.decode import build_factor_graph, check_update, decode_bp, init_messages, var_update
from rlncbp.gf import get_field
from rlncbp.model import AlphabetMap, CorrelationGraph, laplacian_noise_pmf


def _problem(N: int, q: int, levels: int, seed: int):
    rng = np.random.default_rng(seed)
    f = get_field(q)
    amap = AlphabetMap(tuple(range(levels)), f)
    corr = CorrelationGraph(N, alphabet=amap.alphabet)
    g = laplacian_noise_pmf(0.3, support_radius=levels - 1)
    for i in range(N):
        for j in range(i + 1, N):
            corr.add_edge(i, j, g)
    x = np.clip(levels // 2 + rng.integers(-1, 2, N), 0, levels - 1)
    batch = preprocess(make_batch(random_coding_matrix(N - 4, N, f, rng), x, f))
    return batch, corr, amap


def _best(fn, repeat: int) -> float:
    fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=20)
    ap.add_argument("--q", type=int, nargs="+", default=[8, 16, 32])
    ap.add_argument("--levels", type=int, default=8, help="source alphabet size")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    print(f"{'q':>4} {'backend':>8} {'check ms':>10} {'var ms':>10} {'decode ms':>10}")
    for q in args.q:
        batch, corr, amap = _problem(args.N, q, min(args.levels, q), args.seed)
        g = build_factor_graph(batch, corr, amap=amap)
        res = {}
        for be in backends:
            ms = init_messages(g)
            t_chk = _best(lambda: check_update(ms, g, be), args.repeat)
            t_var = _best(lambda: var_update(ms, g, True, be), args.repeat)
            t_dec = _best(lambda: decode_bp(batch, corr, amap=amap, k_max=20, backend=be),
                          max(1, args.repeat // 4))
            res[be] = (t_chk, t_var, t_dec)
            print(f"{q:>4} {be:>8} {t_chk * 1e3:10.3f} {t_var * 1e3:10.3f} {t_dec * 1e3:10.2f}")
        if len(res) == 2:
            sp = [a / b for a, b in zip(res["numpy"], res["numba"])]
            print(f"{q:>4} {'speedup':>8} {sp[0]:10.1f} {sp[1]:10.1f} {sp[2]:10.1f}")


if __name__ == "__main__":
    main()
