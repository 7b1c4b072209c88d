#!/usr/bin/env python3
"""Benchmark the jitted graph kernels against their pure numpy/python fallbacks.

Run from the repo root:

    python3 benchmarks/bench_kernels.py

Requires numba (the default install); the fallback implementations are
always importable, so both paths are timed in one process. The same
fallbacks are what you get package-wide with CURVGNN_NUMBA=0.
"""

import time

import numpy as np

from curvgnn import _kernels, graphs, manifold


def timeit(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def random_graph(rng, n, p):
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return graphs.Graph.from_edges(n, np.array(edges, dtype=np.int64))


def bench_bfs(rng):
    g = random_graph(rng, 3000, 0.002)
    indptr, indices = g.csr()

    def all_sources(fn):
        def run():
            for s in range(0, g.n_nodes, 10):
                fn(indptr, indices, s)
        return run

    t_nb, _ = timeit(all_sources(_kernels._bfs_hops_nb), repeat=3)
    t_np, _ = timeit(all_sources(_kernels._bfs_hops_np), repeat=3)
    row("bfs_hops (300 sources, 3k nodes)", t_nb, t_np)


def bench_bfs_tree(rng):
    g = random_graph(rng, 2000, 0.003)
    indptr, indices = g.csr()
    t_nb, _ = timeit(lambda: [_kernels._bfs_tree_nb(indptr, indices, s)
                              for s in range(100)], repeat=3)
    t_np, _ = timeit(lambda: [_kernels._bfs_tree_np(indptr, indices, s)
                              for s in range(100)], repeat=3)
    row("bfs_tree (100 sources, 2k nodes)", t_nb, t_np)


def bench_delta(rng):
    g = random_graph(rng, 60, 0.08)
    sub = graphs._largest_component_subgraph(g)
    dist = graphs.hop_distance_matrix(sub)
    t_nb, d1 = timeit(_kernels._delta_exact_nb, dist, repeat=3)
    t_np, d2 = timeit(_kernels._delta_exact_np, dist, repeat=3)
    assert d1 == d2
    row(f"delta_exact (n={sub.n_nodes}, all quadruples)", t_nb, t_np)


def bench_path_sums(rng):
    g = random_graph(rng, 5000, 0.0012)
    indptr, indices = g.csr()
    hops, parent, order = _kernels.bfs_tree(indptr, indices, 0)
    step = rng.random(g.n_nodes)
    t_nb, a = timeit(lambda: [_kernels._path_sums_nb(order, parent, step)
                              for _ in range(200)], repeat=3)
    t_np, b = timeit(lambda: [_kernels._path_sums_np(order, parent, step)
                              for _ in range(200)], repeat=3)
    row("path_sums (200 calls, 5k nodes)", t_nb, t_np)


def bench_distortion(rng):
    g = graphs.balanced_binary_tree(8)  # 511 nodes
    from curvgnn import curvature
    emb = curvature.tree_layout_hyperbolic(g, 1.0, edge_length=1.0)
    t, _ = timeit(lambda: curvature.embedding_distortion(g, emb, 1.0), repeat=3)
    print(f"{'embedding_distortion (511-node tree)':45s} "
          f"current backend: {t * 1e3:8.1f} ms")


def row(name, t_nb, t_np):
    speedup = t_np / t_nb if t_nb > 0 else float("inf")
    print(f"{name:45s} numba: {t_nb * 1e3:8.1f} ms   numpy/python: "
          f"{t_np * 1e3:8.1f} ms   speedup: {speedup:6.1f}x")


def main():
    if not _kernels.NUMBA_ENABLED:
        raise SystemExit("benchmark needs the jitted path; unset CURVGNN_NUMBA")
    rng = np.random.default_rng(0)
    # trigger JIT compilation outside the timed region
    g = random_graph(rng, 50, 0.1)
    indptr, indices = g.csr()
    _kernels._bfs_hops_nb(indptr, indices, 0)
    _kernels._bfs_tree_nb(indptr, indices, 0)
    _kernels._delta_exact_nb(np.ones((5, 5)))
    _kernels._path_sums_nb(np.arange(3), np.array([-1, 0, 1]), np.ones(3))

    bench_bfs(rng)
    bench_bfs_tree(rng)
    bench_delta(rng)
    bench_path_sums(rng)
    bench_distortion(rng)


if __name__ == "__main__":
    main()
