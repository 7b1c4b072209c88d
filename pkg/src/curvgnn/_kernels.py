"""Hot graph kernels: numba-jitted loops with pure numpy/python fallbacks.

The jitted path is the default. Set the environment variable
``CURVGNN_NUMBA=0`` before import to force the fallback implementations
(useful for debugging and for the benchmark in ``benchmarks/``).

All kernels take CSR adjacency (``indptr``, ``indices``, both int64) and
are deterministic: hop counts are integers and floating-point reductions
happen in the same order on both paths, so results are bit-identical
regardless of backend.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("CURVGNN_NUMBA", "1").strip().lower()
_DISABLED = _env in ("0", "false", "no", "off")

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency, but be safe
    _HAVE_NUMBA = False

NUMBA_ENABLED = _HAVE_NUMBA and not _DISABLED

UNREACHABLE = -1  # hop-count sentinel for nodes in another component


# ---------------------------------------------------------------------------
# loop implementations (compiled when numba is enabled, also runnable as-is)
# ---------------------------------------------------------------------------

def _bfs_hops_loop(indptr, indices, source):
    n = indptr.shape[0] - 1
    hops = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    hops[source] = 0
    queue[0] = source
    head = 0
    tail = 1
    while head < tail:
        u = queue[head]
        head += 1
        du = hops[u]
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if hops[v] < 0:
                hops[v] = du + 1
                queue[tail] = v
                tail += 1
    return hops


def _bfs_tree_loop(indptr, indices, source):
    """BFS hop counts plus shortest-path tree with deterministic tie-break.

    parent[v] is the smallest-id neighbor of v one hop closer to source;
    order lists reachable nodes by nondecreasing hop count (then the
    unreachable ones, which downstream consumers skip via parent == -1).
    """
    n = indptr.shape[0] - 1
    hops = np.full(n, -1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    hops[source] = 0
    order[0] = source
    head = 0
    tail = 1
    while head < tail:
        u = order[head]
        head += 1
        du = hops[u]
        for k in range(indptr[u], indptr[u + 1]):
            v = indices[k]
            if hops[v] < 0:
                hops[v] = du + 1
                order[tail] = v
                tail += 1
    parent = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        if hops[v] <= 0:
            continue
        target = hops[v] - 1
        for k in range(indptr[v], indptr[v + 1]):
            u = indices[k]
            if hops[u] == target:
                parent[v] = u  # neighbor lists are sorted: first hit is smallest
                break
    if tail < n:
        for v in range(n):
            if hops[v] < 0:
                order[tail] = v
                tail += 1
    return hops, parent, order


def _delta_exact_loop(dist):
    """Max four-point deviation over all quadruples of a hop-distance matrix."""
    n = dist.shape[0]
    best = 0.0
    for a in range(n):
        for b in range(a + 1, n):
            d_ab = dist[a, b]
            for c in range(b + 1, n):
                d_ac = dist[a, c]
                d_bc = dist[b, c]
                for d in range(c + 1, n):
                    s1 = d_ab + dist[c, d]
                    s2 = d_ac + dist[b, d]
                    s3 = dist[a, d] + d_bc
                    if s1 < s2:
                        s1, s2 = s2, s1
                    if s1 < s3:
                        s1, s3 = s3, s1
                    if s2 < s3:
                        s2 = s3
                    dq = 0.5 * (s1 - s2)
                    if dq > best:
                        best = dq
    return best


def _path_sums_loop(order, parent, step_len):
    """Accumulate per-node path lengths along a BFS tree.

    step_len[v] is the embedded length of the tree edge (v, parent[v]);
    entries for the source and unreachable nodes are ignored. Nodes are
    processed in BFS order so parents are finished before children.
    """
    n = order.shape[0]
    total = np.zeros(n, dtype=np.float64)
    for k in range(n):
        v = order[k]
        p = parent[v]
        if p >= 0:
            total[v] = total[p] + step_len[v]
    return total


if NUMBA_ENABLED:
    _bfs_hops_nb = _njit(cache=True)(_bfs_hops_loop)
    _bfs_tree_nb = _njit(cache=True)(_bfs_tree_loop)
    _delta_exact_nb = _njit(cache=True)(_delta_exact_loop)
    _path_sums_nb = _njit(cache=True)(_path_sums_loop)


# ---------------------------------------------------------------------------
# vectorized numpy fallbacks
# ---------------------------------------------------------------------------

def _bfs_hops_np(indptr, indices, source):
    """Level-synchronous BFS with boolean frontiers (no per-edge python loop)."""
    n = indptr.shape[0] - 1
    hops = np.full(n, -1, dtype=np.int64)
    frontier = np.zeros(n, dtype=bool)
    frontier[source] = True
    hops[source] = 0
    level = 0
    while frontier.any():
        srcs = np.flatnonzero(frontier)
        spans = [np.arange(indptr[s], indptr[s + 1]) for s in srcs]
        reach = indices[np.concatenate(spans)] if spans else np.empty(0, dtype=np.int64)
        nxt = np.zeros(n, dtype=bool)
        nxt[reach] = True
        nxt &= hops < 0
        hops[nxt] = level + 1
        frontier = nxt
        level += 1
    return hops


def _bfs_tree_np(indptr, indices, source):
    hops = _bfs_hops_np(indptr, indices, source)
    n = hops.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        if hops[v] <= 0:
            continue
        nbrs = indices[indptr[v]:indptr[v + 1]]
        closer = nbrs[hops[nbrs] == hops[v] - 1]
        parent[v] = closer[0]  # sorted neighbors: first is smallest id
    reach_order = np.argsort(hops, kind="stable").astype(np.int64)
    n_unreach = int((hops < 0).sum())
    if n_unreach:
        reach_order = np.concatenate((reach_order[n_unreach:], reach_order[:n_unreach]))
    return hops, parent, reach_order


def _delta_exact_np(dist):
    """Blocked broadcast version: for each pair (a,b) scan all pairs (c,d)."""
    n = dist.shape[0]
    iu_c, iu_d = np.triu_indices(n, k=1)
    d_cd = dist[iu_c, iu_d]
    best = 0.0
    for a in range(n):
        row_a = dist[a]
        for b in range(a + 1, n):
            keep = iu_c > b
            if not keep.any():
                continue
            c = iu_c[keep]
            d = iu_d[keep]
            s1 = row_a[b] + d_cd[keep]
            s2 = row_a[c] + dist[b, d]
            s3 = row_a[d] + dist[b, c]
            stack = np.sort(np.stack((s1, s2, s3)), axis=0)
            dq = 0.5 * float((stack[2] - stack[1]).max())
            if dq > best:
                best = dq
    return best


_path_sums_np = _path_sums_loop


# ---------------------------------------------------------------------------
# public dispatchers
# ---------------------------------------------------------------------------

def bfs_hops(indptr: np.ndarray, indices: np.ndarray, source: int) -> np.ndarray:
    """Hop counts from ``source``; UNREACHABLE (-1) marks other components."""
    if NUMBA_ENABLED:
        return _bfs_hops_nb(indptr, indices, np.int64(source))
    return _bfs_hops_np(indptr, indices, source)


def bfs_tree(indptr: np.ndarray, indices: np.ndarray, source: int):
    """(hops, parent, bfs_order) with smallest-predecessor tie-break."""
    if NUMBA_ENABLED:
        return _bfs_tree_nb(indptr, indices, np.int64(source))
    return _bfs_tree_np(indptr, indices, source)


def delta_exact(dist: np.ndarray) -> float:
    """Exact Gromov four-point maximum over all C(n,4) quadruples."""
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    if NUMBA_ENABLED:
        return float(_delta_exact_nb(dist))
    return float(_delta_exact_np(dist))


def path_sums(order: np.ndarray, parent: np.ndarray, step_len: np.ndarray) -> np.ndarray:
    """Per-node accumulated BFS-tree path lengths (source gets 0)."""
    if NUMBA_ENABLED:
        return _path_sums_nb(order, parent, step_len)
    return _path_sums_np(order, parent, step_len)
