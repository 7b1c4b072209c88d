"""Graph data model, file ingestion, task splits, and hop-distance machinery.

File formats:
  * edge list  — UTF-8 text, one ``u<TAB>v`` pair of 0-based integer ids per
    line; ``#`` starts a comment; duplicate and reversed pairs collapse to a
    single undirected edge; self-loops are dropped.
  * features   — CSV (row i = node i, no header) or a JSON manifest
    ``{"n": int, "f": int, "rows": [[...], ...]}``.
  * labels     — CSV ``node_id,class_id``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, manifold

log = logging.getLogger(__name__)

UNREACHABLE = _kernels.UNREACHABLE  # hop-count sentinel (-1) for "infinite"


class DataError(ValueError):
    """Malformed input data; carries the offending file line when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        loc = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class DisconnectedError(ValueError):
    """A node pair in different components was handed to a path query."""


@dataclass
class Graph:
    """Undirected graph with dense node features and optional class labels."""

    n_nodes: int
    neighbors: list  # per-node sorted int64 arrays, symmetric, no self-loops
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    _csr: tuple | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_edges(cls, n_nodes: int, edges: np.ndarray,
                   features: np.ndarray | None = None,
                   labels: np.ndarray | None = None) -> "Graph":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n_nodes):
            raise DataError(f"edge endpoint out of range [0, {n_nodes})")
        keep = edges[:, 0] != edges[:, 1]
        edges = edges[keep]
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        und = np.unique(np.stack([lo, hi], axis=1), axis=0) if edges.size else edges
        nbrs = [[] for _ in range(n_nodes)]
        for u, v in und:
            nbrs[u].append(v)
            nbrs[v].append(u)
        neighbor_arrays = [np.array(sorted(a), dtype=np.int64) for a in nbrs]
        if features is not None:
            features = np.asarray(features, dtype=np.float64)
            if features.shape[0] != n_nodes:
                raise DataError(f"{features.shape[0]} feature rows for {n_nodes} nodes")
            if not np.all(np.isfinite(features)):
                raise DataError("non-finite feature values")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape[0] != n_nodes:
                raise DataError(f"{labels.shape[0]} labels for {n_nodes} nodes")
        return cls(n_nodes=n_nodes, neighbors=neighbor_arrays,
                   features=features, labels=labels)

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.neighbors) // 2

    def edge_array(self) -> np.ndarray:
        """All undirected edges as (m, 2) rows with u < v, sorted."""
        rows = [(u, v) for u in range(self.n_nodes) for v in self.neighbors[u] if u < v]
        return np.array(rows, dtype=np.int64).reshape(-1, 2)

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.neighbors], dtype=np.int64)

    def csr(self):
        """(indptr, indices) adjacency view for the jitted kernels."""
        if self._csr is None:
            counts = self.degrees()
            indptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
            np.cumsum(counts, out=indptr[1:])
            indices = (np.concatenate(self.neighbors) if self.n_nodes and indptr[-1]
                       else np.empty(0, dtype=np.int64))
            self._csr = (indptr, indices.astype(np.int64))
        return self._csr

    def has_edge(self, u: int, v: int) -> bool:
        nu = self.neighbors[u]
        i = np.searchsorted(nu, v)
        return i < len(nu) and nu[i] == v

    def with_edges(self, edges: np.ndarray) -> "Graph":
        """Same nodes/features/labels, different edge set (e.g. train graph)."""
        return Graph.from_edges(self.n_nodes, edges, self.features, self.labels)


@dataclass
class EdgeSplit:
    """Link-prediction split; negatives are verified non-edges of the graph."""

    train_pos: np.ndarray
    val_pos: np.ndarray
    test_pos: np.ndarray
    val_neg: np.ndarray
    test_neg: np.ndarray
    rng_seed: int


@dataclass
class NodeSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def load_edge_list(path) -> np.ndarray:
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise DataError(f"expected 'u<TAB>v', got {raw.strip()!r}", path, lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"non-integer node id in {raw.strip()!r}", path, lineno)
            if u < 0 or v < 0:
                raise DataError(f"negative node id in {raw.strip()!r}", path, lineno)
            edges.append((u, v))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def load_features(path) -> np.ndarray:
    path = str(path)
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            try:
                manifest = json.load(fh)
            except json.JSONDecodeError as e:
                raise DataError(f"bad JSON manifest: {e}", path, e.lineno)
        rows = manifest.get("rows")
        if rows is None:
            raise DataError("manifest missing 'rows'", path, 1)
        feats = np.asarray(rows, dtype=np.float64)
        if feats.ndim != 2:
            raise DataError("'rows' must be a list of equal-length lists", path, 1)
        n, f = manifest.get("n", feats.shape[0]), manifest.get("f", feats.shape[1])
        if feats.shape != (n, f):
            raise DataError(f"manifest says {n}x{f}, rows are {feats.shape}", path, 1)
        return feats
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                row = [float(tok) for tok in text.split(",")]
            except ValueError:
                raise DataError(f"non-numeric feature value in row", path, lineno)
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"row has {len(row)} values, expected {width}", path, lineno)
            rows.append(row)
    if not rows:
        raise DataError("empty feature file", path, 1)
    return np.array(rows, dtype=np.float64)


def load_labels(path, n_nodes: int) -> np.ndarray:
    labels = np.full(n_nodes, -1, dtype=np.int64)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split(",")
            if len(parts) != 2:
                raise DataError(f"expected 'node_id,class_id', got {text!r}", path, lineno)
            try:
                node, cls = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"non-integer field in {text!r}", path, lineno)
            if not (0 <= node < n_nodes):
                raise DataError(f"node id {node} out of range [0, {n_nodes})", path, lineno)
            if cls < 0:
                raise DataError(f"negative class id {cls}", path, lineno)
            if labels[node] not in (-1, cls):
                raise DataError(
                    f"conflicting label for node {node}: {labels[node]} vs {cls}",
                    path, lineno)
            labels[node] = cls
    return labels


def load_graph(edge_path, feature_path=None, label_path=None) -> Graph:
    """Assemble a Graph from an edge list plus optional feature/label files."""
    edges = load_edge_list(edge_path)
    features = load_features(feature_path) if feature_path is not None else None
    max_id = int(edges.max()) if edges.size else -1
    n_nodes = max(max_id + 1, features.shape[0] if features is not None else 0)
    if features is not None and max_id >= features.shape[0]:
        raise DataError(
            f"edge references node {max_id} but only {features.shape[0]} feature rows",
            edge_path)
    labels = load_labels(label_path, n_nodes) if label_path is not None else None
    return Graph.from_edges(n_nodes, edges, features, labels)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def _edge_keys(edges: np.ndarray, n: int) -> np.ndarray:
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    return lo * n + hi


def sample_negative_edges(g: Graph, count: int, rng: np.random.Generator,
                          forbidden: set | None = None) -> np.ndarray:
    """Uniform distinct non-edges via rejection; deterministic under rng state."""
    n = g.n_nodes
    max_pairs = n * (n - 1) // 2
    if max_pairs - g.n_edges < count:
        raise DataError(f"graph too dense to sample {count} negative edges")
    pos = set(_edge_keys(g.edge_array(), n).tolist()) if g.n_edges else set()
    if forbidden:
        pos |= forbidden
    out = np.empty((count, 2), dtype=np.int64)
    seen = set()
    k = 0
    while k < count:
        u = int(rng.integers(0, n))
        v = int(rng.integers(0, n))
        if u == v:
            continue
        key = min(u, v) * n + max(u, v)
        if key in pos or key in seen:
            continue
        seen.add(key)
        out[k, 0], out[k, 1] = u, v
        k += 1
    return out


def make_lp_split(g: Graph, val_frac: float, test_frac: float, seed: int) -> EdgeSplit:
    """Partition edges into train/val/test positives plus matched negatives."""
    if not (0 < val_frac < 1 and 0 < test_frac < 1 and val_frac + test_frac < 1):
        raise ValueError("fractions must lie in (0,1) and sum below 1")
    edges = g.edge_array()
    m = edges.shape[0]
    n_val = int(m * val_frac)
    n_test = int(m * test_frac)
    n_train = m - n_val - n_test
    if n_val < 1 or n_test < 1 or n_train < 1:
        raise DataError(f"{m} edges cannot satisfy val={val_frac}, test={test_frac}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(m)
    val_pos = edges[perm[:n_val]]
    test_pos = edges[perm[n_val:n_val + n_test]]
    train_pos = edges[perm[n_val + n_test:]]
    val_neg = sample_negative_edges(g, n_val, rng)
    forbidden = set(_edge_keys(val_neg, g.n_nodes).tolist())
    test_neg = sample_negative_edges(g, n_test, rng, forbidden=forbidden)
    return EdgeSplit(train_pos=train_pos, val_pos=val_pos, test_pos=test_pos,
                     val_neg=val_neg, test_neg=test_neg, rng_seed=seed)


def make_nc_split(g: Graph, train_frac: float = 0.70, val_frac: float = 0.15,
                  seed: int = 0) -> NodeSplit:
    """Stratified-by-class node split; the remainder after train/val is test."""
    if g.labels is None:
        raise DataError("graph has no labels; cannot build a classification split")
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for cls in np.unique(g.labels[g.labels >= 0]):
        ids = np.flatnonzero(g.labels == cls)
        ids = ids[rng.permutation(len(ids))]
        n_tr = max(1, int(round(len(ids) * train_frac)))
        n_va = max(1, int(round(len(ids) * val_frac)))
        n_tr = min(n_tr, len(ids) - 2) if len(ids) >= 3 else max(1, len(ids) - 2)
        train.append(ids[:n_tr])
        val.append(ids[n_tr:n_tr + n_va])
        test.append(ids[n_tr + n_va:])
    return NodeSplit(train=np.sort(np.concatenate(train)),
                     val=np.sort(np.concatenate(val)),
                     test=np.sort(np.concatenate(test)))


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

def hop_distances(g: Graph, source: int) -> np.ndarray:
    """BFS hop counts from source; UNREACHABLE (-1) for other components."""
    if not (0 <= source < g.n_nodes):
        raise ValueError(f"source {source} out of range")
    indptr, indices = g.csr()
    return _kernels.bfs_hops(indptr, indices, source)


def hop_distance_matrix(g: Graph, nodes: np.ndarray | None = None) -> np.ndarray:
    """Stacked BFS rows (float64; unreachable mapped to +inf)."""
    indptr, indices = g.csr()
    srcs = np.arange(g.n_nodes) if nodes is None else np.asarray(nodes)
    out = np.empty((len(srcs), g.n_nodes), dtype=np.float64)
    for i, s in enumerate(srcs):
        h = _kernels.bfs_hops(indptr, indices, int(s))
        row = h.astype(np.float64)
        row[h < 0] = np.inf
        out[i] = row
    return out


def path_distance_row(g: Graph, emb: np.ndarray, zeta, source: int):
    """Embedded lengths of BFS shortest paths from source to every node.

    Paths follow the BFS tree with the smallest-predecessor tie-break; the
    length of a path is the sum of hyperbolic distances over consecutive
    node pairs. Returns (lengths, hops); unreachable nodes carry +inf.
    """
    indptr, indices = g.csr()
    hops, parent, order = _kernels.bfs_tree(indptr, indices, int(source))
    has_parent = parent >= 0
    step = np.zeros(g.n_nodes, dtype=np.float64)
    if has_parent.any():
        kids = np.flatnonzero(has_parent)
        step[kids] = manifold.hyp_distance(emb[kids], emb[parent[kids]], zeta,
                                           validate=False)
    total = _kernels.path_sums(order, parent, step)
    total[hops < 0] = np.inf
    return total, hops


def hyperbolic_graph_distance(g: Graph, emb: np.ndarray, i: int, j: int, zeta) -> float:
    """Embedded length of the shortest hop path between nodes i and j."""
    total, hops = path_distance_row(g, emb, zeta, i)
    if hops[j] < 0:
        raise DisconnectedError(f"nodes {i} and {j} are in different components")
    return float(total[j])


# ---------------------------------------------------------------------------
# Gromov delta-hyperbolicity
# ---------------------------------------------------------------------------

def connected_components(g: Graph) -> list[np.ndarray]:
    indptr, indices = g.csr()
    unassigned = np.ones(g.n_nodes, dtype=bool)
    comps = []
    while unassigned.any():
        s = int(np.flatnonzero(unassigned)[0])
        h = _kernels.bfs_hops(indptr, indices, s)
        members = np.flatnonzero(h >= 0)
        comps.append(members)
        unassigned[members] = False
    return comps


def _largest_component_subgraph(g: Graph) -> Graph:
    comps = connected_components(g)
    if len(comps) == 1:
        return g
    largest = max(comps, key=len)
    log.info("graph not connected; using largest component (%d of %d nodes)",
             len(largest), g.n_nodes)
    relabel = -np.ones(g.n_nodes, dtype=np.int64)
    relabel[largest] = np.arange(len(largest))
    edges = g.edge_array()
    keep = np.isin(edges[:, 0], largest) & np.isin(edges[:, 1], largest)
    return Graph.from_edges(len(largest), relabel[edges[keep]])


def _quadruple_delta(dist: np.ndarray, quads: np.ndarray) -> np.ndarray:
    a, b, c, d = quads.T
    s = np.stack([
        dist[a, b] + dist[c, d],
        dist[a, c] + dist[b, d],
        dist[a, d] + dist[b, c],
    ])
    s.sort(axis=0)
    return 0.5 * (s[2] - s[1])


def gromov_delta(g: Graph, mode: str = "exact", n_samples: int | None = None,
                 seed: int = 0) -> float:
    """Four-point delta-hyperbolicity of the hop metric.

    mode='exact' maximizes over all quadruples; mode='sampled' over
    n_samples random quadruples, which is a lower bound on the true delta.
    Disconnected graphs are reduced to their largest component.
    """
    sub = _largest_component_subgraph(g)
    if sub.n_nodes < 4:
        raise ValueError("delta-hyperbolicity needs at least 4 connected nodes")
    if mode == "exact":
        dist = hop_distance_matrix(sub)
        return _kernels.delta_exact(dist)
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    if not n_samples or n_samples < 1:
        raise ValueError("sampled mode needs n_samples >= 1")
    rng = np.random.default_rng(seed)
    indptr, indices = sub.csr()
    best = 0.0
    for _ in range(n_samples):
        quad = rng.choice(sub.n_nodes, size=4, replace=False)
        rows = {}
        for s in quad[:3]:
            rows[int(s)] = _kernels.bfs_hops(indptr, indices, int(s))
        a, b, c, d = (int(q) for q in quad)
        pairs = np.array([
            rows[a][b] + rows[c][d],
            rows[a][c] + rows[b][d],
            rows[a][d] + rows[b][c],
        ], dtype=np.float64)
        pairs.sort()
        best = max(best, 0.5 * (pairs[2] - pairs[1]))
    return float(best)


# ---------------------------------------------------------------------------
# synthetic graphs (demo data and tests)
# ---------------------------------------------------------------------------

def balanced_binary_tree(depth: int) -> Graph:
    """Complete binary tree with 2**(depth+1) - 1 nodes, root id 0."""
    n = 2 ** (depth + 1) - 1
    edges = np.array([((i - 1) // 2, i) for i in range(1, n)], dtype=np.int64)
    return Graph.from_edges(n, edges)


def path_graph(n: int) -> Graph:
    edges = np.array([(i, i + 1) for i in range(n - 1)], dtype=np.int64)
    return Graph.from_edges(n, edges)


def cycle_graph(n: int) -> Graph:
    edges = np.array([(i, (i + 1) % n) for i in range(n)], dtype=np.int64)
    return Graph.from_edges(n, edges)


def random_plus_degree_features(g: Graph, dim: int, seed: int,
                                noise: float = 0.2) -> np.ndarray:
    """Gaussian features plus a clean normalized-degree channel in column 0."""
    rng = np.random.default_rng(seed)
    feats = noise * rng.standard_normal((g.n_nodes, dim))
    deg = g.degrees().astype(np.float64)
    feats[:, 0] = deg / max(deg.max(), 1.0)
    return feats
