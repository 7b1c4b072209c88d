"""Geometric feedback for curvature search.

Three ingredients: the embedding-distortion score comparing embedded
distances against path-sum graph distances, a parallelogram-law deviation
estimator for the sectional curvature of the embedded graph, and the
blend rule that turns an estimate into the next curvature parameter.
Polar-coordinate distance formulas (exact hyperbolic law of cosines and
its large-radius approximation) are provided as analytic oracles for
tests, plus a geodesic tree layout used by diagnostics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels, graphs, manifold

log = logging.getLogger(__name__)

KAPPA_CEILING = -1e-4  # estimates are clamped below this before 1/sqrt(-kappa)

DISTORTION_EXACT_LIMIT = 2000  # above this many nodes, pairs are sampled
DISTORTION_SAMPLE_FACTOR = 100  # sampled pair count = factor * |V|


@dataclass(frozen=True)
class DistortionReport:
    mean_distortion: float
    pairs_used: int
    pairs_excluded: int


@dataclass(frozen=True)
class CurvatureEstimate:
    kappa: float
    n_samples: int
    node_values: np.ndarray  # per-node mean deviation; NaN where ineligible


def parallelogram_deviation(d_am, d_bc, d_ab, d_ac):
    """Quadratic distance combination that vanishes for Euclidean midpoints.

    For points a, b, c with m the midpoint of segment (b, c):
    d(a,m)^2 + d(b,c)^2/4 - (d(a,b)^2 + d(a,c)^2)/2. Zero in flat space,
    negative when the space curves hyperbolically.
    """
    d_am, d_bc = np.asarray(d_am, float), np.asarray(d_bc, float)
    d_ab, d_ac = np.asarray(d_ab, float), np.asarray(d_ac, float)
    if np.any(d_am < 0) or np.any(d_bc < 0) or np.any(d_ab < 0) or np.any(d_ac < 0):
        raise ValueError("distances must be nonnegative")
    return d_am**2 + 0.25 * d_bc**2 - 0.5 * (d_ab**2 + d_ac**2)


def parallelogram_deviation_normalized(d_am, d_bc, d_ab, d_ac):
    """Deviation scaled by 1/(2 d(a,m)); requires d(a,m) > 0."""
    d_am = np.asarray(d_am, float)
    if np.any(d_am <= 0):
        raise ValueError("degenerate sample: d(a, m) must be positive")
    return parallelogram_deviation(d_am, d_bc, d_ab, d_ac) / (2.0 * d_am)


# ---------------------------------------------------------------------------
# embedding distortion
# ---------------------------------------------------------------------------

def embedding_distortion(g: graphs.Graph, emb: np.ndarray, zeta,
                         seed: int = 0) -> DistortionReport:
    """Mean |d^2/g^2 - 1| over ordered connected node pairs (i != j).

    d is the hyperbolic distance between the endpoint embeddings; g is the
    sum of hyperbolic edge lengths along the BFS shortest hop path. Pairs
    in different components are excluded and the mean runs over the pairs
    actually used. Graphs above DISTORTION_EXACT_LIMIT nodes are scored on
    a seeded sample of pairs instead of all of them.
    """
    if g.n_edges == 0:
        raise ValueError("distortion is undefined on an edgeless graph")
    manifold.check_on_manifold(emb, zeta)
    n = g.n_nodes
    if n <= DISTORTION_EXACT_LIMIT:
        total = 0.0
        used = 0
        excluded = 0
        for i in range(n):
            g_row, hops = graphs.path_distance_row(g, emb, zeta, i)
            mask = hops > 0
            excluded += int(n - 1 - mask.sum())
            if not mask.any():
                continue
            d_row = manifold.hyp_distance(emb[i], emb[mask], zeta, validate=False)
            ratio = (d_row / g_row[mask]) ** 2
            total += float(np.abs(ratio - 1.0).sum())
            used += int(mask.sum())
        if used == 0:
            raise ValueError("no connected node pairs")
        return DistortionReport(total / used, used, excluded)

    n_pairs = DISTORTION_SAMPLE_FACTOR * n
    log.info("distortion: sampling %d ordered pairs on %d nodes", n_pairs, n)
    rng = np.random.default_rng(seed)
    src = rng.integers(0, n, size=n_pairs)
    dst = rng.integers(0, n, size=n_pairs)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    total = 0.0
    used = 0
    excluded = int((~keep).sum())
    for i in np.unique(src):
        targets = dst[src == i]
        g_row, hops = graphs.path_distance_row(g, emb, zeta, int(i))
        ok = hops[targets] > 0
        excluded += int((~ok).sum())
        if not ok.any():
            continue
        t = targets[ok]
        d_row = manifold.hyp_distance(emb[int(i)], emb[t], zeta, validate=False)
        ratio = (d_row / g_row[t]) ** 2
        total += float(np.abs(ratio - 1.0).sum())
        used += int(len(t))
    if used == 0:
        raise ValueError("no connected node pairs in the sample")
    return DistortionReport(total / used, used, excluded)


def distortion_sweep(g: graphs.Graph, emb: np.ndarray, zeta_base, grid,
                     seed: int = 0) -> list[tuple[float, DistortionReport]]:
    """Remap fixed embeddings across a curvature grid and score each point."""
    out = []
    for z in grid:
        remapped = manifold.transfer_curvature(emb, zeta_base, z)
        out.append((float(z), embedding_distortion(g, remapped, z, seed=seed)))
    return out


# ---------------------------------------------------------------------------
# curvature estimation and update
# ---------------------------------------------------------------------------

def estimate_kappa(g: graphs.Graph, emb: np.ndarray, zeta, n_s: int = 2,
                   seed: int = 0) -> CurvatureEstimate:
    """Average normalized parallelogram deviation over sampled quadruples.

    For every node m of degree >= 2, draw n_s quadruples: b, c distinct
    neighbors of m, and a uniform outside {m, b, c}. Distances are taken
    between current embeddings. Sampling is per-node seeded with
    (seed, node_id), so estimates are reproducible and node-parallel.
    """
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    n = g.n_nodes
    if n < 4:
        raise ValueError("need at least 4 nodes to sample quadruples")
    manifold.check_on_manifold(emb, zeta)
    deg = g.degrees()
    eligible = np.flatnonzero(deg >= 2)
    if eligible.size == 0:
        raise ValueError("no node of degree >= 2; cannot estimate curvature")

    quads = []
    owner = []
    for m in eligible:
        rng = np.random.default_rng([seed, int(m)])
        nbrs = g.neighbors[m]
        for _ in range(n_s):
            bc = rng.choice(len(nbrs), size=2, replace=False)
            b, c = int(nbrs[bc[0]]), int(nbrs[bc[1]])
            while True:
                a = int(rng.integers(0, n))
                if a not in (int(m), b, c):
                    break
            quads.append((int(m), a, b, c))
            owner.append(int(m))
    quads = np.array(quads, dtype=np.int64)
    m_idx, a_idx, b_idx, c_idx = quads.T

    d_am = manifold.hyp_distance(emb[a_idx], emb[m_idx], zeta, validate=False)
    d_bc = manifold.hyp_distance(emb[b_idx], emb[c_idx], zeta, validate=False)
    d_ab = manifold.hyp_distance(emb[a_idx], emb[b_idx], zeta, validate=False)
    d_ac = manifold.hyp_distance(emb[a_idx], emb[c_idx], zeta, validate=False)
    valid = d_am > 1e-12
    if not valid.any():
        raise ValueError("all sampled quadruples degenerate (d(a,m) = 0)")
    xi = np.full(len(quads), np.nan)
    xi[valid] = parallelogram_deviation_normalized(
        d_am[valid], d_bc[valid], d_ab[valid], d_ac[valid])

    node_values = np.full(n, np.nan)
    owners = np.asarray(owner)
    for m in eligible:
        vals = xi[(owners == m) & valid]
        if vals.size:
            node_values[m] = vals.mean()
    node_mean = node_values[~np.isnan(node_values)]
    return CurvatureEstimate(kappa=float(node_mean.mean()),
                             n_samples=int(valid.sum()),
                             node_values=node_values)


def update_curvature(zeta_prev: float, kappa: float, gamma: float,
                     zeta_min: float = manifold.DEFAULT_ZETA_MIN,
                     zeta_max: float = manifold.DEFAULT_ZETA_MAX) -> float:
    """Blend the previous curvature parameter toward 1/sqrt(-kappa).

    kappa is clamped below KAPPA_CEILING first (the estimator can report
    nonnegative values on near-flat configurations) and the result is
    clamped into [zeta_min, zeta_max]; both clamps are logged.
    """
    if not (0.0 <= gamma <= 1.0):
        raise ValueError("gamma must lie in [0, 1]")
    if kappa > KAPPA_CEILING:
        log.info("kappa %.4g clamped to %.4g before update", kappa, KAPPA_CEILING)
        kappa = KAPPA_CEILING
    target = 1.0 / np.sqrt(-kappa)
    z = (1.0 - gamma) * zeta_prev + gamma * target
    if z < zeta_min or z > zeta_max:
        log.info("zeta %.4g clamped into [%g, %g]", z, zeta_min, zeta_max)
    return float(min(max(z, zeta_min), zeta_max))


def remap_embeddings(emb: np.ndarray, zeta_prev, zeta_new) -> np.ndarray:
    """Carry every embedding to the new curvature through the shared origin."""
    return manifold.transfer_curvature(emb, zeta_prev, zeta_new)


# ---------------------------------------------------------------------------
# polar-coordinate oracles
# ---------------------------------------------------------------------------

def polar_to_point(r: float, theta: float, zeta) -> np.ndarray:
    """Point at geodesic radius r and angle theta on the 2-d hyperboloid."""
    z = manifold.as_zeta(zeta)
    return np.array([
        z * np.cosh(r / z),
        z * np.sinh(r / z) * np.cos(theta),
        z * np.sinh(r / z) * np.sin(theta),
    ])


def polar_distance_exact(r: float, theta: float, r2: float, theta2: float,
                         zeta) -> float:
    """Hyperbolic law of cosines between (r, theta) and (r2, theta2)."""
    z = manifold.as_zeta(zeta)
    if r < 0 or r2 < 0:
        raise ValueError("radii must be nonnegative")
    arg = (np.cosh(r / z) * np.cosh(r2 / z)
           - np.sinh(r / z) * np.sinh(r2 / z) * np.cos(theta - theta2))
    return float(z * np.arccosh(np.clip(arg, 1.0, manifold.ACOSH_ARG_MAX)))


def polar_distance_approx(r: float, theta: float, r2: float, theta2: float,
                          zeta) -> float:
    """Large-radius shortcut r + r2 + 2 zeta ln sin(dtheta/2).

    Valid when both radii are large relative to zeta and the angle gap is
    not too small; undefined at dtheta = 0.
    """
    z = manifold.as_zeta(zeta)
    half = 0.5 * abs(theta - theta2)
    s = np.sin(half)
    if s <= 0.0:
        raise ValueError("approximation undefined at zero angular separation")
    return float(r + r2 + 2.0 * z * np.log(s))


# ---------------------------------------------------------------------------
# geodesic tree layout (diagnostics / synthetic benchmarks)
# ---------------------------------------------------------------------------

def tree_layout_hyperbolic(g: graphs.Graph, zeta, edge_length: float = 1.0,
                           root: int = 0) -> np.ndarray:
    """Embed a tree in the 2-d hyperboloid by recursive geodesic placement.

    Children fan out around the direction back to the parent, each placed
    at geodesic distance edge_length (a Sarkar-style construction). Only
    meaningful for trees; cycles reuse whatever BFS tree is found first.
    """
    z = manifold.as_zeta(zeta)
    n = g.n_nodes
    indptr, indices = g.csr()
    hops, parent, order = _kernels.bfs_tree(indptr, indices, root)
    if np.any(hops < 0):
        raise ValueError("tree layout requires a connected graph")
    pos = np.zeros((n, 3), dtype=np.float64)
    pos[root] = manifold.origin(2, z)
    for v in order:
        children = [int(c) for c in g.neighbors[v] if parent[c] == v]
        if not children:
            continue
        x = pos[v]
        if v == root:
            k = len(children)
            for i, c in enumerate(children):
                ang = 2.0 * np.pi * i / k
                direction = np.array([0.0, np.cos(ang), np.sin(ang)])
                pos[c] = manifold.exp_map(x, edge_length * direction, z,
                                          validate=False)
        else:
            u = manifold.log_map(x, pos[parent[v]], z, validate=False)
            u_hat = u / max(manifold.lorentz_norm(u), 1e-300)
            u_perp = _tangent_perp(x, u_hat, z)
            k = len(children)
            for i, c in enumerate(children):
                ang = 2.0 * np.pi * (i + 1) / (k + 1)
                direction = np.cos(ang) * u_hat + np.sin(ang) * u_perp
                pos[c] = manifold.exp_map(x, edge_length * direction, z,
                                          validate=False)
    return pos


def _tangent_perp(x: np.ndarray, u_hat: np.ndarray, zeta: float) -> np.ndarray:
    """Unit tangent vector at x orthogonal to u_hat (2-d hyperboloid)."""
    z = zeta
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = 1.0
        w = e + (manifold.lorentz_inner(x, e) / (z * z)) * x  # project onto T_x
        w = w - manifold.lorentz_inner(w, u_hat) * u_hat
        nw = manifold.lorentz_norm(w)
        if nw > 1e-8:
            return w / nw
    raise RuntimeError("failed to build an orthogonal tangent direction")
