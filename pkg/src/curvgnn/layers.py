"""Hyperbolic GNN layers with per-layer curvature, decoders, and losses.

The differentiable manifold operations here mirror the formulas in
``manifold`` but are built from the autodiff primitives so gradients flow
to the Euclidean parameters. Every trainable parameter (weights, biases,
attention) lives in tangent space at the origin; curvature parameters are
plain floats managed outside gradient descent.

Message passing is edge-vectorized: per-layer work is a handful of
batched tensor ops over flattened adjacency (with injected self-loops),
never a dense attention matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graphs import Graph


# ---------------------------------------------------------------------------
# differentiable manifold operations
# ---------------------------------------------------------------------------

def exp_origin(w, zeta: float) -> Tensor:
    """Wrap spatial tangent coordinates (.., d) onto the hyperboloid (.., d+1)."""
    w = ad.as_tensor(w)
    r = ad.sqrt(ad.tsum(w * w, axis=-1, keepdims=True) + ad.NORM_GUARD)
    t = ad.scale(r, 1.0 / zeta)
    x0 = ad.scale(ad.cosh(t), zeta)
    coef = ad.scale(ad.sinh(t), zeta) / r
    return ad.concat([x0, coef * w], axis=-1)


def log_origin(x, zeta: float) -> Tensor:
    """Spatial tangent coordinates of a point, inverse of exp_origin.

    The arccosh argument is formed as 1 + |x_s|^2 / (zeta (x0 + zeta)),
    which stays accurate near the origin.
    """
    x = ad.as_tensor(x)
    xs = ad.spatial(x)
    x0 = ad.first_col(x)
    sq = ad.tsum(xs * xs, axis=-1, keepdims=True)
    u = sq / ad.scale(x0 + zeta, zeta)
    d = ad.scale(ad.arccosh(u + 1.0), zeta)
    s = ad.sqrt(sq + ad.NORM_GUARD)
    return (d / s) * xs


def hyp_dist(x, y, zeta: float) -> Tensor:
    """Batched geodesic distance through the Minkowski difference form."""
    x, y = ad.as_tensor(x), ad.as_tensor(y)
    diff = x - y
    q = ad.clamp_min(ad.lorentz_inner(diff, diff, keepdims=False), 0.0)
    return ad.scale(ad.arccosh(ad.scale(q, 0.5 / (zeta * zeta)) + 1.0), zeta)


def log_map(x, y, zeta: float) -> Tensor:
    """Tangent vector at x pointing to y; zero when the points coincide."""
    x, y = ad.as_tensor(x), ad.as_tensor(y)
    diff = x - y
    u = ad.scale(ad.clamp_min(ad.lorentz_inner(diff, diff), 0.0),
                 0.5 / (zeta * zeta))
    beta = u + 1.0
    d = ad.scale(ad.arccosh(beta), zeta)
    w = y - beta * x
    # |w|_L = zeta * sqrt(u (u + 2)) identically, cancellation-free
    wn = ad.scale(ad.sqrt(u * (u + 2.0) + ad.NORM_GUARD), zeta)
    return (d / wn) * w


def exp_map(x, v, zeta: float) -> Tensor:
    """Geodesic step from x with velocity v (tangent at x)."""
    x, v = ad.as_tensor(x), ad.as_tensor(v)
    nv = ad.sqrt(ad.clamp_min(ad.lorentz_inner(v, v), 0.0) + ad.NORM_GUARD)
    t = ad.scale(nv, 1.0 / zeta)
    return ad.cosh(t) * x + (ad.scale(ad.sinh(t), zeta) / nv) * v


def transport_from_origin(x, b, zeta: float) -> Tensor:
    """Parallel-transport a tangent-at-origin vector (0, b) to T_x."""
    x = ad.as_tensor(x)
    bt = ad.pad_zero_column(ad.as_tensor(b))
    num = ad.lorentz_inner(x, bt, keepdims=True)
    den = ad.scale(ad.first_col(x) + zeta, zeta)  # zeta^2 - <o, x> = zeta (zeta + x0)
    o = np.zeros(x.data.shape[-1])
    o[0] = zeta
    return bt + (num / den) * (x + Tensor(o))


# ---------------------------------------------------------------------------
# layer parameters and configuration
# ---------------------------------------------------------------------------

@dataclass
class LayerParams:
    """One layer's trainable tensors plus its curvature parameter."""

    W: Tensor
    b: Tensor
    att_w1: Tensor
    att_b1: Tensor
    att_w2: Tensor
    att_b2: Tensor
    zeta: float

    def tensors(self) -> list:
        return [self.W, self.b, self.att_w1, self.att_b1, self.att_w2, self.att_b2]


@dataclass
class ModelConfig:
    n_layers: int = 2
    dim: int = 16
    dropout: float = 0.5
    activation: str = "relu"  # or "identity"
    task: str = "lp"  # or "nc"
    fd_r: float = 2.0
    fd_t: float = 1.0
    att_hidden: int | None = None

    def __post_init__(self):
        if self.n_layers < 1 or self.dim < 1:
            raise ValueError("n_layers and dim must be positive")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.task not in ("lp", "nc"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.fd_t <= 0:
            raise ValueError("Fermi-Dirac temperature must be positive")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_layer(rng: np.random.Generator, d_in: int, d_out: int, zeta: float,
               att_hidden: int | None = None) -> LayerParams:
    hid = att_hidden or d_out
    return LayerParams(
        W=Tensor(_glorot(rng, d_in, d_out), requires_grad=True),
        b=Tensor(np.zeros(d_out), requires_grad=True),
        att_w1=Tensor(_glorot(rng, 2 * d_out, hid), requires_grad=True),
        att_b1=Tensor(np.zeros(hid), requires_grad=True),
        att_w2=Tensor(_glorot(rng, hid, 1), requires_grad=True),
        att_b2=Tensor(np.zeros(1), requires_grad=True),
        zeta=zeta,
    )


def message_edges(g: Graph):
    """Flattened adjacency with self-loops: (src, dst, indptr by dst)."""
    src, dst = [], []
    counts = np.empty(g.n_nodes, dtype=np.int64)
    for i in range(g.n_nodes):
        nbrs = g.neighbors[i]
        src.extend(nbrs)
        src.append(i)
        dst.extend([i] * (len(nbrs) + 1))
        counts[i] = len(nbrs) + 1
    indptr = np.zeros(g.n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), indptr


# ---------------------------------------------------------------------------
# layer operations
# ---------------------------------------------------------------------------

def linear_transform(h, W, b, zeta: float) -> Tensor:
    """Hyperboloid matrix multiply then bias: exp_o(log_o(h) W), offset by b.

    The bias is parallel-transported from the origin's tangent space to the
    transformed point and applied with an exponential step there.
    """
    h = ad.as_tensor(h)
    u = ad.matmul(log_origin(h, zeta), ad.as_tensor(W))
    point = exp_origin(u, zeta)
    carried = transport_from_origin(point, b, zeta)
    return exp_map(point, carried, zeta)


def _attention_scores(tang, src, dst, params: LayerParams) -> Tensor:
    feat = ad.concat([ad.gather_rows(tang, dst), ad.gather_rows(tang, src)], axis=-1)
    hidden = ad.relu(ad.matmul(feat, params.att_w1) + params.att_b1)
    return ad.matmul(hidden, params.att_w2) + params.att_b2


def _segment_softmax(scores: Tensor, dst: np.ndarray, indptr: np.ndarray) -> Tensor:
    seg_max = np.maximum.reduceat(scores.data, indptr[:-1], axis=0)
    shifted = scores - Tensor(seg_max[dst])  # constant shift, exact in gradient
    e = ad.exp(shifted)
    denom = ad.segment_sum(e, indptr)
    return e / ad.gather_rows(denom, dst)


def attention_weights(h_center, h_neighbors, params: LayerParams, zeta: float) -> np.ndarray:
    """Softmax attention of one node over its neighbor list (sums to 1)."""
    h_neighbors = np.atleast_2d(np.asarray(h_neighbors, dtype=np.float64))
    k = h_neighbors.shape[0]
    pts = np.concatenate([np.asarray(h_center, dtype=np.float64)[None, :], h_neighbors])
    tang = log_origin(Tensor(pts), zeta)
    src = np.arange(1, k + 1, dtype=np.int64)
    dst = np.zeros(k, dtype=np.int64)
    scores = _attention_scores(tang, src, dst, params)
    return ad.softmax(scores, axis=0).data.reshape(-1)


def aggregate(h_center, h_neighbors, weights, zeta: float) -> np.ndarray:
    """Weighted tangent-space average around h_center, mapped back."""
    h_neighbors = np.atleast_2d(np.asarray(h_neighbors, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
    center = Tensor(np.asarray(h_center, dtype=np.float64)[None, :])
    tang = log_map(center, Tensor(h_neighbors), zeta)
    summed = ad.tsum(Tensor(w) * tang, axis=0, keepdims=True)
    return exp_map(center, summed, zeta).data[0]


def activation(h, zeta_from: float, zeta_to: float, fn: str = "relu") -> Tensor:
    """Apply a Euclidean nonlinearity in the origin tangent space, then
    re-wrap at the (possibly different) output curvature."""
    tang = log_origin(ad.as_tensor(h), zeta_from)
    if fn == "relu":
        tang = ad.relu(tang)
    elif fn != "identity":
        raise ValueError(f"unknown activation {fn!r}")
    return exp_origin(tang, zeta_to)


def layer_forward(h, g: Graph, params: LayerParams, zeta_in: float, zeta_out: float,
                  *, dropout: float = 0.0, activation_fn: str = "relu",
                  training: bool = False, rng: np.random.Generator | None = None,
                  edges=None) -> Tensor:
    """One message-passing layer: transform, attend, aggregate, activate.

    All inputs live at zeta_in; the activation re-wraps onto zeta_out.
    Dropout hits the tangent-space pre-activation and only while training.
    """
    src, dst, indptr = message_edges(g) if edges is None else edges
    h1 = linear_transform(h, params.W, params.b, zeta_in)
    tang0 = log_origin(h1, zeta_in)
    w = _segment_softmax(_attention_scores(tang0, src, dst, params), dst, indptr)
    nbr_tang = log_map(ad.gather_rows(h1, dst), ad.gather_rows(h1, src), zeta_in)
    pulled = ad.segment_sum(w * nbr_tang, indptr)
    h2 = exp_map(h1, pulled, zeta_in)
    tang = log_origin(h2, zeta_in)
    if training and dropout > 0.0:
        if rng is None:
            raise ValueError("training dropout requires an rng")
        tang = ad.dropout(tang, dropout, rng, training=True)
    if activation_fn == "relu":
        tang = ad.relu(tang)
    elif activation_fn != "identity":
        raise ValueError(f"unknown activation {activation_fn!r}")
    return exp_origin(tang, zeta_out)


class HyperbolicGNN:
    """Stack of variable-curvature layers plus the task decoder parameters."""

    def __init__(self, in_dim: int, config: ModelConfig, zeta0: float,
                 rng: np.random.Generator, n_classes: int | None = None):
        self.config = config
        self.layers: list[LayerParams] = []
        d_prev = in_dim
        for _ in range(config.n_layers):
            self.layers.append(init_layer(rng, d_prev, config.dim, zeta0,
                                          config.att_hidden))
            d_prev = config.dim
        self.W_cls = None
        self.b_cls = None
        if config.task == "nc":
            if not n_classes or n_classes < 2:
                raise ValueError("node classification needs >= 2 classes")
            self.W_cls = Tensor(_glorot(rng, config.dim, n_classes), requires_grad=True)
            self.b_cls = Tensor(np.zeros(n_classes), requires_grad=True)

    def parameters(self) -> list:
        params = [t for layer in self.layers for t in layer.tensors()]
        if self.W_cls is not None:
            params += [self.W_cls, self.b_cls]
        return params

    @property
    def zetas(self) -> list:
        return [layer.zeta for layer in self.layers]

    def set_zetas(self, zetas) -> None:
        if len(zetas) != len(self.layers):
            raise ValueError("one curvature per layer")
        for layer, z in zip(self.layers, zetas):
            layer.zeta = float(z)

    def forward(self, g: Graph, features=None, *, training: bool = False,
                rng: np.random.Generator | None = None, edges=None) -> Tensor:
        """Embeddings at the last layer's curvature, shape (n, dim+1)."""
        feats = g.features if features is None else features
        if feats is None:
            raise ValueError("graph has no features")
        edges = message_edges(g) if edges is None else edges
        h = exp_origin(Tensor(np.asarray(feats, dtype=np.float64)), self.layers[0].zeta)
        for li, layer in enumerate(self.layers):
            zeta_out = self.layers[li + 1].zeta if li + 1 < len(self.layers) else layer.zeta
            h = layer_forward(h, g, layer, layer.zeta, zeta_out,
                              dropout=self.config.dropout,
                              activation_fn=self.config.activation,
                              training=training, rng=rng, edges=edges)
        return h


def model_forward(g: Graph, layers: list, zetas, *, config: ModelConfig | None = None,
                  training: bool = False, rng=None) -> Tensor:
    """Functional forward over explicit layer params (layers own no zeta here)."""
    cfg = config or ModelConfig()
    h = exp_origin(Tensor(np.asarray(g.features, dtype=np.float64)), float(zetas[0]))
    edges = message_edges(g)
    for li, layer in enumerate(layers):
        z_in = float(zetas[li])
        z_out = float(zetas[li + 1]) if li + 1 < len(layers) else float(zetas[li])
        h = layer_forward(h, g, layer, z_in, z_out, dropout=cfg.dropout,
                          activation_fn=cfg.activation, training=training,
                          rng=rng, edges=edges)
    return h


# ---------------------------------------------------------------------------
# decoders and losses
# ---------------------------------------------------------------------------

def fermi_dirac_score(d, r: float, t: float):
    """Edge probability 1 / (exp((d^2 - r)/t) + 1); decreasing in d."""
    if t <= 0:
        raise ValueError("temperature t must be positive")
    d = np.asarray(d, dtype=np.float64)
    z = (r - d * d) / t
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)),
                    np.exp(z) / (1.0 + np.exp(z)))


def _edge_logits(emb: Tensor, edges: np.ndarray, zeta: float, r: float, t: float) -> Tensor:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    d = hyp_dist(ad.gather_rows(emb, edges[:, 0]),
                 ad.gather_rows(emb, edges[:, 1]), zeta)
    return ad.scale(ad.neg(d * d) + r, 1.0 / t)


def lp_scores(emb, edges, zeta: float, r: float, t: float) -> np.ndarray:
    """Fermi-Dirac probabilities for the given node pairs."""
    return ad.sigmoid(_edge_logits(ad.as_tensor(emb), edges, zeta, r, t)).data


def lp_loss(emb, pos_edges, neg_edges, zeta: float, r: float, t: float) -> Tensor:
    """Mean binary cross-entropy of the decoder over positives and negatives."""
    pos_edges = np.asarray(pos_edges).reshape(-1, 2)
    neg_edges = np.asarray(neg_edges).reshape(-1, 2)
    if pos_edges.size == 0 or neg_edges.size == 0:
        raise ValueError("both edge sets must be nonempty")
    emb = ad.as_tensor(emb)
    pos = ad.softplus(ad.neg(_edge_logits(emb, pos_edges, zeta, r, t)))
    neg = ad.softplus(_edge_logits(emb, neg_edges, zeta, r, t))
    total = ad.tsum(pos) + ad.tsum(neg)
    return ad.scale(total, 1.0 / (len(pos_edges) + len(neg_edges)))


def nc_logits(emb, zeta: float, W_cls, b_cls) -> Tensor:
    """Per-node class scores: affine map on the origin tangent coordinates."""
    tang = log_origin(ad.as_tensor(emb), zeta)
    return ad.matmul(tang, ad.as_tensor(W_cls)) + ad.as_tensor(b_cls)


def nc_loss(logits: Tensor, labels: np.ndarray, node_ids: np.ndarray) -> Tensor:
    """Softmax cross-entropy over the given node subset."""
    node_ids = np.asarray(node_ids, dtype=np.int64)
    if node_ids.size == 0:
        raise ValueError("empty node subset")
    rows = ad.gather_rows(logits, node_ids)
    lse = ad.logsumexp(rows, axis=-1, keepdims=False)
    n_classes = logits.data.shape[-1]
    onehot = np.zeros((node_ids.size, n_classes))
    onehot[np.arange(node_ids.size), np.asarray(labels)[node_ids]] = 1.0
    true_logit = ad.tsum(rows * Tensor(onehot), axis=-1, keepdims=False)
    return ad.tmean(lse - true_logit)
