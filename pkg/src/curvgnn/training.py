"""Training orchestration: cooperative curvature search plus task training.

Each epoch: read the discretized curvature state, pick a joint action by
epsilon-greedy play, run one supervised step of the network, optionally
re-estimate curvature and remap the previous embeddings, score both
moves on the validation split, and apply a Nash-Q update. Once the two
agents sit at a (KEEP, HOLD) equilibrium for `eq_patience` consecutive
epochs the curvatures freeze and plain supervised training continues.

Determinism: every random choice draws from a named stream spawned from
the run seed, so a fixed seed reproduces splits, initialization, dropout,
negative samples, exploration, and the emitted records bit-for-bit
(wall-clock timings excepted).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import curvature, graphs, layers, nashq
from .autodiff import Adam, backward
from .manifold import DEFAULT_ZETA_MAX, DEFAULT_ZETA_MIN

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; a diagnostic dump is written when possible."""


@dataclass
class RunConfig:
    # data
    edge_path: str | None = None
    feature_path: str | None = None
    label_path: str | None = None
    synthetic_tree_depth: int | None = None  # alternative to file paths
    task: str = "lp"
    # model
    dim: int = 16
    n_layers: int = 2
    dropout: float = 0.5
    activation: str = "relu"
    fd_r: float = 2.0
    fd_t: float = 1.0
    normalize_features: bool = True
    # optimization
    lr: float = 3e-4
    weight_decay: float = 5e-3
    epochs: int = 500
    early_stop_patience: int = 100
    # curvature search
    zeta0: float = 1.0
    zeta_min: float = DEFAULT_ZETA_MIN
    zeta_max: float = DEFAULT_ZETA_MAX
    gamma: float = 0.2
    alpha: float = 0.5
    beta: float = 0.9
    eps_start: float = 0.9
    eps_floor: float = 0.1
    eps_decay: float = 0.99
    kappa_samples: int = 2
    eq_patience: int = 20
    rl_enabled: bool = True
    state_bin_width: float = 0.1
    # splits
    val_frac: float = 0.05
    test_frac: float = 0.10
    nc_train_frac: float = 0.70
    nc_val_frac: float = 0.15
    # bookkeeping
    seed: int = 0
    distortion_every: int = 10

    def validate(self) -> None:
        if self.task not in ("lp", "nc"):
            raise ValueError(f"unknown task {self.task!r}")
        if not (1e-4 <= self.lr <= 5e-4):
            raise ValueError("lr must lie in [1e-4, 5e-4]")
        if not (0.2 <= self.alpha <= 0.9):
            raise ValueError("alpha must lie in [0.2, 0.9]")
        if not (0.0 <= self.beta < 1.0):
            raise ValueError("beta must lie in [0, 1)")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (0 < self.zeta_min <= self.zeta0 <= self.zeta_max):
            raise ValueError("need 0 < zeta_min <= zeta0 <= zeta_max")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    test_metric: float | None
    zetas: list
    action_hgnn: str | None
    action_ace: str | None
    r_hgnn: float
    r_ace: float
    distortion: float | None
    wall_ms: float


@dataclass
class TrainResult:
    records: list
    trace: list  # (epoch, layer, zeta, action_hgnn, action_ace, r_hgnn, r_ace)
    best_val_metric: float
    best_epoch: int
    test_metric: float
    final_embeddings: np.ndarray
    final_zetas: list
    final_distortion: float
    freeze_epoch: int | None
    config: RunConfig
    checkpoint: dict


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def roc_auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative.

    Computed from average ranks (ties credit 0.5 per pair).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must align")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    ranks[order] = np.arange(1, scores.size + 1)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = ranks[labels].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def micro_f1(pred_classes, true_classes) -> float:
    """Micro-averaged F1; equals accuracy for single-label classification."""
    pred = np.asarray(pred_classes)
    true = np.asarray(true_classes)
    if pred.shape != true.shape or pred.size == 0:
        raise ValueError("predictions and targets must align and be nonempty")
    tp = int((pred == true).sum())
    fp = pred.size - tp  # every wrong prediction is one FP and one FN
    precision = tp / (tp + fp)
    recall = tp / (tp + fp)
    if precision + recall == 0:
        return 0.0
    return float(2 * precision * recall / (precision + recall))


# ---------------------------------------------------------------------------
# data plumbing
# ---------------------------------------------------------------------------

def synthetic_tree_dataset(depth: int = 7, feature_dim: int = 16,
                           seed: int = 0) -> graphs.Graph:
    """Balanced binary tree with random-plus-degree node features."""
    g = graphs.balanced_binary_tree(depth)
    g.features = graphs.random_plus_degree_features(g, feature_dim, seed)
    return g


def _cap_feature_norms(feats: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(feats, axis=1, keepdims=True)
    return feats / np.maximum(norms, 1.0)


def _load_dataset(config: RunConfig) -> graphs.Graph:
    if config.synthetic_tree_depth is not None:
        return synthetic_tree_dataset(config.synthetic_tree_depth,
                                      config.dim, seed=config.seed)
    if config.edge_path is None:
        raise graphs.DataError("no dataset: give edge/feature paths or a synthetic tree")
    return graphs.load_graph(config.edge_path, config.feature_path, config.label_path)


@dataclass
class _Task:
    """Evaluation context shared by training, reward, and final eval."""

    kind: str
    msg_graph: graphs.Graph
    full_graph: graphs.Graph
    edge_split: graphs.EdgeSplit | None = None
    node_split: graphs.NodeSplit | None = None

    def val_metric(self, emb: np.ndarray, zeta: float, model) -> float:
        if self.kind == "lp":
            return self._lp_metric(emb, zeta, model,
                                   self.edge_split.val_pos, self.edge_split.val_neg)
        return self._nc_metric(emb, zeta, model, self.node_split.val)

    def test_metric(self, emb: np.ndarray, zeta: float, model) -> float:
        if self.kind == "lp":
            return self._lp_metric(emb, zeta, model,
                                   self.edge_split.test_pos, self.edge_split.test_neg)
        return self._nc_metric(emb, zeta, model, self.node_split.test)

    def _lp_metric(self, emb, zeta, model, pos, neg) -> float:
        scores = layers.lp_scores(emb, np.concatenate([pos, neg]), zeta,
                                  model.config.fd_r, model.config.fd_t)
        labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        return roc_auc(scores, labels)

    def _nc_metric(self, emb, zeta, model, node_ids) -> float:
        logits = layers.nc_logits(emb, zeta, model.W_cls, model.b_cls).data
        pred = logits[node_ids].argmax(axis=1)
        return micro_f1(pred, self.full_graph.labels[node_ids])


def _build_task(config: RunConfig, g: graphs.Graph) -> _Task:
    if config.task == "lp":
        split = graphs.make_lp_split(g, config.val_frac, config.test_frac, config.seed)
        return _Task("lp", msg_graph=g.with_edges(split.train_pos), full_graph=g,
                     edge_split=split)
    split = graphs.make_nc_split(g, config.nc_train_frac, config.nc_val_frac,
                                 seed=config.seed)
    return _Task("nc", msg_graph=g, full_graph=g, node_split=split)


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def _snapshot_model(model: layers.HyperbolicGNN) -> dict:
    blob = {"layers": [], "zetas": [float(z) for z in model.zetas]}
    for lp in model.layers:
        blob["layers"].append({
            "W": lp.W.data.tolist(), "b": lp.b.data.tolist(),
            "att_w1": lp.att_w1.data.tolist(), "att_b1": lp.att_b1.data.tolist(),
            "att_w2": lp.att_w2.data.tolist(), "att_b2": lp.att_b2.data.tolist(),
        })
    if model.W_cls is not None:
        blob["W_cls"] = model.W_cls.data.tolist()
        blob["b_cls"] = model.b_cls.data.tolist()
    return blob


def _restore_model(model: layers.HyperbolicGNN, blob: dict) -> None:
    for lp, saved in zip(model.layers, blob["layers"]):
        for name in ("W", "b", "att_w1", "att_b1", "att_w2", "att_b2"):
            getattr(lp, name).data = np.asarray(saved[name], dtype=np.float64)
    model.set_zetas(blob["zetas"])
    if model.W_cls is not None:
        model.W_cls.data = np.asarray(blob["W_cls"], dtype=np.float64)
        model.b_cls.data = np.asarray(blob["b_cls"], dtype=np.float64)


def build_checkpoint(config: RunConfig, model, optimizer, tables, rng_states,
                     epoch: int, best_val: float) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "model": _snapshot_model(model),
        "optimizer": optimizer.state_dict(),
        "qtables": tables.to_jsonable(),
        "rng_states": rng_states,
        "epoch": epoch,
        "best_val_metric": best_val,
    }


def save_checkpoint(blob: dict, path) -> None:
    Path(path).write_text(json.dumps(blob))


def load_checkpoint(path) -> dict:
    blob = json.loads(Path(path).read_text())
    if blob.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('format_version')}")
    return blob


def model_from_checkpoint(blob: dict):
    config = RunConfig(**blob["config"])
    model, task, _ = _prepare(config)
    _restore_model(model, blob["model"])
    return config, model, task


def _prepare(config: RunConfig):
    """Load data, build split and model; shared by train() and eval paths."""
    config.validate()
    g = _load_dataset(config)
    if g.features is None:
        raise graphs.DataError("training requires node features")
    if config.normalize_features:
        g = graphs.Graph(g.n_nodes, g.neighbors,
                         _cap_feature_norms(g.features), g.labels)
    task = _build_task(config, g)
    n_classes = None
    if config.task == "nc":
        if g.labels is None:
            raise graphs.DataError("node classification requires labels")
        n_classes = int(g.labels.max()) + 1
    mcfg = layers.ModelConfig(n_layers=config.n_layers, dim=config.dim,
                              dropout=config.dropout, activation=config.activation,
                              task=config.task, fd_r=config.fd_r, fd_t=config.fd_t)
    init_rng = np.random.default_rng([config.seed, 1])
    model = layers.HyperbolicGNN(g.features.shape[1], mcfg, config.zeta0,
                                 init_rng, n_classes=n_classes)
    return model, task, g


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------

def train(config: RunConfig, out_dir=None) -> TrainResult:
    model, task, g = _prepare(config)
    msg_g = task.msg_graph
    edges = layers.message_edges(msg_g)
    optimizer = Adam(model.parameters(), lr=config.lr,
                     weight_decay=config.weight_decay)
    tables = nashq.QTables()
    schedule = nashq.EpsilonSchedule(config.eps_start, config.eps_floor,
                                     config.eps_decay)

    drop_rng = np.random.default_rng([config.seed, 2])
    neg_rng = np.random.default_rng([config.seed, 3])
    rl_rng = np.random.default_rng([config.seed, 4])

    def eval_embeddings() -> np.ndarray:
        return model.forward(msg_g, training=False, edges=edges).data

    def train_step() -> float:
        emb = model.forward(msg_g, training=True, rng=drop_rng, edges=edges)
        zeta_out = model.zetas[-1]
        if config.task == "lp":
            pos = task.edge_split.train_pos
            neg = graphs.sample_negative_edges(task.full_graph, len(pos), neg_rng)
            loss = layers.lp_loss(emb, pos, neg, zeta_out,
                                  config.fd_r, config.fd_t)
        else:
            logits = layers.nc_logits(emb, zeta_out, model.W_cls, model.b_cls)
            loss = layers.nc_loss(logits, task.full_graph.labels,
                                  task.node_split.train)
        optimizer.zero_grad()
        backward(loss)
        optimizer.step()
        return float(loss.data)

    def discretize(zs):
        return nashq.discretize_state(zs, config.zeta_min, config.zeta_max,
                                      config.state_bin_width)

    records: list[EpochRecord] = []
    trace: list[tuple] = []
    eq_history: list[tuple] = []
    frozen = not config.rl_enabled
    freeze_epoch: int | None = None
    zeta_ace = list(model.zetas)

    emb_prev = eval_embeddings()
    zeta_prev_out = model.zetas[-1]
    metric_prev = task.val_metric(emb_prev, zeta_prev_out, model)

    best_val = -np.inf
    best_epoch = 0
    best_blob: dict | None = None
    since_best = 0

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        state = discretize(model.zetas)
        action = None
        if not frozen:
            eps_t = schedule.value(epoch - 1)
            action = nashq.epsilon_greedy_joint(tables, state, eps_t, rl_rng)

        loss = train_step()
        if not np.isfinite(loss):
            _dump_divergence(out_dir, epoch, records, model)
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
        emb_curr = eval_embeddings()
        zeta_curr_out = model.zetas[-1]  # the curvature emb_curr lives at
        metric_curr = task.val_metric(emb_curr, zeta_curr_out, model)

        # snapshot now, before any curvature adoption below: the best state
        # must pair these parameters with the curvatures they were scored at
        if metric_curr > best_val:
            best_val = metric_curr
            best_epoch = epoch
            best_blob = _snapshot_model(model)
            since_best = 0
        else:
            since_best += 1

        r_hgnn, r_ace = metric_curr - metric_prev, 0.0
        if action is not None and action[1] == nashq.AceAction.EXPLORE:
            est = curvature.estimate_kappa(msg_g, emb_prev, zeta_prev_out,
                                           n_s=config.kappa_samples,
                                           seed=config.seed * 100003 + epoch)
            zeta_ace = [curvature.update_curvature(z, est.kappa, config.gamma,
                                                   config.zeta_min, config.zeta_max)
                        for z in model.zetas]
            remapped = curvature.remap_embeddings(emb_prev, zeta_prev_out,
                                                  zeta_ace[-1])
            metric_remap = task.val_metric(remapped, zeta_ace[-1], model)
            r_hgnn, r_ace = nashq.compute_rewards(metric_curr, metric_prev,
                                                  metric_remap, metric_prev)

        if action is not None:
            if action[0] == nashq.HgnnAction.ADOPT:
                zeta_next = list(zeta_ace)
            else:
                zeta_next = list(model.zetas)
            next_state = discretize(zeta_next)
            nashq.q_update(tables, state, action, (r_hgnn, r_ace), next_state,
                           config.alpha, config.beta)
            model.set_zetas(zeta_next)
            sol = tables.solve(next_state)
            greedy = None
            if sol.pure is not None:
                greedy = (nashq.HgnnAction(sol.pure[0]), nashq.AceAction(sol.pure[1]))
            eq_history.append((next_state, greedy))
            if nashq.equilibrium_reached(eq_history, config.eq_patience):
                frozen = True
                freeze_epoch = epoch
                log.info("Nash equilibrium reached at epoch %d; curvature frozen "
                         "at %s", epoch, model.zetas)

        distortion_val = None
        if config.distortion_every and epoch % config.distortion_every == 0:
            rep = curvature.embedding_distortion(msg_g, emb_curr, zeta_curr_out)
            distortion_val = rep.mean_distortion

        wall_ms = (time.perf_counter() - t0) * 1000.0
        records.append(EpochRecord(
            epoch=epoch, train_loss=loss, val_metric=metric_curr,
            test_metric=None, zetas=[float(z) for z in model.zetas],
            action_hgnn=action[0].name if action else None,
            action_ace=action[1].name if action else None,
            r_hgnn=r_hgnn, r_ace=r_ace, distortion=distortion_val,
            wall_ms=wall_ms))
        for li, z in enumerate(model.zetas):
            trace.append((epoch, li, float(z),
                          action[0].name if action else "",
                          action[1].name if action else "",
                          r_hgnn, r_ace))

        metric_prev = metric_curr
        emb_prev = emb_curr
        zeta_prev_out = zeta_curr_out

        if since_best >= config.early_stop_patience:
            log.info("early stop at epoch %d (no val improvement for %d epochs)",
                     epoch, config.early_stop_patience)
            break

    if best_blob is not None:
        _restore_model(model, best_blob)
    final_emb = eval_embeddings()
    # Final eval is the only place test-split edges are read. For link
    # prediction the test pairs are scored on embeddings recomputed over the
    # full observed graph; training, rewards, and model selection only ever
    # saw the train graph.
    if task.kind == "lp":
        eval_emb = model.forward(task.full_graph, training=False).data
    else:
        eval_emb = final_emb
    test_metric = task.test_metric(eval_emb, model.zetas[-1], model)
    final_distortion = curvature.embedding_distortion(
        msg_g, final_emb, model.zetas[-1]).mean_distortion

    rng_states = {
        "dropout": drop_rng.bit_generator.state,
        "negatives": neg_rng.bit_generator.state,
        "rl": rl_rng.bit_generator.state,
    }
    checkpoint = build_checkpoint(config, model, optimizer, tables, rng_states,
                                  best_epoch, best_val)
    result = TrainResult(records=records, trace=trace, best_val_metric=best_val,
                         best_epoch=best_epoch, test_metric=test_metric,
                         final_embeddings=final_emb,
                         final_zetas=[float(z) for z in model.zetas],
                         final_distortion=final_distortion,
                         freeze_epoch=freeze_epoch, config=config,
                         checkpoint=checkpoint)
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def _dump_divergence(out_dir, epoch: int, records, model) -> None:
    if out_dir is None:
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    dump = {
        "failed_epoch": epoch,
        "zetas": [float(z) for z in model.zetas],
        "recent_records": [asdict(r) for r in records[-5:]],
    }
    (path / "diagnostic.json").write_text(json.dumps(dump, indent=2))


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def write_outputs(result: TrainResult, out_dir) -> None:
    """metrics.jsonl, trace.csv, checkpoint.json, embeddings.npy, result.json."""
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for rec in result.records:
            fh.write(json.dumps(asdict(rec)) + "\n")
    with open(path / "trace.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,layer,zeta,action_hgnn,action_ace,r_hgnn,r_ace\n")
        for row in result.trace:
            fh.write(",".join(str(x) for x in row) + "\n")
    save_checkpoint(result.checkpoint, path / "checkpoint.json")
    np.save(path / "embeddings.npy", result.final_embeddings)
    summary = {
        "best_val_metric": result.best_val_metric,
        "best_epoch": result.best_epoch,
        "test_metric": result.test_metric,
        "final_zetas": result.final_zetas,
        "final_distortion": result.final_distortion,
        "freeze_epoch": result.freeze_epoch,
        "epochs_run": len(result.records),
    }
    (path / "result.json").write_text(json.dumps(summary, indent=2))


def evaluate_checkpoint(path) -> dict:
    """Reload a checkpoint and score the test split it was trained against."""
    blob = load_checkpoint(path)
    config, model, task = model_from_checkpoint(blob)
    graph = task.full_graph if task.kind == "lp" else task.msg_graph
    emb = model.forward(graph, training=False).data
    test = task.test_metric(emb, model.zetas[-1], model)
    return {"test_metric": test, "zetas": model.zetas,
            "best_val_metric": blob["best_val_metric"], "task": config.task}
