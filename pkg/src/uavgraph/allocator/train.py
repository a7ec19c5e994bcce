"""Joint loss, full-batch training and single-graph inference."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..energy import Allocation, EnergyModelConfig, collection_energy_grad
from ..graph import NetworkGraph
from ..routing import Route
from .features import NodeFeatures, encode_features, neighbor_weights
from .model import (
    AllocatorParams,
    allocation_from_logits,
    init_params,
    model_backward,
    model_forward,
)
from .node2vec import Node2VecHyper, node2vec_baseline

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 0.01
    episodes: int = 500
    seed: int = 42
    init_scale: float = 0.1
    hidden: int = 32
    loss_weights: tuple[float, float, float] = (1.0, 0.1, 10.0)
    node2vec: Node2VecHyper = field(default_factory=Node2VecHyper)

    def __post_init__(self) -> None:
        if not isinstance(self.learning_rate, (int, float)) or not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be a positive number, got {self.learning_rate!r}")
        if not isinstance(self.episodes, int) or self.episodes < 1:
            raise ValueError(f"episodes must be a positive integer, got {self.episodes!r}")
        if not isinstance(self.hidden, int) or self.hidden < 1:
            raise ValueError(f"hidden must be a positive integer, got {self.hidden!r}")
        if len(self.loss_weights) != 3 or any(w < 0 for w in self.loss_weights):
            raise ValueError("loss_weights must be three non-negative numbers")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHyper":
        d = dict(d)
        if "node2vec" in d:
            d["node2vec"] = Node2VecHyper(**d["node2vec"])
        if "loss_weights" in d:
            d["loss_weights"] = tuple(float(x) for x in d["loss_weights"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "episodes": self.episodes,
            "seed": self.seed,
            "init_scale": self.init_scale,
            "hidden": self.hidden,
            "loss_weights": list(self.loss_weights),
            "node2vec": dict(self.node2vec.__dict__),
        }


@dataclass(frozen=True)
class TrainRecord:
    episode: int
    mean_abs_gap: float
    loss: float


# --- batches ----------------------------------------------------------------


@dataclass(eq=False)
class GraphBatch:
    """Equal-shaped graphs stacked for vectorised forward/backward.

    Besides the model inputs this holds what the joint loss needs to replay
    the energy simulator: per-monitor task sizes, which monitors are served
    before the charging stop, and the fixed flight energy of each segment.
    """

    X: np.ndarray  # (B, n, 8)
    M: np.ndarray  # (B, n, n)
    mon_idx: np.ndarray  # (N,)
    tasks: np.ndarray  # (B, N) MB
    in_pre: np.ndarray  # (B, N) 1.0 if collected before charging
    flight_pre: np.ndarray  # (B,)
    flight_post: np.ndarray  # (B,)
    emb: np.ndarray | None = None  # (B, n, d)

    def __len__(self) -> int:
        return self.X.shape[0]


def _route_split(graph: NetworkGraph, route: Route, cfg: EnergyModelConfig):
    in_pre = np.zeros(graph.n_monitors)
    pos = {m: i for i, m in enumerate(graph.monitor_ids)}
    for i, v in enumerate(route.visit_order):
        if i <= route.charge_after:
            in_pre[pos[v]] = 1.0
    fp = fq = 0.0
    seen_charge = False
    for a, b in route.legs(graph):
        e = cfg.joules_per_meter * graph.distance(a, b)
        if seen_charge:
            fq += e
        else:
            fp += e
        if b == graph.charge_id:
            seen_charge = True
    return in_pre, fp, fq


def make_batches(
    instances: Sequence[tuple[NetworkGraph, Route]],
    cfg: EnergyModelConfig,
    variant: str = "gnn",
    n2v: Node2VecHyper | None = None,
) -> list[GraphBatch]:
    """Group instances by (node count, monitor ids) and stack each group."""
    groups: dict[tuple, list[tuple[NetworkGraph, Route]]] = {}
    for g, r in instances:
        groups.setdefault((len(g.nodes), g.monitor_ids), []).append((g, r))
    batches = []
    for (_, mon_ids), items in groups.items():
        X, M, T, P, FP, FQ, E = [], [], [], [], [], [], []
        for g, r in items:
            X.append(encode_features(g, r, cfg).values)
            M.append(neighbor_weights(g))
            T.append(g.task_sizes)
            in_pre, fp, fq = _route_split(g, r, cfg)
            P.append(in_pre)
            FP.append(fp)
            FQ.append(fq)
            if variant == "node2vec":
                E.append(node2vec_baseline(g, r, n2v or Node2VecHyper()))
        batches.append(
            GraphBatch(
                np.stack(X), np.stack(M), np.array(mon_ids), np.stack(T), np.stack(P),
                np.array(FP), np.array(FQ), np.stack(E) if E else None,
            )
        )
    return batches


# --- joint loss -------------------------------------------------------------


@dataclass
class LossParts:
    loss: np.ndarray  # (B,)
    estimate: np.ndarray  # (B,) J
    consumed: np.ndarray  # (B,) J
    remaining: np.ndarray  # (B,) J
    deficit: np.ndarray  # (B,) J
    bandwidth: np.ndarray  # (B, N)
    power: np.ndarray  # (B, N)


def energy_scale(cfg: EnergyModelConfig) -> float:
    """Normaliser for energies inside the loss."""
    return cfg.battery_capacity


def batch_loss(
    params: AllocatorParams,
    batch: GraphBatch,
    cfg: EnergyModelConfig,
    weights: tuple[float, float, float] = (1.0, 0.1, 10.0),
    *,
    with_grad: bool = True,
):
    """Joint loss per instance and, optionally, the gradient of its sum.

    With ``S`` the energy scale, ``C`` measured consumption, ``D`` battery
    deficit and ``est`` the estimate (all J)::

        loss = l1 * ((est - C) / S)**2 + l2 * C / S + l3 * (D / S)**2

    ``C`` and ``D`` come from replaying the simulator on the model's own
    allocation, so gradients reach the allocation head through the
    collection-energy formula. Flight energy ``F`` is constant in the
    parameters; the estimate head predicts ``est / F``.
    """
    l1, l2, l3 = weights
    S = energy_scale(cfg)
    cap = cfg.battery_capacity
    out, est_n, cache = model_forward(params, batch.X, batch.M, batch.mon_idx, batch.emb)
    bw, power = allocation_from_logits(out, cfg.max_tx_power)
    e, de_db, de_dp = collection_energy_grad(batch.tasks, bw, power, cfg)
    col_pre = (e * batch.in_pre).sum(axis=1)
    col_post = (e * (1 - batch.in_pre)).sum(axis=1)
    flight = batch.flight_pre + batch.flight_post
    pre = batch.flight_pre + col_pre
    post = batch.flight_post + col_post
    consumed = pre + post
    interrupted = pre > cap
    remaining = np.where(interrupted, cap - consumed, cap - post)
    deficit = np.maximum(0.0, -remaining)
    est = flight * est_n
    gap = est - consumed
    loss = l1 * (gap / S) ** 2 + l2 * consumed / S + l3 * (deficit / S) ** 2
    parts = LossParts(loss, est, consumed, remaining, deficit, bw, power)
    if not with_grad:
        return parts, None

    d_est_n = 2 * l1 * gap / S**2 * flight
    d_consumed = -2 * l1 * gap / S**2 + l2 / S
    d_deficit = 2 * l3 * deficit / S**2
    # deficit is consumed - cap when interrupted before charging, else post - cap
    active = (deficit > 0)[:, None]
    dD_de = np.where(interrupted[:, None], 1.0, 1 - batch.in_pre) * active
    d_e = d_consumed[:, None] + d_deficit[:, None] * dD_de
    d_bw = d_e * de_db
    d_power = d_e * de_dp
    d_logit_bw = bw * (d_bw - (bw * d_bw).sum(axis=1, keepdims=True))
    s = power / cfg.max_tx_power
    d_logit_p = d_power * cfg.max_tx_power * s * (1 - s)
    d_out = np.stack([d_logit_bw, d_logit_p], axis=-1)
    grads = model_backward(params, batch.M, batch.mon_idx, cache, d_out, d_est_n)
    return parts, grads


def total_loss(params, batches, cfg, weights, *, with_grad=True):
    """Mean joint loss over all batches and its gradient."""
    count = sum(len(b) for b in batches)
    total = 0.0
    grads = None
    for b in batches:
        parts, g = batch_loss(params, b, cfg, weights, with_grad=with_grad)
        total += float(parts.loss.sum())
        if g is not None:
            grads = g if grads is None else {k: grads[k] + g[k] for k in grads}
    if grads is not None:
        grads = {k: v / count for k, v in grads.items()}
    return total / count, grads


def joint_loss(
    allocation: Allocation,
    estimate: float,
    measurement,
    cfg: EnergyModelConfig,
    weights: tuple[float, float, float] = (1.0, 0.1, 10.0),
) -> float:
    """Joint loss of one allocation/estimate against a simulator report."""
    l1, l2, l3 = weights
    S = energy_scale(cfg)
    c = measurement.consumed
    return l1 * ((estimate - c) / S) ** 2 + l2 * c / S + l3 * (measurement.deficit / S) ** 2


def mean_abs_gap(params: AllocatorParams, batches: list[GraphBatch], cfg: EnergyModelConfig) -> float:
    gaps = []
    for b in batches:
        parts, _ = batch_loss(params, b, cfg, with_grad=False)
        gaps.append(np.abs(parts.estimate - parts.consumed))
    return float(np.concatenate(gaps).mean())


# --- training ---------------------------------------------------------------


def train(
    instances: Sequence[tuple[NetworkGraph, Route]],
    cfg: EnergyModelConfig,
    hyper: TrainHyper = TrainHyper(),
    *,
    variant: str = "gnn",
    validation: Sequence[tuple[NetworkGraph, Route]] | None = None,
) -> tuple[AllocatorParams, list[TrainRecord]]:
    """Full-batch gradient descent on the joint loss.

    One record per episode: the training loss before the update and the
    validation gap after it. ``validation`` defaults to the training set.
    """
    if not instances:
        raise ValueError("need at least one training instance")
    n2v = hyper.node2vec
    train_b = make_batches(instances, cfg, variant, n2v)
    val_b = make_batches(validation, cfg, variant, n2v) if validation else train_b
    embed_dim = n2v.dim
    params = init_params(variant, hyper.seed, hyper.init_scale, hyper.hidden, embed_dim)
    records = []
    for ep in range(1, hyper.episodes + 1):
        loss, grads = total_loss(params, train_b, cfg, hyper.loss_weights)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingDiverged(f"{variant}: non-finite loss/gradient at episode {ep} (loss={loss})")
        for k in params.arrays:
            params.arrays[k] -= hyper.learning_rate * grads[k]
        gap = mean_abs_gap(params, val_b, cfg)
        records.append(TrainRecord(ep, gap, loss))
    log.info("%s: gap %.1f J -> %.1f J over %d episodes", variant, records[0].mean_abs_gap, records[-1].mean_abs_gap, len(records))
    return params, records


def forward(
    params: AllocatorParams,
    features: NodeFeatures,
    graph: NetworkGraph,
    cfg: EnergyModelConfig,
    embedding: np.ndarray | None = None,
) -> tuple[Allocation, float]:
    """Allocation and consumed-energy estimate (J) for one graph."""
    X = features.values[None]
    M = neighbor_weights(graph)[None]
    emb = embedding[None] if embedding is not None else None
    out, est_n, _ = model_forward(params, X, M, np.array(graph.monitor_ids), emb)
    bw, power = allocation_from_logits(out, cfg.max_tx_power)
    return Allocation(bw[0], power[0]), float(est_n[0] * features.flight_energy)


def allocate(
    params: AllocatorParams, graph: NetworkGraph, route: Route, cfg: EnergyModelConfig, hyper: TrainHyper = TrainHyper()
) -> tuple[Allocation, float]:
    """Encode features (and embeddings if needed) and run :func:`forward`."""
    feats = encode_features(graph, route, cfg)
    emb = node2vec_baseline(graph, route, hyper.node2vec) if params.variant == "node2vec" else None
    return forward(params, feats, graph, cfg, emb)


def gat_baseline_forward(params, features, graph, cfg):
    if params.variant != "gat":
        raise ValueError("expected GAT parameters")
    return forward(params, features, graph, cfg)
