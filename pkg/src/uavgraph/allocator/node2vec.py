"""Node2Vec: second-order biased random walks plus skip-gram with negative sampling."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..graph import NetworkGraph
from ..routing import Route


@dataclass(frozen=True)
class Node2VecHyper:
    walks_per_node: int = 20
    walk_length: int = 10
    window: int = 5
    dim: int = 16
    p: float = 1.0
    q: float = 1.0
    negatives: int = 5
    epochs: int = 3
    learning_rate: float = 0.025
    seed: int = 42


def _step_probs(adj: np.ndarray, prev: int | None, cur: int, p: float, q: float) -> np.ndarray:
    w = adj[cur].copy()
    if prev is None:
        return w
    # return (1/p), stay at distance 1 from prev (1), move outward (1/q)
    bias = np.where(adj[prev] > 0, 1.0, 1.0 / q)
    bias[prev] = 1.0 / p
    return w * bias


def random_walks(adj: np.ndarray, hyper: Node2VecHyper, rng: np.random.Generator) -> list[list[int]]:
    n = adj.shape[0]
    walks = []
    for _ in range(hyper.walks_per_node):
        for start in range(n):
            walk = [start]
            prev = None
            while len(walk) < hyper.walk_length:
                cur = walk[-1]
                probs = _step_probs(adj, prev, cur, hyper.p, hyper.q)
                total = probs.sum()
                if total <= 0:
                    break
                nxt = int(rng.choice(n, p=probs / total))
                walk.append(nxt)
                prev = cur
            walks.append(walk)
    return walks


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def node2vec_embed(adj: np.ndarray, hyper: Node2VecHyper = Node2VecHyper()) -> np.ndarray:
    """Embed the nodes of a weighted adjacency matrix; returns ``(n, dim)``.

    The embedding is the mean of the input and output skip-gram vectors, so
    dot products reflect direct co-occurrence as well as shared contexts.
    """
    adj = np.asarray(adj, dtype=np.float64)
    n = adj.shape[0]
    rng = np.random.default_rng(hyper.seed)
    walks = random_walks(adj, hyper, rng)

    pairs = []
    for walk in walks:
        for i, c in enumerate(walk):
            lo, hi = max(0, i - hyper.window), min(len(walk), i + hyper.window + 1)
            pairs.extend((c, walk[j]) for j in range(lo, hi) if j != i)
    counts = np.bincount([v for w in walks for v in w], minlength=n).astype(np.float64)
    noise = counts**0.75
    noise = noise / noise.sum() if noise.sum() > 0 else np.full(n, 1.0 / n)

    w_in = rng.uniform(-0.5, 0.5, size=(n, hyper.dim)) / hyper.dim
    w_out = np.zeros((n, hyper.dim))
    if not pairs:
        return w_in
    pairs_arr = np.array(pairs, dtype=np.int64)
    for epoch in range(hyper.epochs):
        lr = hyper.learning_rate * (1.0 - epoch / hyper.epochs)
        order = rng.permutation(len(pairs_arr))
        negs = rng.choice(n, size=(len(pairs_arr), hyper.negatives), p=noise)
        for idx in order:
            center, ctx = pairs_arr[idx]
            targets = np.concatenate(([ctx], negs[idx]))
            labels = np.zeros(len(targets))
            labels[0] = 1.0
            v = w_in[center]
            u = w_out[targets]
            g = (labels - _sigmoid(u @ v)) * lr
            w_in[center] += g @ u
            np.add.at(w_out, targets, np.outer(g, v))
    return 0.5 * (w_in + w_out)


def tour_adjacency(graph: NetworkGraph, route: Route) -> tuple[np.ndarray, list[int]]:
    """Adjacency of the flown tour in canonical (visit) order.

    Returns the matrix and the node id at each canonical index; nodes not on
    the tour (the operator) come last and stay isolated.
    """
    stops = route.stops(graph)[:-1]
    canon = list(dict.fromkeys(stops))
    canon += [n.id for n in graph.nodes if n.id not in canon]
    where = {nid: i for i, nid in enumerate(canon)}
    adj = np.zeros((len(canon), len(canon)))
    cyc = stops + [stops[0]]
    for a, b in zip(cyc[:-1], cyc[1:]):
        adj[where[a], where[b]] = adj[where[b], where[a]] = 1.0
    return adj, canon


def node2vec_baseline(graph: NetworkGraph, route: Route, hyper: Node2VecHyper = Node2VecHyper()) -> np.ndarray:
    """Per-node embeddings ``(n_nodes, dim)`` indexed by node id.

    Walks run over the tour in visit order, so relabelling the monitors (and
    the route with them) permutes the rows and nothing else.
    """
    adj, canon = tour_adjacency(graph, route)
    emb = _cached_embed(adj.tobytes(), adj.shape[0], hyper)
    out = np.zeros_like(emb)
    out[canon] = emb
    return out


@lru_cache(maxsize=64)
def _cached_embed(adj_bytes: bytes, n: int, hyper: Node2VecHyper) -> np.ndarray:
    # every tour in canonical order is the same cycle, so this hits almost always
    emb = node2vec_embed(np.frombuffer(adj_bytes).reshape(n, n), hyper)
    emb.setflags(write=False)
    return emb
