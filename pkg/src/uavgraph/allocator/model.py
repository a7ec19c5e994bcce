"""Allocator networks with hand-written backpropagation.

Three bodies share the same two heads:

* ``gnn``      two message-passing layers, distance-weighted mean aggregation
* ``gat``      two single-head graph attention layers
* ``node2vec`` fixed Node2Vec embeddings, no trainable body

Every layer input is ``[hidden || route features]`` so the stage-one route
re-enters before each layer. Shapes are batched: ``(B, n, ·)`` over graphs of
equal size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import N_FEATURES, ROUTE_COLUMNS

VARIANTS = ("gnn", "gat", "node2vec")
N_ROUTE = len(ROUTE_COLUMNS)
LEAKY_SLOPE = 0.2


class NonFiniteParams(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class AllocatorParams:
    variant: str
    arrays: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "AllocatorParams":
        return AllocatorParams(self.variant, {k: v.copy() for k, v in self.arrays.items()})

    def check_finite(self) -> None:
        for k, v in self.arrays.items():
            if not np.all(np.isfinite(v)):
                raise NonFiniteParams(f"parameter {k} has non-finite entries")

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])


def param_shapes(variant: str, hidden: int = 32, embed_dim: int = 16) -> dict[str, tuple[int, ...]]:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    shapes: dict[str, tuple[int, ...]] = {}
    in1 = N_FEATURES + N_ROUTE
    in2 = hidden + N_ROUTE
    if variant == "gnn":
        for layer, fan_in in ((1, in1), (2, in2)):
            shapes[f"mp{layer}_self"] = (fan_in, hidden)
            shapes[f"mp{layer}_neigh"] = (fan_in, hidden)
            shapes[f"mp{layer}_bias"] = (hidden,)
        body_out = hidden
    elif variant == "gat":
        for layer, fan_in in ((1, in1), (2, in2)):
            shapes[f"gat{layer}_w"] = (fan_in, hidden)
            shapes[f"gat{layer}_src"] = (hidden,)
            shapes[f"gat{layer}_dst"] = (hidden,)
            shapes[f"gat{layer}_bias"] = (hidden,)
        body_out = hidden
    else:
        body_out = embed_dim
    head_in = body_out + N_ROUTE
    shapes["alloc1_w"] = (head_in, hidden)
    shapes["alloc1_b"] = (hidden,)
    shapes["alloc2_w"] = (hidden, 2)
    shapes["alloc2_b"] = (2,)
    shapes["est1_w"] = (head_in, hidden)
    shapes["est1_b"] = (hidden,)
    shapes["est2_w"] = (hidden, 1)
    shapes["est2_b"] = (1,)
    return shapes


def init_params(
    variant: str, seed: int = 42, scale: float = 0.1, hidden: int = 32, embed_dim: int = 16
) -> AllocatorParams:
    rng = np.random.default_rng(seed)
    shapes = param_shapes(variant, hidden, embed_dim)
    return AllocatorParams(variant, {k: rng.uniform(-scale, scale, size=s) for k, s in shapes.items()})


def zero_params(variant: str, hidden: int = 32, embed_dim: int = 16) -> AllocatorParams:
    shapes = param_shapes(variant, hidden, embed_dim)
    return AllocatorParams(variant, {k: np.zeros(s) for k, s in shapes.items()})


def _relu(x):
    return np.maximum(x, 0.0)


def _cat(h, r):
    return np.concatenate([h, r], axis=-1)


# --- bodies -----------------------------------------------------------------


def _mp_forward(params, X, R, M):
    cache = []
    h = X
    for layer in (1, 2):
        u = _cat(h, R)
        agg = M @ u
        z = u @ params[f"mp{layer}_self"] + agg @ params[f"mp{layer}_neigh"] + params[f"mp{layer}_bias"]
        h = _relu(z)
        cache.append((u, agg, z))
    return h, cache


def _mp_backward(params, M, cache, dH, grads):
    d_h = dH
    for layer in (2, 1):
        u, agg, z = cache[layer - 1]
        dz = d_h * (z > 0)
        Ws, Wn = params[f"mp{layer}_self"], params[f"mp{layer}_neigh"]
        grads[f"mp{layer}_self"] = np.einsum("bni,bnj->ij", u, dz)
        grads[f"mp{layer}_neigh"] = np.einsum("bni,bnj->ij", agg, dz)
        grads[f"mp{layer}_bias"] = dz.sum(axis=(0, 1))
        du = dz @ Ws.T + np.swapaxes(M, 1, 2) @ (dz @ Wn.T)
        d_h = du[..., : du.shape[-1] - N_ROUTE]


def attention(params, layer: int, u):
    """Single-head attention over all nodes (self included).

    Returns ``(alpha, g, pre)``: coefficients ``(B, n, n)``, projected
    features and the pre-activation scores.
    """
    g = u @ params[f"gat{layer}_w"]
    s = g @ params[f"gat{layer}_src"]
    t = g @ params[f"gat{layer}_dst"]
    pre = s[:, :, None] + t[:, None, :]
    e = np.where(pre > 0, pre, LEAKY_SLOPE * pre)
    e = e - e.max(axis=-1, keepdims=True)
    a = np.exp(e)
    alpha = a / a.sum(axis=-1, keepdims=True)
    return alpha, g, pre


def _gat_forward(params, X, R):
    cache = []
    h = X
    for layer in (1, 2):
        u = _cat(h, R)
        alpha, g, pre = attention(params, layer, u)
        z = alpha @ g + params[f"gat{layer}_bias"]
        h = _relu(z)
        cache.append((u, alpha, g, pre, z))
    return h, cache


def _gat_backward(params, cache, dH, grads):
    d_h = dH
    for layer in (2, 1):
        u, alpha, g, pre, z = cache[layer - 1]
        dz = d_h * (z > 0)
        grads[f"gat{layer}_bias"] = dz.sum(axis=(0, 1))
        d_alpha = dz @ np.swapaxes(g, 1, 2)
        dg = np.swapaxes(alpha, 1, 2) @ dz
        de = alpha * (d_alpha - (alpha * d_alpha).sum(axis=-1, keepdims=True))
        dpre = de * np.where(pre > 0, 1.0, LEAKY_SLOPE)
        ds = dpre.sum(axis=2)
        dt = dpre.sum(axis=1)
        a_src, a_dst = params[f"gat{layer}_src"], params[f"gat{layer}_dst"]
        grads[f"gat{layer}_src"] = np.einsum("bnk,bn->k", g, ds)
        grads[f"gat{layer}_dst"] = np.einsum("bnk,bn->k", g, dt)
        dg = dg + ds[..., None] * a_src + dt[..., None] * a_dst
        grads[f"gat{layer}_w"] = np.einsum("bni,bnj->ij", u, dg)
        du = dg @ params[f"gat{layer}_w"].T
        d_h = du[..., : du.shape[-1] - N_ROUTE]


# --- heads ------------------------------------------------------------------


def _heads_forward(params, H, R, mon_idx):
    q_all = _cat(H, R)
    q = q_all[:, mon_idx]
    y_pre = q @ params["alloc1_w"] + params["alloc1_b"]
    y = _relu(y_pre)
    out = y @ params["alloc2_w"] + params["alloc2_b"]
    pooled = q_all.mean(axis=1)
    e_pre = pooled @ params["est1_w"] + params["est1_b"]
    e1 = _relu(e_pre)
    est = (e1 @ params["est2_w"] + params["est2_b"])[:, 0]
    return out, est, (q_all, q, y_pre, y, pooled, e_pre, e1)


def _heads_backward(params, mon_idx, cache, d_out, d_est, grads):
    q_all, q, y_pre, y, pooled, e_pre, e1 = cache
    grads["alloc2_w"] = np.einsum("bni,bnj->ij", y, d_out)
    grads["alloc2_b"] = d_out.sum(axis=(0, 1))
    dy = (d_out @ params["alloc2_w"].T) * (y_pre > 0)
    grads["alloc1_w"] = np.einsum("bni,bnj->ij", q, dy)
    grads["alloc1_b"] = dy.sum(axis=(0, 1))
    dq = dy @ params["alloc1_w"].T

    d_e2 = d_est[:, None]
    grads["est2_w"] = e1.T @ d_e2
    grads["est2_b"] = d_e2.sum(axis=0)
    de1 = (d_e2 @ params["est2_w"].T) * (e_pre > 0)
    grads["est1_w"] = pooled.T @ de1
    grads["est1_b"] = de1.sum(axis=0)
    d_pooled = de1 @ params["est1_w"].T

    n = q_all.shape[1]
    dq_all = np.repeat(d_pooled[:, None, :] / n, n, axis=1)
    dq_all[:, mon_idx] += dq
    return dq_all[..., : dq_all.shape[-1] - N_ROUTE]


# --- full model -------------------------------------------------------------


@dataclass
class ForwardCache:
    body: object
    heads: tuple


def model_forward(params: AllocatorParams, X, M, mon_idx, emb=None):
    """Raw head outputs for a batch.

    ``X`` (B, n, 8) features, ``M`` (B, n, n) aggregation weights, ``emb``
    (B, n, d) embeddings for the node2vec variant. Returns ``(out, est, cache)``
    with ``out`` (B, N, 2) bandwidth/power logits per monitor and ``est`` (B,)
    the normalised energy estimate.
    """
    params.check_finite()
    R = X[..., list(ROUTE_COLUMNS)]
    if params.variant == "gnn":
        H, body = _mp_forward(params, X, R, M)
    elif params.variant == "gat":
        H, body = _gat_forward(params, X, R)
    else:
        if emb is None:
            raise ValueError("node2vec variant needs embeddings")
        H, body = emb, None
    out, est, heads = _heads_forward(params, H, R, mon_idx)
    return out, est, ForwardCache(body, heads)


def model_backward(params: AllocatorParams, M, mon_idx, cache: ForwardCache, d_out, d_est) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    dH = _heads_backward(params, mon_idx, cache.heads, d_out, d_est, grads)
    if params.variant == "gnn":
        _mp_backward(params, M, cache.body, dH, grads)
    elif params.variant == "gat":
        _gat_backward(params, cache.body, dH, grads)
    return {k: grads[k] for k in params.arrays}


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def allocation_from_logits(out, max_tx_power: float):
    """Bandwidth via softmax across monitors, power squashed into (0, max)."""
    bw = softmax(out[..., 0], axis=-1)
    power = max_tx_power * sigmoid(out[..., 1])
    return bw, power


# --- parameter files --------------------------------------------------------

PARAMS_MAGIC = "allocator-params v1"


def save_params(params: AllocatorParams, path) -> None:
    """Text file: a header line, one ``name shape`` line per array, then values.

    ::

        allocator-params v1 variant=gnn arrays=14
        mp1_self 11x32
        ...
        <one float per line, arrays in header order, C order>
    """
    lines = [f"{PARAMS_MAGIC} variant={params.variant} arrays={len(params.arrays)}"]
    for k, v in params.arrays.items():
        lines.append(f"{k} {'x'.join(str(d) for d in v.shape)}")
    lines.extend(repr(float(x)) for x in params.flat())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path) -> AllocatorParams:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(PARAMS_MAGIC + " "):
        raise ValueError(f"{path}: not an allocator parameter file")
    fields = dict(tok.split("=", 1) for tok in lines[0][len(PARAMS_MAGIC) :].split())
    variant, count = fields["variant"], int(fields["arrays"])
    if variant not in VARIANTS:
        raise ValueError(f"{path}: unknown variant {variant!r}")
    shapes = []
    for line in lines[1 : 1 + count]:
        name, dims = line.split()
        shapes.append((name, tuple(int(d) for d in dims.split("x") if d)))
    values = np.array([float(x) for x in lines[1 + count :]])
    need = sum(int(np.prod(s)) for _, s in shapes)
    if values.size != need:
        raise ValueError(f"{path}: expected {need} values, found {values.size}")
    arrays, at = {}, 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        arrays[name] = values[at : at + size].reshape(shape)
        at += size
    params = AllocatorParams(variant, arrays)
    params.check_finite()
    return params
