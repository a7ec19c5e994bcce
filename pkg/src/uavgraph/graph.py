"""Scenario graph: typed nodes on a planar area and seeded instance generation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

# positions are stored at this resolution so the text form round-trips exactly
POSITION_DECIMALS = 2
MIN_SEPARATION_M = 1.0


class ScenarioError(ValueError):
    """Raised for scenario configurations that cannot produce a valid graph."""


class NodeKind(str, enum.Enum):
    START = "start"
    MONITOR = "monitor"
    CHARGE = "charge"
    OPERATOR = "operator"


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    position: tuple[float, float]
    task_size: float = 0.0


@dataclass(frozen=True)
class NetworkGraph:
    """Immutable scenario graph G=(V, E) over a complete Euclidean edge set.

    Node ids equal their index in ``nodes``. Edges are implicit: every pair of
    nodes is connected with its planar distance.
    """

    nodes: tuple[Node, ...]
    area: tuple[float, float]

    def __post_init__(self) -> None:
        _validate_graph(self)

    @cached_property
    def distances(self) -> np.ndarray:
        pos = np.array([n.position for n in self.nodes], dtype=np.float64)
        diff = pos[:, None, :] - pos[None, :, :]
        d = np.sqrt((diff**2).sum(axis=-1))
        d.setflags(write=False)
        return d

    def distance(self, a: int, b: int) -> float:
        return float(self.distances[a, b])

    @cached_property
    def start_id(self) -> int:
        return next(n.id for n in self.nodes if n.kind is NodeKind.START)

    @cached_property
    def charge_id(self) -> int:
        return next(n.id for n in self.nodes if n.kind is NodeKind.CHARGE)

    @cached_property
    def operator_id(self) -> int | None:
        return next((n.id for n in self.nodes if n.kind is NodeKind.OPERATOR), None)

    @cached_property
    def monitor_ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes if n.kind is NodeKind.MONITOR)

    @property
    def n_monitors(self) -> int:
        return len(self.monitor_ids)

    @cached_property
    def task_sizes(self) -> np.ndarray:
        """Task sizes in MB, aligned with ``monitor_ids``."""
        t = np.array([self.nodes[i].task_size for i in self.monitor_ids], dtype=np.float64)
        t.setflags(write=False)
        return t

    def with_task_sizes(self, tasks: float | Sequence[float]) -> "NetworkGraph":
        sizes = _expand_tasks(tasks, self.n_monitors)
        it = iter(sizes)
        nodes = tuple(
            Node(n.id, n.kind, n.position, next(it)) if n.kind is NodeKind.MONITOR else n
            for n in self.nodes
        )
        return NetworkGraph(nodes, self.area)

    def scaled(self, factor: float) -> "NetworkGraph":
        """Same topology with every coordinate (and the area) multiplied by ``factor``."""
        nodes = tuple(
            Node(n.id, n.kind, _quantize((n.position[0] * factor, n.position[1] * factor)), n.task_size)
            for n in self.nodes
        )
        return NetworkGraph(nodes, (self.area[0] * factor, self.area[1] * factor))


def _validate_graph(g: NetworkGraph) -> None:
    w, h = g.area
    if not (w > 0 and h > 0):
        raise ScenarioError(f"area must be positive, got {g.area}")
    for idx, n in enumerate(g.nodes):
        if n.id != idx:
            raise ScenarioError(f"node ids must be 0..{len(g.nodes) - 1} in order; got id {n.id} at {idx}")
        x, y = n.position
        if not (0.0 <= x <= w and 0.0 <= y <= h):
            raise ScenarioError(f"node {n.id} at {n.position} lies outside the {w} x {h} area")
        if n.kind is NodeKind.MONITOR:
            if not n.task_size > 0:
                raise ScenarioError(f"monitor {n.id} needs a positive task size, got {n.task_size}")
        elif n.task_size != 0:
            raise ScenarioError(f"{n.kind.value} node {n.id} cannot carry a task ({n.task_size} MB)")
    counts = {k: sum(1 for n in g.nodes if n.kind is k) for k in NodeKind}
    if counts[NodeKind.START] != 1:
        raise ScenarioError(f"need exactly one start node, found {counts[NodeKind.START]}")
    if counts[NodeKind.CHARGE] != 1:
        raise ScenarioError(f"need exactly one charge node, found {counts[NodeKind.CHARGE]}")
    if counts[NodeKind.OPERATOR] > 1:
        raise ScenarioError("at most one operator node is allowed")
    if counts[NodeKind.MONITOR] < 1:
        raise ScenarioError("need at least one monitoring point")


@dataclass(frozen=True)
class ScenarioConfig:
    """Inputs to :func:`build_scenario`.

    Unset positions are drawn uniformly from the seeded generator, except the
    charging station which defaults to the area centre.
    """

    n_points: int = 6
    area_m: tuple[float, float] = (400.0, 400.0)
    task_sizes_mb: float | tuple[float, ...] = 10.0
    seed: int = 42
    start_position: tuple[float, float] | None = None
    charge_position: tuple[float, float] | None = None
    operator_position: tuple[float, float] | None = None
    monitor_positions: tuple[tuple[float, float], ...] | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        kw = dict(d)
        if "area_m" in kw:
            a = kw["area_m"]
            kw["area_m"] = (float(a), float(a)) if isinstance(a, (int, float)) else tuple(map(float, a))
        if isinstance(kw.get("task_sizes_mb"), list):
            kw["task_sizes_mb"] = tuple(kw["task_sizes_mb"])
        for key in ("start_position", "charge_position", "operator_position"):
            if kw.get(key) is not None:
                kw[key] = tuple(map(float, kw[key]))
        if kw.get("monitor_positions") is not None:
            kw["monitor_positions"] = tuple(tuple(map(float, p)) for p in kw["monitor_positions"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "area_m": list(self.area_m),
            "task_sizes_mb": list(self.task_sizes_mb)
            if isinstance(self.task_sizes_mb, tuple)
            else self.task_sizes_mb,
            "seed": self.seed,
            "start_position": list(self.start_position) if self.start_position else None,
            "charge_position": list(self.charge_position) if self.charge_position else None,
            "operator_position": list(self.operator_position) if self.operator_position else None,
            "monitor_positions": [list(p) for p in self.monitor_positions]
            if self.monitor_positions
            else None,
        }


def _quantize(p: Sequence[float]) -> tuple[float, float]:
    return (round(float(p[0]), POSITION_DECIMALS), round(float(p[1]), POSITION_DECIMALS))


def _expand_tasks(tasks: float | Sequence[float], n: int) -> tuple[float, ...]:
    if isinstance(tasks, (int, float)):
        out = (float(tasks),) * n
    else:
        out = tuple(float(t) for t in tasks)
        if len(out) != n:
            raise ScenarioError(f"expected {n} task sizes, got {len(out)}")
    if any(not t > 0 for t in out):
        raise ScenarioError(f"task sizes must be positive, got {out}")
    return out


def _too_close(p: tuple[float, float], placed: list[tuple[float, float]]) -> bool:
    return any(math.dist(p, q) < MIN_SEPARATION_M for q in placed)


def build_scenario(config: ScenarioConfig) -> NetworkGraph:
    """Build the scenario graph; deterministic for a fixed config."""
    n = config.n_points
    if n < 1:
        raise ScenarioError(f"n_points must be >= 1, got {n}")
    w, h = config.area_m
    if not (w > 0 and h > 0):
        raise ScenarioError(f"area must be positive, got {config.area_m}")
    tasks = _expand_tasks(config.task_sizes_mb, n)
    if config.monitor_positions is not None and len(config.monitor_positions) != n:
        raise ScenarioError(f"expected {n} monitor positions, got {len(config.monitor_positions)}")

    rng = np.random.default_rng(config.seed)
    placed: list[tuple[float, float]] = []

    def place(explicit: Sequence[float] | None, label: str) -> tuple[float, float]:
        if explicit is not None:
            p = _quantize(explicit)
            if _too_close(p, placed):
                raise ScenarioError(f"duplicate position for {label} at {p} (closer than {MIN_SEPARATION_M} m)")
        else:
            while True:
                p = _quantize((rng.uniform(0.0, w), rng.uniform(0.0, h)))
                if not _too_close(p, placed):
                    break
        placed.append(p)
        return p

    # explicit positions first, so random draws avoid them
    charge_xy = config.charge_position if config.charge_position is not None else (w / 2, h / 2)
    slots: dict[str, tuple[float, float]] = {}
    order = [("charge", charge_xy), ("start", config.start_position)]
    if config.monitor_positions is not None:
        order += [(f"monitor {i + 1}", p) for i, p in enumerate(config.monitor_positions)]
    if config.operator_position is not None:
        order.append(("operator", config.operator_position))
    for label, p in order:
        if p is not None:
            slots[label] = place(p, label)
    for label, p in order:
        if p is None:
            slots[label] = place(None, label)
    if config.monitor_positions is None:
        for i in range(n):
            slots[f"monitor {i + 1}"] = place(None, f"monitor {i + 1}")

    nodes = [Node(0, NodeKind.START, slots["start"])]
    nodes += [Node(i + 1, NodeKind.MONITOR, slots[f"monitor {i + 1}"], tasks[i]) for i in range(n)]
    nodes.append(Node(n + 1, NodeKind.CHARGE, slots["charge"]))
    if config.operator_position is not None:
        nodes.append(Node(n + 2, NodeKind.OPERATOR, slots["operator"]))
    return NetworkGraph(tuple(nodes), (float(w), float(h)))


def pairwise_distances(graph: NetworkGraph) -> np.ndarray:
    """Symmetric |V| x |V| matrix of planar distances in metres."""
    return graph.distances.copy()


def random_instances(
    count: int,
    base: ScenarioConfig,
    *,
    task_range: tuple[float, float] | None = None,
    seed: int | None = None,
) -> list[NetworkGraph]:
    """Independent instances sharing ``base`` except for their seeds.

    With ``task_range`` each monitor draws its task size uniformly from the
    range (rounded to 0.5 MB); otherwise ``base.task_sizes_mb`` applies.
    """
    root = np.random.default_rng(base.seed if seed is None else seed)
    seeds = root.integers(0, 2**31 - 1, size=count)
    out = []
    for s in seeds:
        tasks = base.task_sizes_mb
        if task_range is not None:
            lo, hi = task_range
            draws = np.random.default_rng(int(s) + 1).uniform(lo, hi, size=base.n_points)
            tasks = tuple(float(np.round(t * 2) / 2) for t in draws)
        cfg = ScenarioConfig(
            n_points=base.n_points,
            area_m=base.area_m,
            task_sizes_mb=tasks,
            seed=int(s),
            charge_position=base.charge_position,
        )
        out.append(build_scenario(cfg))
    return out
