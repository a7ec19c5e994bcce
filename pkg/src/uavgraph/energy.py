"""Battery, flight and data-collection energy accounting.

The simulator here produces the "measured" energies that the allocators are
trained against and that every experiment reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from .graph import NetworkGraph

if TYPE_CHECKING:
    from .routing import Route

BITS_PER_MB = 8e6
LN2 = math.log(2.0)


class AllocationError(ValueError):
    """An allocation violates its budget/bounds or cannot move a positive task."""


@dataclass(frozen=True)
class EnergyModelConfig:
    battery_capacity: float = 30000.0
    flight_power: float = 200.0
    speed: float = 10.0
    total_bandwidth: float = 10e6
    max_tx_power: float = 20.0
    circuit_power: float = 50.0
    channel_gain_at_1m: float = 1e-5
    noise_psd: float = 1e-17
    altitude: float = 100.0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"energy config field {name} must be positive and finite, got {v!r}")

    @property
    def channel_gain(self) -> float:
        return self.channel_gain_at_1m / self.altitude**2

    @property
    def joules_per_meter(self) -> float:
        return self.flight_power / self.speed

    def with_capacity(self, capacity: float) -> "EnergyModelConfig":
        return replace(self, battery_capacity=float(capacity))

    @classmethod
    def from_dict(cls, d: dict) -> "EnergyModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown energy keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class Allocation:
    """Per-monitor bandwidth share and transmit power, aligned with ``graph.monitor_ids``."""

    bandwidth_fraction: np.ndarray
    tx_power: np.ndarray

    def validate(self, cfg: EnergyModelConfig, n_monitors: int | None = None) -> None:
        b, p = self.bandwidth_fraction, self.tx_power
        if b.shape != p.shape or b.ndim != 1:
            raise AllocationError(f"shape mismatch: bandwidth {b.shape}, power {p.shape}")
        if n_monitors is not None and b.shape[0] != n_monitors:
            raise AllocationError(f"allocation covers {b.shape[0]} monitors, graph has {n_monitors}")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(p))):
            raise AllocationError("allocation has non-finite entries")
        if np.any(b < 0) or np.any(b > 1):
            raise AllocationError("bandwidth fractions must lie in [0, 1]")
        if b.sum() > 1 + 1e-9:
            raise AllocationError(f"bandwidth fractions sum to {b.sum():.12g} > 1")
        if np.any(p < 0) or np.any(p > cfg.max_tx_power * (1 + 1e-12)):
            raise AllocationError(f"tx power must lie in [0, {cfg.max_tx_power}] W")


def uniform_allocation(graph: NetworkGraph, cfg: EnergyModelConfig) -> Allocation:
    """Equal bandwidth split and mid-range power: the reference allocation."""
    n = graph.n_monitors
    return Allocation(np.full(n, 1.0 / n), np.full(n, cfg.max_tx_power / 2))


def flight_energy(distance: float, cfg: EnergyModelConfig) -> float:
    if distance < 0:
        raise ValueError(f"distance must be non-negative, got {distance}")
    return cfg.flight_power * distance / cfg.speed


def _rate(fraction, power, cfg: EnergyModelConfig):
    bw = fraction * cfg.total_bandwidth
    snr = power * cfg.channel_gain / (cfg.noise_psd * bw)
    return bw * np.log2(1.0 + snr)


def collection_energy(task_mb: float, bandwidth_fraction: float, tx_power: float, cfg: EnergyModelConfig) -> float:
    """Energy (J) to upload ``task_mb`` over a Shannon-rate link.

    The rate uses the allocated share of the band for both capacity and
    noise, with the path gain fixed by the flight altitude.
    """
    if task_mb < 0:
        raise ValueError(f"task size must be non-negative, got {task_mb}")
    if task_mb == 0:
        return 0.0
    if bandwidth_fraction <= 0:
        raise AllocationError("positive task with zero bandwidth fraction")
    if tx_power <= 0:
        return math.inf
    rate = float(_rate(bandwidth_fraction, tx_power, cfg))
    seconds = task_mb * BITS_PER_MB / rate
    return (tx_power + cfg.circuit_power) * seconds


def collection_energies(graph: NetworkGraph, alloc: Allocation, cfg: EnergyModelConfig) -> np.ndarray:
    """Collection energy per monitor, aligned with ``graph.monitor_ids``."""
    return np.array(
        [
            collection_energy(t, b, p, cfg)
            for t, b, p in zip(graph.task_sizes, alloc.bandwidth_fraction, alloc.tx_power)
        ]
    )


def collection_energy_grad(task_mb, fraction, power, cfg: EnergyModelConfig):
    """Vectorised collection energy with partials w.r.t. fraction and power.

    Returns ``(energy, d_energy/d_fraction, d_energy/d_power)``; all inputs
    broadcast. Requires positive fraction and power.
    """
    bits = np.asarray(task_mb, dtype=np.float64) * BITS_PER_MB
    B = cfg.total_bandwidth
    g_over_n0 = cfg.channel_gain / cfg.noise_psd
    bw = fraction * B
    snr = power * g_over_n0 / bw
    l2 = np.log2(1.0 + snr)
    rate = bw * l2
    total_power = power + cfg.circuit_power
    energy = total_power * bits / rate
    drate_dpower = g_over_n0 / (LN2 * (1.0 + snr))
    drate_dfrac = B * (l2 - snr / (LN2 * (1.0 + snr)))
    coef = -total_power * bits / rate**2
    d_power = bits / rate + coef * drate_dpower
    d_frac = coef * drate_dfrac
    return energy, d_frac, d_power


@dataclass(frozen=True)
class TraceEvent:
    kind: str  # "depart", "arrive", "collect", "recharge", "return"
    node: int
    battery: float


@dataclass(frozen=True)
class EnergyReport:
    leg_flight: tuple[tuple[int, int, float], ...]
    collection: dict[int, float]
    trace: tuple[TraceEvent, ...]
    initial_capacity: float
    recharge: float
    consumed: float
    remaining_energy: float
    feasible: bool
    pre_charge: float = field(default=0.0)
    post_charge: float = field(default=0.0)

    @property
    def flight_total(self) -> float:
        return sum(e for _, _, e in self.leg_flight)

    @property
    def collection_total(self) -> float:
        return sum(self.collection.values())

    @property
    def deficit(self) -> float:
        return max(0.0, -self.remaining_energy)

    def conservation_error(self) -> float:
        return abs(self.initial_capacity + self.recharge - self.consumed - self.remaining_energy)


def simulate(route: "Route", alloc: Allocation, graph: NetworkGraph, cfg: EnergyModelConfig) -> EnergyReport:
    """Fly ``route`` leg by leg and account every joule.

    At the charging stop the battery is reset to full capacity. A battery
    that is already negative on arrival means the UAV never reached the
    station: no recharge is credited and the deficit carries through to the
    end, so a negative ``remaining_energy`` always marks an interrupted
    mission.
    """
    route.validate(graph)
    alloc.validate(cfg, graph.n_monitors)
    col = collection_energies(graph, alloc, cfg)
    col_by_id = dict(zip(graph.monitor_ids, col.tolist()))
    cap = cfg.battery_capacity

    battery = cap
    recharge = 0.0
    consumed = 0.0
    pre = 0.0
    charged = False
    legs: list[tuple[int, int, float]] = []
    trace = [TraceEvent("depart", graph.start_id, battery)]
    for a, b in route.legs(graph):
        e = flight_energy(graph.distance(a, b), cfg)
        legs.append((a, b, e))
        battery -= e
        consumed += e
        if b == graph.charge_id and not charged:
            trace.append(TraceEvent("arrive", b, battery))
            pre = consumed
            charged = True
            if battery >= 0:
                recharge = cap - battery
                battery = cap
                trace.append(TraceEvent("recharge", b, battery))
        elif b in col_by_id:
            trace.append(TraceEvent("arrive", b, battery))
            battery -= col_by_id[b]
            consumed += col_by_id[b]
            trace.append(TraceEvent("collect", b, battery))
        else:
            trace.append(TraceEvent("return", b, battery))
    feasible = min(ev.battery for ev in trace) >= 0
    return EnergyReport(
        leg_flight=tuple(legs),
        collection=col_by_id,
        trace=tuple(trace),
        initial_capacity=cap,
        recharge=recharge,
        consumed=consumed,
        remaining_energy=battery,
        feasible=feasible,
        pre_charge=pre,
        post_charge=consumed - pre,
    )
