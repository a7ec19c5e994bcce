"""Experiment runner: battery calibration, the gap curve and the task-size sweep."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from .allocator.train import TrainHyper, TrainingDiverged, TrainRecord, allocate, train
from .config import ExperimentConfig, save_config
from .decision import make_backend, propose_trajectory
from .energy import Allocation, EnergyModelConfig, EnergyReport, simulate, uniform_allocation
from .graph import NetworkGraph, build_scenario, random_instances
from .routing import Route, exhaustive_search, heuristic_route, min_peak_segment

log = logging.getLogger(__name__)

METHODS = {"LLM+GNN": "gnn", "LLM+Node2Vec": "node2vec", "LLM+GAT": "gat"}
ORACLE = "oracle"
CALIBRATION_SIZES = (30.0, 35.0)
CONSERVATION_TOL = 1e-6
TRAINING_SEED_OFFSET = 1000

GAP_COLUMNS = ("episode", "method", "mean_abs_gap_joules")
SWEEP_COLUMNS = ("task_size_mb", "method", "remaining_energy_joules", "feasible", "trial", "backend", "fallback")


class CalibrationError(RuntimeError):
    pass


# --- calibration ------------------------------------------------------------


def calibrate_battery(config: ExperimentConfig) -> float:
    """Capacity halfway between the 30 MB and 35 MB thresholds of the scenario.

    The threshold at a task size is the smallest capacity for which some
    route completes, i.e. the minimum over all routes of the larger of the
    two flight segments (uniform allocation). Between the two thresholds the
    30 MB mission is feasible and no 35 MB route is.
    """
    lo, hi = CALIBRATION_SIZES
    base = build_scenario(config.scenario)
    k_lo, _ = min_peak_segment(base.with_task_sizes(lo), config.energy)
    k_hi, _ = min_peak_segment(base.with_task_sizes(hi), config.energy)
    capacity = 0.5 * (k_lo + k_hi)
    energy = config.energy.with_capacity(capacity)
    at_lo = exhaustive_search(base.with_task_sizes(lo), energy)
    at_hi = exhaustive_search(base.with_task_sizes(hi), energy)
    if not at_lo.cost.remaining > 0:
        raise CalibrationError(f"oracle infeasible at {lo:g} MB after calibration (capacity {capacity:.3f} J)")
    if not at_hi.cost.remaining < 0:
        raise CalibrationError(f"oracle still feasible at {hi:g} MB after calibration (capacity {capacity:.3f} J)")
    log.info("calibrated capacity %.3f J (thresholds %.3f / %.3f J)", capacity, k_lo, k_hi)
    return capacity


def calibrated(config: ExperimentConfig) -> ExperimentConfig:
    return config if config.calibrated else config.with_capacity(calibrate_battery(config))


# --- shared pieces ----------------------------------------------------------


def training_set(
    config: ExperimentConfig, task_mb: float | None = None
) -> tuple[list[tuple[NetworkGraph, Route]], list[tuple[NetworkGraph, Route]]]:
    """Seeded (train, validation) split of (graph, stage-one route) pairs."""
    base = config.scenario if task_mb is None else replace(config.scenario, task_sizes_mb=task_mb)
    graphs = random_instances(config.instances, base, seed=config.scenario.seed + TRAINING_SEED_OFFSET)
    pairs = [(g, heuristic_route(g, config.energy)) for g in graphs]
    cut = len(pairs) - config.n_validation
    return pairs[:cut], pairs[cut:]


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _write_csv(path: Path, columns: tuple[str, ...], rows: list[tuple]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _method_rank(name: str) -> int:
    names = list(METHODS) + [ORACLE]
    return names.index(name)


# --- gap curve --------------------------------------------------------------


@dataclass
class GapResult:
    csv_path: Path
    records: dict[str, list[TrainRecord]]
    errors: dict[str, str] = field(default_factory=dict)

    def summary(self) -> dict[str, dict]:
        out = {}
        for m, recs in self.records.items():
            first, last = recs[0].mean_abs_gap, recs[-1].mean_abs_gap
            out[m] = {"initial_gap_j": first, "final_gap_j": last, "final_below_initial": last < first}
        for m, err in self.errors.items():
            out[m] = {"error": err}
        return out

    @property
    def ok(self) -> bool:
        return not self.errors and all(v["final_below_initial"] for v in self.summary().values())


def run_gap_experiment(config: ExperimentConfig, out_dir: str | Path | None = None) -> GapResult:
    """Train the three allocators on one instance set; write ``gap_curve.csv``."""
    config = calibrated(config)
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tr, va = training_set(config)
    records: dict[str, list[TrainRecord]] = {}
    errors: dict[str, str] = {}
    for method, variant in METHODS.items():
        try:
            _, records[method] = train(tr, config.energy, config.hyper, variant=variant, validation=va)
        except TrainingDiverged as exc:
            log.error("%s diverged: %s", method, exc)
            errors[method] = str(exc)
    rows = sorted(
        ((r.episode, m, _fmt(r.mean_abs_gap)) for m, recs in records.items() for r in recs),
        key=lambda row: (row[0], _method_rank(row[1])),
    )
    path = out / "gap_curve.csv"
    _write_csv(path, GAP_COLUMNS, rows)
    result = GapResult(path, records, errors)
    _write_json(
        out / "gap_manifest.json",
        {
            "experiment": "gap",
            "config": config.to_dict(),
            "battery_capacity_j": config.energy.battery_capacity,
            "seeds": {"init": config.hyper.seed, "instances": config.scenario.seed + TRAINING_SEED_OFFSET},
            "instances": {"train": len(tr), "validation": len(va)},
            "stage_one_routes": "heuristic (nearest neighbour + 2-opt)",
            "summary": result.summary(),
        },
    )
    save_config(config, out / "resolved_config.json")
    return result


# --- task-size sweep --------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    task_size_mb: float
    method: str
    trial: int
    report: EnergyReport
    backend: str
    fallback: bool
    route: Route | None = None
    allocation: Allocation | None = None

    def csv_row(self) -> tuple:
        return (
            f"{self.task_size_mb:g}",
            self.method,
            _fmt(self.report.remaining_energy),
            str(self.report.feasible).lower(),
            self.trial,
            self.backend,
            str(self.fallback).lower(),
        )


@dataclass
class SweepResult:
    csv_path: Path
    rows: list[SweepRow]
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def max_conservation_error(self) -> float:
        return max((r.report.conservation_error() for r in self.rows), default=0.0)

    def remaining(self, method: str, trial: int = 0) -> list[tuple[float, float]]:
        return [
            (r.task_size_mb, r.report.remaining_energy)
            for r in self.rows
            if r.method == method and r.trial == trial
        ]

    def observations(self) -> dict:
        """Which learned method keeps the most energy at a few task sizes."""
        obs = {}
        sizes = sorted({r.task_size_mb for r in self.rows})
        for t in sizes:
            cells = {r.method: r.report.remaining_energy for r in self.rows if r.task_size_mb == t and r.trial == 0}
            learned = {m: v for m, v in cells.items() if m in METHODS}
            if learned:
                obs[f"{t:g}MB"] = {
                    "best_learned_method": max(learned, key=learned.get),
                    "remaining_j": {m: round(v, 6) for m, v in learned.items()},
                }
        return obs


def run_tasksize_sweep(config: ExperimentConfig, out_dir: str | Path | None = None) -> SweepResult:
    """Remaining energy per task size and method; write ``remaining_energy.csv``.

    Each learned method is trained once per task size on instances of that
    size, then applied to the scenario route proposed by the configured
    backend. The ``oracle`` row flies the exhaustive-optimal route with the
    uniform allocation.
    """
    config = calibrated(config)
    energy = config.energy
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    backend = make_backend(config.backend, energy)
    rows: list[SweepRow] = []
    errors: dict[str, str] = {}
    provenance = []
    for t in config.task_size_sweep:
        tr, va = training_set(config, t)
        trained = {}
        for method, variant in METHODS.items():
            try:
                trained[method], _ = train(tr, energy, config.hyper, variant=variant, validation=va)
            except TrainingDiverged as exc:
                errors[f"{method}@{t:g}MB"] = str(exc)
        for trial in range(config.trials):
            graph = build_scenario(replace(config.scenario, task_sizes_mb=t, seed=config.scenario.seed + trial))
            proposal = propose_trajectory(graph, config.backend, energy, backend=backend)
            provenance.append({"task_size_mb": t, "trial": trial, **proposal.to_dict()})
            for method, params in trained.items():
                alloc, _ = allocate(params, graph, proposal.route, energy, config.hyper)
                report = simulate(proposal.route, alloc, graph, energy)
                rows.append(SweepRow(t, method, trial, report, proposal.backend, proposal.fallback, proposal.route, alloc))
            oracle = exhaustive_search(graph, energy).route
            uniform = uniform_allocation(graph, energy)
            report = simulate(oracle, uniform, graph, energy)
            rows.append(SweepRow(t, ORACLE, trial, report, "exhaustive", False, oracle, uniform))
    rows.sort(key=lambda r: (r.task_size_mb, _method_rank(r.method), r.trial))
    path = out / "remaining_energy.csv"
    _write_csv(path, SWEEP_COLUMNS, [r.csv_row() for r in rows])
    result = SweepResult(path, rows, errors)
    _write_json(
        out / "sweep_manifest.json",
        {
            "experiment": "sweep",
            "config": config.to_dict(),
            "battery_capacity_j": energy.battery_capacity,
            "seeds": {
                "init": config.hyper.seed,
                "scenario": [config.scenario.seed + k for k in range(config.trials)],
                "training_instances": config.scenario.seed + TRAINING_SEED_OFFSET,
            },
            "training": "each learned method trained once per task size on instances of that size",
            "backend": config.backend.to_dict(),
            "proposals": provenance,
            "max_conservation_error_j": result.max_conservation_error,
            "errors": errors,
            "observations": result.observations(),
        },
    )
    save_config(config, out / "resolved_config.json")
    return result


__all__ = [
    "CalibrationError",
    "GapResult",
    "METHODS",
    "ORACLE",
    "SweepResult",
    "SweepRow",
    "calibrate_battery",
    "calibrated",
    "run_gap_experiment",
    "run_tasksize_sweep",
    "training_set",
]
