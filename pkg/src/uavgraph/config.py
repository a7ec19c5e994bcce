"""Experiment configuration: one JSON file, every section optional."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .allocator.train import TrainHyper
from .decision import DecisionBackendSpec
from .energy import EnergyModelConfig
from .graph import ScenarioConfig

DEFAULT_SWEEP = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    energy: EnergyModelConfig = field(default_factory=EnergyModelConfig)
    backend: DecisionBackendSpec = field(default_factory=DecisionBackendSpec)
    hyper: TrainHyper = field(default_factory=TrainHyper)
    task_size_sweep: tuple[float, ...] = DEFAULT_SWEEP
    trials: int = 1
    output_dir: str = "runs/default"
    instances: int = 32
    validation_fraction: float = 0.25
    calibrated: bool = False

    def __post_init__(self) -> None:
        sweep = tuple(float(t) for t in self.task_size_sweep)
        object.__setattr__(self, "task_size_sweep", sweep)
        if not sweep:
            raise ConfigError("task_size_sweep must be non-empty")
        if any(b <= a for a, b in zip(sweep, sweep[1:])):
            raise ConfigError(f"task_size_sweep must be strictly ascending, got {list(sweep)}")
        if sweep[0] <= 0:
            raise ConfigError("task sizes must be positive")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.instances < 2:
            raise ConfigError("need at least 2 instances (one for training, one for validation)")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must be in (0, 1)")

    @property
    def n_validation(self) -> int:
        return min(self.instances - 1, max(1, round(self.instances * self.validation_fraction)))

    def with_capacity(self, capacity: float) -> "ExperimentConfig":
        return replace(self, energy=self.energy.with_capacity(capacity), calibrated=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        try:
            if "scenario" in kw:
                kw["scenario"] = ScenarioConfig.from_dict(kw["scenario"])
            if "energy" in kw:
                kw["energy"] = EnergyModelConfig.from_dict(kw["energy"])
            if "backend" in kw:
                kw["backend"] = DecisionBackendSpec.from_dict(kw["backend"])
            if "hyper" in kw:
                kw["hyper"] = TrainHyper.from_dict(kw["hyper"])
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError, RuntimeError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "energy": self.energy.to_dict(),
            "backend": self.backend.to_dict(),
            "hyper": self.hyper.to_dict(),
            "task_size_sweep": list(self.task_size_sweep),
            "trials": self.trials,
            "output_dir": self.output_dir,
            "instances": self.instances,
            "validation_fraction": self.validation_fraction,
            "calibrated": self.calibrated,
        }


def load_config(source: str | Path | None) -> ExperimentConfig:
    """Read a JSON config; ``None`` or ``"default"`` gives the built-in defaults."""
    if source is None or str(source) == "default":
        return ExperimentConfig()
    path = Path(source)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
