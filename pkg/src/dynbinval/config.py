"""Configuration models and helpers for dynbinval experiments."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Literal

from pydantic import BaseModel, Field, ValidationError

from dynbinval.services.dynbv import WeightDistribution
from dynbinval.services.ea import DEFAULT_CAP, EaParams

__all__ = [
    "COMMANDS",
    "DEFAULT_CONFIG_PATH",
    "ExperimentConfig",
    "ExperimentsFile",
]

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parents[2] / "data" / "experiments.json"

CommandName = Literal["drift", "analytic", "oracle-check", "runtime", "threshold"]
COMMANDS: tuple[str, ...] = ("drift", "analytic", "oracle-check", "runtime", "threshold")


class ExperimentConfig(BaseModel):
    """Settings of one experiment command.

    Every field can be overridden from the command line; unset grids fall back
    to the corresponding scalar (``c``, ``epsilon``, ``n``).
    """

    command: CommandName | None = Field(default=None, description="Command this section configures")

    n: int = Field(default=3000, ge=1, description="String length")
    mu: int = Field(default=2, ge=1, description="Population size")
    c: float = Field(default=1.0, gt=0, description="Mutation parameter")
    crossover_prob: float = Field(default=0.0, ge=0.0, le=1.0, description="GA crossover probability")
    fitness: Literal["dynbv", "linear"] = Field(default="dynbv", description="Fitness family")
    weights: WeightDistribution | None = Field(
        default=None, description="Weight law of the dynamic linear fitness"
    )
    epsilon: float = Field(default=0.005, ge=0.0, lt=1.0, description="Relative distance from the optimum")

    c_grid: List[float] = Field(default_factory=list, description="Mutation parameters to scan")
    epsilon_grid: List[float] = Field(default_factory=list, description="Distances to scan")
    n_grid: List[int] = Field(default_factory=list, description="String lengths to scan")

    trials: int = Field(default=10_000, ge=1, description="Monte Carlo trials per grid cell")
    seed: int | None = Field(default=None, ge=0, description="Master seed; required for simulations")
    cap: int = Field(default=DEFAULT_CAP, ge=1, description="Generation cap per degeneration run")
    threads: int | None = Field(default=None, ge=1, description="Worker processes")
    out: str | None = Field(default=None, description="Output file; stdout when omitted")
    format: Literal["csv", "json", "svg"] = Field(default="csv", description="Output format")

    runs: int = Field(default=100, ge=1, description="Runs per configuration for runtime sweeps")
    budget_factor: float = Field(default=50.0, gt=0, description="Runtime budget in units of n ln n")
    start_eps: float | None = Field(
        default=0.1, ge=0.0, le=1.0, description="Start distance for runtime runs; null for a uniform start"
    )

    c_low: float = Field(default=1.0, gt=0, description="Lower end of the threshold search")
    c_high: float = Field(default=4.0, gt=0, description="Upper end of the threshold search")
    tolerance: float = Field(default=0.02, gt=0, description="Width at which the threshold bisection stops")
    max_trials: int = Field(default=400_000, ge=1, description="Trial ceiling per threshold point")

    r_max: int = Field(default=4, ge=1, description="Largest r in oracle checks")
    k_max: int = Field(default=4, ge=1, description="Largest k in oracle checks")
    accept_r_max: int = Field(default=8, ge=1, description="Largest r for acceptance checks")
    symmetry_r_max: int = Field(default=6, ge=1, description="Largest r for the symmetry check")

    series_terms: int = Field(default=60, ge=1, description="Series truncation R")

    def params(self, **updates: Any) -> EaParams:
        """Build :class:`EaParams` from this section, optionally replacing fields."""

        values: Dict[str, Any] = {
            "n": self.n,
            "mu": self.mu,
            "c": self.c,
            "crossover_prob": self.crossover_prob,
            "fitness": self.fitness,
            "weights": self.weights,
        }
        values.update(updates)
        return EaParams.model_validate(values)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Return a validated copy with every non-``None`` override applied."""

        updates = {key: value for key, value in overrides.items() if value is not None}
        return ExperimentConfig.model_validate({**self.model_dump(), **updates})

    def require_seed(self) -> int:
        if self.seed is None:
            raise ValueError("A master seed is required: set 'seed' in the config or pass --seed")
        return self.seed

    @property
    def c_values(self) -> List[float]:
        return list(self.c_grid) or [self.c]

    @property
    def epsilon_values(self) -> List[float]:
        return list(self.epsilon_grid) or [self.epsilon]

    @property
    def n_values(self) -> List[int]:
        return list(self.n_grid) or [self.n]


class ExperimentsFile(BaseModel):
    """All command sections of an experiment configuration file."""

    experiments: Dict[CommandName, ExperimentConfig] = Field(default_factory=dict)

    @classmethod
    def from_file(cls, path: Path | str | None = None) -> "ExperimentsFile":
        """Load experiment sections from a JSON file."""

        config_path = Path(path) if path else DEFAULT_CONFIG_PATH
        try:
            data = json.loads(config_path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise FileNotFoundError(f"Configuration file not found: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"Invalid JSON in configuration file: {config_path}") from exc

        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ValueError(f"Configuration file is invalid: {config_path}\n{exc}") from exc

    def dump(self, path: Path | str | None = None) -> None:
        """Persist the sections back to disk as JSON."""

        config_path = Path(path) if path else DEFAULT_CONFIG_PATH
        config_path.parent.mkdir(parents=True, exist_ok=True)
        config_path.write_text(self.model_dump_json(indent=2), encoding="utf-8")

    def section(self, command: str) -> ExperimentConfig:
        """Return the section for ``command`` (defaults when the file has none)."""

        if command not in COMMANDS:
            raise ValueError(f"Unknown command section: {command}")
        config = self.experiments.get(command)  # type: ignore[call-overload]
        if config is None:
            return ExperimentConfig(command=command)  # type: ignore[arg-type]
        return config.model_copy(update={"command": command})
