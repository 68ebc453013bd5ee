"""Experiment configuration and its content hash."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .evaluation import EvalConfig
from .evaluation import config_hash as stable_hash
from .pipeline import RegistrationConfig
from .synth import PopulationConfig

EXPERIMENTS = ("matrix", "system", "settings-count", "learning-curve", "persistent-attack")


@dataclass(frozen=True)
class ExperimentConfig:
    """One reproducible run. The master seed overrides the seeds of the parts."""

    seed: int
    population: PopulationConfig | None = field(default_factory=PopulationConfig)
    corpus_path: str | None = None
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    experiments: tuple = EXPERIMENTS
    persistent_settings: int = 5
    persistent_trials: int = 100_000
    out_dir: str = "out"

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("a seed is required")
        if (self.population is None) == (self.corpus_path is None):
            raise ValueError("exactly one of population and corpus_path must be set")
        bad = [e for e in self.experiments if e not in EXPERIMENTS]
        if bad:
            raise ValueError(f"unknown experiments {bad}")
        object.__setattr__(self, "experiments", tuple(self.experiments))
        if self.population is not None and self.population.seed != self.seed:
            object.__setattr__(self, "population", replace(self.population, seed=self.seed))
        if self.evaluation.seed != self.seed:
            object.__setattr__(self, "evaluation", replace(self.evaluation, seed=self.seed))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "population": None if self.population is None else self.population.to_dict(),
            "corpus_path": self.corpus_path,
            "registration": self.registration.to_dict(),
            "evaluation": self.evaluation.to_dict(),
            "experiments": list(self.experiments),
            "persistent_settings": self.persistent_settings,
            "persistent_trials": self.persistent_trials,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "seed" not in d:
            raise ValueError("config must set 'seed'")
        if d.get("population") is not None:
            d["population"] = PopulationConfig.from_dict(d["population"])
        elif "corpus_path" not in d or d["corpus_path"] is None:
            d["population"] = PopulationConfig()
        else:
            d["population"] = None
        if "registration" in d:
            d["registration"] = RegistrationConfig.from_dict(d["registration"])
        if "evaluation" in d:
            d["evaluation"] = EvalConfig.from_dict(d["evaluation"])
        return cls(**d)

    def hash(self) -> str:
        """Hash of everything that affects results (the output directory does not)."""
        d = self.to_dict()
        d.pop("out_dir")
        return stable_hash(d)


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))
