"""Experiment configuration and report rows."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..entropy import TruncationPolicy
from ..errors import ConfigError
from ..tree import PriorSchedule

SCHEMA_VERSION = 1
KINDS = ("entropy-convergence", "tv-convergence", "impact-level", "spacing-law", "beta-moments")
#: environment variable that overrides every config's output directory
OUTPUT_ENV = "POLYATREE_OUTPUT_DIR"


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a density, a prior and a grid of ``(n, seed)`` pairs.

    ``options`` carries kind-specific knobs, e.g. ``a_values``, ``orders``
    and ``draws`` for ``beta-moments``.
    """

    kind: str
    density: str = "uniform"
    prior: str = "exp:c=1,beta=3"
    sample_sizes: tuple[int, ...] = (100, 1000, 10000)
    seeds: tuple[int, ...] = tuple(range(20))
    policy: str = "auto"
    output: str = "results"
    workers: int = 1
    plot: bool = False
    options: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if not self.sample_sizes or any(n < 1 for n in self.sample_sizes):
            raise ConfigError("sample_sizes must be a non-empty list of positive integers")
        if any(b <= a for a, b in zip(self.sample_sizes, self.sample_sizes[1:])):
            raise ConfigError("sample_sizes must be strictly increasing")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.prior_schedule
            self.truncation_policy
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def prior_schedule(self) -> PriorSchedule:
        return PriorSchedule.parse(self.prior)

    @property
    def truncation_policy(self) -> TruncationPolicy:
        return TruncationPolicy.parse(self.policy)

    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        if "schema_version" not in data:
            raise ConfigError("config is missing schema_version")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        if "kind" not in data:
            raise ConfigError("config is missing kind")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path, kind: str | None = None) -> "ExperimentConfig":
        """Read a JSON config; ``kind`` fills in or must match the file's kind."""
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if kind is not None and isinstance(data, dict):
            if data.setdefault("kind", kind) != kind:
                raise ConfigError(f"config kind {data['kind']!r} does not match requested {kind!r}")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sample_sizes"] = list(self.sample_sizes)
        d["seeds"] = list(self.seeds)
        return d


# statistics allowed to be infinite (e.g. a divergence against a zero split)
INFINITE_OK = frozenset({"kl"})


@dataclass(frozen=True)
class ReportRow:
    kind: str
    density: str
    n: int
    seed: int
    statistic: str
    value: float
    runtime_ms: float = 0.0

    def __post_init__(self):
        v = float(self.value)
        if math.isnan(v) or (math.isinf(v) and self.statistic not in INFINITE_OK):
            raise ValueError(f"non-finite value {v} for statistic {self.statistic!r}")
        object.__setattr__(self, "value", v)

    @property
    def sort_key(self) -> tuple:
        return (self.kind, self.density, self.n, self.seed)

    def csv_fields(self) -> list[str]:
        return [self.kind, self.density, str(self.n), str(self.seed), self.statistic, repr(self.value)]


CSV_HEADER = ["kind", "density", "n", "seed", "statistic", "value"]
