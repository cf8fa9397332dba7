"""Run configuration: paths, loop settings, and search knobs.

A config can come from a JSON file, CLI flags, or both (flags win); the
effective config is serialized next to every output for reproducibility.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .cal import LrHyper
from .evaluation import ALL_STRATEGIES


@dataclass
class RunConfig:
    # Input files
    corpus: str | None = None
    annotations: str | None = None
    lexicon: str | None = None          # one surface form per line, fallback annotator
    qrels: str | None = None
    topics: str | None = None

    # Artifact directories
    bundle_dir: str = "bundle"
    checkpoint_dir: str = "checkpoints"
    report_dir: str = "reports"
    sessions_dir: str = "sessions"

    # Review loop
    stop_ratio: float = 0.5
    stop_ratios: list[float] = field(default_factory=lambda: [0.2, 0.5])
    seed: int = 0
    batch_growth: float = 0.1
    l2_lambda: float = 1e-4
    learning_rate: float = 0.1
    max_epochs: int = 200
    tolerance: float = 1e-6

    # Question phase
    n_questions: int = 20
    question_counts: list[int] = field(default_factory=lambda: [10, 20, 40])
    strategies: list[str] = field(default_factory=lambda: ["sbstar", "random", "bmi_lr"])
    min_df: int = 1
    max_df_ratio: float = 1.0
    alpha_floor: float = 1e-6
    prior_scale: float = 1.0

    # Service
    port: int = 8000
    host: str = "127.0.0.1"
    top_k: int = 20
    stall_timeout: float = 600.0

    def validate(self) -> None:
        if not 0 < self.stop_ratio <= 1:
            raise ValueError(f"stop_ratio must be in (0, 1], got {self.stop_ratio}")
        for r in self.stop_ratios:
            if not 0 < r <= 1:
                raise ValueError(f"stop_ratios entries must be in (0, 1], got {r}")
        if self.n_questions < 0 or any(q < 0 for q in self.question_counts):
            raise ValueError("question counts must be nonnegative")
        unknown = [s for s in self.strategies if s not in ALL_STRATEGIES]
        if unknown:
            raise ValueError(f"unknown strategies: {unknown} (choose from {list(ALL_STRATEGIES)})")
        if not 0 < self.max_df_ratio <= 1:
            raise ValueError(f"max_df_ratio must be in (0, 1], got {self.max_df_ratio}")
        if self.min_df < 0:
            raise ValueError("min_df must be nonnegative")
        if self.alpha_floor <= 0 or self.prior_scale <= 0:
            raise ValueError("alpha_floor and prior_scale must be positive")
        if self.max_epochs < 1 or self.learning_rate <= 0 or self.tolerance <= 0:
            raise ValueError("invalid learner hyperparameters")
        if self.batch_growth <= 0:
            raise ValueError("batch_growth must be positive")

    def lr_hyper(self) -> LrHyper:
        return LrHyper(
            l2_lambda=self.l2_lambda,
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            tolerance=self.tolerance,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**data)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """New config with non-None override values applied."""
        known = {f.name for f in dataclasses.fields(self)}
        clean = {k: v for k, v in overrides.items() if k in known and v is not None}
        return dataclasses.replace(self, **clean)
