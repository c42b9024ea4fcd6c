"""Experiment configuration as a flat ``key = value`` text file."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .backbone import TrainConfig
from .distill import DistillConfig
from .teacher.client import EndpointConfig


class ConfigError(ValueError):
    pass


STRATEGIES = ("active", "random", "easiest", "hardest")


@dataclass
class ExperimentConfig:
    # data
    interactions: str = "data/interactions.tsv"
    catalog: str = ""
    input_format: str = "tsv"  # tsv | hetrec
    workdir: str = "runs/default"
    window_hours: int = 24
    min_session_len: int = 5
    split_ratio: tuple[float, ...] = (6.0, 2.0, 2.0)
    split_seed: int = 0
    # models
    teacher_dim: int = 100
    student_dim: int = 10
    last_item_weight: float = 0.0
    learning_rate: float = 1e-3
    batch_size: int = 1024
    train_epochs: int = 30
    negatives_per_positive: int = 1
    # selection
    mu: float = 10.0
    type_ratio: tuple[float, ...] = (1.0, 5.0, 4.0)
    rank_direction: str = "hard-first"
    k_star_rule: str = "gamma"
    strategy: str = "active"
    tau: int = 500
    # teacher
    teacher_mode: str = "simulate"
    kappa: int = 50
    ranking_length: int = 25
    summary_cases: int = 20
    max_reasks: int = 2
    base_url: str = "https://api.openai.com/v1"
    llm_model: str = "gpt-4-turbo"
    api_key_env: str = "OPENAI_API_KEY"
    request_timeout: float = 120.0
    max_in_flight: int = 4
    retry_limit: int = 3
    cache_dir: str = "cache"
    # distillation
    alpha: tuple[float, ...] = (3.0, 2.0, 1.0)
    alpha_bands: tuple[int, ...] = (5, 15, 25)
    distill_epochs: int = 50
    distill_learning_rate: float = 1e-3
    patience: int = 5
    # evaluation
    ks: tuple[int, ...] = (5, 10)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.teacher_mode not in ("simulate", "http"):
            raise ConfigError("teacher_mode must be simulate or http")
        if self.input_format not in ("tsv", "hetrec"):
            raise ConfigError("input_format must be tsv or hetrec")
        if len(self.alpha) != len(self.alpha_bands):
            raise ConfigError("alpha and alpha_bands must have the same length")
        if list(self.alpha_bands) != sorted(self.alpha_bands):
            raise ConfigError("alpha_bands must be increasing")
        if len(self.type_ratio) != 3 or len(self.split_ratio) != 3:
            raise ConfigError("type_ratio and split_ratio need three parts")
        if self.tau < 1 or self.kappa < self.ranking_length:
            raise ConfigError("need tau >= 1 and kappa >= ranking_length")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.train_epochs, self.negatives_per_positive, seed)

    def distill_config(self, seed: int) -> DistillConfig:
        return DistillConfig(
            epochs=self.distill_epochs,
            learning_rate=self.distill_learning_rate,
            negatives_per_positive=self.negatives_per_positive,
            alpha=tuple(zip(self.alpha_bands, self.alpha)),
            patience=self.patience,
            batch_size=self.batch_size,
            seed=seed,
        )

    def endpoint(self) -> EndpointConfig:
        return EndpointConfig(
            base_url=self.base_url, model=self.llm_model, api_key_env=self.api_key_env,
            timeout=self.request_timeout, max_in_flight=self.max_in_flight,
            retry_limit=self.retry_limit, cache_dir=self.cache_dir,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _parse_value(name: str, kind, text: str):
    text = text.strip()
    try:
        if kind in ("int", int):
            return int(text)
        if kind in ("float", float):
            return float(text)
        if kind in ("str", str):
            return text
        if "int" in str(kind):
            return tuple(int(v) for v in text.split(",") if v.strip())
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, lists are comma separated."""
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    values = dataclasses.asdict(base) if base is not None else {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, kinds[key], value)
    return ExperimentConfig(**values)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _render(value) -> str:
    if isinstance(value, tuple):
        return ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = ["# experiment configuration; lists are comma separated"]
    for f in fields(cfg):
        lines.append(f"{f.name} = {_render(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"
