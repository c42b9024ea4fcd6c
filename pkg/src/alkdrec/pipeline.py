"""End-to-end experiment: prep, train, profile, select, teach, distill, evaluate.

Every stage writes one marker artifact plus a stamp of the settings it used;
a stage is skipped when its artifact exists, its stamp matches the current
settings and none of its inputs was rebuilt in the same run. Seed-independent
data lives in ``<workdir>/data``; everything else in ``<workdir>/seed-<n>``,
with selection-dependent files suffixed by the strategy name.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import backbone, dataset, policy, profiling
from .config import ExperimentConfig, dump_config
from .distill import finetune
from .metrics import MetricsReport, evaluate
from .policy import Batch
from .teacher import Teacher, assign_hidden_types, read_rankings, summarize, write_rankings
from .teacher.client import ChatClient
from .teacher.prompts import Hints

log = logging.getLogger(__name__)

STAGES = ("prep", "train_teacher", "train_student", "profile", "select", "teach", "distill", "evaluate")
DEPENDS = {
    "prep": (),
    "train_teacher": ("prep",),
    "train_student": ("prep",),
    "profile": ("prep", "train_teacher"),
    "select": ("profile",),
    "teach": ("prep", "train_teacher", "select"),
    "distill": ("prep", "train_student", "teach"),
    "evaluate": ("prep", "train_student", "distill"),
}
_TRAIN_KEYS = ("last_item_weight", "learning_rate", "batch_size", "train_epochs", "negatives_per_positive")
# config fields each stage reads; a changed value makes the stage stale
STAGE_KEYS = {
    "prep": ("interactions", "catalog", "input_format", "window_hours", "min_session_len", "split_ratio", "split_seed"),
    "train_teacher": ("teacher_dim",) + _TRAIN_KEYS,
    "train_student": ("student_dim",) + _TRAIN_KEYS,
    "profile": ("mu", "rank_direction"),
    "select": ("type_ratio", "k_star_rule", "strategy", "tau"),
    "teach": ("teacher_mode", "kappa", "ranking_length", "type_ratio", "summary_cases", "max_reasks", "llm_model"),
    "distill": ("alpha", "alpha_bands", "distill_epochs", "distill_learning_rate", "patience", "negatives_per_positive", "batch_size"),
    "evaluate": ("ks",),
}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


def baseline_select(strategy: str, profiles: Sequence[profiling.InstanceProfile], tau: int, seed: int) -> Batch:
    """Random, easiest or hardest ``tau`` instances of the pool."""
    if tau > len(profiles):
        raise ValueError(f"tau={tau} exceeds the pool of {len(profiles)} instances")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if strategy == "random":
        sids = sorted(p.sid for p in profiles)
        picked = np.random.default_rng(seed).choice(len(sids), size=tau, replace=False)
        return Batch(tuple(int(sids[i]) for i in picked), seed)
    by_df = sorted(profiles, key=lambda p: (-p.df, p.sid))
    if strategy == "hardest":
        return Batch(tuple(p.sid for p in by_df[:tau]), seed)
    if strategy == "easiest":
        return Batch(tuple(p.sid for p in by_df[::-1][:tau]), seed)
    raise ValueError(f"unknown baseline strategy {strategy!r}")


@dataclass
class Paths:
    root: Path
    seed: int
    strategy: str

    @property
    def data(self) -> Path:
        return self.root / "data"

    @property
    def run(self) -> Path:
        return self.root / f"seed-{self.seed}"

    def artifact(self, stage: str) -> Path:
        s = self.strategy
        return {
            "prep": self.data / "sessions.jsonl",
            "train_teacher": self.run / "teacher.bin",
            "train_student": self.run / "student.bin",
            "profile": self.run / "profiles.jsonl",
            "select": self.run / f"batch-{s}.txt",
            "teach": self.run / f"rankings-{s}.jsonl",
            "distill": self.run / f"distilled-{s}.bin",
            "evaluate": self.run / f"report-{s}.json",
        }[stage]


@dataclass
class SeedRun:
    """One seed of the experiment; stages run lazily in dependency order."""

    cfg: ExperimentConfig
    seed: int
    client_factory: Callable[[], ChatClient] | None = None
    ran: set[str] = field(default_factory=set)
    _ds: dataset.SessionDataset | None = None

    def __post_init__(self):
        self.paths = Paths(Path(self.cfg.workdir), self.seed, self.cfg.strategy)

    # -- scheduling --------------------------------------------------------

    def _stamp_path(self, stage: str) -> Path:
        out = self.paths.artifact(stage)
        return out.with_name(out.name + ".stamp")

    def stamp(self, stage: str) -> str:
        # upstream stamps fold in, so a setting change invalidates everything downstream
        own = {k: getattr(self.cfg, k) for k in STAGE_KEYS[stage]}
        own["upstream"] = [self.stamp(d) for d in DEPENDS[stage]]
        return json.dumps(own, sort_keys=True)

    def stale(self, stage: str) -> bool:
        if not self.paths.artifact(stage).exists() or any(d in self.ran for d in DEPENDS[stage]):
            return True
        stamp = self._stamp_path(stage)
        return not stamp.exists() or stamp.read_text(encoding="utf-8") != self.stamp(stage)

    def ensure(self, stage: str) -> Path:
        for dep in DEPENDS[stage]:
            self.ensure(dep)
        out = self.paths.artifact(stage)
        if stage in self.ran or not self.stale(stage):
            return out
        out.parent.mkdir(parents=True, exist_ok=True)
        log.info("seed %d: running %s", self.seed, stage)
        try:
            getattr(self, f"_{stage}")()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, exc) from exc
        self._stamp_path(stage).write_text(self.stamp(stage), encoding="utf-8")
        self.ran.add(stage)
        return out

    def run_all(self) -> MetricsReport:
        self.ensure("evaluate")
        return read_report(self.paths.artifact("evaluate"))

    # -- helpers -----------------------------------------------------------

    @property
    def ds(self) -> dataset.SessionDataset:
        if self._ds is None:
            self._ds = dataset.load_dataset(self.paths.data)
        return self._ds

    def instances(self, name: str) -> list[dataset.EvalInstance]:
        return self.ds.instances(name)

    def model(self, stage: str) -> backbone.RecommenderModel:
        return backbone.load_model(self.ensure(stage))

    # -- stages ------------------------------------------------------------

    def _prep(self):
        cfg = self.cfg
        if cfg.input_format == "hetrec":
            log_ = dataset.load_hetrec_ratings(cfg.interactions)
        else:
            log_ = dataset.load_interactions(cfg.interactions)
        sessions, id_map = dataset.filter_short(dataset.sessionize(log_, cfg.window_hours), cfg.min_session_len)
        catalog = dataset.load_catalog(cfg.catalog).remap(id_map) if cfg.catalog else None
        ds = dataset.split_sessions(sessions, cfg.split_ratio, cfg.split_seed, len(id_map), catalog)
        self._ds = None
        dataset.save_dataset(self.paths.data, ds, id_map)
        (self.paths.data / "config.txt").write_text(dump_config(cfg), encoding="utf-8")

    def _train(self, stage: str, role: str, dim: int, seed_offset: int):
        seed = self.seed * 1000 + seed_offset
        model = backbone.init_model(self.ds.n_items, dim, seed, role, self.cfg.last_item_weight)
        model, hist = backbone.train_bpr(model, self.ds.part("train"), self.cfg.train_config(seed))
        backbone.save_model(self.paths.artifact(stage), model)
        log.info("%s loss %.4f -> %.4f", role, hist[0], hist[-1])

    def _train_teacher(self):
        self._train("train_teacher", "teacher", self.cfg.teacher_dim, 1)

    def _train_student(self):
        self._train("train_student", "student", self.cfg.student_dim, 2)

    def _profile(self):
        profiles = profiling.profile_sessions(self.model("train_teacher"), self.ds.part("train"), self.cfg.mu, self.cfg.rank_direction)
        profiling.write_profiles(self.paths.artifact("profile"), profiles)

    def _select(self):
        cfg = self.cfg
        profiles = profiling.read_profiles(self.paths.artifact("profile"))
        seed = self.seed * 1000 + 3
        if cfg.strategy == "active":
            counts = profiling.type_counts(len(profiles), cfg.type_ratio)
            pol = policy.policy_from_profiles(profiles, counts, cfg.k_star_rule)
            policy.write_policy(self.paths.run / "policy.json", pol)
            batch = policy.sample_batch(pol, cfg.tau, seed)
        else:
            batch = baseline_select(cfg.strategy, profiles, cfg.tau, seed)
        policy.write_batch(self.paths.artifact("select"), batch)

    def _teacher(self) -> Teacher:
        cfg = self.cfg
        model = self.model("train_teacher")
        if cfg.teacher_mode == "simulate":
            pool = sorted(s.sid for s in self.ds.part("train"))
            sim = assign_hidden_types(pool, profiling.type_counts(len(pool), cfg.type_ratio), self.seed * 1000 + 4)
            return Teacher(model, "simulate", cfg.kappa, cfg.ranking_length, sim=sim)
        if self.ds.catalog is None:
            raise ValueError("http mode needs an item catalog")
        client = self.client_factory() if self.client_factory else ChatClient(cfg.endpoint())
        hints = self._hints(model, client)
        return Teacher(model, "http", cfg.kappa, cfg.ranking_length, client=client, catalog=self.ds.catalog,
                       hints=hints, max_reasks=cfg.max_reasks)

    def _hints(self, model, client) -> Hints:
        path = self.paths.run / "hints.json"
        if path.exists():
            raw = json.loads(path.read_text(encoding="utf-8"))
            return Hints(raw["lines"], raw["case_count"], raw["fallback"])
        hints = summarize(model, self.ds.part("train"), self.ds.catalog, client, self.cfg.summary_cases, self.seed)
        path.write_text(json.dumps({"lines": hints.lines, "case_count": hints.case_count, "fallback": hints.fallback}))
        return hints

    def _teach(self):
        batch = policy.read_batch(self.paths.artifact("select"))
        insts = [dataset.leave_one_out(self.ds.session(sid)) for sid in batch.sids]
        rankings = self._teacher().teach_many(insts)
        write_rankings(self.paths.artifact("teach"), rankings)

    def _distill(self):
        rankings = read_rankings(self.paths.artifact("teach"))
        insts = {r.sid: dataset.leave_one_out(self.ds.session(r.sid)) for r in rankings}
        model, hist = finetune(self.model("train_student"), rankings, insts, self.instances("valid"), self.cfg.distill_config(self.seed * 1000 + 5))
        backbone.save_model(self.paths.artifact("distill"), model)
        (self.paths.run / f"distill-history-{self.cfg.strategy}.json").write_text(json.dumps(hist))

    def _evaluate(self):
        test = self.instances("test")
        ks = self.cfg.ks
        out = {
            "student": evaluate(self.model("train_student"), test, ks).values,
            "distilled": evaluate(self.model("distill"), test, ks).values,
            "n_instances": len(test),
            "strategy": self.cfg.strategy,
            "seed": self.seed,
        }
        self.paths.artifact("evaluate").write_text(json.dumps(out, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_report(path: str | Path, key: str = "distilled") -> MetricsReport:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return MetricsReport(raw[key], [dict(raw[key])], raw["n_instances"])


def run_experiment(cfg: ExperimentConfig, client_factory=None) -> dict[str, MetricsReport]:
    """Run every configured seed; returns mean reports for the student before and after distillation."""
    runs = [SeedRun(cfg, s, client_factory) for s in cfg.seeds]
    for r in runs:
        r.run_all()
    out = {}
    for key in ("student", "distilled"):
        out[key] = MetricsReport.mean_over([read_report(r.paths.artifact("evaluate"), key) for r in runs])
    summary = {k: v.to_json() for k, v in out.items()}
    Path(cfg.workdir, f"report-{cfg.strategy}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out
