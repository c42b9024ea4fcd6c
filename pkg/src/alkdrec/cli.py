"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import backbone, pipeline, saddle
from .config import STRATEGIES, ExperimentConfig, load_config
from .metrics import evaluate, format_table
from .synth import write_planted


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    for key in ("workdir", "interactions", "catalog", "strategy", "tau", "teacher_mode"):
        val = getattr(args, key, None)
        if val is not None:
            changes[key] = val
    return cfg.replace(**changes) if changes else cfg


def _seed_run(args, cfg: ExperimentConfig) -> pipeline.SeedRun:
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    return pipeline.SeedRun(cfg, seed)


def _stage(args, stage: str) -> int:
    cfg = _config(args)
    run = _seed_run(args, cfg)
    out = run.paths.artifact(stage)
    if args.force and out.exists():
        out.unlink()
    path = run.ensure(stage)
    print(path)
    return 0


def cmd_train(args) -> int:
    return _stage(args, "train_teacher" if args.role == "teacher" else "train_student")


def cmd_eval(args) -> int:
    cfg = _config(args)
    run = _seed_run(args, cfg)
    ks = tuple(int(k) for k in args.k.split(","))
    run.ensure("evaluate")
    test = run.instances("test")
    rows = {
        "student": evaluate(backbone.load_model(run.paths.artifact("train_student")), test, ks),
        "distilled": evaluate(backbone.load_model(run.paths.artifact("distill")), test, ks),
    }
    print(json.dumps({k: v.values for k, v in rows.items()}, indent=2, sort_keys=True))
    print(format_table(rows))
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    reports = pipeline.run_experiment(cfg)
    print(json.dumps({k: v.to_json() for k, v in reports.items()}, indent=2, sort_keys=True))
    print(format_table(reports))
    return 0


def cmd_verify(args) -> int:
    result = saddle.run_campaign(
        trials=args.trials, nmin=args.nmin, nmax=args.nmax, tol=args.tol, seed=args.seed,
        mu=args.mu, rule=args.rule, variant=args.variant, ranks=args.ranks,
    )
    print(json.dumps([r.to_json() for r in result.reports]))
    if args.fixtures:
        d = Path(args.fixtures)
        d.mkdir(parents=True, exist_ok=True)
        for i, r in enumerate(result.reports):
            if not r.passed:
                (d / f"trial-{i:03d}.json").write_text(json.dumps(r.to_json(), indent=1) + "\n")
    summary = result.summary()
    width = max(len(k) for k in summary)
    for k, v in summary.items():
        print(f"{k.ljust(width)}  {v}", file=sys.stderr)
    print(f"{summary['passed']}/{summary['trials']}")
    return 0 if summary["guarantee_ok"] == summary["trials"] else 1


def cmd_synth(args) -> int:
    paths = write_planted(args.out, seed=args.seed, n_sessions=args.sessions, n_items=args.items, p_next=args.p_next)
    for name, path in paths.items():
        print(f"{name}\t{path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alkdrec", description="Active LLM-to-student distillation for session recommendation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def stage_parser(name, help_text, **extra):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--workdir")
        p.add_argument("--seed", type=int)
        p.add_argument("--force", action="store_true", help="rebuild the stage even if its artifact exists")
        for flag, kw in extra.items():
            p.add_argument(flag, **kw)
        return p

    stage_parser("prep", "sessionize, filter and split the interactions",
                 **{"--interactions": {}, "--catalog": {}}).set_defaults(func=lambda a: _stage(a, "prep"))
    stage_parser("train", "train the teacher or the student",
                 **{"--role": {"choices": ("teacher", "student"), "required": True}}).set_defaults(func=cmd_train)
    stage_parser("profile", "difficulty and gains for the training pool").set_defaults(func=lambda a: _stage(a, "profile"))
    # stages from select on depend on the batch, so they all take its settings
    batch_flags = {"--strategy": {"choices": STRATEGIES}, "--tau": {"type": int}}
    stage_parser("select", "choose the instances to send to the teacher",
                 **batch_flags).set_defaults(func=lambda a: _stage(a, "select"))
    stage_parser("teach", "collect teacher rankings", **batch_flags,
                 **{"--mode": {"choices": ("simulate", "http"), "dest": "teacher_mode"}}).set_defaults(func=lambda a: _stage(a, "teach"))
    stage_parser("distill", "fine-tune the student on the rankings", **batch_flags).set_defaults(func=lambda a: _stage(a, "distill"))
    stage_parser("eval", "test-split metrics before and after distillation", **batch_flags,
                 **{"--k": {"default": "5,10"}}).set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="every stage for every configured seed")
    p.add_argument("--config", required=True)
    p.add_argument("--workdir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify-theory", help="randomized check of the selection game's closed form")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--nmin", type=int, default=6)
    p.add_argument("--nmax", type=int, default=12)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mu", type=float, default=10.0)
    p.add_argument("--rule", choices=("gamma", "ratio"), default="gamma")
    p.add_argument("--variant", choices=("equalizing", "printed"), default="equalizing")
    p.add_argument("--ranks", choices=saddle.RANK_SCHEMES, default="sparse", help="N distinct ranks from 1..2N, or ranks 1..N")
    p.add_argument("--fixtures", help="directory for failing trials")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("synth", help="write the planted synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sessions", type=int, default=2000)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--p-next", type=float, default=0.8)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
