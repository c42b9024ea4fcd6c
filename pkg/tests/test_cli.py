import json

import pytest

from alkdrec.cli import build_parser, main
from alkdrec.config import ExperimentConfig, dump_config
from alkdrec.synth import write_planted


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "data"), "--seed", "1", "--sessions", "300", "--items", "80"]) == 0
    cfg = ExperimentConfig(
        interactions=str(root / "data" / "interactions.tsv"), catalog=str(root / "data" / "catalog.tsv"),
        workdir=str(root / "work"), teacher_dim=16, student_dim=4, learning_rate=0.01, batch_size=256,
        train_epochs=3, tau=15, kappa=30, distill_epochs=2, seeds=(0, 1),
    )
    path = root / "exp.cfg"
    path.write_text(dump_config(cfg))
    return path, root


def test_synth_files(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--sessions", "20", "--items", "30"]) == 0
    out = capsys.readouterr().out
    assert "interactions\t" in out and (tmp_path / "catalog.tsv").exists()
    assert len((tmp_path / "catalog.tsv").read_text().splitlines()) == 30


def test_stage_commands(cfg_file, capsys):
    path, root = cfg_file
    c = ["--config", str(path), "--seed", "0"]
    assert main(["prep", *c]) == 0
    assert main(["train", "--role", "teacher", *c]) == 0
    assert main(["train", "--role", "student", *c]) == 0
    assert main(["profile", *c]) == 0
    assert main(["select", *c, "--strategy", "random", "--tau", "12"]) == 0
    assert main(["teach", *c, "--mode", "simulate", "--strategy", "random", "--tau", "12"]) == 0
    assert main(["distill", *c, "--strategy", "random", "--tau", "12"]) == 0
    assert main(["eval", *c, "--strategy", "random", "--tau", "12", "--k", "5,10"]) == 0
    out = capsys.readouterr().out
    assert "batch-random.txt" in out
    assert "distilled" in out and "ndcg@10" in out
    assert len((root / "work" / "seed-0" / "batch-random.txt").read_text().split()) >= 12


def test_force_rebuilds(cfg_file, capsys):
    path, root = cfg_file
    c = ["--config", str(path), "--seed", "0"]
    main(["profile", *c])
    stamp = (root / "work" / "seed-0" / "profiles.jsonl").stat().st_mtime_ns
    main(["profile", *c])
    assert (root / "work" / "seed-0" / "profiles.jsonl").stat().st_mtime_ns == stamp
    main(["profile", *c, "--force"])
    assert (root / "work" / "seed-0" / "profiles.jsonl").stat().st_mtime_ns != stamp


def test_run(cfg_file, capsys):
    path, root = cfg_file
    assert main(["run", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    data = json.loads(out[: out.rindex("}") + 1])
    assert len(data["distilled"]["per_seed"]) == 2
    assert out.rstrip().splitlines()[-1].startswith("distilled")


def test_stage_failure_exit_code(cfg_file, capsys):
    path, _ = cfg_file
    assert main(["select", "--config", str(path), "--seed", "0", "--tau", "100000"]) == 2
    assert "stage select failed" in capsys.readouterr().err


def test_verify_theory(tmp_path, capsys):
    code = main(["verify-theory", "--trials", "5", "--nmax", "8", "--fixtures", str(tmp_path / "fx")])
    captured = capsys.readouterr()
    lines = captured.out.strip().splitlines()
    reports = json.loads(lines[0])
    assert len(reports) == 5
    passed = sum(r["passed"] for r in reports)
    assert lines[-1] == f"{passed}/5"
    assert "guarantee_ok" in captured.err
    assert code == 0
    assert len(list((tmp_path / "fx").glob("trial-*.json"))) == 5 - passed


def test_parser_rejects_unknown_strategy():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["select", "--strategy", "best"])
