import csv

import pytest

from lerl.cli import main

CONFIG = """
output_dir = "{out}"

[env]
list_length = 2
max_session_length = 6
n_users = 8

[catalog]
n_items = 16
n_categories = 4

[planner]
m = 2

[policy]
dim = 4
hidden = 8

[training]
seed = 42
iterations = 2
batch_episodes = 2
eval_sessions = 3
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(CONFIG.format(out=(tmp_path / "run").as_posix()))
    return p


def test_check_exit_zero(capsys):
    assert main(["check", "quit", "clip", "pool"]) == 0
    out = capsys.readouterr().out
    assert "3/3 checks passed" in out


def test_check_unknown_name():
    assert main(["check", "nonsense"]) == 2


def test_missing_config_exit_two(tmp_path):
    assert main(["train", "--config", str(tmp_path / "missing.file")]) == 2


def test_unknown_subcommand_exit_two(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err
    assert main([]) == 2


def test_train_outputs_and_replay(config, tmp_path):
    assert main(["train", "--config", str(config)]) == 0
    run = tmp_path / "run"
    for name in ["report.csv", "report.txt", "trajectories.jsonl", "checkpoint.bin", "resolved_config.toml"]:
        assert (run / name).is_file()
    first = {n: (run / n).read_bytes() for n in ["report.csv", "checkpoint.bin", "trajectories.jsonl"]}
    resolved = tmp_path / "resolved.toml"
    resolved.write_bytes((run / "resolved_config.toml").read_bytes())
    assert main(["train", "--config", str(resolved), "--out", str(tmp_path / "replay")]) == 0
    for name, blob in first.items():
        assert (tmp_path / "replay" / name).read_bytes() == blob


def test_eval_uses_checkpoint(config, tmp_path, capsys):
    assert main(["train", "--config", str(config), "--variant", "wo_hsp"]) == 0
    assert main(["eval", "--config", str(config), "--variant", "wo_hsp", "--sessions", "2"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "run" / "report.csv")))
    assert {r["n_sessions"] for r in rows} == {"2"}


def test_eval_without_checkpoint_is_domain_error(config, tmp_path):
    assert main(["eval", "--config", str(config), "--out", str(tmp_path / "empty")]) == 1


def test_ablate_four_variants(config, tmp_path):
    assert main(["ablate", "--config", str(config), "--sessions", "2"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "run" / "report.csv")))
    assert sorted({r["variant"] for r in rows}) == ["full", "ppo_only", "wo_hc", "wo_hsp"]
    assert len(rows) == 12


def test_gen_data_and_file_catalog(tmp_path):
    out = tmp_path / "data"
    assert main(["gen-data", "--seed", "5", "--out", str(out)]) == 0
    assert (out / "catalog.csv").is_file() and (out / "population.csv").is_file()
    cfg = tmp_path / "file.toml"
    cfg.write_text(CONFIG.format(out=(tmp_path / "r2").as_posix()).replace(
        "n_items = 16\nn_categories = 4", f'source = "file"\npath = "{(out / "catalog.csv").as_posix()}"'))
    assert main(["train", "--config", str(cfg)]) == 0


def test_case_study(config, tmp_path, capsys):
    assert main(["case-study", "--config", str(config)]) == 0
    assert (tmp_path / "run" / "case_study_full.jsonl").is_file()
    assert (tmp_path / "run" / "case_study_wo_hsp.jsonl").is_file()
    assert "full: T_int=" in capsys.readouterr().out


def test_bad_value_exit_two(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[training]\nseed = 1\n[env]\nlist_length = -1\n")
    assert main(["train", "--config", str(p)]) == 2
