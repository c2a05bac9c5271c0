# -*- coding: utf-8 -*-
# Copyright: (c) 2026, rlkd contributors
# MIT License (see LICENSE or https://opensource.org/licenses/MIT)

import json

import pytest

from rlkd import _cli as cli


def _write_json(path, value):
    path.write_text(json.dumps(value))
    return str(path)


def _report(name, accuracies):
    seeds = list(range(len(accuracies)))
    summary = {"mean": sum(accuracies) / len(accuracies), "stdev": 0.0, "count": len(accuracies)}
    return {
        "schema_version": 1,
        "name": name,
        "method": name,
        "config_hash": "config",
        "benchmark_hash": "bench",
        "seeds": seeds,
        "runs": [
            {"seed": s, "dev_accuracy": a, "test_accuracy": a, "trace": "t.json"} for s, a in zip(seeds, accuracies)
        ],
        "summary": {"dev_accuracy": summary, "test_accuracy": summary},
        "pairwise": [],
        "teacher_accuracies": {},
        "wall_clock_seconds": 0.0,
    }


def test_parser_requires_verb(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main([])

    assert e.value.code == 2
    assert "required" in capsys.readouterr().err


def test_parser_log_level_choices():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["--log-level", "TRACE", "compare", "--reports", "a", "--out", "b"])

    args = cli.build_parser().parse_args(["--log-level", "DEBUG", "run", "--config", "c.json", "--out", "o"])
    assert args.log_level == "DEBUG"
    assert args.workers == 1


def test_gen_data_and_run(tmp_path, capsys):
    spec = _write_json(tmp_path / "spec.json", {"seed": 2, "n_per_split": [128, 32, 32], "feature_dim": 3})
    assert cli.main(["gen-data", "--spec", spec, "--out", str(tmp_path / "data")]) == 0
    written = capsys.readouterr().out.splitlines()
    assert [p.rsplit("/", 1)[-1] for p in written] == ["train.jsonl", "dev.jsonl", "test.jsonl"]

    config = {
        "method": "ft",
        "seeds": [1, 2],
        "student": [4],
        "benchmark": {"seed": 2, "n_per_split": [128, 32, 32], "feature_dim": 3},
        "teachers": {"num_teachers": 1, "epochs": 1, "hidden_layers": [[4]]},
        "hyperparameters": {"epochs": 1, "lr_iterations": 5},
    }
    path = _write_json(tmp_path / "config.json", config)
    assert cli.main(["run", "--config", path, "--out", str(tmp_path / "out"), "--workers", "2"]) == 0
    assert capsys.readouterr().out.startswith("ft: test accuracy ")
    assert (tmp_path / "out" / "report.json").is_file()


def test_compare(tmp_path, capsys):
    first = _write_json(tmp_path / "a.json", _report("ft", [0.5, 0.6, 0.55]))
    second = _write_json(tmp_path / "b.json", _report("rlkd-r1", [0.7, 0.72, 0.71]))
    assert cli.main(["compare", "--reports", first, second, "--out", str(tmp_path / "out")]) == 0
    assert capsys.readouterr().out.startswith("ft vs rlkd-r1: p=")
    assert (tmp_path / "out" / "comparison.txt").is_file()


@pytest.mark.parametrize(
    "argv, expected",
    [
        (["gen-data", "--spec", "{tmp}/missing.json", "--out", "{tmp}"], "rlkd gen-data: Configuration field 'spec'"),
        (["run", "--config", "{tmp}/missing.json", "--out", "{tmp}"], "rlkd run: Configuration field 'config'"),
        (["compare", "--reports", "{tmp}/a.json", "--out", "{tmp}"], "need at least 2 reports"),
        (["plot-data", "--trace", "{tmp}/trace.json", "--out", "{tmp}"], "rlkd plot-data: Cannot read trace"),
    ],
    ids=["gen-data", "run", "compare", "plot-data"],
)
def test_command_failure(tmp_path, capsys, argv, expected):
    argv = [a.format(tmp=tmp_path) for a in argv]
    assert cli.main(argv) == 1
    assert expected in capsys.readouterr().err


def test_run_invalid_config(tmp_path, capsys):
    path = _write_json(tmp_path / "config.json", {"method": "rlkd-r3"})
    assert cli.main(["run", "--config", path, "--out", str(tmp_path / "out")]) == 1
    assert "'hyperparameters.gamma' is required by method rlkd-r3" in capsys.readouterr().err
