import json

import pytest

from submatch.cli import build_parser, main
from submatch.graph import MatchPair
from submatch.io import read_pairs, write_pairs

from conftest import complete_graph

SUBCOMMANDS = ("gen", "match", "train", "eval", "bench", "ablate")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["gen", "--num", "12", "--qmin", "3", "--qmax", "4", "--graphs", "6", "--nodes", "9:11",
                 "--split", "6:3:3", "--seed", "7", "--out", str(out)]) == 0
    return out


def test_gen_outputs(generated):
    for name, n in (("train", 6), ("val", 3), ("test", 3)):
        assert len(read_pairs(generated / f"{name}.jsonl")) == n
    manifest = json.loads((generated / "manifest.json").read_text())
    assert manifest["command"] == "gen" and manifest["seed"] == 7
    assert manifest["settings"]["qmax"] == 4


def test_gen_reproducible(generated, tmp_path, capsys):
    code, _, _ = run(capsys, "gen", "--num", "12", "--qmin", "3", "--qmax", "4", "--graphs", "6",
                     "--nodes", "9:11", "--split", "6:3:3", "--seed", "7", "--out", str(tmp_path))
    assert code == 0
    for name in ("train", "val", "test"):
        assert (tmp_path / f"{name}.jsonl").read_bytes() == (generated / f"{name}.jsonl").read_bytes()


def test_match_triangle_in_k4(tmp_path, capsys):
    path = tmp_path / "k4.jsonl"
    write_pairs(path, [MatchPair(complete_graph(4), complete_graph(3), [(0, 1, 2)])])
    code, out, _ = run(capsys, "match", str(path), "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out)["mappings"] == [24]
    assert (tmp_path / "matches.csv").exists()


def test_train_eval_bench(generated, tmp_path, capsys):
    run_dir = tmp_path / "run"
    code, out, _ = run(capsys, "train", "--train", str(generated / "train.jsonl"), "--val",
                       str(generated / "val.jsonl"), "--epochs", "2", "--layers", "2", "--heads", "2",
                       "--dim", "8", "--out", str(run_dir))
    assert code == 0
    summary = json.loads(out)
    assert summary["epochs_run"] == 2
    assert len(list((run_dir / "checkpoints").glob("epoch_*.json"))) == 2
    assert len((run_dir / "train_log.jsonl").read_text().splitlines()) == 2
    ckpt = summary["checkpoint"]

    code, out, _ = run(capsys, "eval", str(generated / "test.jsonl"), "--ckpt", ckpt, "--by-ratio",
                       "--out", str(tmp_path / "ev"))
    assert code == 0
    report = json.loads(out)
    assert report["precision"] == report["recall"] == report["f1"]
    assert sum(b["count"] for b in report["buckets"].values()) == 3

    code, out, _ = run(capsys, "bench", str(generated / "test.jsonl"), "--ckpt", ckpt,
                       "--out", str(tmp_path / "b"))
    assert code == 0
    assert {r["matcher"] for r in json.loads(out)["rows"]} == {"exact-all", "exact-first", "model"}


def test_config_file_and_flag_precedence(generated, tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[global]\nseed = 3\n\n[train]\nepochs = 1\nlayers = 2\nheads = 2\ndim = 8\nno-delete = true\n")
    code, _, _ = run(capsys, "train", "--config", str(cfg), "--train", str(generated / "train.jsonl"),
                     "--val", str(generated / "val.jsonl"), "--seed", "5", "--out", str(tmp_path / "r"))
    assert code == 0
    settings = json.loads((tmp_path / "r" / "manifest.json").read_text())["settings"]
    assert settings["seed"] == 5 and settings["epochs"] == 1 and settings["no_delete"] is True


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[match]\ncolour = red\n")
    code, _, err = run(capsys, "match", "x.jsonl", "--config", str(cfg))
    assert code == 1 and "unknown option" in err


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--bogus"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_missing_pairs_is_data_error(tmp_path, capsys):
    code, _, err = run(capsys, "match", str(tmp_path / "none.jsonl"), "--out", str(tmp_path))
    assert code == 2 and "not found" in err


def test_corrupt_pairs_is_data_error(tmp_path, capsys):
    path = tmp_path / "bad.jsonl"
    path.write_text("{oops\n")
    code, _, err = run(capsys, "match", str(path), "--out", str(tmp_path))
    assert code == 2 and ":1:" in err


def test_invalid_model_shape_is_usage_error(generated, tmp_path, capsys):
    code, _, err = run(capsys, "train", "--train", str(generated / "train.jsonl"), "--val",
                       str(generated / "val.jsonl"), "--dim", "10", "--heads", "4", "--out", str(tmp_path))
    assert code == 1 and "divide" in err


def test_numeric_failure_exit_code(generated, tmp_path, capsys, monkeypatch):
    from submatch import cli
    from submatch.numerics import NonFiniteError

    def boom(*args, **kwargs):
        raise NonFiniteError("non-finite value produced by matmul")

    monkeypatch.setattr(cli, "train", boom)
    code, _, err = run(capsys, "train", "--train", str(generated / "train.jsonl"), "--val",
                       str(generated / "val.jsonl"), "--out", str(tmp_path))
    assert code == 3 and "numeric failure" in err


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_lists_every_flag(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    parser = build_parser()
    sub = next(a for a in parser._actions if hasattr(a, "choices") and isinstance(a.choices, dict))
    for action in sub.choices[command]._actions:
        for opt in action.option_strings:
            assert opt in text


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_example_config_is_valid(command):
    from pathlib import Path

    from submatch.cli import parse_args

    example = Path(__file__).resolve().parents[1] / "submatch.example.ini"
    files = {"match": ["p.jsonl"], "eval": ["p.jsonl", "--ckpt", "c.json"], "bench": ["p.jsonl"],
             "train": ["--train", "a", "--val", "b"], "ablate": ["--train", "a", "--val", "b", "--test", "c"]}
    args = parse_args([command, "--config", str(example), *files.get(command, [])])
    assert args.out == "runs/example" and args.seed == 0
