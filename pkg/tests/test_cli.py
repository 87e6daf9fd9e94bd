import json

import pytest

from mathabs.appendix import equation_library
from mathabs.cli import build_parser, main
from mathabs.library import Library
from mathabs.trace import read_traces


@pytest.fixture
def lib_path(tmp_path):
    p = tmp_path / "lib.json"
    equation_library().save(str(p))
    return str(p)


def test_solve_and_expand(tmp_path, lib_path, capsys):
    out = tmp_path / "t.jsonl"
    rc = main(["solve", "--domain", "equations", "--problem", "x = (3 + 4)",
               "--library", lib_path, "--out", str(out)])
    assert rc == 0
    assert capsys.readouterr().out.splitlines()[-1].startswith("x = 7")
    flat = tmp_path / "flat.jsonl"
    assert main(["expand", "--trace", str(out), "--library", lib_path, "--out", str(flat)]) == 0
    assert str(read_traces(str(flat))[0].final) == "x = 7"


def test_unsolved_problem_exits_nonzero(capsys):
    rc = main(["solve", "--domain", "equations-hard", "--problem",
               "((2x + 3) - 4) = (((1 + 2) - 3) + 4)", "--max-depth", "1"])
    assert rc == 1
    assert "unsolved" in capsys.readouterr().out


def test_bad_problem_text_is_reported(capsys):
    rc = main(["solve", "--domain", "equations", "--problem", "x = = 3"])
    assert rc == 2
    assert "mathabs solve" in capsys.readouterr().err


def test_train_eval_transfer_abstract(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"domain": "equations", "kind": "relabs", "rounds": 2, "steps": 80,
                               "eval_period": 40, "heldout": 4, "max_depth": 8, "seed": 1}))
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    csv_lines = capsys.readouterr().out.splitlines()
    assert csv_lines[0] == "step,success_rate,mean_len,seed" and len(csv_lines) == 4

    ck = str(out / "checkpoint.json")
    report = tmp_path / "eval.csv"
    assert main(["eval", "--checkpoint", ck, "--library", str(out / "library.json"),
                 "--domain", "equations", "--n", "4", "--seed", "5", "--csv", str(report),
                 "--max-depth", "8"]) == 0
    assert report.read_text().splitlines()[0] == "success_rate,mean_len,seed"
    capsys.readouterr()

    assert main(["transfer", "--checkpoint", ck, "--from", "equations", "--to", "equations-hard",
                 "--n", "3", "--max-depth", "6"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "domain,success_rate,mean_len,mean_expanded_len"
    assert [l.split(",")[0] for l in lines[1:]] == ["equations", "equations-hard"]

    lib_out = tmp_path / "mined.json"
    assert main(["abstract", "--traces", str(out / "solutions.jsonl"), "--kind", "seqabs",
                 "--out", str(lib_out), "--library", str(out / "library.json")]) == 0
    Library.load(str(lib_out))


def test_parser_requires_a_verb():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["abstract", "--traces", "t", "--kind", "bpe", "--out", "o"])
