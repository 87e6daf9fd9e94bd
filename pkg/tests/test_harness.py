import json
import os

import numpy as np
import pytest

from mathabs import harness, miner
from mathabs.agent import Scorer, SearchConfig, imitation_train
from mathabs.appendix import equation_library
from mathabs.domains import get_domain, make_domain
from mathabs.executor import ActionSpace, shortest_solution
from mathabs.harness import (
    RunConfig, audit, evaluate, heldout_problems, load_checkpoint, run_training, stream,
    transfer_eval,
)
from mathabs.library import Library

SMALL = dict(domain="equations", rounds=3, steps=240, updates_per_episode=4, eval_period=80,
             heldout=8, max_depth=8, seed=3)


@pytest.fixture(scope="module")
def relabs_run():
    return run_training(RunConfig(kind="relabs", **SMALL))


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(kind="bpe")
    with pytest.raises(ValueError):
        RunConfig(rounds=0)
    with pytest.raises(ValueError):
        RunConfig.from_dict({"domain": "equations", "colour": "red"})
    with pytest.raises(KeyError):
        RunConfig(domain="geometry")


def test_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"kind": "seqabs", "steps": 100, "rounds": 2}))
    cfg = RunConfig.load(str(p))
    assert cfg.kind == "seqabs" and cfg.round_end(1) == 50 and cfg.round_end(2) == 100


@pytest.mark.parametrize("steps, period", [(37, 10), (40, 10), (9, 10), (25, 1)])
def test_report_row_count(steps, period):
    cfg = RunConfig(kind="none", rounds=2, steps=steps, eval_period=period, heldout=2,
                    max_depth=3, updates_per_episode=4)
    rep = run_training(cfg).report
    assert len(rep.rows) == steps // period + 1
    assert [r["step"] for r in rep.rows] == [period * i for i in range(steps // period + 1)]
    assert rep.csv_text().splitlines()[0] == "step,success_rate,mean_len,seed"


def test_baseline_never_mines(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("miner invoked")
    monkeypatch.setattr(miner, "mine", boom)
    res = run_training(RunConfig(kind="none", **SMALL))
    assert len(res.library) == 0
    assert res.report.libraries == []
    res = run_training(RunConfig(kind="none", **dict(SMALL, rounds=1)))
    assert len(res.library) == 0


def test_determinism():
    a = run_training(RunConfig(kind="relabs", **dict(SMALL, steps=120))).report.csv_text()
    b = run_training(RunConfig(kind="relabs", **dict(SMALL, steps=120))).report.csv_text()
    assert a == b


def test_report_shape_and_library_union(relabs_run):
    rep = relabs_run.report
    for r in rep.rows:
        assert 0.0 <= r["success_rate"] <= 1.0
        assert r["mean_len"] >= 0 and r["mean_expanded_len"] >= r["mean_len"]
    assert len(rep.libraries) == SMALL["rounds"] - 1
    per_round = [line.split(" = ")[0] for snap in rep.libraries for line in snap]
    assert per_round == relabs_run.library.ids
    assert rep.wall_clock > 0


def test_library_after_first_round(relabs_run):
    # the first round solves several same-template problems
    assert relabs_run.report.train_solved[0] >= 2
    assert len(relabs_run.report.libraries[0]) > 0


def test_recorded_solutions_replay(relabs_run):
    assert audit(relabs_run.solutions, get_domain("equations"), relabs_run.library) == \
        len(relabs_run.solutions)


def test_heldout_is_disjoint_from_training(relabs_run):
    held = {str(p) for p in heldout_problems(get_domain("equations"), SMALL["heldout"], SMALL["seed"])}
    assert not held & {str(t.problem) for t in relabs_run.solutions}


def test_named_streams_are_independent():
    a = stream(0, "sampler").random(3)
    b = stream(0, "eval").random(3)
    c = stream(1, "sampler").random(3)
    assert not np.allclose(a, b) and not np.allclose(a, c)
    assert np.array_equal(a, stream(0, "sampler").random(3))


def test_evaluation_is_read_only(relabs_run):
    sc = relabs_run.scorer
    w, b = sc.weights.copy(), sc.bias
    ids = list(relabs_run.library.ids)
    d = get_domain("equations")
    r1 = evaluate(sc, relabs_run.library, d, heldout_problems(d, 5, 9), SearchConfig(max_depth=8))
    r2 = evaluate(sc, relabs_run.library, d, heldout_problems(d, 5, 9), SearchConfig(max_depth=8))
    assert np.array_equal(sc.weights, w) and sc.bias == b
    assert relabs_run.library.ids == ids
    assert r1.success_rate == r2.success_rate


def test_agent_that_solves_nothing():
    d = get_domain("equations-hard")
    res = evaluate(Scorer(), Library(), d, heldout_problems(d, 3, 0), SearchConfig(max_depth=1))
    assert res.success_rate == 0.0 and res.mean_len == 0.0


def test_appendix_library_solves_its_template_family(tmp_path):
    p = tmp_path / "t.json"
    p.write_text(json.dumps({"format": "mathabs-templates", "version": 1,
                             "easy": ["({b} + {a}x) = {c}", "({a}x - {b}) = {c}"]}))
    d = make_domain("equations", templates_path=str(p))
    lib = equation_library()
    space = ActionSpace(d, lib)
    rng = stream(1, "sampler")
    traces = [shortest_solution(space, d.sample_problem(rng), 4) for _ in range(10)]
    sc = Scorer()
    imitation_train(sc, traces, space, epochs=5)
    res = evaluate(sc, lib, d, heldout_problems(d, 50, 0), SearchConfig(beam_width=4, max_depth=4))
    assert res.success_rate == 1.0


def test_identity_transfer(relabs_run):
    d = get_domain("equations")
    cfg = SearchConfig(max_depth=8)
    src, tgt = transfer_eval(relabs_run.scorer, relabs_run.library, d, d, 6, 2, cfg)
    direct = evaluate(relabs_run.scorer, relabs_run.library, d, heldout_problems(d, 6, 2), cfg)
    assert src.success_rate == tgt.success_rate == direct.success_rate


def test_outputs_written(tmp_path):
    out = tmp_path / "run"
    res = run_training(RunConfig(kind="seqabs", out_dir=str(out), **dict(SMALL, steps=80)))
    names = sorted(os.listdir(out))
    assert names == ["checkpoint.json", "library.json", "report.csv", "report.json", "solutions.jsonl"]
    sc, lib, dom = load_checkpoint(str(out / "checkpoint.json"))
    assert dom == "equations" and lib.ids == res.library.ids
    assert np.array_equal(sc.weights, res.scorer.weights)
    assert (out / "report.csv").read_text() == res.report.csv_text()
    rep = json.loads((out / "report.json").read_text())
    assert rep["format"] == "mathabs-report" and rep["version"] == 1
    assert harness.REPORT_VERSION == 1
