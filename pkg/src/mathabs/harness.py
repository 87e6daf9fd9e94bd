"""Training runs: alternate search episodes with abstraction rounds.

A run has ``rounds`` rounds. Each round optionally starts with imitation on
the previous round's abstracted solutions, then plays episodes (sample a
problem, beam search, update the scorer), and, except in the last round,
mines abstractions from the round's solutions and adds them to the action
space.

A *step* is one scorer update batch. Every ``eval_period`` steps the agent
is evaluated on a fixed held-out set drawn from its own random stream.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from . import miner
from .agent import (
    EpisodeRecord, FeatureSpec, Scorer, SearchConfig, beam_search, contrastive_update,
    imitation_train,
)
from .domains import Domain, get_domain
from .executor import ActionSpace, expand_solution, replay
from .expr import Expr
from .library import KINDS, Library, format_notation
from .trace import SolutionTrace, write_traces

log = logging.getLogger(__name__)

REPORT_FORMAT = "mathabs-report"
REPORT_VERSION = 1
CSV_HEADER = ["step", "success_rate", "mean_len", "seed"]

STREAMS = {"sampler": 1, "search": 2, "training": 3, "eval": 4}


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent named random stream derived from a root seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, STREAMS[name]]))


@dataclass
class RunConfig:
    domain: str = "equations"
    kind: str = "none"
    rounds: int = 4
    steps: int = 10_000
    updates_per_episode: int = 4
    eval_period: int = 1_000
    heldout: int = 200
    seed: int = 0
    eval_seed: int | None = None
    # search
    beam_width: int = 4
    max_depth: int = 30
    max_expansions: int = 10_000
    timeout: float | None = None
    explore: float = 0.25
    # scorer
    feature_buckets: int = 1024
    lr: float = 0.5
    l2: float = 1e-4
    batch_size: int = 128
    buffer_size: int = 5_000
    negatives_per_episode: int = 64
    imitation_epochs: int = 2
    # miner / executor
    max_len: int = 8
    length_penalty: float = 0.0
    exec_budget: int = 10_000
    out_dir: str | None = None

    def __post_init__(self):
        if self.kind != "none" and self.kind not in KINDS:
            raise ValueError(f"kind must be 'none' or one of {KINDS}, got {self.kind!r}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.steps < 1 or self.updates_per_episode < 1 or self.eval_period < 1:
            raise ValueError("steps, updates_per_episode and eval_period must be >= 1")
        get_domain(self.domain)

    def round_end(self, rnd: int) -> int:
        """Step count at which round ``rnd`` (1-based) ends."""
        return self.steps * rnd // self.rounds

    @property
    def search(self) -> SearchConfig:
        return SearchConfig(self.beam_width, self.max_depth, self.max_expansions, self.timeout)

    @property
    def heldout_seed(self) -> int:
        return self.seed if self.eval_seed is None else self.eval_seed

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str) -> RunConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class EvalResult:
    success_rate: float
    records: list[EpisodeRecord]

    @property
    def solved(self) -> list[EpisodeRecord]:
        return [r for r in self.records if r.solved]

    @property
    def mean_len(self) -> float:
        s = self.solved
        return sum(len(r.trace) for r in s) / len(s) if s else 0.0

    @property
    def mean_expanded_len(self) -> float:
        s = self.solved
        return sum(r.trace.axiom_length for r in s) / len(s) if s else 0.0


@dataclass
class RunReport:
    config: dict
    seed: int
    rows: list[dict] = field(default_factory=list)
    libraries: list[list[str]] = field(default_factory=list)
    train_solved: list[int] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def final_success_rate(self) -> float:
        return self.rows[-1]["success_rate"] if self.rows else 0.0

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r["step"], f"{r['success_rate']:.6f}", f"{r['mean_len']:.6f}", self.seed])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"format": REPORT_FORMAT, "version": REPORT_VERSION, **asdict(self)}


def heldout_problems(domain: Domain, n: int, seed: int) -> list[Expr]:
    """``n`` distinct problems from the evaluation stream of ``seed``."""
    rng = stream(seed, "eval")
    out: list[Expr] = []
    seen: set[str] = set()
    tries = 0
    while len(out) < n and tries < 100 * n:
        tries += 1
        p = domain.sample_problem(rng)
        if str(p) not in seen:
            seen.add(str(p))
            out.append(p)
    return out


def evaluate(scorer: Scorer, library: Library, domain: Domain, problems: Sequence[Expr],
             cfg: SearchConfig, exec_budget: int = 10_000) -> EvalResult:
    """Success rate of a frozen agent on fixed problems."""
    space = ActionSpace(domain, library, exec_budget)
    records = [beam_search(p, scorer, cfg, space) for p in problems]
    rate = sum(r.solved for r in records) / len(records) if records else 0.0
    return EvalResult(rate, records)


def transfer_eval(scorer: Scorer, library: Library, source: Domain, target: Domain, n: int,
                  seed: int, cfg: SearchConfig, exec_budget: int = 10_000) -> tuple[EvalResult, EvalResult]:
    """Evaluate one frozen agent on two distributions, with no training."""
    src = evaluate(scorer, library, source, heldout_problems(source, n, seed), cfg, exec_budget)
    tgt = evaluate(scorer, library, target, heldout_problems(target, n, seed), cfg, exec_budget)
    return src, tgt


class _Buffer:
    """Bounded store of labelled states for minibatch updates."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.states: list[Expr] = []
        self.labels: list[float] = []

    def __len__(self) -> int:
        return len(self.states)

    def extend(self, states: Sequence[Expr], labels: Sequence[float]) -> None:
        self.states.extend(states)
        self.labels.extend(labels)
        excess = len(self.states) - self.capacity
        if excess > 0:
            del self.states[:excess]
            del self.labels[:excess]

    def sample(self, rng: np.random.Generator, k: int) -> tuple[list[Expr], list[float]]:
        if len(self.states) <= k:
            return list(self.states), list(self.labels)
        idx = rng.choice(len(self.states), k, replace=False)
        idx.sort()
        return [self.states[i] for i in idx], [self.labels[i] for i in idx]


@dataclass
class RunResult:
    report: RunReport
    scorer: Scorer
    library: Library
    solutions: list[SolutionTrace]


def run_training(cfg: RunConfig, progress: bool = False) -> RunResult:
    t0 = time.monotonic()
    domain = get_domain(cfg.domain)
    report = RunReport(asdict(cfg), cfg.seed)
    scorer = Scorer(FeatureSpec(cfg.feature_buckets), cfg.lr, cfg.l2)
    library = Library()
    heldout = heldout_problems(domain, cfg.heldout, cfg.heldout_seed)
    heldout_keys = {str(p) for p in heldout}
    sampler_rng = stream(cfg.seed, "sampler")
    train_rng = stream(cfg.seed, "training")
    search_rng = stream(cfg.seed, "search")
    search_cfg = cfg.search
    train_search = replace(search_cfg, explore=cfg.explore)
    all_solutions: list[SolutionTrace] = []
    abstracted: list[SolutionTrace] = []
    step = 0

    def record_eval() -> None:
        res = evaluate(scorer, library, domain, heldout, search_cfg, cfg.exec_budget)
        report.rows.append({"step": step, "success_rate": res.success_rate,
                            "mean_len": res.mean_len,
                            "mean_expanded_len": res.mean_expanded_len})
        if progress:
            log.info("step %d: success %.3f, mean length %.2f, library %d",
                     step, res.success_rate, res.mean_len, len(library))

    record_eval()
    for rnd in range(1, cfg.rounds + 1):
        space = ActionSpace(domain, library, cfg.exec_budget)
        if rnd > 1 and abstracted:
            imitation_train(scorer, abstracted, space, cfg.imitation_epochs)
        solutions: list[SolutionTrace] = []
        buffer = _Buffer(cfg.buffer_size)
        while step < cfg.round_end(rnd):
            problem = domain.sample_problem(sampler_rng)
            while str(problem) in heldout_keys:
                problem = domain.sample_problem(sampler_rng)
            rec = beam_search(problem, scorer, train_search, space, search_rng)
            if rec.solved and rec.trace.steps:
                solutions.append(rec.trace)
                buffer.extend(*rec.examples(train_rng, cfg.negatives_per_episode))
            for _ in range(min(cfg.updates_per_episode, cfg.round_end(rnd) - step)):
                if len(buffer):
                    states, labels = buffer.sample(train_rng, cfg.batch_size)
                    contrastive_update(scorer, states, labels)
                step += 1
                if step % cfg.eval_period == 0:
                    record_eval()
        report.train_solved.append(len(solutions))
        all_solutions.extend(solutions)
        if rnd < cfg.rounds and cfg.kind != "none":
            result, abstracted = miner.mine(
                solutions, space.names, cfg.kind, cfg.max_len, round=rnd,
                id_prefix=f"r{rnd}.", length_penalty=cfg.length_penalty)
            library.extend(result.abstractions)
            report.libraries.append([f"{a.id} = {format_notation(a.id, library)}"
                                     for a in result.abstractions])
            if progress:
                log.info("round %d: %d solutions, %d new abstractions", rnd,
                         len(solutions), len(result.abstractions))
    report.wall_clock = time.monotonic() - t0
    result = RunResult(report, scorer, library, all_solutions)
    if cfg.out_dir:
        save_run(result, cfg.out_dir)
    return result


def save_run(result: RunResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.csv"), "w") as fh:
        fh.write(result.report.csv_text())
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(result.report.to_json(), fh, indent=1)
    save_checkpoint(os.path.join(out_dir, "checkpoint.json"), result.scorer, result.library,
                    result.report.config["domain"])
    result.library.save(os.path.join(out_dir, "library.json"))
    write_traces(os.path.join(out_dir, "solutions.jsonl"), result.solutions)


def save_checkpoint(path: str, scorer: Scorer, library: Library, domain: str) -> None:
    """Scorer weights plus the library and domain they were trained with."""
    scorer.save(path, domain=domain, library=library.to_json())


def load_checkpoint(path: str) -> tuple[Scorer, Library, str | None]:
    with open(path) as fh:
        d = json.load(fh)
    lib = Library.from_json(d["library"]) if "library" in d else Library()
    return Scorer.from_json(d), lib, d.get("domain")


def audit(traces: Sequence[SolutionTrace], domain: Domain, library: Library,
          exec_budget: int = 10_000) -> int:
    """Replay every trace and its expansion; returns the number checked."""
    space = ActionSpace(domain, library, exec_budget)
    for t in traces:
        end = replay(space, t)
        if t.solved and not domain.is_terminal(end):
            raise ValueError(f"trace for {t.problem} ends in non-terminal {end}")
        expand_solution(t, domain)
    return len(traces)
