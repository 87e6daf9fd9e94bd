"""The search agent: a linear state scorer and beam search.

The scorer is a logistic model over hashed character n-grams of the printed
state plus a few structural counts. It is trained contrastively: states on a
solution path are positives, other states seen during the same search are
negatives.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .executor import ActionSpace, ReplayError
from .expr import Expr
from .trace import AnyAction, SolutionTrace

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "mathabs-checkpoint"
CHECKPOINT_VERSION = 1

N_STRUCTURAL = 4


@dataclass(frozen=True)
class FeatureSpec:
    buckets: int = 1024
    ngram_max: int = 3

    @property
    def dim(self) -> int:
        return self.buckets + N_STRUCTURAL


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def ngram_codes(text: str, n_max: int = 3) -> np.ndarray:
    """Integer code of every character n-gram (n = 1..n_max) of ``text``.

    The bytes of an n-gram are packed into one integer tagged with ``n``, so
    distinct n-grams get distinct codes.
    """
    b = np.frombuffer(text.encode(), dtype=np.uint8).astype(np.uint64)
    parts = []
    for n in range(1, n_max + 1):
        if len(b) < n:
            break
        code = np.full(len(b) - n + 1, n, dtype=np.uint64)
        for i in range(n):
            code = (code << np.uint64(8)) | b[i:len(b) - n + 1 + i]
        parts.append(code)
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint64)


class Featurizer:
    def __init__(self, spec: FeatureSpec = FeatureSpec(), cache_size: int = 200_000):
        self.spec = spec
        self.cache_size = cache_size
        self._cache: dict[str, np.ndarray] = {}

    def __call__(self, state: Expr) -> np.ndarray:
        key = str(state)
        v = self._cache.get(key)
        if v is None:
            v = self._compute(state, key)
            if len(self._cache) >= self.cache_size:
                self._cache.clear()
            self._cache[key] = v
        return v

    def _compute(self, state: Expr, text: str) -> np.ndarray:
        spec = self.spec
        v = np.zeros(spec.dim)
        codes = ngram_codes(text, spec.ngram_max)
        if codes.size:
            h = (codes * _GOLDEN) >> np.uint64(32)
            counts = np.bincount((h % np.uint64(spec.buckets)).astype(np.intp),
                                 minlength=spec.buckets).astype(float)
            v[:spec.buckets] = counts / math.sqrt(float(counts @ counts))
        d, nodes, consts, xs = state.stats
        b = spec.buckets
        v[b] = d / 8.0
        v[b + 1] = nodes / 32.0
        v[b + 2] = consts / 16.0
        v[b + 3] = xs / 4.0
        v.flags.writeable = False
        return v

    def matrix(self, states: Sequence[Expr]) -> np.ndarray:
        if not states:
            return np.zeros((0, self.spec.dim))
        return np.stack([self(s) for s in states])


_FEATURIZERS: dict[FeatureSpec, Featurizer] = {}


def featurize(state: Expr, spec: FeatureSpec = FeatureSpec()) -> np.ndarray:
    f = _FEATURIZERS.get(spec)
    if f is None:
        f = _FEATURIZERS[spec] = Featurizer(spec)
    return f(state)


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(_log_sigmoid(z))


class Scorer:
    """Linear value model; higher scores mean more promising states."""

    def __init__(self, spec: FeatureSpec = FeatureSpec(), lr: float = 0.5, l2: float = 1e-4):
        self.spec = spec
        self.lr = lr
        self.l2 = l2
        self.weights = np.zeros(spec.dim)
        self.bias = 0.0
        self.updates = 0
        if spec not in _FEATURIZERS:
            _FEATURIZERS[spec] = Featurizer(spec)
        self.featurizer = _FEATURIZERS[spec]

    def copy(self) -> Scorer:
        other = Scorer(self.spec, self.lr, self.l2)
        other.weights = self.weights.copy()
        other.bias = self.bias
        other.updates = self.updates
        return other

    def score(self, state: Expr) -> float:
        return float(self.featurizer(state) @ self.weights + self.bias)

    def score_many(self, states: Sequence[Expr]) -> np.ndarray:
        return self.featurizer.matrix(states) @ self.weights + self.bias

    # -- training --------------------------------------------------------

    def loss(self, X: np.ndarray, y: np.ndarray, w: np.ndarray | None = None,
             b: float | None = None) -> float:
        """Class-balanced logistic loss with L2 on the weights."""
        w = self.weights if w is None else w
        b = self.bias if b is None else b
        s = X @ w + b
        pos, neg = y > 0.5, y <= 0.5
        value = 0.0
        if pos.any():
            value -= 0.5 * float(_log_sigmoid(s[pos]).mean())
        if neg.any():
            value -= 0.5 * float(_log_sigmoid(-s[neg]).mean())
        return value + 0.5 * self.l2 * float(w @ w)

    def gradient(self, X: np.ndarray, y: np.ndarray, w: np.ndarray | None = None,
                 b: float | None = None) -> tuple[np.ndarray, float]:
        w = self.weights if w is None else w
        b = self.bias if b is None else b
        s = X @ w + b
        pos, neg = y > 0.5, y <= 0.5
        g = np.zeros_like(s)
        if pos.any():
            g[pos] = -0.5 * _sigmoid(-s[pos]) / pos.sum()
        if neg.any():
            g[neg] = 0.5 * _sigmoid(s[neg]) / neg.sum()
        return X.T @ g + self.l2 * w, float(g.sum())

    def step(self, X: np.ndarray, y: np.ndarray) -> bool:
        """One gradient step; returns False when the batch lacks a class."""
        if not (y > 0.5).any() or not (y <= 0.5).any():
            log.debug("skipping degenerate batch (%d examples)", len(y))
            return False
        gw, gb = self.gradient(X, y)
        self.weights = self.weights - self.lr * gw
        self.bias -= self.lr * gb
        self.updates += 1
        return True

    # -- persistence -------------------------------------------------------

    def to_json(self) -> dict:
        return {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                "feature_spec": asdict(self.spec), "lr": self.lr, "l2": self.l2,
                "updates": self.updates, "bias": self.bias,
                "weights": [float(v) for v in self.weights]}

    @classmethod
    def from_json(cls, d: dict) -> Scorer:
        if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
            raise ValueError("not a supported checkpoint")
        s = cls(FeatureSpec(**d["feature_spec"]), d["lr"], d["l2"])
        s.weights = np.asarray(d["weights"], dtype=float)
        if s.weights.shape != (s.spec.dim,):
            raise ValueError("checkpoint weights do not match the feature spec")
        s.bias = float(d["bias"])
        s.updates = int(d.get("updates", 0))
        return s

    def save(self, path: str, **extra) -> None:
        with open(path, "w") as fh:
            json.dump(dict(self.to_json(), **extra), fh)

    @classmethod
    def load(cls, path: str) -> Scorer:
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def score(scorer: Scorer, state: Expr) -> float:
    return scorer.score(state)


# ---------------------------------------------------------------------------
# Search


@dataclass(frozen=True)
class SearchConfig:
    beam_width: int = 4
    max_depth: int = 30
    max_expansions: int = 10_000
    timeout: float | None = None
    # chance that a beam slot takes a random child instead of the next best;
    # only used when the search gets an rng
    explore: float = 0.0

    def __post_init__(self):
        if self.beam_width < 1 or self.max_depth < 1:
            raise ValueError("beam_width and max_depth must be >= 1")
        if not 0.0 <= self.explore <= 1.0:
            raise ValueError("explore must lie in [0, 1]")


@dataclass
class EpisodeRecord:
    problem: Expr
    solved: bool
    trace: SolutionTrace | None
    visited: list[Expr] = field(default_factory=list)
    on_path: set[str] = field(default_factory=set)
    expansions: int = 0

    def examples(self, rng: np.random.Generator | None = None,
                 max_negatives: int | None = None) -> tuple[list[Expr], list[float]]:
        """Labelled states: on-path states after the root are positive."""
        pos = [s for s in self.visited if str(s) in self.on_path and s != self.problem]
        neg = [s for s in self.visited if str(s) not in self.on_path]
        if max_negatives is not None and len(neg) > max_negatives:
            idx = (rng.choice(len(neg), max_negatives, replace=False) if rng is not None
                   else np.arange(max_negatives))
            neg = [neg[i] for i in sorted(idx)]
        return pos + neg, [1.0] * len(pos) + [0.0] * len(neg)


def beam_search(problem: Expr, scorer: Scorer, cfg: SearchConfig, space: ActionSpace,
                rng: np.random.Generator | None = None) -> EpisodeRecord:
    """Keep the ``beam_width`` best new states per depth; stop at the first
    terminal state generated.

    Equal scores keep generation order, or a random order when ``rng`` is
    given. With an rng, ``cfg.explore`` also lets beam slots go to random
    children (exploration during training).
    """
    rec = EpisodeRecord(problem, False, None, [problem])
    if space.is_terminal(problem):
        rec.solved = True
        rec.trace = SolutionTrace(problem, [])
        rec.on_path = {str(problem)}
        return rec
    start = time.monotonic()
    parents: dict[str, tuple[str, AnyAction, Expr]] = {}
    closed = {str(problem)}
    beam = [problem]
    for _ in range(cfg.max_depth):
        children: list[Expr] = []
        for s in beam:
            if rec.expansions >= cfg.max_expansions:
                return rec
            if cfg.timeout is not None and time.monotonic() - start > cfg.timeout:
                return rec
            rec.expansions += 1
            skey = str(s)
            for action, nxt in space.enumerate(s):
                key = str(nxt)
                if key in closed:
                    continue
                closed.add(key)
                parents[key] = (skey, action, nxt)
                rec.visited.append(nxt)
                if space.is_terminal(nxt):
                    _finish(rec, parents, key)
                    return rec
                children.append(nxt)
        if not children:
            break
        scores = scorer.score_many(children)
        if rng is None:
            order = np.argsort(-scores, kind="stable")
        else:
            order = np.lexsort((rng.random(len(children)), -scores))
        if rng is not None and cfg.explore > 0:
            rest = order.tolist()
            picked = []
            while rest and len(picked) < cfg.beam_width:
                j = int(rng.integers(len(rest))) if rng.random() < cfg.explore else 0
                picked.append(rest.pop(j))
            order = picked
        beam = [children[i] for i in order[:cfg.beam_width]]
    return rec


def _finish(rec: EpisodeRecord, parents: dict, key: str) -> None:
    steps = []
    root = str(rec.problem)
    while key != root:
        pkey, action, state = parents[key]
        steps.append((action, state))
        key = pkey
    steps.reverse()
    rec.solved = True
    rec.trace = SolutionTrace(rec.problem, steps)
    rec.on_path = {root} | {str(s) for _, s in steps}


# ---------------------------------------------------------------------------
# Learning


def contrastive_update(scorer: Scorer, states: Sequence[Expr], labels: Sequence[float]) -> bool:
    """One gradient step separating positive from negative states."""
    y = np.asarray(labels, dtype=float)
    return scorer.step(scorer.featurizer.matrix(states), y)


def imitation_examples(trace: SolutionTrace, space: ActionSpace,
                       max_negatives: int | None = 32) -> tuple[list[Expr], list[float]]:
    """Each next state of the trace is a positive; its siblings are negatives."""
    states: list[Expr] = []
    labels: list[float] = []
    s = trace.problem
    for action, nxt in trace.steps:
        space.check_step(s, action, nxt)
        siblings = []
        seen = {str(nxt)}
        for _, sib in space.enumerate(s):
            k = str(sib)
            if k not in seen:
                seen.add(k)
                siblings.append(sib)
        if max_negatives is not None:
            siblings = siblings[:max_negatives]
        states.append(nxt)
        labels.append(1.0)
        states.extend(siblings)
        labels.extend([0.0] * len(siblings))
        s = nxt
    return states, labels


def imitation_train(scorer: Scorer, traces: Sequence[SolutionTrace], space: ActionSpace,
                    epochs: int = 2, max_negatives: int | None = 32) -> int:
    """Brief behaviour cloning on abstracted solutions; returns the number of
    gradient steps taken. Traces that do not replay are skipped."""
    batches = []
    for t in traces:
        if not t.steps:
            continue
        try:
            batches.append(imitation_examples(t, space, max_negatives))
        except ReplayError as err:
            log.warning("skipping unreplayable trace %s: %s", t.problem, err)
    taken = 0
    for _ in range(epochs):
        for states, labels in batches:
            taken += contrastive_update(scorer, states, labels)
    return taken
