"""Abstraction discovery by greedy compression of solution datasets.

A dataset is a list of projected traces. A projected trace is a list of
tokens ``(element_id, relpos)``; ``relpos`` is the relative position from
the previous action's last axiom to this action's first axiom, or ``None``
for the first action and under the sequence-only projection.

A uniform random agent over ``k`` available actions generates a dataset with
``N`` tokens with negative log-likelihood ``N * log(k)``. Adding an
abstraction that matches ``m`` times with ``l`` tokens shrinks the dataset to
``N - m*(l-1)`` tokens over ``k + 1`` actions; the greedy loop keeps adding
the abstraction with the best gain while the gain is strictly positive.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Sequence

from .expr import relative_position
from .library import RELABS, SEQABS, Abstraction, Library, RelPos, format_notation
from .trace import AbstractAction, SolutionTrace

log = logging.getLogger(__name__)

Token = tuple[str, "RelPos | None"]
Candidate = tuple[Token, ...]

DATASET_FORMAT = "mathabs-dataset"
DATASET_VERSION = 1


def project(trace: SolutionTrace, kind: str) -> list[Token]:
    """Map a solution to matchable tokens."""
    tokens: list[Token] = []
    prev_last: str | None = None
    for action, _ in trace.steps:
        rel = None
        if kind == RELABS and prev_last is not None:
            rel = relative_position(prev_last, action.first_position)
        tokens.append((action.name, rel))
        prev_last = action.last_position
    return tokens


def candidate_key(tokens: Sequence[Token]) -> Candidate:
    """Window as a candidate: the first token's link to its predecessor is
    not part of the pattern."""
    first = tokens[0]
    return ((first[0], None),) + tuple(tokens[1:])


def candidate_id(c: Candidate) -> str:
    names = ",".join(t[0] for t in c)
    if all(t[1] is None for t in c[1:]):
        return names
    return names + ":" + ",".join(f"({t[1][0]},{t[1][1]})" for t in c[1:])


def get_candidates(dataset: Sequence[Sequence[Token]], max_len: int = 8) -> dict[Candidate, list[int]]:
    """All distinct contiguous windows of length 2..max_len, each mapped to
    the indices of the traces containing it."""
    out: dict[Candidate, list[int]] = {}
    for ti, tokens in enumerate(dataset):
        n = len(tokens)
        for i in range(n):
            for j in range(i + 2, min(n, i + max_len) + 1):
                key = candidate_key(tokens[i:j])
                where = out.get(key)
                if where is None:
                    out[key] = [ti]
                elif where[-1] != ti:
                    where.append(ti)
    return out


def _matches_at(tokens: Sequence[Token], i: int, cand: Candidate) -> bool:
    if tokens[i][0] != cand[0][0]:
        return False
    for j in range(1, len(cand)):
        if tokens[i + j] != cand[j]:
            return False
    return True


def count_matches(tokens: Sequence[Token], cand: Candidate) -> int:
    """Leftmost-greedy count of non-overlapping occurrences."""
    n, ell = len(tokens), len(cand)
    i = m = 0
    while i <= n - ell:
        if _matches_at(tokens, i, cand):
            m += 1
            i += ell
        else:
            i += 1
    return m


def rewrite(tokens: Sequence[Token], cand: Candidate, new_id: str,
            payload: Sequence[Any] | None = None,
            merge: Callable[[list], Any] | None = None):
    """Replace each leftmost non-overlapping occurrence with one token.

    The new token keeps the first replaced token's link to its predecessor.
    When ``payload`` is given (one item per token), the matching items are
    combined with ``merge`` and ``(tokens, payload)`` is returned.
    """
    n, ell = len(tokens), len(cand)
    out: list[Token] = []
    out_payload: list = []
    i = 0
    while i < n:
        if i <= n - ell and _matches_at(tokens, i, cand):
            out.append((new_id, tokens[i][1]))
            if payload is not None:
                out_payload.append(merge(list(payload[i:i + ell])))
            i += ell
        else:
            out.append(tokens[i])
            if payload is not None:
                out_payload.append(payload[i])
            i += 1
    if payload is not None:
        return out, out_payload
    return out


def objective(dataset: Sequence[Sequence[Token]], action_space_size: int) -> float:
    """Negative log-likelihood of the dataset under a uniform random agent."""
    n = sum(len(t) for t in dataset)
    return n * math.log(action_space_size)


def gain(n_tokens: int, k: int, n_after: int, length_penalty: float = 0.0, ell: int = 0) -> float:
    """J(L) - J(L + {a}) given the token counts before and after rewriting."""
    return n_tokens * math.log(k) - n_after * math.log(k + 1) - length_penalty * ell


@dataclass
class MiningResult:
    abstractions: list[Abstraction]
    dataset: list[list[Token]]
    candidates: list[Candidate] = field(default_factory=list)
    accepted: list[Candidate] = field(default_factory=list)
    objective_history: list[float] = field(default_factory=list)


def greedy_abstract(action_space: Iterable[str], dataset: Sequence[Sequence[Token]], kind: str,
                    max_len: int = 8, round: int = 1, id_prefix: str | None = None,
                    length_penalty: float = 0.0, max_abstractions: int | None = None) -> MiningResult:
    """Greedy library induction over a projected dataset.

    ``length_penalty`` adds a length-based prior term (``penalty * length``)
    to the objective; it is off by default, which gives the uniform prior.
    """
    if kind not in (SEQABS, RELABS):
        raise ValueError(f"unknown abstraction kind {kind!r}")
    space = list(dict.fromkeys(action_space))
    k = len(space)
    data = [list(t) for t in dataset]
    prefix = id_prefix if id_prefix is not None else f"r{round}."
    result = MiningResult([], data)
    if not data or k == 0:
        return result

    where = get_candidates(data, max_len)
    cands = sorted(where, key=lambda c: (len(c), candidate_id(c)))
    result.candidates = cands
    matches: dict[Candidate, int] = {}
    n_tokens = sum(len(t) for t in data)
    result.objective_history.append(n_tokens * math.log(k))

    def m_of(c: Candidate) -> int:
        m = matches.get(c)
        if m is None:
            m = sum(count_matches(data[ti], c) for ti in where[c])
            matches[c] = m
        return m

    while max_abstractions is None or len(result.abstractions) < max_abstractions:
        best, best_key = None, None
        for c in cands:
            m = m_of(c)
            if m == 0:
                continue
            ell = len(c)
            s = gain(n_tokens, k, n_tokens - m * (ell - 1), length_penalty, ell)
            key = (s, ell, _neg_str(candidate_id(c)))
            if best_key is None or key > best_key:
                best, best_key = c, key
        if best is None or best_key[0] <= 0:
            break
        s_opt = best_key[0]
        new_id = f"{prefix}{len(result.abstractions) + 1}"
        elements = tuple(t[0] for t in best)
        relpos = tuple(t[1] for t in best[1:]) if kind == RELABS else ()
        result.abstractions.append(Abstraction(new_id, kind, elements, relpos, round, s_opt))
        result.accepted.append(best)
        touched = set(elements)
        for ti in where[best]:
            data[ti] = rewrite(data[ti], best, new_id)
        n_tokens = sum(len(t) for t in data)
        k += 1
        result.objective_history.append(n_tokens * math.log(k))
        for c in list(matches):
            if any(t[0] in touched for t in c):
                del matches[c]
        log.debug("accepted %s (gain %.4f): %s", new_id, s_opt, candidate_id(best))
    result.dataset = data
    return result


class _neg_str(str):
    """A string whose ordering is reversed, so max() prefers the smallest."""

    def __lt__(self, other):
        return str.__gt__(self, other)

    def __gt__(self, other):
        return str.__lt__(self, other)


def abstract_traces(traces: Sequence[SolutionTrace], kind: str, accepted: Sequence[Candidate],
                    abstractions: Sequence[Abstraction]) -> list[SolutionTrace]:
    """Rewrite concrete traces with mined abstractions, in acceptance order.

    Matched segments become one ``AbstractAction`` whose witness is the
    concatenation of the segment's axiom-level steps.
    """
    out = []
    for trace in traces:
        tokens = project(trace, kind)
        steps = list(trace.steps)
        for cand, a in zip(accepted, abstractions):
            tokens, steps = rewrite(tokens, cand, a.id, steps, _merge_steps(a.id))
        out.append(SolutionTrace(trace.problem, steps, trace.solved))
    return out


def _merge_steps(abs_id: str):
    def merge(items: list) -> tuple:
        witness = []
        for action, state in items:
            if isinstance(action, AbstractAction):
                witness.extend(action.steps)
            else:
                witness.append((action, state))
        result = AbstractAction(abs_id, tuple(witness))
        return (result, items[-1][1])
    return merge


def expand_tokens(tokens: Sequence[Token], library: Library) -> list[str]:
    out: list[str] = []
    for name, _ in tokens:
        out.extend(library.expand_token(name))
    return out


def mine(traces: Sequence[SolutionTrace], action_space: Iterable[str], kind: str,
         max_len: int = 8, round: int = 1, id_prefix: str | None = None,
         length_penalty: float = 0.0) -> tuple[MiningResult, list[SolutionTrace]]:
    """Project, mine, and rewrite traces; returns the mining result and the
    abstracted traces."""
    dataset = [project(t, kind) for t in traces]
    result = greedy_abstract(action_space, dataset, kind, max_len, round, id_prefix, length_penalty)
    return result, abstract_traces(traces, kind, result.accepted, result.abstractions)


def describe(library: Library) -> list[str]:
    return [f"{a.id} = {format_notation(a.id, library)}" for a in library]


# ---------------------------------------------------------------------------
# Dataset files

def _token_json(t: Token) -> list:
    return [t[0], list(t[1]) if t[1] is not None else None]


def write_dataset(path: str, dataset: Sequence[Sequence[Token]], action_space: Iterable[str], kind: str) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"format": DATASET_FORMAT, "version": DATASET_VERSION,
                             "kind": kind, "action_space": list(action_space)}) + "\n")
        for tokens in dataset:
            fh.write(json.dumps([_token_json(t) for t in tokens]) + "\n")


def read_dataset(path: str) -> tuple[dict, list[list[Token]]]:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != DATASET_FORMAT or header.get("version") != DATASET_VERSION:
            raise ValueError("not a supported dataset file")
        data = []
        for line in fh:
            if line.strip():
                data.append([(n, tuple(r) if r is not None else None) for n, r in json.loads(line)])
    return header, data
