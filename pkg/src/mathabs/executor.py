"""Running abstractions in an environment.

An abstraction is executed by depth-first search over its flattened axiom
sequence. Under the sequence-only projection every application of the next
axiom is a child; under the relative projection only applications whose
position relative to the previous axiom matches the recorded pair are.
The first axiom is unconstrained either way.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Sequence

from .domains import Action, Domain, NotApplicable
from .expr import Expr, relative_position
from .library import Abstraction, Library, RELABS, RelPos
from .trace import AbstractAction, AnyAction, SolutionTrace

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 10_000


class ReplayError(ValueError):
    pass


@dataclass
class Execution:
    actions: list[AbstractAction]
    truncated: bool = False
    expansions: int = 0


def run_abstraction(domain: Domain, state: Expr, abs_id: str, library: Library,
                    budget: int = DEFAULT_BUDGET) -> Execution:
    """All distinct end states of one abstraction from ``state``.

    The first witness found in DFS order is kept for each end state. When
    more than ``budget`` search nodes are expanded the search stops and the
    result is flagged as truncated.
    """
    names, rel = library.flatten(abs_id)
    found: dict[str, AbstractAction] = {}
    steps: list[tuple[Action, Expr]] = []
    count = 0
    truncated = False

    def dfs(s: Expr, i: int) -> None:
        nonlocal count, truncated
        if i == len(names):
            key = str(s)
            if key not in found:
                found[key] = AbstractAction(abs_id, tuple(steps))
            return
        prev = steps[-1][0].position if steps else None
        want = rel[i - 1] if (rel is not None and i > 0) else None
        for action, nxt in domain.actions_for(s, names[i]):
            if want is not None and relative_position(prev, action.position) != want:
                continue
            if count >= budget:
                truncated = True
                return
            count += 1
            steps.append((action, nxt))
            dfs(nxt, i + 1)
            steps.pop()
            if truncated:
                return

    dfs(state, 0)
    if truncated:
        log.debug("abstraction %s truncated after %d expansions on %s", abs_id, count, state)
    return Execution(list(found.values()), truncated, count)


def apply_abstraction(domain: Domain, state: Expr, abs_id: str, library: Library,
                      budget: int = DEFAULT_BUDGET) -> list[AbstractAction]:
    return run_abstraction(domain, state, abs_id, library, budget).actions


def apply_abstraction_recursive(domain: Domain, state: Expr, abs_id: str,
                                library: Library) -> list[AbstractAction]:
    """Reference executor that follows the nesting instead of flattening.

    Used to cross-check ``apply_abstraction``; it has no budget.
    """
    found: dict[str, AbstractAction] = {}

    def run(s: Expr, elem: str, prev: str | None, want: RelPos | None
            ) -> Iterator[list[tuple[Action, Expr]]]:
        if elem not in library:
            for action, nxt in domain.actions_for(s, elem):
                if want is not None and relative_position(prev, action.position) != want:
                    continue
                yield [(action, nxt)]
            return
        a = library[elem]
        yield from run_elements(s, a, 0, prev, want)

    def run_elements(s: Expr, a: Abstraction, j: int, prev: str | None,
                     want: RelPos | None) -> Iterator[list[tuple[Action, Expr]]]:
        for part in run(s, a.elements[j], prev, want):
            if j + 1 == len(a.elements):
                yield part
                continue
            last = part[-1][0].position
            nwant = a.relpos[j] if a.kind == RELABS else None
            for rest in run_elements(part[-1][1], a, j + 1, last, nwant):
                yield part + rest

    for witness in run(state, abs_id, None, None):
        key = str(witness[-1][1])
        if key not in found:
            found[key] = AbstractAction(abs_id, tuple(witness))
    return list(found.values())


class ActionSpace:
    """Axioms of a domain plus the abstractions of a library.

    Abstraction results are cached per (state, abstraction); create one
    instance per search episode or share it read-mostly within one thread.
    """

    def __init__(self, domain: Domain, library: Library | None = None,
                 budget: int = DEFAULT_BUDGET, cache_size: int = 100_000):
        self.domain = domain
        self.library = library if library is not None else Library()
        self.budget = budget
        self.cache_size = cache_size
        self._cache: dict[tuple[str, str], list[AbstractAction]] = {}

    @property
    def names(self) -> list[str]:
        return list(self.domain.axiom_ids) + self.library.ids

    def __len__(self) -> int:
        return len(self.domain.axiom_ids) + len(self.library)

    def abstract_actions(self, state: Expr, abs_id: str) -> list[AbstractAction]:
        key = (str(state), abs_id)
        hit = self._cache.get(key)
        if hit is None:
            hit = apply_abstraction(self.domain, state, abs_id, self.library, self.budget)
            if len(self._cache) >= self.cache_size:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def enumerate(self, state: Expr) -> list[tuple[AnyAction, Expr]]:
        out: list[tuple[AnyAction, Expr]] = list(self.domain.enumerate_actions(state))
        for abs_id in self.library.ids:
            for aa in self.abstract_actions(state, abs_id):
                out.append((aa, aa.result))
        return out

    def is_terminal(self, state: Expr) -> bool:
        return self.domain.is_terminal(state)

    def check_step(self, state: Expr, action: AnyAction, nxt: Expr) -> None:
        """Raise ``ReplayError`` unless ``action`` takes ``state`` to ``nxt``."""
        if isinstance(action, AbstractAction):
            if action.name not in self.library:
                raise ReplayError(f"unknown abstraction {action.name!r}")
            ends = {str(a.result) for a in self.abstract_actions(state, action.name)}
            if str(nxt) not in ends or action.result != nxt:
                raise ReplayError(f"{action} does not take {state} to {nxt}")
            replay_witness(self.domain, state, action)
        elif nxt not in self.domain.successors(state, action):
            raise ReplayError(f"{action} does not take {state} to {nxt}")


def enumerate_augmented(domain: Domain, state: Expr, library: Library | None = None,
                        budget: int = DEFAULT_BUDGET) -> list[tuple[AnyAction, Expr]]:
    return ActionSpace(domain, library, budget).enumerate(state)


def replay_witness(domain: Domain, state: Expr, action: AbstractAction) -> Expr:
    s = state
    for a, nxt in action.steps:
        if nxt not in domain.successors(s, a):
            raise ReplayError(f"witness step {a} does not take {s} to {nxt}")
        s = nxt
    return s


def replay(space: ActionSpace, trace: SolutionTrace) -> Expr:
    """Validate every step of a trace; returns the final state."""
    s = trace.problem
    for action, nxt in trace.steps:
        space.check_step(s, action, nxt)
        s = nxt
    return s


def expand_solution(trace: SolutionTrace, domain: Domain) -> SolutionTrace:
    """Axiom-level version of a trace that may contain abstract actions."""
    steps: list[tuple[AnyAction, Expr]] = []
    s = trace.problem
    for action, nxt in trace.steps:
        if isinstance(action, AbstractAction):
            end = replay_witness(domain, s, action)
            if end != nxt:
                raise ReplayError(f"witness of {action} ends in {end}, trace says {nxt}")
            steps.extend(action.steps)
        else:
            try:
                ok = nxt in domain.successors(s, action)
            except NotApplicable:
                ok = False
            if not ok:
                raise ReplayError(f"{action} does not take {s} to {nxt}")
            steps.append((action, nxt))
        s = nxt
    return SolutionTrace(trace.problem, steps, trace.solved)


def shortest_solution(space: ActionSpace, start: Expr, max_depth: int,
                      max_states: int = 200_000) -> SolutionTrace | None:
    """Breadth-first search for a shortest trace to a terminal state."""
    if space.is_terminal(start):
        return SolutionTrace(start, [])
    parents: dict[str, tuple[str, AnyAction, Expr]] = {}
    root = str(start)
    frontier = [start]
    seen = {root}

    def build(key: str) -> SolutionTrace:
        steps = []
        while key != root:
            pkey, action, state = parents[key]
            steps.append((action, state))
            key = pkey
        return SolutionTrace(start, steps[::-1])

    for _ in range(max_depth):
        nxt_frontier = []
        for s in frontier:
            skey = str(s)
            for action, nxt in space.enumerate(s):
                key = str(nxt)
                if key in seen:
                    continue
                seen.add(key)
                parents[key] = (skey, action, nxt)
                if space.is_terminal(nxt):
                    return build(key)
                nxt_frontier.append(nxt)
                if len(seen) > max_states:
                    return None
        frontier = nxt_frontier
    return None


def shortest_solution_length(space: ActionSpace, start: Expr, max_depth: int,
                             max_states: int = 200_000) -> int | None:
    """Breadth-first search depth of the nearest terminal state."""
    t = shortest_solution(space, start, max_depth, max_states)
    return None if t is None else len(t)
