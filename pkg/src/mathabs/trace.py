"""Solution traces and abstract actions, plus their JSON-lines format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

from .domains import Action
from .expr import Expr, parse

TRACE_FORMAT = "mathabs-traces"
TRACE_VERSION = 1


@dataclass(frozen=True)
class AbstractAction:
    """One application of an abstraction, with the axiom-level witness.

    ``steps`` holds ``(action, state)`` pairs; intermediate states are kept
    because some axioms rewrite one node in more than one way.
    """

    name: str
    steps: tuple[tuple[Action, Expr], ...]

    @property
    def witness(self) -> tuple[Action, ...]:
        return tuple(a for a, _ in self.steps)

    @property
    def result(self) -> Expr:
        return self.steps[-1][1]

    @property
    def first_position(self) -> str:
        return self.steps[0][0].position

    @property
    def last_position(self) -> str:
        return self.steps[-1][0].position

    @property
    def axioms(self) -> tuple[Action, ...]:
        return self.witness

    def __str__(self) -> str:
        where = ", ".join(a.position or "ε" for a in self.witness)
        return f"{self.name}@[{where}]"

    def to_json(self) -> dict:
        return {"abstraction": self.name,
                "witness": [dict(a.to_json(), state=str(s)) for a, s in self.steps]}

    @classmethod
    def from_json(cls, d: dict) -> AbstractAction:
        steps = tuple((Action.from_json(w), parse(w["state"])) for w in d["witness"])
        return cls(d["abstraction"], steps)


AnyAction = Union[Action, AbstractAction]


def action_from_json(d: dict) -> AnyAction:
    return AbstractAction.from_json(d) if "abstraction" in d else Action.from_json(d)


@dataclass
class SolutionTrace:
    problem: Expr
    steps: list[tuple[AnyAction, Expr]] = field(default_factory=list)
    solved: bool = True

    @property
    def final(self) -> Expr:
        return self.steps[-1][1] if self.steps else self.problem

    @property
    def actions(self) -> list[AnyAction]:
        return [a for a, _ in self.steps]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def axiom_length(self) -> int:
        return sum(len(a.axioms) for a, _ in self.steps)

    def lines(self) -> list[str]:
        """Human-readable listing: the problem, then each step and state."""
        out = [str(self.problem)]
        for action, state in self.steps:
            out.append(f"{state}    [{action}]")
        return out

    def to_json(self) -> dict:
        return {"problem": str(self.problem), "solved": self.solved,
                "steps": [{"action": a.to_json(), "state": str(s)} for a, s in self.steps]}

    @classmethod
    def from_json(cls, d: dict) -> SolutionTrace:
        steps = [(action_from_json(s["action"]), parse(s["state"])) for s in d["steps"]]
        return cls(parse(d["problem"]), steps, d.get("solved", True))


def write_traces(path: str, traces: Iterable[SolutionTrace], **header) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps({"format": TRACE_FORMAT, "version": TRACE_VERSION, **header}) + "\n")
        for t in traces:
            fh.write(json.dumps(t.to_json()) + "\n")


def read_traces(path: str) -> list[SolutionTrace]:
    return list(iter_traces(path))


def iter_traces(path: str) -> Iterator[SolutionTrace]:
    with open(path) as fh:
        first = fh.readline()
        if not first.strip():
            return
        header = json.loads(first)
        if header.get("format") != TRACE_FORMAT:
            # headerless file: the first line is already a trace
            yield SolutionTrace.from_json(header)
        elif header.get("version") != TRACE_VERSION:
            raise ValueError(f"unsupported trace file version {header.get('version')!r}")
        for line in fh:
            if line.strip():
                yield SolutionTrace.from_json(json.loads(line))
