"""Abstractions, abstraction libraries and the bracket notation.

The notation writes an abstraction as its elements followed by the relative
positions between consecutive elements::

    {sub, eval, comm : (ε, R), (R, LL)}, {assoc, eval, add0 : (ε, R), (R, ε)} : (L, ε)

Braces nest a sub-abstraction. The position pair after a nested element
relates the *last* axiom of that element to the *first* axiom of the next.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator

SEQABS = "seqabs"
RELABS = "relabs"
KINDS = (SEQABS, RELABS)

LIBRARY_FORMAT = "mathabs-library"
LIBRARY_VERSION = 1

RelPos = tuple[str, str]


@dataclass(frozen=True)
class Abstraction:
    id: str
    kind: str
    elements: tuple[str, ...]
    relpos: tuple[RelPos, ...] = ()
    round: int = 0
    score: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown abstraction kind {self.kind!r}")
        if len(self.elements) < 2:
            raise ValueError(f"abstraction {self.id!r} needs at least two elements")
        if self.kind == RELABS and len(self.relpos) != len(self.elements) - 1:
            raise ValueError(f"abstraction {self.id!r}: {len(self.elements)} elements "
                             f"need {len(self.elements) - 1} relative positions")
        if self.kind == SEQABS and self.relpos:
            raise ValueError(f"seqabs abstraction {self.id!r} carries positions")

    @property
    def signature(self) -> tuple:
        return (self.kind, self.elements, self.relpos)

    def to_json(self) -> dict:
        d = asdict(self)
        d["elements"] = list(self.elements)
        d["relpos"] = [list(p) for p in self.relpos]
        return d

    @classmethod
    def from_json(cls, d: dict) -> Abstraction:
        return cls(d["id"], d["kind"], tuple(d["elements"]),
                   tuple((p, q) for p, q in d.get("relpos", [])),
                   int(d.get("round", 0)), float(d.get("score", 0.0)))


@dataclass
class Library:
    """An ordered set of abstractions.

    An abstraction may only reference abstractions added before it, which
    rules out self-reference and cycles. Element ids that are not in the
    library are taken to be axioms.
    """

    entries: dict[str, Abstraction] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Abstraction]:
        return iter(self.entries.values())

    def __contains__(self, abs_id: object) -> bool:
        return abs_id in self.entries

    def __getitem__(self, abs_id: str) -> Abstraction:
        return self.entries[abs_id]

    @property
    def ids(self) -> list[str]:
        return list(self.entries)

    def add(self, a: Abstraction) -> Abstraction:
        if a.id in self.entries:
            if self.entries[a.id].signature != a.signature:
                raise ValueError(f"abstraction id {a.id!r} already used")
            return self.entries[a.id]
        for e in a.elements:
            if e == a.id:
                raise ValueError(f"abstraction {a.id!r} references itself")
            if e in self.entries and self.entries[e].kind != a.kind:
                raise ValueError(f"{a.id!r} mixes abstraction kinds")
        self.entries[a.id] = a
        return a

    def extend(self, items: Iterable[Abstraction]) -> None:
        for a in items:
            self.add(a)

    def find(self, kind: str, elements: tuple[str, ...], relpos: tuple[RelPos, ...]) -> Abstraction | None:
        for a in self.entries.values():
            if a.signature == (kind, elements, relpos):
                return a
        return None

    def copy(self) -> Library:
        return Library(dict(self.entries))

    def subset(self, ids: Iterable[str]) -> Library:
        """The named abstractions plus everything they reference."""
        keep: set[str] = set()
        stack = list(ids)
        while stack:
            i = stack.pop()
            if i in keep or i not in self.entries:
                continue
            keep.add(i)
            stack.extend(self.entries[i].elements)
        return Library({k: v for k, v in self.entries.items() if k in keep})

    def flatten(self, abs_id: str) -> tuple[tuple[str, ...], tuple[RelPos, ...] | None]:
        """Axiom sequence of an abstraction and, for relabs, the positions
        between consecutive axioms."""
        a = self.entries[abs_id]
        names: list[str] = []
        rel: list[RelPos] = []
        for i, e in enumerate(a.elements):
            if i > 0 and a.kind == RELABS:
                rel.append(a.relpos[i - 1])
            if e in self.entries:
                sub_names, sub_rel = self.flatten(e)
                names.extend(sub_names)
                if sub_rel:
                    rel.extend(sub_rel)
            else:
                names.append(e)
        return tuple(names), (tuple(rel) if a.kind == RELABS else None)

    def axiom_count(self, abs_id: str) -> int:
        return len(self.flatten(abs_id)[0])

    def expand_token(self, token: str) -> list[str]:
        """Element ids of ``token`` expanded recursively down to axioms."""
        if token not in self.entries:
            return [token]
        out: list[str] = []
        for e in self.entries[token].elements:
            out.extend(self.expand_token(e))
        return out

    # -- persistence -----------------------------------------------------

    def to_json(self) -> dict:
        return {"format": LIBRARY_FORMAT, "version": LIBRARY_VERSION,
                "abstractions": [a.to_json() for a in self.entries.values()]}

    @classmethod
    def from_json(cls, data: dict | list) -> Library:
        if isinstance(data, list):
            items = data
        else:
            if data.get("format") != LIBRARY_FORMAT:
                raise ValueError("not a library file")
            if data.get("version") != LIBRARY_VERSION:
                raise ValueError(f"unsupported library version {data.get('version')!r}")
            items = data["abstractions"]
        lib = cls()
        for d in items:
            lib.add(Abstraction.from_json(d))
        return lib

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path: str) -> Library:
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# Notation

def _norm_path(p: str) -> str:
    p = p.strip()
    return "" if p in ("ε", "e", "eps", "$") else p


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "{(":
            depth += 1
        elif ch in "})":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def _parse_relpos(text: str) -> list[RelPos]:
    out = []
    for item in _split_top(text, ","):
        item = item.strip()
        if not item:
            continue
        if not (item.startswith("(") and item.endswith(")")):
            raise ValueError(f"bad relative position {item!r}")
        p, q = item[1:-1].split(",")
        out.append((_norm_path(p), _norm_path(q)))
    return out


def parse_notation(text: str, abs_id: str, library: Library, kind: str = RELABS,
                   round: int = 0) -> Abstraction:
    """Parse bracket notation into ``library``.

    Nested groups become their own entries, named ``<abs_id>.<n>``, unless an
    identical abstraction already exists, in which case it is reused.
    """
    counter = [0]

    def build(body: str, name: str) -> Abstraction:
        parts = _split_top(body, ":")
        if len(parts) > 2:
            raise ValueError(f"more than one ':' in {body!r}")
        elements = []
        for item in _split_top(parts[0], ","):
            item = item.strip()
            if item.startswith("{"):
                if not item.endswith("}"):
                    raise ValueError(f"unbalanced braces in {item!r}")
                counter[0] += 1
                sub = build(item[1:-1], f"{abs_id}.{counter[0]}")
                elements.append(sub.id)
            elif item:
                elements.append(item)
        relpos = tuple(_parse_relpos(parts[1])) if len(parts) == 2 else ()
        if kind == SEQABS:
            relpos = ()
        existing = library.find(kind, tuple(elements), relpos)
        if existing is not None and name != abs_id:
            return existing
        return library.add(Abstraction(name, kind, tuple(elements), relpos, round))

    return build(text, abs_id)


def format_notation(abs_id: str, library: Library, top: bool = True) -> str:
    a = library[abs_id]
    items = []
    for e in a.elements:
        items.append("{" + format_notation(e, library, False) + "}" if e in library else e)
    body = ", ".join(items)
    if a.kind == RELABS:
        body += " : " + ", ".join(f"({p or 'ε'}, {q or 'ε'})" for p, q in a.relpos)
    return body
