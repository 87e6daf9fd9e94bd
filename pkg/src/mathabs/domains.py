"""Problem environments: axiom catalogs, action enumeration and samplers.

Two families share this machinery. ``equations`` rewrites linear equations
in x until the state reads ``x = c``; ``fractions`` rewrites sums and
differences of integers and fraction literals down to a single integer or a
fraction in lowest terms. Each family has an easy and a hard problem
distribution.

Actions address nodes by path. An action's *position* is the node the
environment reports for it, which equals the path except for ``mfrac``: that
axiom rewrites an integer operand but reports the enclosing operation.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .expr import (
    BinOp, Const, Eq, Expr, Frac, Var, evaluate, parse, replace_at, semantic_value,
    Degenerate, ExprError,
)

Param = Union[Fraction, int, tuple, None]


class NotApplicable(ValueError):
    """Raised when an action cannot be applied to a state."""


@dataclass(frozen=True, order=True)
class Action:
    """One axiom application: axiom id, node path and optional parameter."""

    name: str
    path: str
    param: Param = None
    pos: str | None = field(default=None, compare=False)

    @property
    def position(self) -> str:
        return self.path if self.pos is None else self.pos

    # Abstract actions expose the same two accessors.
    @property
    def first_position(self) -> str:
        return self.position

    @property
    def last_position(self) -> str:
        return self.position

    @property
    def axioms(self) -> tuple[Action, ...]:
        return (self,)

    def __str__(self) -> str:
        where = self.position or "ε"
        if self.param is None:
            return f"{self.name}@{where}"
        return f"{self.name}({format_param(self.param)})@{where}"

    def to_json(self) -> dict:
        d = {"axiom": self.name, "path": self.path}
        if self.param is not None:
            d["param"] = format_param(self.param)
        if self.pos is not None and self.pos != self.path:
            d["pos"] = self.pos
        return d

    @classmethod
    def from_json(cls, d: dict) -> Action:
        param = parse_param(d["param"]) if "param" in d else None
        return cls(d["axiom"], d["path"], param, d.get("pos"))


def format_param(p: Param) -> str:
    if isinstance(p, tuple):
        return "*".join(str(v) for v in p)
    return str(p)


def parse_param(s: str) -> Param:
    if "*" in s:
        return tuple(int(v) for v in s.split("*"))
    return Fraction(s)


@dataclass(frozen=True)
class Site:
    """A node of the state being rewritten, with the context rules need."""

    path: str
    node: Expr
    in_frac: bool


@dataclass(frozen=True)
class Axiom:
    id: str
    domain: str
    parameterized: bool
    description: str = ""


# ---------------------------------------------------------------------------
# Rewrite rules. Each takes a site and a parameter and returns the list of
# replacement subtrees (empty when the rule does not match).

RuleFn = Callable[[Site, Param], list]


def _const_int(e: Expr) -> bool:
    return isinstance(e, Const) and e.value.denominator == 1


def _both_sides(op: str) -> RuleFn:
    def rule(site: Site, t: Param) -> list:
        e = site.node
        if site.path or not isinstance(e, Eq):
            return []
        if op in "*/" and t == 0:
            return []
        c = Const(t)
        return [Eq(BinOp(op, e.lhs, c), BinOp(op, e.rhs, c))]
    return rule


def _eq_eval(site: Site, _: Param) -> list:
    e = site.node
    if not isinstance(e, BinOp) or not isinstance(e.left, Const) or not isinstance(e.right, Const):
        return []
    if e.op == "/" and e.right.value == 0:
        return []
    return [Const(evaluate(e))]


def _comm(site: Site, _: Param) -> list:
    e = site.node
    if isinstance(e, BinOp) and e.op in "+*":
        return [BinOp(e.op, e.right, e.left)]
    return []


ASSOC_PAIRS = {("+", "+"), ("+", "-"), ("*", "*"), ("*", "/")}


def _assoc(site: Site, _: Param) -> list:
    e = site.node
    out = []
    if not isinstance(e, BinOp):
        return out
    left, right = e.left, e.right
    # (a o b) p c -> a o (b p c)
    if isinstance(left, BinOp) and (left.op, e.op) in ASSOC_PAIRS:
        out.append(BinOp(left.op, left.left, BinOp(e.op, left.right, right)))
    # a o (b p c) -> (a o b) p c
    if isinstance(right, BinOp) and (e.op, right.op) in ASSOC_PAIRS:
        out.append(BinOp(right.op, BinOp(e.op, left, right.left), right.right))
    return out


def _identity(op: str, unit: int) -> RuleFn:
    def rule(site: Site, _: Param) -> list:
        e = site.node
        if isinstance(e, BinOp) and e.op == op and isinstance(e.right, Const) and e.right.value == unit:
            return [e.left]
        return []
    return rule


def _dist(site: Site, _: Param) -> list:
    e = site.node
    if not isinstance(e, BinOp) or e.op not in "+-":
        return []
    a, b = e.left, e.right
    if (isinstance(a, BinOp) and isinstance(b, BinOp) and a.op == "*" and b.op == "*"
            and a.right == b.right):
        return [BinOp("*", BinOp(e.op, a.left, b.left), a.right)]
    return []


def _factorize(site: Site, pair: Param) -> list:
    e = site.node
    if not site.in_frac or not _const_int(e):
        return []
    a, b = pair
    n = e.value.numerator
    if a > 1 and b > 1 and a * b == n:
        return [BinOp("*", Const(a), Const(b))]
    return []


def _factor_terms(e: Expr) -> list[tuple[Expr, Expr | None]]:
    """Ways to write ``e`` as ``f`` times a remainder (None when e is f)."""
    out: list[tuple[Expr, Expr | None]] = [(e, None)]
    if isinstance(e, BinOp) and e.op == "*":
        out.append((e.right, e.left))
        out.append((e.left, e.right))
    return out


def _cancel(site: Site, _: Param) -> list:
    e = site.node
    if not isinstance(e, Frac):
        return []
    out = []
    for f, num_rest in _factor_terms(e.num):
        for g, den_rest in _factor_terms(e.den):
            if f != g:
                continue
            try:
                if evaluate(f) == 0:
                    continue
            except (ExprError, ZeroDivisionError):
                continue
            num = num_rest if num_rest is not None else Const(1)
            result = num if den_rest is None else Frac(num, den_rest)
            if result not in out:
                out.append(result)
    return out


def _mfrac(site: Site, _: Param) -> list:
    if site.in_frac or not site.path or not _const_int(site.node):
        return []
    return [Frac(site.node, Const(1))]


def _combine(site: Site, _: Param) -> list:
    e = site.node
    if (isinstance(e, BinOp) and e.op in "+-" and isinstance(e.left, Frac)
            and isinstance(e.right, Frac) and e.left.den == e.right.den):
        return [Frac(BinOp(e.op, e.left.num, e.right.num), e.left.den)]
    return []


def _frac_eval(site: Site, _: Param) -> list:
    e = site.node
    if (site.in_frac and isinstance(e, BinOp) and e.op in "+-*"
            and _const_int(e.left) and _const_int(e.right)):
        return [Const(evaluate(e))]
    return []


def _simpl1(site: Site, _: Param) -> list:
    e = site.node
    if isinstance(e, Frac) and isinstance(e.den, Const) and e.den.value == 1:
        return [e.num]
    return []


def _scale(site: Site, k: Param) -> list:
    e = site.node
    if not isinstance(e, Frac) or k is None or k <= 1:
        return []
    c = Const(k)
    return [Frac(BinOp("*", c, e.num), BinOp("*", c, e.den))]


RULES: dict[tuple[str, str], RuleFn] = {
    ("equations", "add"): _both_sides("+"),
    ("equations", "sub"): _both_sides("-"),
    ("equations", "mul"): _both_sides("*"),
    ("equations", "div"): _both_sides("/"),
    ("equations", "eval"): _eq_eval,
    ("equations", "comm"): _comm,
    ("equations", "assoc"): _assoc,
    ("equations", "add0"): _identity("+", 0),
    ("equations", "mul1"): _identity("*", 1),
    ("equations", "dist"): _dist,
    ("fractions", "factorize"): _factorize,
    ("fractions", "cancel"): _cancel,
    ("fractions", "mfrac"): _mfrac,
    ("fractions", "combine"): _combine,
    ("fractions", "eval"): _frac_eval,
    ("fractions", "simpl1"): _simpl1,
    ("fractions", "scale"): _scale,
}

# Axioms whose reported position is the parent of the rewritten node.
REPORT_PARENT = {("fractions", "mfrac")}


def load_catalog(family: str, path: str | None = None) -> tuple[Axiom, ...]:
    """Load the axiom catalog of one family from JSON.

    Every entry must name a rule registered in ``RULES``.
    """
    if path is None:
        text = resources.files("mathabs.data").joinpath("axioms.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    data = json.loads(text)
    out = []
    seen = set()
    for entry in data["axioms"]:
        if entry["domain"] != family:
            continue
        key = (family, entry["id"])
        if key not in RULES:
            raise KeyError(f"no rewrite rule registered for {family}/{entry['id']}")
        if entry["id"] in seen:
            raise ValueError(f"duplicate axiom id {entry['id']!r} in {family}")
        seen.add(entry["id"])
        out.append(Axiom(entry["id"], family, bool(entry["parameterized"]),
                         entry.get("description", "")))
    return tuple(out)


def load_templates(path: str | None = None) -> dict[str, list[str]]:
    if path is None:
        text = resources.files("mathabs.data").joinpath("templates.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    data = json.loads(text)
    return {k: v for k, v in data.items() if isinstance(v, list)}


# ---------------------------------------------------------------------------
# Sampling

PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29)


@dataclass(frozen=True)
class SamplerConfig:
    family: str
    prime_pool_size: int = 4
    max_prime_factors: int = 4
    template_set: str = "easy"
    coef_range: tuple[int, int] = (-10, 10)
    templates_path: str | None = None

    def __post_init__(self):
        if self.family not in ("equations", "fractions"):
            raise ValueError(f"unknown domain family {self.family!r}")
        if self.prime_pool_size < 1 or self.prime_pool_size > len(PRIMES):
            raise ValueError("prime_pool_size out of range")
        if self.max_prime_factors < 1:
            raise ValueError("max_prime_factors must be >= 1")
        lo, hi = self.coef_range
        if lo > hi:
            raise ValueError("empty coefficient range")

    @property
    def primes(self) -> tuple[int, ...]:
        return PRIMES[: self.prime_pool_size]


_PLACE_COEF = re.compile(r"\{(\w)\}x")
_PLACE = re.compile(r"\{(\w)\}")


def instantiate_template(template: str, values: dict[str, int]) -> Expr:
    """Fill a template such as ``"({b} + {a}x) = {c}"`` and parse it."""
    text = _PLACE_COEF.sub(lambda m: f"{values[m.group(1)]}x", template)
    text = _PLACE.sub(lambda m: str(Const(values[m.group(1)])), text)
    return parse(text)


class Domain:
    """One problem environment with its axiom catalog and distribution."""

    def __init__(self, name: str, sampler: SamplerConfig,
                 catalog: Sequence[Axiom] | None = None):
        self.name = name
        self.family = sampler.family
        self.sampler = sampler
        self.catalog = tuple(catalog) if catalog is not None else load_catalog(self.family)
        self.axiom_ids = tuple(a.id for a in self.catalog)
        self._axioms = {a.id: a for a in self.catalog}
        self._rules = {a.id: RULES[(self.family, a.id)] for a in self.catalog}
        self._templates: list[str] | None = None
        self._cache: dict[tuple[str, str], list] = {}
        self._sites_key: str | None = None
        self._sites_val: list[Site] = []

    def __repr__(self) -> str:
        return f"Domain({self.name!r})"

    def axiom(self, axiom_id: str) -> Axiom:
        return self._axioms[axiom_id]

    # -- enumeration -------------------------------------------------------

    def sites(self, state: Expr) -> list[Site]:
        out: list[Site] = []

        def visit(e: Expr, path: str, in_frac: bool) -> None:
            out.append(Site(path, e, in_frac))
            children = e.children
            if children:
                inner = in_frac or isinstance(e, Frac)
                visit(children[0], path + "L", inner)
                visit(children[1], path + "R", inner)

        visit(state, "", False)
        return out

    def _params(self, axiom_id: str, state: Expr, site: Site) -> list:
        if self.family == "equations":
            if site.path:
                return []
            values = sorted({s.node.value for s in self._sites_of(state) if isinstance(s.node, Const)})
            if axiom_id in ("mul", "div"):
                values = [v for v in values if v != 0]
            return values
        if axiom_id == "factorize":
            e = site.node
            if not site.in_frac or not _const_int(e) or e.value <= 3:
                return []
            n = e.value.numerator
            return [(a, n // a) for a in range(2, n // 2 + 1) if n % a == 0 and n // a > 1]
        if axiom_id == "scale":
            return list(self.sampler.primes) if isinstance(site.node, Frac) else []
        return []

    def _sites_of(self, state: Expr) -> list[Site]:
        key = str(state)
        if self._sites_key != key:
            self._sites_key = key
            self._sites_val = self.sites(state)
        return self._sites_val

    def actions_for(self, state: Expr, axiom_id: str) -> list[tuple[Action, Expr]]:
        """All applications of one axiom, ordered by path then parameter."""
        key = (str(state), axiom_id)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        rule = self._rules[axiom_id]
        parameterized = self._axioms[axiom_id].parameterized
        report_parent = (self.family, axiom_id) in REPORT_PARENT
        out: list[tuple[Action, Expr]] = []
        seen: set[tuple[Action, str]] = set()
        for site in self._sites_of(state):
            if parameterized:
                params = self._params(axiom_id, state, site)
                if not params:
                    continue
            else:
                params = (None,)
            pos = site.path[:-1] if report_parent else None
            for p in params:
                for new in rule(site, p):
                    action = Action(axiom_id, site.path, p, pos)
                    succ = replace_at(state, site.path, new)
                    k = (action, str(succ))
                    if k not in seen:
                        seen.add(k)
                        out.append((action, succ))
        if len(self._cache) > 200_000:
            self._cache.clear()
        self._cache[key] = out
        return out

    def enumerate_actions(self, state: Expr) -> list[tuple[Action, Expr]]:
        out = []
        for axiom_id in self.axiom_ids:
            out.extend(self.actions_for(state, axiom_id))
        return out

    def successors(self, state: Expr, action: Action) -> list[Expr]:
        if action.name not in self._rules:
            raise NotApplicable(f"unknown axiom {action.name!r} in {self.family}")
        return [s for a, s in self.actions_for(state, action.name)
                if a.path == action.path and a.param == action.param]

    def apply(self, state: Expr, action: Action) -> Expr:
        """Apply an axiom; the first result in enumeration order when the
        rule matches the node in more than one way."""
        succ = self.successors(state, action)
        if not succ:
            raise NotApplicable(f"{action} does not apply to {state}")
        return succ[0]

    # -- goals and problems -------------------------------------------------

    def is_terminal(self, state: Expr) -> bool:
        if self.family == "equations":
            return isinstance(state, Eq) and isinstance(state.lhs, Var) and isinstance(state.rhs, Const)
        if _const_int(state):
            return True
        if isinstance(state, Frac) and _const_int(state.num) and _const_int(state.den):
            n, d = state.num.value.numerator, state.den.value.numerator
            return d > 1 and math.gcd(n, d) == 1
        return False

    @property
    def templates(self) -> list[str]:
        if self._templates is None:
            self._templates = load_templates(self.sampler.templates_path)[self.sampler.template_set]
        return self._templates

    def sample_problem(self, rng: np.random.Generator) -> Expr:
        while True:
            if self.family == "equations":
                state = self._sample_equation(rng)
                try:
                    ok = not isinstance(semantic_value(state), Degenerate)
                except (ExprError, ZeroDivisionError):
                    ok = False
            else:
                state = self._sample_fraction(rng)
                ok = True
            if ok and not self.is_terminal(state):
                return state

    def _sample_equation(self, rng: np.random.Generator) -> Expr:
        template = self.templates[int(rng.integers(len(self.templates)))]
        lo, hi = self.sampler.coef_range
        pool = [v for v in range(lo, hi + 1) if v != 0]
        values = {k: int(pool[int(rng.integers(len(pool)))]) for k in "abcdefg"}
        return instantiate_template(template, values)

    def _sample_constant(self, rng: np.random.Generator) -> int:
        primes = self.sampler.primes
        k = int(rng.integers(0, self.sampler.max_prime_factors + 1))
        n = 1
        for _ in range(k):
            n *= primes[int(rng.integers(len(primes)))]
        return n

    def _sample_operand(self, rng: np.random.Generator) -> Expr:
        if rng.random() < 1 / 3:
            return Const(self._sample_constant(rng))
        return Frac(Const(self._sample_constant(rng)), Const(self._sample_constant(rng)))

    def _sample_fraction(self, rng: np.random.Generator) -> Expr:
        op = "+" if rng.random() < 0.5 else "-"
        return BinOp(op, self._sample_operand(rng), self._sample_operand(rng))


DOMAIN_CONFIGS = {
    "equations": SamplerConfig("equations", template_set="easy"),
    "equations-hard": SamplerConfig("equations", template_set="hard"),
    "fractions": SamplerConfig("fractions", prime_pool_size=4, max_prime_factors=4),
    "fractions-hard": SamplerConfig("fractions", prime_pool_size=5, max_prime_factors=6),
}

_DOMAINS: dict[str, Domain] = {}


def get_domain(name: str) -> Domain:
    if name not in DOMAIN_CONFIGS:
        raise KeyError(f"unknown domain {name!r}; choose from {sorted(DOMAIN_CONFIGS)}")
    if name not in _DOMAINS:
        _DOMAINS[name] = Domain(name, DOMAIN_CONFIGS[name])
    return _DOMAINS[name]


def make_domain(name: str, **overrides) -> Domain:
    """A domain with sampler settings overridden (e.g. a custom template file)."""
    return Domain(name, replace(DOMAIN_CONFIGS[name], **overrides))


# Module-level spellings of the environment operations.

def apply_axiom(domain: Domain, state: Expr, action: Action) -> Expr:
    return domain.apply(state, action)


def enumerate_actions(domain: Domain, state: Expr) -> list[tuple[Action, Expr]]:
    return domain.enumerate_actions(state)


def is_terminal(domain: Domain, state: Expr) -> bool:
    return domain.is_terminal(state)


def sample_problem(domain: Domain, rng: np.random.Generator) -> Expr:
    return domain.sample_problem(rng)


def replay(domain: Domain, start: Expr, steps: Iterable[tuple[Action, Expr]]) -> Expr:
    """Check that each recorded successor is produced by its action."""
    state = start
    for action, nxt in steps:
        if nxt not in domain.successors(state, action):
            raise NotApplicable(f"{action} does not take {state} to {nxt}")
        state = nxt
    return state
