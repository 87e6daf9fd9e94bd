"""Hand-encoded example abstractions for both domains.

``A1``-``A3`` are equation-solving macros: move a constant across by
subtraction, move it across by addition, and divide out a coefficient.
``A4`` divides a fraction whose value is an integer and ``A5`` adds or
subtracts two integers through fraction literals.
"""

from __future__ import annotations

from .library import RELABS, Library, parse_notation

EQUATION_ABSTRACTIONS = {
    "A1": "{sub, eval, comm : (ε, R), (R, LL)}, {assoc, eval, add0 : (ε, R), (R, ε)} : (L, ε)",
    "A2": ("{add, eval, comm, assoc, comm : (ε, R), (R, L), (ε, ε), (ε, L)}, "
           "{assoc, eval, add0 : (ε, R), (R, ε)} : (L, ε)"),
    "A3": "div, eval, comm, assoc, eval, mul1 : (ε, R), (R, LL), (L, ε), (ε, R), (R, ε)",
}

FRACTION_ABSTRACTIONS = {
    "A4": "factorize, cancel : (L, ε)",
    "A5": "mfrac, {mfrac, combine, eval, simpl1 : (ε, ε), (ε, L), (L, ε)} : (ε, ε)",
}


def equation_library() -> Library:
    lib = Library()
    for name, text in EQUATION_ABSTRACTIONS.items():
        parse_notation(text, name, lib, RELABS)
    return lib


def fraction_library() -> Library:
    lib = Library()
    for name, text in FRACTION_ABSTRACTIONS.items():
        parse_notation(text, name, lib, RELABS)
    return lib


def library_for(family: str) -> Library:
    if family == "equations":
        return equation_library()
    if family == "fractions":
        return fraction_library()
    raise KeyError(f"no hand-encoded library for {family!r}")
