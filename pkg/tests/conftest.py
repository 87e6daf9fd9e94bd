import sys
from fractions import Fraction

import pytest
from hypothesis import strategies as st

from mathabs.expr import X, BinOp, Const, Eq, Frac

small_ints = st.integers(-12, 12)
rationals = st.builds(Fraction, st.integers(-30, 30), st.integers(1, 9))


@st.composite
def terms(draw, max_depth=3, with_x=True):
    """Random arithmetic terms (no equality)."""
    if max_depth == 0 or draw(st.integers(0, 3)) == 0:
        if with_x and draw(st.booleans()):
            c = draw(small_ints.filter(lambda v: v != 0))
            return X if draw(st.booleans()) else BinOp("*", Const(c), X)
        return Const(draw(rationals))
    op = draw(st.sampled_from("+-*/"))
    return BinOp(op, draw(terms(max_depth - 1, with_x)), draw(terms(max_depth - 1, with_x)))


@st.composite
def equations(draw, max_depth=3):
    return Eq(draw(terms(max_depth)), draw(terms(max_depth)))


@st.composite
def fraction_terms(draw, max_depth=2):
    if max_depth == 0 or draw(st.integers(0, 2)) == 0:
        n = draw(st.integers(1, 60))
        if draw(st.booleans()):
            return Const(n)
        return Frac(Const(n), Const(draw(st.integers(1, 60))))
    op = draw(st.sampled_from("+-"))
    return BinOp(op, draw(fraction_terms(max_depth - 1)), draw(fraction_terms(max_depth - 1)))


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
