import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dichoscope.errors import EvalError, ParseError
from dichoscope.expr import (FUNCTIONS, BinOp, Call, Const, NamedConst, Neg, Var, compile_checked,
                             evaluate, parse, to_text)


@pytest.mark.parametrize("text, t, expected", [
    ("1 + 2 * 3", 0.0, 7.0),
    ("(1 + 2) * 3", 0.0, 9.0),
    ("2^3^2", 0.0, 512.0),
    ("-t^2", 3.0, -9.0),
    ("(-t)^2", 3.0, 9.0),
    ("2^-1", 0.0, 0.5),
    ("8 / 4 / 2", 0.0, 1.0),
    ("10 - 4 - 3", 0.0, 3.0),
    ("-2 * -3", 0.0, 6.0),
    ("ln(1 + t)", math.e - 1, 1.0),
    ("pow(t, 0.5)", 16.0, 4.0),
    ("exp(0) + sqrt(9) + abs(-2)", 0.0, 6.0),
    ("sin(pi/2) + cos(0)", 0.0, 2.0),
    ("1.5e2 + .5", 0.0, 150.5),
    ("e", 0.0, math.e),
])
def test_evaluation(text, t, expected):
    assert evaluate(parse(text), t) == pytest.approx(expected, rel=1e-15)


def test_tree_shapes():
    assert parse("-t^2") == Neg(BinOp("^", Var(), Const(2.0)))
    assert parse("1-2-3") == BinOp("-", BinOp("-", Const(1.0), Const(2.0)), Const(3.0))
    assert parse("2^3^2") == BinOp("^", Const(2.0), BinOp("^", Const(3.0), Const(2.0)))
    assert parse("pow(t,2)") == Call("pow", (Var(), Const(2.0)))


@pytest.mark.parametrize("text, offset", [
    ("", 0),
    ("1 +", 3),
    ("1 + * 2", 4),
    ("foo(t)", 0),
    ("ln(t", 4),
    ("(1 + 2))", 7),
    ("1 2", 2),
    ("1 $ 2", 2),
    ("pow(t)", 5),
    ("ln(t, 2)", 7),
])
def test_error_offsets(text, offset):
    with pytest.raises(ParseError) as info:
        parse(text)
    assert info.value.offset == offset


def test_offsets_are_bytes():
    # a no-break space is whitespace but two bytes long in UTF-8
    with pytest.raises(ParseError) as info:
        parse("\u00a0t +")
    assert info.value.offset == 5
    with pytest.raises(ParseError) as info:
        parse("1+\u00e9")
    assert info.value.offset == 2


def test_error_lists_expected():
    with pytest.raises(ParseError) as info:
        parse("1 +")
    assert "number" in info.value.expected


@pytest.mark.parametrize("text, t", [("1/t", 0.0), ("ln(t)", 0.0), ("ln(t)", -1.0), ("sqrt(t)", -1.0),
                                     ("t^-1", 0.0), ("pow(t, 0.5)", -2.0)])
def test_eval_errors(text, t):
    with pytest.raises(EvalError):
        evaluate(parse(text), t)


def test_nonfinite_is_an_error():
    with pytest.raises(EvalError):
        evaluate(parse("exp(t)"), 1000.0)


def test_vectorised():
    f = compile_checked(parse("t^2 + 1"))
    assert np.allclose(f(np.array([0.0, 1.0, 2.0])), [1.0, 2.0, 5.0])
    assert isinstance(f(2.0), float)


# ---------------------------------------------------------------- properties

_leaf = st.one_of(
    st.floats(min_value=0, max_value=1e6, allow_nan=False).map(Const),
    st.just(Var()),
    st.sampled_from(["pi", "e"]).map(NamedConst),
)


def _extend(children):
    unary = [name for name, k in FUNCTIONS.items() if k == 1]
    return st.one_of(
        children.map(Neg),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/", "^"]), children, children),
        st.builds(lambda f, a: Call(f, (a,)), st.sampled_from(unary), children),
        st.builds(lambda a, b: Call("pow", (a, b)), children, children),
    )


def _depth(e):
    if isinstance(e, Neg):
        return 1 + _depth(e.operand)
    if isinstance(e, BinOp):
        return 1 + max(_depth(e.left), _depth(e.right))
    if isinstance(e, Call):
        return 1 + max(_depth(a) for a in e.args)
    return 0


trees = st.recursive(_leaf, _extend, max_leaves=40).filter(lambda e: _depth(e) <= 6)


@settings(max_examples=300, deadline=None)
@given(trees)
def test_print_parse_round_trip(e):
    assert parse(to_text(e)) == e


_num = st.integers(min_value=1, max_value=50).map(float)


@given(_num, _num, _num)
def test_precedence_matches_python(a, b, c):
    cases = {
        f"{a} + {b} * {c}": a + b * c,
        f"{a} * {b} + {c}": a * b + c,
        f"{a} - {b} - {c}": a - b - c,
        f"{a} / {b} / {c}": a / b / c,
        f"-{a} ^ 2": -(a ** 2),
        f"{a} * {b} ^ 2": a * b ** 2,
        f"({a} + {b}) * {c}": (a + b) * c,
    }
    for text, expected in cases.items():
        assert evaluate(parse(text), 0.0) == pytest.approx(expected, rel=1e-14), text


@given(st.floats(min_value=1.0, max_value=4.0), st.floats(min_value=0.0, max_value=3.0),
       st.floats(min_value=0.0, max_value=2.0))
def test_power_is_right_associative(a, b, c):
    assert evaluate(parse(f"{a!r} ^ {b!r} ^ {c!r}"), 0.0) == pytest.approx(a ** (b ** c), rel=1e-12)
