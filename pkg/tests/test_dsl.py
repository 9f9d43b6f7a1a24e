import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isorealize import catalog
from isorealize.dsl import (BinOp, Call, FieldSpec, Num, Var, compile_field, differentiate,
                            eval_expr, parse_expr, to_text)
from isorealize.errors import EvalDomain, ExprSyntaxError
from isorealize.fields import check_conditions, Box


def test_parse_call():
    assert parse_expr("sinh(x)") == Call("sinh", Var("x"))


def test_parse_cex_polynomial():
    e = parse_expr("8*x^3 - 6*x^4 - 1")
    assert e == BinOp("-", BinOp("-", BinOp("*", Num(8.0), BinOp("^", Var("x"), Num(3.0))),
                                 BinOp("*", Num(6.0), BinOp("^", Var("x"), Num(4.0)))),
                      Num(1.0))
    assert eval_expr(e, (1.0, 0.0, 0.0)) == 1.0


def test_precedence():
    assert eval_expr(parse_expr("2^3^2"), (0, 0, 0)) == 512.0
    assert eval_expr(parse_expr("-2^2"), (0, 0, 0)) == -4.0
    assert eval_expr(parse_expr("1 - 2 - 3"), (0, 0, 0)) == -4.0
    assert eval_expr(parse_expr("8/4/2"), (0, 0, 0)) == 1.0


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr("2*(")
    assert info.value.offset == 2
    assert info.value.expected


def test_syntax_error_reports_expected():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr("x +* y")
    assert info.value.offset == 3


def test_eval_values():
    assert eval_expr(parse_expr("sinh(x)"), (0, 0, 0)) == 0.0
    assert eval_expr(parse_expr("pi"), (0, 0, 0)) == np.pi


@pytest.mark.parametrize("src", ["atanh(1/cosh(x))", "ln(x)", "1/x", "(-1)^0.5",
                                 "sqrt(x - 1)"])
def test_domain_errors(src):
    with pytest.raises(EvalDomain):
        eval_expr(parse_expr(src), (0.0, 0.0, 0.0))


def test_vectorised_eval():
    pts = np.random.default_rng(1).normal(size=(7, 3))
    got = eval_expr(parse_expr("x*y + cos(z)"), pts)
    assert np.allclose(got, pts[:, 0] * pts[:, 1] + np.cos(pts[:, 2]))


def test_compile_sinh_field():
    fld = compile_field(FieldSpec.from_strings("1", "sinh(x)", "0"))
    assert np.array_equal(fld.evaluator(np.array([0.0, 1.0, 0.0])), [1.0, 0.0, 0.0])


def test_zero_field_reports_zero_norm():
    fld = compile_field(FieldSpec.from_strings("0", "0", "0"))
    rep = check_conditions(fld, Box((-1, -1, -1), (1, 1, 1)), n_samples=32)
    assert rep.min_j_norm == 0.0
    assert not rep.basis_ok


def test_fgh_spec_matches_catalog():
    entry = catalog.get("fgh", f="sin(2*pi*x) + 2", g="cos(2*pi*y) + 3", h="2")
    spec = FieldSpec.from_strings("(cos(2*pi*y) + 3)*2", "(sin(2*pi*x) + 2)*2",
                                  "(sin(2*pi*x) + 2)*(cos(2*pi*y) + 3)")
    fld = compile_field(spec)
    pts = np.random.default_rng(2).uniform(-2, 2, size=(20, 3))
    assert np.allclose(fld.evaluator(pts), entry.field.evaluator(pts), rtol=0, atol=1e-12)


def test_field_file_round_trip(tmp_path):
    text = ('{"jx": "1", "jy": "sinh(x)", "jz": "0", "curl": ["0", "0", "cosh(x)"],'
            ' "periodic": {"x": false, "y": true, "z": true}}')
    spec = FieldSpec.from_json(text)
    assert spec.periodic == (False, True, True)
    again = FieldSpec.from_json(spec.to_json())
    assert again == spec


def test_field_file_missing_key():
    with pytest.raises(ValueError):
        FieldSpec.from_json('{"jx": "1", "jy": "0"}')


def test_tuple_text():
    spec = FieldSpec.from_tuple_text("(-y, x, 1)")
    fld = compile_field(spec)
    assert np.allclose(fld.evaluator(np.array([1.0, 2.0, 3.0])), [-2.0, 1.0, 1.0])


CATALOG_SOURCES = ["sinh(x)", "8*x^3 - 6*x^4 - 1", "24*x^2 - 24*x^3", "sin(2*pi*x) + 2",
                   "x + 0.05*sin(2*pi*(x + y))", "2 + cos(2*pi*z)", "-z*(24*x^2 - 24*x^3)",
                   "exp(-2*pi*(y + z))*cos(pi*x)^2", "asinh(x)/(1 + tanh(y)^2)"]


@pytest.mark.parametrize("src", CATALOG_SOURCES)
def test_round_trip_catalog_sources(src):
    tree = parse_expr(src)
    assert parse_expr(to_text(tree)) == tree


def test_cex_expression_matches_native():
    pts = np.random.default_rng(3).uniform(0, 1, size=(100, 3))
    j = catalog.CEX_FIELD.evaluator(pts)
    for k, src in enumerate(["8*x^3 - 6*x^4 - 1", "24*x^2 - 24*x^3", "-z*(24*x^2 - 24*x^3)"]):
        assert np.allclose(eval_expr(parse_expr(src), pts), j[:, k], rtol=0, atol=1e-12)


def test_sinh_expression_matches_native():
    pts = np.random.default_rng(4).uniform(-2, 2, size=(100, 3))
    fld = compile_field(FieldSpec.from_strings("1", "sinh(x)", "0"))
    assert np.allclose(fld.evaluator(pts), catalog.SINH_FIELD.evaluator(pts), atol=1e-12)


@pytest.mark.parametrize("src", ["sinh(x)*y^2", "ln(2 + cos(x*y))", "sqrt(1 + z^2)/x",
                                 "x^y", "atanh(tanh(z)/2)"])
def test_differentiate_matches_fd(src):
    tree = parse_expr(src)
    p = np.array([0.7, 1.3, -0.4])
    for k, var in enumerate("xyz"):
        h = 1e-5
        e = np.zeros(3)
        e[k] = h
        fd = (eval_expr(tree, p + e) - eval_expr(tree, p - e)) / (2 * h)
        assert abs(eval_expr(differentiate(tree, var), p) - fd) < 1e-7


_atoms = st.sampled_from(["x", "y", "z", "pi", "2", "0.5", "3"])


@st.composite
def expressions(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(_atoms)
    kind = draw(st.sampled_from(["bin", "neg", "call"]))
    if kind == "bin":
        op = draw(st.sampled_from(["+", "-", "*", "/", "^"]))
        return f"({draw(expressions(depth - 1))}) {op} ({draw(expressions(depth - 1))})"
    if kind == "neg":
        return f"-({draw(expressions(depth - 1))})"
    fn = draw(st.sampled_from(["sin", "cos", "exp", "tanh", "abs", "asinh"]))
    return f"{fn}({draw(expressions(depth - 1))})"


@settings(max_examples=100, deadline=None)
@given(expressions())
def test_round_trip_property(src):
    tree = parse_expr(src)
    assert parse_expr(to_text(tree)) == tree
