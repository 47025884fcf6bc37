from fractions import Fraction

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from dynhilbert import formula as F
from dynhilbert.numeric import FieldScalar
from dynhilbert.parser import FormulaSyntaxError, parse, parse_term, print_formula

B1 = F.Ball(1)


def v(name="v", n=1):
    return F.Var(name, F.Ball(n))


# -- sorts and ranges -----------------------------------------------------


def test_add_widens_sort():
    t = parse_term("add(v, w)", {"v": B1, "w": B1})
    assert t.sort == F.Ball(2)


def test_scale_sort_rule():
    assert F.scale_factor(FieldScalar(Fraction(1, 2))) == 1
    assert F.scale_factor(FieldScalar(1)) == 2
    assert F.scale_factor(FieldScalar(Fraction(5, 2))) == 3
    t = parse_term("scale(3/2, v)", {"v": B1})
    assert t.sort == F.Ball(2)


def test_apply_needs_ball_one():
    with pytest.raises((FormulaSyntaxError, F.FormulaTypeError)):
        parse("sup v:B1 . d(U1(add(v, v)), v)")


def test_d_range():
    f = parse("d(v, v)", {"v": B1})
    assert (f.range.lo, f.range.hi) == (0, 2)


def test_inner_product_range_on_b2():
    f = parse("reip(add(v, v), add(v, v))", {"v": B1})
    assert (f.range.lo, f.range.hi) == (-4, 4)


def test_constant_range():
    f = parse("1/2")
    assert (f.range.lo, f.range.hi) == (Fraction(1, 2), Fraction(1, 2))


def test_truncated_subtraction_range_collapses():
    f = parse("d(v, w) -. 3", {"v": B1, "w": B1})
    assert (f.range.lo, f.range.hi) == (0, 0)


def test_neg_cap_must_cover_range():
    with pytest.raises((FormulaSyntaxError, F.FormulaTypeError)):
        parse("sup v:B1 . not[1](d(v, v))")
    assert parse("sup v:B1 . not[2](d(v, v))").range.hi == 2


def test_min_of_equal_constants():
    f = parse("min(1/2, 1/2)")
    assert (f.range.lo, f.range.hi) == (Fraction(1, 2), Fraction(1, 2))


# -- moduli ---------------------------------------------------------------


def test_modulus_displacement():
    m = F.modulus(parse("d(U(v), v)", {"v": B1}))
    assert m.var_lipschitz["v"] == 2
    assert m.op_sensitivity["U"] == 1


def test_modulus_half():
    assert F.modulus(parse("half(d(v, w))", {"v": B1, "w": B1})).var_lipschitz["v"] == Fraction(1, 2)


def test_modulus_inner_product():
    assert F.modulus(parse("reip(v, w)", {"v": B1, "w": B1})).var_lipschitz["v"] == 1


# -- parser ---------------------------------------------------------------


def test_parse_displacement_structure():
    f = parse("sup v:B1 . d(U1(v), v)")
    assert f == F.Sup("v", B1, F.D(F.Apply("U1", v()), v()))


def test_word_sugar():
    f = parse("sup v:B1 . d(w[1,-2](v), v)")
    assert f.body.left == F.Apply("U1", F.ApplyInv("U2", v()))


def test_print_examples():
    assert print_formula(F.Sup("v", B1, F.D(v(), v()))) == "sup v:B1 . d(v, v)"
    f = parse("not[2](d(v, w))", {"v": B1, "w": B1})
    assert print_formula(f) == "not[2](d(v, w))"


def test_nested_products_keep_parentheses():
    f = parse("sup v:B1 . reip(v, v) * (reip(v, v) * reip(v, v))")
    text = print_formula(f)
    assert "(reip(v, v) * reip(v, v))" in text
    assert parse(text) == f


def test_left_associative_truncated_subtraction():
    f = parse("1 -. 1/2 -. 1/4")
    assert isinstance(f.left, F.TruncSub)


def test_formula_file_comments(tmp_path):
    from dynhilbert.parser import parse_file

    p = tmp_path / "f.txt"
    p.write_text("# displacement\nsup v:B1 . d(U1(v), v) # trailing\n")
    assert parse_file(p) == parse("sup v:B1 . d(U1(v), v)")


MALFORMED = [
    "", "sup", "sup v", "sup v:B1", "sup v:B1 .", "sup v:B0 . d(v, v)", "sup v:C1 . d(v, v)",
    "d(v)", "d(v, v", "d(v, v))", "reip(v)", "imip(v, v, v)", "min(1)", "max(1, 2, 3)",
    "adiff(1)", "not(1)", "not[](1)", "not[x](1)", "plus[1](1)", "plus(1, 1)", "half()",
    "1 -.", "-. 1", "1 * ", "* 1", "1 1", "((1)", "(1))", "sup v:B1 . d(x, v)", "d(v, v)",
    "sup v:B1 . d(U1(v, v), v)", "sup v:B1 . d(U1 v, v)", "sup v:B1 . d(w[](v), v)",
    "sup v:B1 . d(w[0](v), v)", "sup v:B1 . d(w[a](v), v)", "sup v:B1 . d(scale(v), v)",
    "sup v:B1 . d(scale(1+, v), v)", "sup v:B1 . d(add(v), v)", "sup v:B1 . d(sub(v, v, v), v)",
    "sup v:B1 . d(qu(v), v)", "sup v:B1 . d(0:B1, v) -", "sup v:B1 . d($, v)", "1/0",
    "sup v:B1 . d(v, w:B1)", "inf y:Q . d(y, v)", "sup v:B1 . d(U1~v, v)", "@", "sup v:B1 . d(v, v) extra",
    "sup v:B2 . d(U1(v), v)", "max(d(v, v), )",
]


def test_malformed_corpus_size():
    assert len(MALFORMED) >= 50


@pytest.mark.parametrize("src", MALFORMED)
def test_malformed_inputs_rejected(src):
    with pytest.raises(FormulaSyntaxError):
        parse(src)


# -- round trip over random well-sorted formulas -------------------------

VARS = ["v", "w"]


@st.composite
def terms(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(st.sampled_from(VARS + ["0:B1"]))
    kind = draw(st.sampled_from(["apply", "inv", "add", "sub", "scale"]))
    a = draw(terms(depth - 1))
    if kind == "apply":
        return f"U{draw(st.integers(1, 2))}({a})"
    if kind == "inv":
        return f"U{draw(st.integers(1, 2))}~({a})"
    if kind == "scale":
        c = draw(st.sampled_from(["1/2", "-1/3", "2", "1/2+1/2i", "-i"]))
        return f"scale({c}, {a})"
    b = draw(terms(depth - 1))
    return f"{kind}({a}, {b})"


@st.composite
def formulas(draw, depth=8):
    if depth == 0 or draw(st.integers(0, 3)) == 0:
        kind = draw(st.sampled_from(["d", "reip", "imip", "const"]))
        if kind == "const":
            return str(draw(st.fractions(-3, 3, max_denominator=7)))
        return f"{kind}({draw(terms())}, {draw(terms())})"
    kind = draw(st.sampled_from(["min", "max", "adiff", "-.", "*", "half", "not", "plus", "sup", "inf"]))
    a = draw(formulas(depth - 1))
    if kind == "half":
        return f"half({a})"
    if kind == "not":
        return f"not[1000000]({a})"
    if kind in ("sup", "inf"):
        return f"{kind} {draw(st.sampled_from(VARS))}:B1 . {a}"
    b = draw(formulas(depth - 1))
    if kind == "plus":
        return f"plus[1000000]({a}, {b})"
    if kind in ("-.", "*"):
        return f"({a}) {kind} ({b})"
    return f"{kind}({a}, {b})"


@settings(max_examples=1000, deadline=None)
@given(formulas())
def test_round_trip(src):
    try:
        f = parse(src, {"v": B1, "w": B1})
    except FormulaSyntaxError:
        assume(False)
    text = print_formula(f)
    g = parse(text, {"v": B1, "w": B1})
    assert g == f
    assert print_formula(g) == text
