import numpy as np
import pytest

from oamlink import opexpr, qcore
from oamlink.opexpr import (
    ExpressionSyntaxError,
    MissingPartyError,
    Negation,
    PauliLeaf,
    PauliString,
    Product,
    ScalarLiteral,
    Sum,
    UnknownSymbolError,
    all_strings,
    parse,
    pauli_decompose,
    to_text,
)


def ev(text):
    return opexpr.eval_expr(parse(text)).matrix


# --- parsing -----------------------------------------------------------------


def test_parse_single_leaf():
    assert parse("sx[A]") == PauliLeaf("x", "A")


def test_parse_ratio_numerator_shape():
    ast = parse("(sy[A]*sx[C] - sx[A]*sy[C])*(id[B] - sz[B])")
    assert isinstance(ast, Product)
    left, right = ast.factors
    assert isinstance(left, Sum)
    assert left.terms[0] == Product((PauliLeaf("y", "A"), PauliLeaf("x", "C")))
    assert left.terms[1] == Negation(Product((PauliLeaf("x", "A"), PauliLeaf("y", "C"))))
    assert isinstance(right, Sum)
    assert right.terms[0] == PauliLeaf("id", "B")


def test_parse_dangling_operator_offset():
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse("sx[A] +")
    assert exc.value.offset == 6


def test_parse_unknown_symbol():
    with pytest.raises(UnknownSymbolError):
        parse("sq[A]")


def test_parse_missing_party():
    with pytest.raises(MissingPartyError):
        parse("sx + sz[B]")
    with pytest.raises(MissingPartyError):
        parse("sx[D]")


def test_parse_unbalanced_paren():
    with pytest.raises(ExpressionSyntaxError):
        parse("(sx[A] + sy[B]")


def test_parse_empty_and_garbage():
    with pytest.raises(ExpressionSyntaxError):
        parse("")
    with pytest.raises(ExpressionSyntaxError):
        parse("sx[A] $ sy[B]")


def test_scalar_forms():
    assert parse("i") == ScalarLiteral(1j)
    assert parse("2i") == ScalarLiteral(2j)
    assert parse("0.5") == ScalarLiteral(0.5)
    assert parse("2.5i") == ScalarLiteral(2.5j)
    # '2*i' is a product of scalars and must evaluate identically to '2i'
    assert np.allclose(ev("2*i"), ev("2i"))


# --- evaluation ----------------------------------------------------------------


def test_eval_identity_leaf():
    assert np.array_equal(ev("id[A]"), np.eye(8))


def test_eval_ladder_matrix():
    """sx + i*sy puts 2|-l><l| in the slot, checked against an explicit dyad."""
    dyad = np.zeros((2, 2), complex)
    dyad[1, 0] = 2.0
    expected = np.kron(dyad, np.eye(4))
    assert np.allclose(ev("sx[A] + i*sy[A]"), expected, atol=1e-12)
    expected_c = np.kron(np.eye(4), dyad.conj().T)
    assert np.allclose(ev("sx[C] - i*sy[C]"), expected_c, atol=1e-12)


def test_eval_same_party_product():
    assert np.allclose(ev("sz[A]*sz[A]"), np.eye(8))


def test_eval_cross_party_product_is_tensor_placement():
    got = ev("sx[A]*sy[B]")
    expected = np.kron(
        qcore.pauli_matrix("x"), np.kron(qcore.pauli_matrix("y"), np.eye(2))
    )
    assert np.allclose(got, expected)


def test_minus_binds_as_subtraction_not_juxtaposition():
    got = ev("sx[A] - sx[B]")
    expected = ev("sx[A]") - ev("sx[B]")
    assert np.allclose(got, expected)


def test_juxtaposition_is_product():
    assert np.allclose(ev("(id[A])(sx[B])"), ev("id[A]*sx[B]"))
    assert np.allclose(ev("2 3"), 6 * np.eye(8))
    assert np.allclose(ev("2 sx[A]"), 2 * ev("sx[A]"))


def test_unary_minus_precedence():
    assert np.allclose(ev("-sx[A]*sz[B]"), -ev("sx[A]*sz[B]"))
    assert np.allclose(ev("-(sx[A] + sx[B])"), -(ev("sx[A]") + ev("sx[B]")))


# --- printing round trip ---------------------------------------------------------


def _random_ast(rng, depth):
    kind = rng.integers(0, 5 if depth > 0 else 2)
    if kind == 0:
        choices = [1.0, -2.0, 0.5, 1j, -1j, 2.5j, 3.0, 1 + 1j, -0.75 - 2j]
        return ScalarLiteral(choices[rng.integers(0, len(choices))])
    if kind == 1:
        axes = ("id", "x", "y", "z")
        parties = ("A", "B", "C")
        return PauliLeaf(axes[rng.integers(0, 4)], parties[rng.integers(0, 3)])
    if kind == 2:
        return Negation(_random_ast(rng, depth - 1))
    n = int(rng.integers(2, 4))
    children = tuple(_random_ast(rng, depth - 1) for _ in range(n))
    return Sum(children) if kind == 3 else Product(children)


def test_print_parse_round_trip():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        ast = _random_ast(rng, depth=3)
        direct = opexpr.eval_expr(ast).matrix
        rebuilt = opexpr.eval_expr(parse(to_text(ast))).matrix
        assert np.allclose(direct, rebuilt, atol=1e-12)


# --- Pauli strings and decomposition -----------------------------------------------


def test_all_strings_has_64_distinct():
    strings = all_strings()
    assert len(strings) == 64
    assert len(set(strings)) == 64


def test_decompose_identity():
    dec = pauli_decompose(qcore.identity_operator())
    nz = dec.nonzero()
    assert nz == {PauliString(("id", "id", "id")): 1.0}


def test_decompose_single_pauli():
    dec = pauli_decompose(qcore.embed(qcore.pauli_matrix("x"), "A"))
    assert dec.nonzero() == {PauliString(("x", "id", "id")): 1.0}


def test_decompose_ratio_numerator():
    """Frozen coefficients, cross-checked by a trace inner product oracle."""
    op = opexpr.eval_expr(parse("(sy[A]*sx[C] - sx[A]*sy[C])*(id[B] - sz[B])"))
    expected = {
        PauliString(("y", "id", "x")): 1.0,
        PauliString(("y", "z", "x")): -1.0,
        PauliString(("x", "id", "y")): -1.0,
        PauliString(("x", "z", "y")): 1.0,
    }
    nz = pauli_decompose(op).nonzero()
    assert set(nz) == set(expected)
    for s, c in expected.items():
        assert np.isclose(nz[s], c)
        # oracle: project onto the string with an explicit trace inner product
        mats = [qcore.pauli_matrix(a) for a in s.axes]
        string_mat = np.kron(mats[0], np.kron(mats[1], mats[2]))
        assert np.isclose(np.trace(op.matrix @ string_mat) / 8, c)


def test_decompose_reconstruction_round_trip():
    rng = np.random.default_rng(41)
    for _ in range(1000):
        m = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        dec = pauli_decompose(qcore.Operator(m))
        assert np.max(np.abs(dec.reconstruct() - m)) < 1e-10


def test_scalar_literal_must_be_finite():
    with pytest.raises(ValueError):
        ScalarLiteral(complex(np.inf, 0))
