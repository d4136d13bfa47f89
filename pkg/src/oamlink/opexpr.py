"""Parse, print and evaluate textual operator expressions over three parties.

Grammar (EBNF):

    expr   := term (('+'|'-') term)*
    term   := factor (('*')? factor)*
    factor := scalar | leaf | '(' expr ')' | '-' factor
    leaf   := ('sx'|'sy'|'sz'|'id') '[' ('A'|'B'|'C') ']'
    scalar := decimal | 'i' | decimal 'i'

Juxtaposition of factors, e.g. ``(sx[A]+sy[A])(id[B]-sz[B])``, is a product.
A '-' following a complete factor always binds as binary subtraction, never
as a juxtaposed negated factor, so ``sx[A] - sx[B]`` is a difference.

Evaluation maps every leaf to its embedded 8x8 matrix, so factors on distinct
parties combine by tensor placement while same-party factors multiply within
the slot.  The module also decomposes arbitrary 8x8 operators over the 64
three-party Pauli strings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import product as _iproduct
from typing import Union

import numpy as np

from . import qcore

LEAF_NAMES = ("sx", "sy", "sz", "id")
STRING_AXES = ("id", "x", "y", "z")


class ExpressionSyntaxError(ValueError):
    """Malformed expression text; `offset` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownSymbolError(ExpressionSyntaxError):
    """A name that is not one of sx, sy, sz, id or i."""


class MissingPartyError(ExpressionSyntaxError):
    """An operator leaf without a valid [A|B|C] party tag."""


@dataclass(frozen=True)
class ScalarLiteral:
    value: complex

    def __post_init__(self) -> None:
        v = complex(self.value)
        if not (np.isfinite(v.real) and np.isfinite(v.imag)):
            raise ValueError("scalar literal must be finite")
        object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class PauliLeaf:
    axis: str  # 'x', 'y', 'z' or 'id'
    party: str  # 'A', 'B' or 'C'

    def __post_init__(self) -> None:
        if self.axis not in STRING_AXES:
            raise ValueError(f"unknown axis {self.axis!r}")
        if self.party not in qcore.PARTIES:
            raise ValueError(f"unknown party {self.party!r}")


@dataclass(frozen=True)
class Sum:
    terms: tuple["OpExpr", ...]


@dataclass(frozen=True)
class Product:
    factors: tuple["OpExpr", ...]


@dataclass(frozen=True)
class Negation:
    child: "OpExpr"


OpExpr = Union[ScalarLiteral, PauliLeaf, Sum, Product, Negation]


@dataclass(frozen=True)
class _Token:
    kind: str  # 'name', 'number', 'punct'
    text: str
    offset: int


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<name>[A-Za-z]+)|(?P<number>\d+\.\d*|\.\d+|\d+)|(?P<punct>[+\-*()\[\]]))"
)


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad = len(text) - len(stripped)
            raise ExpressionSyntaxError(f"unexpected character {text[bad]!r}", bad)
        for kind in ("name", "number", "punct"):
            got = m.group(kind)
            if got is not None:
                tokens.append(_Token(kind, got, m.start(kind)))
                break
        pos = m.end()
    return tokens


_FACTOR_START_PUNCT = {"("}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_punct(self, text: str) -> _Token:
        tok = self.peek()
        if tok is None:
            raise ExpressionSyntaxError(f"expected {text!r} before end of input", len(self.text))
        if tok.kind != "punct" or tok.text != text:
            raise ExpressionSyntaxError(f"expected {text!r}, found {tok.text!r}", tok.offset)
        return self.advance()

    def parse(self) -> OpExpr:
        expr = self.parse_expr()
        tok = self.peek()
        if tok is not None:
            raise ExpressionSyntaxError(f"unexpected trailing {tok.text!r}", tok.offset)
        return expr

    def parse_expr(self) -> OpExpr:
        terms = [self.parse_term()]
        while True:
            tok = self.peek()
            if tok is None or tok.kind != "punct" or tok.text not in "+-":
                break
            op = self.advance()
            if self.peek() is None:
                raise ExpressionSyntaxError(f"operator {op.text!r} lacks a right operand", op.offset)
            rhs = self.parse_term()
            terms.append(Negation(rhs) if op.text == "-" else rhs)
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def _starts_factor(self, tok: _Token) -> bool:
        # a '-' here would be binary subtraction, so it does not start a factor
        return tok.kind in ("name", "number") or (tok.kind == "punct" and tok.text in _FACTOR_START_PUNCT)

    def parse_term(self) -> OpExpr:
        factors = [self.parse_factor()]
        while True:
            tok = self.peek()
            if tok is None:
                break
            if tok.kind == "punct" and tok.text == "*":
                star = self.advance()
                if self.peek() is None:
                    raise ExpressionSyntaxError("operator '*' lacks a right operand", star.offset)
                factors.append(self.parse_factor())
            elif self._starts_factor(tok):
                factors.append(self.parse_factor())
            else:
                break
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def parse_factor(self) -> OpExpr:
        tok = self.peek()
        if tok is None:
            raise ExpressionSyntaxError("expected an operand before end of input", len(self.text))
        if tok.kind == "punct" and tok.text == "-":
            self.advance()
            return Negation(self.parse_factor())
        if tok.kind == "punct" and tok.text == "(":
            self.advance()
            inner = self.parse_expr()
            self.expect_punct(")")
            return inner
        if tok.kind == "number":
            self.advance()
            value = float(tok.text)
            nxt = self.peek()
            if nxt is not None and nxt.kind == "name" and nxt.text == "i":
                self.advance()
                return ScalarLiteral(value * 1j)
            return ScalarLiteral(complex(value))
        if tok.kind == "name":
            return self.parse_name(tok)
        raise ExpressionSyntaxError(f"unexpected {tok.text!r}", tok.offset)

    def parse_name(self, tok: _Token) -> OpExpr:
        self.advance()
        if tok.text == "i":
            return ScalarLiteral(1j)
        if tok.text not in LEAF_NAMES:
            raise UnknownSymbolError(f"unknown symbol {tok.text!r}", tok.offset)
        nxt = self.peek()
        if nxt is None or nxt.kind != "punct" or nxt.text != "[":
            offset = tok.offset + len(tok.text)
            raise MissingPartyError(f"operator {tok.text!r} needs a party tag like [A]", offset)
        self.advance()
        party = self.peek()
        if party is None or party.kind != "name" or party.text not in qcore.PARTIES:
            offset = party.offset if party is not None else len(self.text)
            raise MissingPartyError("party tag must be one of A, B, C", offset)
        self.advance()
        self.expect_punct("]")
        axis = tok.text[1] if tok.text != "id" else "id"
        return PauliLeaf(axis, party.text)


def parse(text: str) -> OpExpr:
    """Parse expression text into an AST; see the module grammar."""
    return _Parser(text).parse()


def _scalar_text(value: complex) -> str:
    def num(x: float) -> str:
        return repr(int(x)) if float(x).is_integer() else repr(x)

    if value.imag == 0.0:
        return num(value.real)
    if value.real == 0.0:
        return "i" if value.imag == 1.0 else f"{num(value.imag)}i"
    return f"({num(value.real)} + {num(value.imag)}i)"


def to_text(expr: OpExpr) -> str:
    """Render an AST back to parseable expression text."""
    if isinstance(expr, ScalarLiteral):
        v = expr.value
        if v.real < 0 or (v.real == 0 and v.imag < 0):
            return f"-{_scalar_text(-v)}"
        return _scalar_text(v)
    if isinstance(expr, PauliLeaf):
        name = "id" if expr.axis == "id" else f"s{expr.axis}"
        return f"{name}[{expr.party}]"
    if isinstance(expr, Negation):
        inner = to_text(expr.child)
        if isinstance(expr.child, (Sum, Product)):
            return f"-({inner})"
        return f"-{inner}"
    if isinstance(expr, Sum):
        parts = [to_text(expr.terms[0])]
        for term in expr.terms[1:]:
            if isinstance(term, Negation) and not isinstance(term.child, (Sum,)):
                parts.append(f"- {to_text(term.child)}")
            else:
                parts.append(f"+ {to_text(term)}")
        return " ".join(parts)
    if isinstance(expr, Product):
        parts = []
        for factor in expr.factors:
            inner = to_text(factor)
            parts.append(f"({inner})" if isinstance(factor, (Sum, Negation)) else inner)
        return "*".join(parts)
    raise TypeError(f"not an expression node: {expr!r}")


def eval_expr(expr: OpExpr) -> qcore.Operator:
    """Evaluate an AST to its 8x8 operator."""
    return qcore.Operator(_eval(expr))


def _eval(expr: OpExpr) -> np.ndarray:
    if isinstance(expr, ScalarLiteral):
        return expr.value * np.eye(qcore.DIM, dtype=complex)
    if isinstance(expr, PauliLeaf):
        return embed_axis(expr.axis, expr.party)
    if isinstance(expr, Negation):
        return -_eval(expr.child)
    if isinstance(expr, Sum):
        out = np.zeros((qcore.DIM, qcore.DIM), dtype=complex)
        for term in expr.terms:
            out += _eval(term)
        return out
    if isinstance(expr, Product):
        out = _eval(expr.factors[0])
        for factor in expr.factors[1:]:
            out = out @ _eval(factor)
        return out
    raise TypeError(f"not an expression node: {expr!r}")


def embed_axis(axis: str, party: str) -> np.ndarray:
    """8x8 matrix of a single Pauli (or identity) leaf."""
    if axis == "id":
        return np.eye(qcore.DIM, dtype=complex)
    return qcore.embed(qcore.pauli_matrix(axis), party).matrix


@dataclass(frozen=True)
class PauliString:
    """A tensor product over (A, B, C) of axes drawn from {id, x, y, z}."""

    axes: tuple[str, str, str]

    def __post_init__(self) -> None:
        if len(self.axes) != 3 or any(a not in STRING_AXES for a in self.axes):
            raise ValueError(f"axes must be a triple over {STRING_AXES}, got {self.axes!r}")
        object.__setattr__(self, "axes", tuple(self.axes))

    def matrix(self) -> np.ndarray:
        mats = [qcore._PAULI_2X2[a] for a in self.axes]
        return np.kron(mats[0], np.kron(mats[1], mats[2]))

    @property
    def weight(self) -> int:
        """Number of non-identity slots."""
        return sum(1 for a in self.axes if a != "id")


def all_strings() -> tuple[PauliString, ...]:
    """The 64 Pauli strings in canonical (id, x, y, z)-lexicographic order."""
    return _ALL_STRINGS


_ALL_STRINGS = tuple(PauliString(axes) for axes in _iproduct(STRING_AXES, repeat=3))
_STRING_MATRICES = np.stack([s.matrix() for s in _ALL_STRINGS])


@dataclass(frozen=True)
class PauliDecomposition:
    """Coefficients of an operator over the 64 Pauli strings."""

    coeffs: dict[PauliString, complex]

    def reconstruct(self) -> np.ndarray:
        vec = np.array([self.coeffs[s] for s in _ALL_STRINGS], dtype=complex)
        return np.einsum("k,kij->ij", vec, _STRING_MATRICES)

    def nonzero(self, tol: float = 1e-12) -> dict[PauliString, complex]:
        return {s: c for s, c in self.coeffs.items() if abs(c) > tol}


def pauli_decompose(op: qcore.Operator) -> PauliDecomposition:
    """Decompose an 8x8 operator as sum_s c_s * s with c_s = Tr(op s) / 8."""
    vec = np.einsum("ij,kji->k", op.matrix, _STRING_MATRICES) / qcore.DIM
    return PauliDecomposition({s: complex(c) for s, c in zip(_ALL_STRINGS, vec)})
