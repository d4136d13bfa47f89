"""Dense complex linear algebra for the two-level OAM basis and 3-qubit composites.

Each party (A, B, C) carries a two-level system spanned by the OAM modes
|l> and |-l>, indexed 0 and 1.  Composite basis states are indexed
4*iA + 2*iB + iC, so e.g. |l,-l,-l> sits at index 3.

The Pauli operators follow the mode-flip convention used throughout this
package:

    sx = |l><-l| + |-l><l|
    sy = i|l><-l| - i|-l><l|      (note: the transpose of the textbook sy)
    sz = |l><l|  - |-l><-l|

The sy sign matters: with it, sx + i*sy = 2|-l><l| and sx - i*sy = 2|l><-l|,
which is what the ladder-type correlator ratios in :mod:`oamlink.invariants`
rely on.  All values are immutable after construction and all operations are
pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PARTIES = ("A", "B", "C")
AXES = ("x", "y", "z")

PARTY_INDEX = {"A": 0, "B": 1, "C": 2}
AXIS_INDEX = {"x": 0, "y": 1, "z": 2}

DIM = 8

#: tolerance for invariants enforced at construction time
CONSTRUCT_TOL = 1e-12
#: tolerance for derived-value verification (Hermiticity, trace, positivity)
VERIFY_TOL = 1e-10

#: outcome triple (sA, sB, sC) for each canonical outcome index 4*a + 2*b + c,
#: where bit value 0 means outcome +1 and bit value 1 means outcome -1
OUTCOME_SIGNS = np.array(
    [[1 - 2 * ((k >> 2) & 1), 1 - 2 * ((k >> 1) & 1), 1 - 2 * (k & 1)] for k in range(8)],
    dtype=np.int8,
)

_PAULI_2X2 = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, 1j], [-1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "id": np.eye(2, dtype=complex),
}


class ZeroStateError(ValueError):
    """Raised when all five family coefficients vanish."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=complex, copy=True)
    out.setflags(write=False)
    return out


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or Inf entries")


@dataclass(frozen=True)
class StateCoefficients:
    """The five amplitudes (alpha1..alpha5) of the encoded-state family.

    Coefficients are renormalized to unit total weight at construction;
    an all-zero tuple is rejected with :class:`ZeroStateError`.
    """

    alpha: tuple[complex, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.alpha, dtype=complex)
        if arr.shape != (5,):
            raise ValueError(f"expected 5 coefficients, got shape {arr.shape}")
        _require_finite(arr, "coefficients")
        norm = np.linalg.norm(arr)
        if norm == 0.0:
            raise ZeroStateError("all five coefficients are zero")
        object.__setattr__(self, "alpha", tuple(complex(c) for c in arr / norm))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=complex)


@dataclass(frozen=True)
class StateVector:
    """A pure 3-qubit state as 8 amplitudes in the canonical index order."""

    amp: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.amp, dtype=complex)
        if arr.shape != (DIM,):
            raise ValueError(f"expected {DIM} amplitudes, got shape {arr.shape}")
        _require_finite(arr, "amplitudes")
        norm = np.linalg.norm(arr)
        if abs(norm - 1.0) > CONSTRUCT_TOL:
            raise ValueError(f"state vector norm {norm!r} is not 1 within {CONSTRUCT_TOL}")
        object.__setattr__(self, "amp", _frozen(arr))


@dataclass(frozen=True)
class DensityMatrix:
    """An 8x8 density matrix; Hermiticity, unit trace and positivity are enforced."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (DIM, DIM):
            raise ValueError(f"expected {DIM}x{DIM} matrix, got shape {m.shape}")
        _require_finite(m, "density matrix")
        if np.max(np.abs(m - m.conj().T)) > VERIFY_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1.0) > VERIFY_TOL:
            raise ValueError(f"density matrix trace {tr!r} is not 1")
        eigs = np.linalg.eigvalsh((m + m.conj().T) / 2)
        if eigs.min() < -VERIFY_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {eigs.min()!r}")
        object.__setattr__(self, "matrix", _frozen(m))


@dataclass(frozen=True)
class Operator:
    """An 8x8 operator; `hermitian` is derived at construction.

    No Hermiticity is required: ladder combinations sx +/- i*sy are
    intentionally non-Hermitian.
    """

    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (DIM, DIM):
            raise ValueError(f"expected {DIM}x{DIM} matrix, got shape {m.shape}")
        _require_finite(m, "operator")
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "hermitian", bool(np.max(np.abs(m - m.conj().T)) <= VERIFY_TOL))


def make_state(coeffs: StateCoefficients) -> StateVector:
    """Build the family state from its five coefficients.

    The coefficients land at amplitude indices (3, 5, 6, 0, 7) respectively,
    i.e. on |l,-l,-l>, |-l,l,-l>, |-l,-l,l>, |l,l,l> and |-l,-l,-l>.
    """
    a1, a2, a3, a4, a5 = coeffs.alpha
    amp = np.zeros(DIM, dtype=complex)
    amp[3] = a1
    amp[5] = a2
    amp[6] = a3
    amp[0] = a4
    amp[7] = a5
    return StateVector(amp)


def density_of(psi: StateVector) -> DensityMatrix:
    """Rank-1 projector |psi><psi| of a pure state."""
    return DensityMatrix(np.outer(psi.amp, psi.amp.conj()))


def pauli_matrix(axis: str) -> np.ndarray:
    """The 2x2 mode-flip Pauli matrix for axis 'x', 'y' or 'z' (or 'id')."""
    try:
        return _PAULI_2X2[axis].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}") from None


def embed(op2: np.ndarray, party: str) -> Operator:
    """Lift a single-party 2x2 operator into the 3-party space (order A x B x C)."""
    m = np.asarray(op2, dtype=complex)
    if m.shape != (2, 2):
        raise ValueError(f"expected a 2x2 operator, got shape {m.shape}")
    if party not in PARTY_INDEX:
        raise ValueError(f"unknown party {party!r}")
    slots = [np.eye(2, dtype=complex)] * 3
    slots[PARTY_INDEX[party]] = m
    return Operator(np.kron(slots[0], np.kron(slots[1], slots[2])))


def identity_operator() -> Operator:
    return Operator(np.eye(DIM, dtype=complex))


def expectation(rho: DensityMatrix, op: Operator) -> complex:
    """Tr(rho op).  Real within 1e-12 whenever op is Hermitian."""
    return complex(np.sum(rho.matrix * op.matrix.T))


def _projector(axis: str, sign: int) -> np.ndarray:
    return (np.eye(2, dtype=complex) + sign * _PAULI_2X2[axis]) / 2


def born_probabilities(rho: DensityMatrix, bases: Sequence[str]) -> np.ndarray:
    """Outcome probabilities for local measurements along the given axes.

    Returns the 8 probabilities indexed by the canonical outcome order of
    :data:`OUTCOME_SIGNS` (index 4*a + 2*b + c, bit 0 meaning outcome +1).
    Tiny negative values from floating-point roundoff are clipped to 0; the
    result sums to 1 within 1e-10 and is not renormalized.
    """
    bases = tuple(bases)
    if len(bases) != 3 or any(b not in AXIS_INDEX for b in bases):
        raise ValueError(f"bases must be a triple over {AXES}, got {bases!r}")
    probs = np.empty(DIM, dtype=float)
    for k in range(DIM):
        sa, sb, sc = OUTCOME_SIGNS[k]
        proj = np.kron(
            _projector(bases[0], int(sa)),
            np.kron(_projector(bases[1], int(sb)), _projector(bases[2], int(sc))),
        )
        probs[k] = np.real(np.sum(rho.matrix * proj.T))
    if probs.min() < -CONSTRUCT_TOL:
        raise ValueError(f"probability {probs.min()!r} is negative beyond roundoff")
    return np.clip(probs, 0.0, None)


def random_coefficients(rng: np.random.Generator) -> StateCoefficients:
    """Draw a Haar-like random member of the encoded-state family."""
    raw = rng.normal(size=5) + 1j * rng.normal(size=5)
    return StateCoefficients(tuple(raw))
