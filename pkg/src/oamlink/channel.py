"""Parametrized turbulence-crosstalk channels on the 3-qubit density matrix.

A channel is defined by a survival amplitude ``a`` and a crosstalk amplitude
``b`` (with a^2 + b^2 = 1) and one of two flip models:

* ``INDEPENDENT``: each photon is flipped on its own, giving the 8 Kraus
  operators built from {a*I, b*sx} per slot.
* ``COLLECTIVE``: all three photons suffer the identical flip pattern,
  giving the 2 Kraus operators {a*I, b*sx(x)sx(x)sx}.

Crosstalk is confined to the {|l>, |-l>} subspace; there is no leakage to
other OAM orders.  Channels are immutable and ``apply`` is pure.
"""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass
from enum import Enum
from itertools import product as _iproduct

import numpy as np

from . import qcore


class ChannelModel(Enum):
    INDEPENDENT = "independent"
    COLLECTIVE = "collective"


class BadParamsError(ValueError):
    """Survival/crosstalk amplitudes that do not satisfy a^2 + b^2 = 1."""


@dataclass(frozen=True)
class ChannelParams:
    """Nonnegative amplitudes with a^2 + b^2 = 1 (renormalized on request)."""

    a: float
    b: float
    renormalize: InitVar[bool] = False

    def __post_init__(self, renormalize: bool) -> None:
        a, b = float(self.a), float(self.b)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise BadParamsError("amplitudes must be finite")
        if a < 0 or b < 0:
            raise BadParamsError("amplitudes must be nonnegative")
        if a == 0.0 and b == 0.0:
            raise BadParamsError("amplitudes must not both be zero")
        norm_sq = a * a + b * b
        if abs(norm_sq - 1.0) > 1e-12:
            if not renormalize:
                raise BadParamsError(f"a^2 + b^2 = {norm_sq!r}, expected 1 (or pass renormalize)")
            scale = math.sqrt(norm_sq)
            a, b = a / scale, b / scale
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class Channel:
    model: ChannelModel
    params: ChannelParams
    kraus: tuple[qcore.Operator, ...]


def _kraus_operators(model: ChannelModel, params: ChannelParams) -> tuple[qcore.Operator, ...]:
    ident = np.eye(2, dtype=complex)
    flip = qcore.pauli_matrix("x")
    if model is ChannelModel.COLLECTIVE:
        triple_flip = np.kron(flip, np.kron(flip, flip))
        return (
            qcore.Operator(params.a * np.eye(qcore.DIM, dtype=complex)),
            qcore.Operator(params.b * triple_flip),
        )
    ops = []
    for flags in _iproduct((False, True), repeat=3):
        slots = [params.b * flip if f else params.a * ident for f in flags]
        ops.append(qcore.Operator(np.kron(slots[0], np.kron(slots[1], slots[2]))))
    return tuple(ops)


def make_channel(model: ChannelModel, a: float, b: float, renormalize: bool = False) -> Channel:
    """Build a channel; rejects (a, b) off the unit circle unless renormalizing."""
    params = ChannelParams(a, b, renormalize=renormalize)
    kraus = _kraus_operators(model, params)
    completeness = sum(k.matrix.conj().T @ k.matrix for k in kraus)
    if np.max(np.abs(completeness - np.eye(qcore.DIM))) > qcore.VERIFY_TOL:
        raise BadParamsError("Kraus family is not trace preserving")
    return Channel(model=model, params=params, kraus=kraus)


def apply(ch: Channel, rho: qcore.DensityMatrix) -> qcore.DensityMatrix:
    """Evolve rho through the channel: sum_k K rho K^dagger."""
    out = np.zeros((qcore.DIM, qcore.DIM), dtype=complex)
    for k in ch.kraus:
        out += k.matrix @ rho.matrix @ k.matrix.conj().T
    return qcore.DensityMatrix(out)


def kraus_of(ch: Channel) -> tuple[qcore.Operator, ...]:
    """The defining Kraus operators (2 for COLLECTIVE, 8 for INDEPENDENT)."""
    return ch.kraus
