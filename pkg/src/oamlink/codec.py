"""Map message bytes to family-state coefficients and back through I5..I8.

One message is four phase symbols, one each for the coefficients a2..a5; the
phase of a1 is the reference and is pinned to 0.  With the default four-point
alphabet {0, pi/2, pi, 3pi/2} a message is exactly one byte on the wire:

    byte = s2 << 6 | s3 << 4 | s4 << 2 | s5        (two bits per symbol)

On the equal-modulus family the ladder ratios reduce to pure phases,

    I5 = e^{i(phi3 - phi2)}     I6 = e^{i(phi4 - phi2)}
    I7 = e^{i(phi5 - phi2)}     I8 = e^{i(phi1 + phi2 - 2*phi3)}

which the decoder inverts (with phi1 = 0) as

    phi3 = -arg(I5 * I8)        phi2 = phi3 - arg(I5)
    phi4 = phi2 + arg(I6)       phi5 = phi2 + arg(I7)

before snapping each recovered phase to the nearest alphabet point (ties go
to the lower index).  All functions are pure.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .qcore import StateCoefficients

REQUIRED_INVARIANTS = ("I5", "I6", "I7", "I8")

_TWO_PI = 2.0 * math.pi


class BadSymbolError(ValueError):
    """A symbol index outside the constellation alphabet."""


class UnsupportedProfileError(ValueError):
    """Closed forms need equal moduli; this profile does not have them."""


class DegenerateInputError(ValueError):
    """Decoding was asked to run without a usable value for I5..I8."""


@dataclass(frozen=True)
class Constellation:
    """Phase alphabet plus the modulus of each of the five coefficients."""

    phase_alphabet: tuple[float, ...] = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
    modulus_profile: tuple[float, ...] = (
        1 / math.sqrt(5),
        1 / math.sqrt(5),
        1 / math.sqrt(5),
        1 / math.sqrt(5),
        1 / math.sqrt(5),
    )

    def __post_init__(self) -> None:
        phases = tuple(float(p) for p in self.phase_alphabet)
        if len(phases) < 2:
            raise ValueError("phase alphabet needs at least two points")
        wrapped = sorted(p % _TWO_PI for p in phases)
        gaps = [b - a for a, b in zip(wrapped, wrapped[1:])]
        gaps.append(wrapped[0] + _TWO_PI - wrapped[-1])
        if min(gaps) < 1e-9:
            raise ValueError("phase alphabet points must be distinct modulo 2*pi")
        moduli = tuple(float(m) for m in self.modulus_profile)
        if len(moduli) != 5 or any(m <= 0 for m in moduli):
            raise ValueError("modulus profile must be five positive reals")
        if abs(sum(m * m for m in moduli) - 1.0) > 1e-9:
            raise ValueError("modulus profile must have unit total weight")
        object.__setattr__(self, "phase_alphabet", phases)
        object.__setattr__(self, "modulus_profile", moduli)

    @property
    def equal_moduli(self) -> bool:
        return max(self.modulus_profile) - min(self.modulus_profile) < 1e-12


DEFAULT_CONSTELLATION = Constellation()


@dataclass(frozen=True)
class Message:
    """Four phase-symbol indices, one per coefficient a2..a5."""

    symbols: tuple[int, int, int, int]

    def __post_init__(self) -> None:
        syms = tuple(int(s) for s in self.symbols)
        if len(syms) != 4 or any(s < 0 for s in syms):
            raise ValueError(f"expected four nonnegative symbol indices, got {self.symbols!r}")
        object.__setattr__(self, "symbols", syms)

    @classmethod
    def from_hex(cls, text: str) -> "Message":
        """One byte of hex, two bits per symbol, a2 in the high bits."""
        text = text.strip().lower()
        if len(text) != 2:
            raise ValueError(f"expected exactly one hex byte, got {text!r}")
        value = int(text, 16)
        return cls(((value >> 6) & 3, (value >> 4) & 3, (value >> 2) & 3, value & 3))

    def to_hex(self) -> str:
        if any(s > 3 for s in self.symbols):
            raise ValueError("hex form only exists for 2-bit (4-level) symbols")
        s2, s3, s4, s5 = self.symbols
        return f"{(s2 << 6) | (s3 << 4) | (s4 << 2) | s5:02x}"


def encode(msg: Message, c: Constellation = DEFAULT_CONSTELLATION) -> StateCoefficients:
    """Coefficients carrying the message: a1 real, a2..a5 phase modulated."""
    size = len(c.phase_alphabet)
    for s in msg.symbols:
        if s >= size:
            raise BadSymbolError(f"symbol {s} outside alphabet of size {size}")
    alpha = [complex(c.modulus_profile[0])]
    for k, s in enumerate(msg.symbols, start=1):
        alpha.append(c.modulus_profile[k] * cmath.exp(1j * c.phase_alphabet[s]))
    return StateCoefficients(tuple(alpha))


def closed_form_invariants(coeffs: StateCoefficients) -> dict[str, complex]:
    """I5..I8 on an equal-modulus family state, straight from the phases.

    These bypass the density matrix entirely; they agree with the dense
    evaluation in :mod:`oamlink.invariants` to floating-point accuracy.
    """
    moduli = np.abs(coeffs.as_array())
    if moduli.max() - moduli.min() > 1e-9:
        raise UnsupportedProfileError("closed forms require equal moduli")
    p1, p2, p3, p4, p5 = (cmath.phase(a) for a in coeffs.alpha)
    return {
        "I5": cmath.exp(1j * (p3 - p2)),
        "I6": cmath.exp(1j * (p4 - p2)),
        "I7": cmath.exp(1j * (p5 - p2)),
        "I8": cmath.exp(1j * (p1 + p2 - 2 * p3)),
    }


def _snap(phase: float, alphabet: tuple[float, ...]) -> int:
    best_idx = 0
    best_dist = math.inf
    for idx, p in enumerate(alphabet):
        delta = (phase - p) % _TWO_PI
        dist = min(delta, _TWO_PI - delta)
        if dist < best_dist:  # strict: ties keep the lower index
            best_idx, best_dist = idx, dist
    return best_idx


def decode(vals: Mapping[str, complex], c: Constellation = DEFAULT_CONSTELLATION) -> Message:
    """Recover the message from the four ladder-ratio values.

    Deterministic: equal inputs always give equal outputs.  Raises
    :class:`DegenerateInputError` when any of I5..I8 is missing or None.
    """
    for key in REQUIRED_INVARIANTS:
        if vals.get(key) is None:
            raise DegenerateInputError(f"no usable value for {key}")
    i5, i6, i7, i8 = (complex(vals[k]) for k in REQUIRED_INVARIANTS)
    phi3 = -cmath.phase(i5 * i8)
    phi2 = phi3 - cmath.phase(i5)
    phi4 = phi2 + cmath.phase(i6)
    phi5 = phi2 + cmath.phase(i7)
    return Message(tuple(_snap(p, c.phase_alphabet) for p in (phi2, phi3, phi4, phi5)))
