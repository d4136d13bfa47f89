"""Registry and exact evaluation of the correlator-ratio invariants I1..I8.

The registry ships as a plain-text file (``data/invariants.txt``) holding the
eight primary ratios plus three documented variants: I1c and I3c replace the
duplicated ``sx*sx`` denominator term with ``sy*sy``, and I2c swaps the
``sz[A]`` signs between numerator and denominator.  Variants sit beside the
primary forms rather than replacing them, so both behaviours stay observable.

``invariance_scan`` measures, with exact density-matrix arithmetic (no
sampling), how much each ratio moves when a state is pushed through a
crosstalk channel, and fits the small-b scaling exponent of that deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from . import channel as channel_mod
from . import opexpr, qcore
from .channel import ChannelModel
from .qcore import DensityMatrix, StateCoefficients

#: an invariant is degenerate on a state when |den| falls below this fraction
#: of the denominator operator's Frobenius norm
DEGENERACY_RTOL = 1e-9

#: floor used in relative deviations, max(|I_in|, REL_DEV_FLOOR)
REL_DEV_FLOOR = 1e-12

#: deviations below this are floating-point noise and excluded from slope fits
NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class InvariantSpec:
    """One registry entry: a named ratio of two operator expressions."""

    id: str
    numerator: opexpr.OpExpr
    denominator: opexpr.OpExpr
    note: str
    numerator_text: str
    denominator_text: str
    num_op: qcore.Operator = field(repr=False, compare=False, default=None)  # type: ignore[assignment]
    den_op: qcore.Operator = field(repr=False, compare=False, default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "num_op", opexpr.eval_expr(self.numerator))
        object.__setattr__(self, "den_op", opexpr.eval_expr(self.denominator))


@dataclass(frozen=True)
class InvariantValue:
    """An evaluated ratio; `value` is None when the 0/0 degeneracy fires."""

    num: complex
    den: complex
    degenerate: bool
    value: complex | None

    @staticmethod
    def from_parts(num: complex, den: complex, den_scale: float) -> "InvariantValue":
        degenerate = abs(den) < DEGENERACY_RTOL * den_scale
        return InvariantValue(
            num=num,
            den=den,
            degenerate=degenerate,
            value=None if degenerate else num / den,
        )


def _parse_registry(text: str) -> tuple[InvariantSpec, ...]:
    specs: list[InvariantSpec] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) != 4:
            raise ValueError(f"registry line {lineno}: expected 4 fields, got {len(parts)}")
        entry_id, num_text, den_text, note = parts
        if entry_id in seen:
            raise ValueError(f"registry line {lineno}: duplicate id {entry_id!r}")
        seen.add(entry_id)
        specs.append(
            InvariantSpec(
                id=entry_id,
                numerator=opexpr.parse(num_text),
                denominator=opexpr.parse(den_text),
                note=note,
                numerator_text=num_text,
                denominator_text=den_text,
            )
        )
    return tuple(specs)


_REGISTRY: tuple[InvariantSpec, ...] | None = None


def registry() -> tuple[InvariantSpec, ...]:
    """All registry entries, re-parsed once from the shipped text file."""
    global _REGISTRY
    if _REGISTRY is None:
        text = resources.files("oamlink").joinpath("data/invariants.txt").read_text("utf-8")
        _REGISTRY = _parse_registry(text)
    return _REGISTRY


def lookup(entry_id: str) -> InvariantSpec:
    for spec in registry():
        if spec.id == entry_id:
            return spec
    raise KeyError(f"no registry entry {entry_id!r}")


def eval_invariant(spec: InvariantSpec, rho: DensityMatrix) -> InvariantValue:
    """Exact num/den expectation values of one registry entry on a state."""
    num = qcore.expectation(rho, spec.num_op)
    den = qcore.expectation(rho, spec.den_op)
    den_scale = float(np.linalg.norm(spec.den_op.matrix))
    return InvariantValue.from_parts(num, den, den_scale)


@dataclass(frozen=True)
class ScanRow:
    """Worst-case and mean relative deviation of one entry at one grid point."""

    invariant_id: str
    model: ChannelModel
    a: float
    b: float
    max_rel_deviation: float
    mean_rel_deviation: float
    samples: int


@dataclass(frozen=True)
class DegenerateRow:
    """Count of samples where an entry was 0/0 before or after the channel."""

    invariant_id: str
    model: ChannelModel
    a: float
    b: float
    input_degenerate: int
    output_degenerate: int


@dataclass(frozen=True)
class ScanReport:
    rows: tuple[ScanRow, ...]
    degenerate_rows: tuple[DegenerateRow, ...]
    #: least-squares slope of log(mean deviation) vs log(b) per (invariant id,
    #: model); None when fewer than two grid points rise above roundoff noise
    exponents: dict[tuple[str, ChannelModel], float | None]

    def max_deviation(self, invariant_id: str, model: ChannelModel) -> float:
        devs = [
            r.max_rel_deviation
            for r in self.rows
            if r.invariant_id == invariant_id and r.model == model
        ]
        return max(devs) if devs else 0.0


def grid_from_a2(a2_values: Iterable[float]) -> tuple[tuple[float, float], ...]:
    """Turn survival probabilities a^2 into (a, b) amplitude pairs."""
    grid = []
    for a2 in a2_values:
        a2 = float(a2)
        if not 0.0 <= a2 <= 1.0:
            raise ValueError(f"a^2 value {a2!r} outside [0, 1]")
        grid.append((math.sqrt(a2), math.sqrt(1.0 - a2)))
    return tuple(grid)


def grid_from_b(b_values: Iterable[float]) -> tuple[tuple[float, float], ...]:
    """Turn crosstalk amplitudes b into (a, b) pairs."""
    grid = []
    for b in b_values:
        b = float(b)
        if not 0.0 <= b <= 1.0:
            raise ValueError(f"b value {b!r} outside [0, 1]")
        grid.append((math.sqrt(1.0 - b * b), b))
    return tuple(grid)


def invariance_scan(
    coeff_samples: Sequence[StateCoefficients],
    models: Iterable[ChannelModel],
    grid: Sequence[tuple[float, float]],
    specs: Sequence[InvariantSpec] | None = None,
) -> ScanReport:
    """Exact per-entry channel deviations over states x models x grid.

    For each sample the entry is evaluated on the input state and on the
    channel output; samples where either side is degenerate are tallied
    separately and never contribute a deviation.
    """
    if not coeff_samples:
        raise ValueError("need at least one coefficient sample")
    models = tuple(models)
    if specs is None:
        specs = registry()
    rhos_in = [qcore.density_of(qcore.make_state(c)) for c in coeff_samples]
    vals_in = {
        (i, spec.id): eval_invariant(spec, rho)
        for i, rho in enumerate(rhos_in)
        for spec in specs
    }

    rows: list[ScanRow] = []
    degenerate_rows: list[DegenerateRow] = []
    fit_points: dict[tuple[str, ChannelModel], list[tuple[float, float]]] = {}

    for model in models:
        for a, b in grid:
            ch = channel_mod.make_channel(model, a, b)
            rhos_out = [channel_mod.apply(ch, rho) for rho in rhos_in]
            for spec in specs:
                devs: list[float] = []
                deg_in = deg_out = 0
                for i, rho_out in enumerate(rhos_out):
                    v_in = vals_in[(i, spec.id)]
                    v_out = eval_invariant(spec, rho_out)
                    if v_in.degenerate:
                        deg_in += 1
                        continue
                    if v_out.degenerate:
                        deg_out += 1
                        continue
                    scale = max(abs(v_in.value), REL_DEV_FLOOR)
                    devs.append(abs(v_out.value - v_in.value) / scale)
                if devs:
                    mean_dev = float(np.mean(devs))
                    rows.append(
                        ScanRow(
                            invariant_id=spec.id,
                            model=model,
                            a=a,
                            b=b,
                            max_rel_deviation=max(devs),
                            mean_rel_deviation=mean_dev,
                            samples=len(devs),
                        )
                    )
                    if b > 0.0 and mean_dev > NOISE_FLOOR:
                        fit_points.setdefault((spec.id, model), []).append((b, mean_dev))
                if deg_in or deg_out:
                    degenerate_rows.append(
                        DegenerateRow(
                            invariant_id=spec.id,
                            model=model,
                            a=a,
                            b=b,
                            input_degenerate=deg_in,
                            output_degenerate=deg_out,
                        )
                    )

    exponents: dict[tuple[str, ChannelModel], float | None] = {}
    for model in models:
        for spec in specs:
            points = fit_points.get((spec.id, model), [])
            bs = sorted({b for b, _ in points})
            if len(bs) < 2:
                exponents[(spec.id, model)] = None
                continue
            log_b = np.log([b for b, _ in points])
            log_d = np.log([d for _, d in points])
            exponents[(spec.id, model)] = float(np.polyfit(log_b, log_d, 1)[0])

    return ScanReport(rows=tuple(rows), degenerate_rows=tuple(degenerate_rows), exponents=exponents)
