"""Round-by-round simulation of the three-party measurement protocol.

One round: the sender prepares the encoded family state, each photon crosses
the crosstalk channel, and Alice, Bob and Charlie each measure their qubit
along a uniformly random axis in {x, y, z}.  After many rounds the pooled
(bases, outcomes) records yield every three-party correlator by sifting:

* a round qualifies for a Pauli string when its basis matches the string at
  every non-identity slot;
* identity slots match any basis and their outcome is left out of the
  product, which is unbiased because no-signaling makes the other parties'
  outcome statistics independent of that basis choice.

Invariant ratios are then assembled from string means through the Pauli
decomposition of their numerator and denominator operators, with bootstrap
percentile confidence intervals resampled over rounds.

Randomness is counter based: all draws come from Philox streams keyed by the
master seed and a stream purpose, and round i always consumes the same four
uniforms regardless of how many rounds follow it.  Reports are therefore
bitwise reproducible for a given (config, seed).
"""

from __future__ import annotations

import time
import zlib
from collections.abc import Sequence as _SequenceABC
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from . import channel as channel_mod
from . import codec, opexpr, qcore
from .channel import Channel
from .codec import Constellation, DEFAULT_CONSTELLATION, Message
from .invariants import InvariantSpec, lookup
from .opexpr import PauliString
from .qcore import AXES, AXIS_INDEX, OUTCOME_SIGNS, StateCoefficients

_STREAM_ROUNDS = 0
_STREAM_WITHHOLD = 1
_STREAM_BOOTSTRAP = 2

_UNIFORMS_PER_ROUND = 4

#: fewer qualifying rounds than this on any needed string flags the report
INSUFFICIENT_COUNT = 100

#: basis axis codes of each of the 27 basis combinations (combo = 9a + 3b + c)
COMBO_AXES = np.array([[i // 9, (i // 3) % 3, i % 3] for i in range(27)], dtype=np.int8)


class NoQualifyingRoundsError(RuntimeError):
    """No recorded round matches the string's non-identity slots."""


class DecodingUnavailableError(RuntimeError):
    """A required invariant estimate is degenerate; carries the partial report."""

    def __init__(self, report: "ProtocolReport"):
        super().__init__("decoding unavailable: a required invariant estimate is degenerate")
        self.report = report


def _generator(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(purpose, index))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class MeasurementRecord:
    round: int
    bases: tuple[str, str, str]
    outcomes: tuple[int, int, int]


class RecordSet(_SequenceABC):
    """Array-backed sequence of measurement records.

    ``bases`` holds axis codes (0=x, 1=y, 2=z) and ``outcomes`` holds +/-1,
    both with shape (n, 3).  Both arrays are read-only.
    """

    __slots__ = ("bases", "outcomes")

    def __init__(self, bases: np.ndarray, outcomes: np.ndarray):
        bases = np.asarray(bases, dtype=np.int8)
        outcomes = np.asarray(outcomes, dtype=np.int8)
        if bases.ndim != 2 or bases.shape[1] != 3 or bases.shape != outcomes.shape:
            raise ValueError("bases and outcomes must both have shape (n, 3)")
        if bases.size and (bases.min() < 0 or bases.max() > 2):
            raise ValueError("basis codes must be in {0, 1, 2}")
        if outcomes.size and not np.all(np.abs(outcomes) == 1):
            raise ValueError("outcomes must be +/-1")
        bases = bases.copy()
        outcomes = outcomes.copy()
        bases.setflags(write=False)
        outcomes.setflags(write=False)
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "outcomes", outcomes)

    def __setattr__(self, name, value):  # immutable container
        raise AttributeError("RecordSet is immutable")

    def __len__(self) -> int:
        return self.bases.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return RecordSet(self.bases[i], self.outcomes[i])
        idx = range(len(self))[i]
        return MeasurementRecord(
            round=idx,
            bases=tuple(AXES[c] for c in self.bases[idx]),
            outcomes=tuple(int(o) for o in self.outcomes[idx]),
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RecordSet)
            and np.array_equal(self.bases, other.bases)
            and np.array_equal(self.outcomes, other.outcomes)
        )

    def replace_outcomes(self, party: str, values: np.ndarray) -> "RecordSet":
        """A copy with one party's outcome column replaced."""
        col = qcore.PARTY_INDEX[party]
        outcomes = self.outcomes.copy()
        outcomes[:, col] = values
        return RecordSet(self.bases, outcomes)

    def to_csv(self, fp: IO[str]) -> None:
        fp.write("round,basisA,basisB,basisC,outA,outB,outC\n")
        for i in range(len(self)):
            ba, bb, bc = (AXES[c] for c in self.bases[i])
            oa, ob, oc = self.outcomes[i]
            fp.write(f"{i},{ba},{bb},{bc},{oa:+d},{ob:+d},{oc:+d}\n")

    @classmethod
    def from_csv(cls, fp: IO[str]) -> "RecordSet":
        header = fp.readline().strip()
        if header != "round,basisA,basisB,basisC,outA,outB,outC":
            raise ValueError(f"unexpected record CSV header: {header!r}")
        bases, outcomes = [], []
        for line in fp:
            line = line.strip()
            if not line:
                continue
            _, ba, bb, bc, oa, ob, oc = line.split(",")
            bases.append([AXIS_INDEX[ba], AXIS_INDEX[bb], AXIS_INDEX[bc]])
            outcomes.append([int(oa), int(ob), int(oc)])
        n = len(bases)
        return cls(
            np.asarray(bases, dtype=np.int8).reshape(n, 3),
            np.asarray(outcomes, dtype=np.int8).reshape(n, 3),
        )


def outcome_probability_table(rho: qcore.DensityMatrix) -> np.ndarray:
    """Exact outcome probabilities, shape (27 basis combos, 8 outcomes)."""
    table = np.empty((27, 8), dtype=float)
    for combo in range(27):
        bases = tuple(AXES[c] for c in COMBO_AXES[combo])
        table[combo] = qcore.born_probabilities(rho, bases)
    return table


def simulate(coeffs: StateCoefficients, ch: Channel, n: int, seed: int) -> RecordSet:
    """Generate n protocol rounds against the post-channel state.

    Each round draws three uniform basis choices and one Born-rule outcome
    from its own slice of the seeded Philox stream, so the first m rounds of
    a longer run equal an m-round run with the same seed.
    """
    if n < 0:
        raise ValueError("round count must be nonnegative")
    rho = channel_mod.apply(ch, qcore.density_of(qcore.make_state(coeffs)))
    table = outcome_probability_table(rho)
    cum = np.cumsum(table, axis=1)
    cum /= cum[:, -1:]

    u = _generator(seed, _STREAM_ROUNDS).random((n, _UNIFORMS_PER_ROUND))
    bases = np.minimum((u[:, :3] * 3.0).astype(np.int8), 2)
    combos = bases[:, 0] * 9 + bases[:, 1] * 3 + bases[:, 2]
    outcome_idx = np.minimum(
        np.sum(cum[combos] <= u[:, 3:4], axis=1).astype(np.int8), 7
    )
    return RecordSet(bases, OUTCOME_SIGNS[outcome_idx])


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    count: int


def _mean_stderr(total: float, count: int) -> tuple[float, float]:
    mean = total / count
    if count < 2:
        return mean, 0.0
    # products are +/-1, so the sample variance is count*(1-mean^2)/(count-1)
    return mean, float(np.sqrt(max(1.0 - mean * mean, 0.0) / (count - 1)))


def estimate_string(records: RecordSet, s: PauliString) -> Estimate:
    """Sifted mean of the outcome product for one Pauli string.

    The all-identity string has mean 1 over every round by the empty-product
    convention.  stderr is the sample standard deviation over qualifying
    rounds divided by sqrt(count), and 0 when fewer than two rounds qualify.
    """
    mask = np.ones(len(records), dtype=bool)
    cols = []
    for j, axis in enumerate(s.axes):
        if axis == "id":
            continue
        mask &= records.bases[:, j] == AXIS_INDEX[axis]
        cols.append(j)
    count = int(mask.sum())
    if count == 0:
        raise NoQualifyingRoundsError(f"no rounds qualify for string {s.axes}")
    if cols:
        prods = records.outcomes[mask][:, cols].prod(axis=1)
        total = float(prods.sum())
    else:
        total = float(count)
    mean, stderr = _mean_stderr(total, count)
    return Estimate(mean=mean, stderr=stderr, count=count)


# --- contingency-table estimation machinery --------------------------------
#
# All string estimators are functions of the (basis combo, outcome) count
# table, so sifting and bootstrapping work on 27*8 = 216 cells instead of raw
# rounds.  Resampling the table multinomially is exactly the bootstrap over
# rounds, because the table is a sufficient statistic for every estimator.

_STRING_LIST = opexpr.all_strings()
_STRING_INDEX = {s: k for k, s in enumerate(_STRING_LIST)}


def _build_string_tables() -> tuple[np.ndarray, np.ndarray]:
    qual = np.empty((64, 27), dtype=float)
    sign = np.empty((64, 8), dtype=float)
    for k, s in enumerate(_STRING_LIST):
        q = np.ones(27, dtype=bool)
        sg = np.ones(8, dtype=float)
        for j, axis in enumerate(s.axes):
            if axis == "id":
                continue
            q &= COMBO_AXES[:, j] == AXIS_INDEX[axis]
            sg *= OUTCOME_SIGNS[:, j]
        qual[k] = q.astype(float)
        sign[k] = sg
    w = (qual[:, :, None] * sign[:, None, :]).reshape(64, 216)
    q216 = np.repeat(qual, 8, axis=1)
    return w, q216


_W_TABLE, _Q_TABLE = _build_string_tables()


def contingency_table(records: RecordSet) -> np.ndarray:
    """Counts per (basis combo, outcome pattern), flattened to 216 cells."""
    combos = (
        records.bases[:, 0].astype(np.int64) * 9
        + records.bases[:, 1] * 3
        + records.bases[:, 2]
    )
    oidx = ((1 - records.outcomes.astype(np.int64)) // 2) @ np.array([4, 2, 1])
    return np.bincount(combos * 8 + oidx, minlength=216).astype(float)


def _table_means(table: np.ndarray, string_idx: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """(means, counts) for the selected strings; mean is 0 where count is 0."""
    idx = np.asarray(string_idx, dtype=int)
    counts = table @ _Q_TABLE[idx].T
    sums = table @ _W_TABLE[idx].T
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return means, counts


@dataclass(frozen=True)
class InvariantEstimate:
    """A sampled invariant value with bootstrap percentile intervals."""

    value: complex | None
    num: complex
    den: complex
    den_spread: float
    ci_real: tuple[float, float]
    ci_imag: tuple[float, float]
    degenerate: bool
    bootstrap_resamples: int
    min_count: int


def _decomposition_vectors(spec: InvariantSpec) -> tuple[list[int], np.ndarray, np.ndarray]:
    num_coeffs = opexpr.pauli_decompose(spec.num_op).nonzero()
    den_coeffs = opexpr.pauli_decompose(spec.den_op).nonzero()
    idx = sorted({_STRING_INDEX[s] for s in num_coeffs} | {_STRING_INDEX[s] for s in den_coeffs})
    c_num = np.zeros(len(idx), dtype=complex)
    c_den = np.zeros(len(idx), dtype=complex)
    pos = {k: p for p, k in enumerate(idx)}
    for s, c in num_coeffs.items():
        c_num[pos[_STRING_INDEX[s]]] = c
    for s, c in den_coeffs.items():
        c_den[pos[_STRING_INDEX[s]]] = c
    return idx, c_num, c_den


def estimate_invariant(
    records: RecordSet,
    spec: InvariantSpec,
    resamples: int = 200,
    seed: int = 0,
) -> InvariantEstimate:
    """Estimate one registry ratio from pooled records.

    Numerator and denominator are assembled as sum_s c_s * mean(s) over the
    Pauli decompositions of their operators.  Percentile confidence intervals
    come from `resamples` bootstrap draws over rounds (with `resamples` = 1
    they collapse to the point estimate).  The estimate is flagged degenerate
    when |den| < 3 times its bootstrap spread.
    """
    if resamples < 1:
        raise ValueError("resamples must be at least 1")
    idx, c_num, c_den = _decomposition_vectors(spec)
    table = contingency_table(records)
    n = int(table.sum())
    means, counts = _table_means(table, idx)
    if np.any(counts == 0):
        missing = [tuple(_STRING_LIST[idx[k]].axes) for k in np.flatnonzero(counts == 0)]
        raise NoQualifyingRoundsError(f"no rounds qualify for strings {missing}")
    num = complex(means @ c_num)
    den = complex(means @ c_den)

    rng = _generator(seed, _STREAM_BOOTSTRAP, zlib.crc32(spec.id.encode()))
    if resamples == 1:
        den_spread = 0.0
        point = num / den if abs(den) > 0 else complex(np.nan, np.nan)
        ci_real = (point.real, point.real)
        ci_imag = (point.imag, point.imag)
    else:
        pvals = table / n
        pvals = pvals / pvals.sum()
        tables = rng.multinomial(n, pvals, size=resamples).astype(float)
        counts_r = tables @ _Q_TABLE[np.asarray(idx)].T
        sums_r = tables @ _W_TABLE[np.asarray(idx)].T
        means_r = np.divide(sums_r, counts_r, out=np.zeros_like(sums_r), where=counts_r > 0)
        num_r = means_r @ c_num
        den_r = means_r @ c_den
        den_spread = float(
            np.sqrt(np.var(den_r.real, ddof=1) + np.var(den_r.imag, ddof=1))
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            vals_r = num_r / den_r
        finite = vals_r[np.isfinite(vals_r)]
        if finite.size:
            ci_real = tuple(float(x) for x in np.percentile(finite.real, (2.5, 97.5)))
            ci_imag = tuple(float(x) for x in np.percentile(finite.imag, (2.5, 97.5)))
        else:
            point = num / den if abs(den) > 0 else complex(np.nan, np.nan)
            ci_real = (point.real, point.real)
            ci_imag = (point.imag, point.imag)

    degenerate = abs(den) == 0.0 or abs(den) < 3.0 * den_spread
    return InvariantEstimate(
        value=None if degenerate else num / den,
        num=num,
        den=den,
        den_spread=den_spread,
        ci_real=ci_real,
        ci_imag=ci_imag,
        degenerate=degenerate,
        bootstrap_resamples=resamples,
        min_count=int(counts.min()),
    )


def _degenerate_estimate(resamples: int) -> InvariantEstimate:
    return InvariantEstimate(
        value=None,
        num=0j,
        den=0j,
        den_spread=0.0,
        ci_real=(0.0, 0.0),
        ci_imag=(0.0, 0.0),
        degenerate=True,
        bootstrap_resamples=resamples,
        min_count=0,
    )


def _complex_to_dict(z: complex | None) -> dict[str, float] | None:
    if z is None:
        return None
    return {"re": float(z.real), "im": float(z.imag)}


def _estimate_to_dict(est: InvariantEstimate) -> dict:
    return {
        "value": _complex_to_dict(est.value),
        "num": _complex_to_dict(est.num),
        "den": _complex_to_dict(est.den),
        "den_spread": est.den_spread,
        "ci_real": list(est.ci_real),
        "ci_imag": list(est.ci_imag),
        "degenerate": est.degenerate,
        "bootstrap_resamples": est.bootstrap_resamples,
        "min_count": est.min_count,
    }


@dataclass(frozen=True)
class ProtocolReport:
    """End-to-end run summary; `decoded` is present iff nothing was degenerate."""

    config: dict
    seed: int
    sent: str
    decoded: str | None
    per_symbol_correct: tuple[bool, ...] | None
    estimates: dict[str, InvariantEstimate]
    warnings: tuple[str, ...]
    elapsed_seconds: float

    @property
    def decode_success(self) -> bool:
        return self.decoded is not None

    @property
    def match(self) -> bool:
        return self.decoded == self.sent

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "schema": "v1",
            "config": dict(self.config),
            "seed": self.seed,
            "sent": self.sent,
            "decoded": self.decoded,
            "decode_success": self.decode_success,
            "match": self.match,
            "per_symbol_correct": None
            if self.per_symbol_correct is None
            else list(self.per_symbol_correct),
            "estimates": {k: _estimate_to_dict(v) for k, v in self.estimates.items()},
            "warnings": list(self.warnings),
        }
        if include_timing:
            out["elapsed_seconds"] = self.elapsed_seconds
        return out


def _channel_config(ch: Channel) -> dict:
    return {"model": ch.model.value, "a": ch.params.a, "b": ch.params.b}


def _estimate_required(
    records: RecordSet, resamples: int, seed: int
) -> tuple[dict[str, InvariantEstimate], list[str]]:
    estimates: dict[str, InvariantEstimate] = {}
    warnings: list[str] = []
    for inv_id in codec.REQUIRED_INVARIANTS:
        try:
            estimates[inv_id] = estimate_invariant(
                records, lookup(inv_id), resamples=resamples, seed=seed
            )
        except NoQualifyingRoundsError:
            estimates[inv_id] = _degenerate_estimate(resamples)
            warnings.append(f"no qualifying rounds for {inv_id}")
    min_count = min(est.min_count for est in estimates.values())
    if min_count < INSUFFICIENT_COUNT:
        warnings.append(
            f"insufficient statistics: smallest qualifying round count is {min_count}"
        )
    return estimates, warnings


def run_protocol(
    msg: Message,
    ch: Channel,
    n: int,
    seed: int,
    constellation: Constellation = DEFAULT_CONSTELLATION,
    resamples: int = 200,
) -> ProtocolReport:
    """Encode, simulate, estimate I5..I8, decode, and assemble the report.

    Raises :class:`DecodingUnavailableError` (with the partial report on the
    exception) when any required invariant estimate is degenerate.
    """
    start = time.perf_counter()
    coeffs = codec.encode(msg, constellation)
    records = simulate(coeffs, ch, n, seed)
    estimates, warnings = _estimate_required(records, resamples, seed)
    config = {
        **_channel_config(ch),
        "rounds": n,
        "resamples": resamples,
        "phases": list(constellation.phase_alphabet),
        "moduli": list(constellation.modulus_profile),
    }

    if any(est.degenerate for est in estimates.values()):
        report = ProtocolReport(
            config=config,
            seed=seed,
            sent=msg.to_hex(),
            decoded=None,
            per_symbol_correct=None,
            estimates=estimates,
            warnings=tuple(warnings),
            elapsed_seconds=time.perf_counter() - start,
        )
        raise DecodingUnavailableError(report)

    decoded = codec.decode({k: est.value for k, est in estimates.items()}, constellation)
    per_symbol = tuple(d == s for d, s in zip(decoded.symbols, msg.symbols))
    return ProtocolReport(
        config=config,
        seed=seed,
        sent=msg.to_hex(),
        decoded=decoded.to_hex(),
        per_symbol_correct=per_symbol,
        estimates=estimates,
        warnings=tuple(warnings),
        elapsed_seconds=time.perf_counter() - start,
    )


@dataclass(frozen=True)
class StringComparison:
    """Control vs withheld estimate for one Pauli string."""

    axes: tuple[str, str, str]
    touches_withheld: bool
    control_mean: float | None
    control_stderr: float | None
    withheld_mean: float | None
    withheld_stderr: float | None
    consistent_with_zero: bool

    def to_dict(self) -> dict:
        return {
            "axes": list(self.axes),
            "touches_withheld": self.touches_withheld,
            "control_mean": self.control_mean,
            "control_stderr": self.control_stderr,
            "withheld_mean": self.withheld_mean,
            "withheld_stderr": self.withheld_stderr,
            "consistent_with_zero": self.consistent_with_zero,
        }


@dataclass(frozen=True)
class CollaborationReport:
    """Decode outcome when one party's results are replaced by coin flips."""

    config: dict
    seed: int
    withheld: str | None
    sent: str
    decoded: str | None
    decode_success: bool
    match: bool
    estimates: dict[str, InvariantEstimate]
    strings: tuple[StringComparison, ...]
    warnings: tuple[str, ...]
    elapsed_seconds: float

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {
            "schema": "v1",
            "config": dict(self.config),
            "seed": self.seed,
            "withheld": self.withheld,
            "sent": self.sent,
            "decoded": self.decoded,
            "decode_success": self.decode_success,
            "match": self.match,
            "estimates": {k: _estimate_to_dict(v) for k, v in self.estimates.items()},
            "strings": [s.to_dict() for s in self.strings],
            "warnings": list(self.warnings),
        }
        if include_timing:
            out["elapsed_seconds"] = self.elapsed_seconds
        return out


def _all_string_estimates(records: RecordSet) -> list[tuple[float, float, int] | None]:
    table = contingency_table(records)
    means, counts = _table_means(table, list(range(64)))
    out: list[tuple[float, float, int] | None] = []
    for k in range(64):
        count = int(counts[k])
        if count == 0:
            out.append(None)
            continue
        mean, stderr = _mean_stderr(means[k] * count, count)
        out.append((mean, stderr, count))
    return out


def collaboration_test(
    msg: Message,
    ch: Channel,
    n: int,
    seed: int,
    withheld: str | None = None,
    constellation: Constellation = DEFAULT_CONSTELLATION,
    resamples: int = 200,
) -> CollaborationReport:
    """Rerun estimation with one party's outcomes replaced by coin flips.

    With ``withheld=None`` this is the control run.  Strings that are
    non-identity at the withheld slot lose their signal (their sifted mean is
    an average over independent fair coins); strings with identity there do
    not involve the withheld outcomes at all and reproduce the control run
    exactly.  The report never raises on decode failure.
    """
    start = time.perf_counter()
    if withheld is not None and withheld not in qcore.PARTY_INDEX:
        raise ValueError(f"withheld party must be one of {qcore.PARTIES} or None")
    coeffs = codec.encode(msg, constellation)
    control = simulate(coeffs, ch, n, seed)
    if withheld is None:
        records = control
    else:
        party_idx = qcore.PARTY_INDEX[withheld]
        coins = _generator(seed, _STREAM_WITHHOLD, party_idx).integers(
            0, 2, size=n, dtype=np.int8
        ) * 2 - 1
        records = control.replace_outcomes(withheld, coins)

    estimates, warnings = _estimate_required(records, resamples, seed)
    decoded = None
    if not any(est.degenerate for est in estimates.values()):
        decoded = codec.decode(
            {k: est.value for k, est in estimates.items()}, constellation
        ).to_hex()

    control_stats = _all_string_estimates(control)
    withheld_stats = control_stats if withheld is None else _all_string_estimates(records)
    comparisons = []
    withheld_col = None if withheld is None else qcore.PARTY_INDEX[withheld]
    for k, s in enumerate(_STRING_LIST):
        touches = withheld_col is not None and s.axes[withheld_col] != "id"
        ctrl = control_stats[k]
        wh = withheld_stats[k]
        consistent_zero = bool(
            touches and wh is not None and wh[2] > 1 and abs(wh[0]) <= 4.0 * wh[1]
        )
        comparisons.append(
            StringComparison(
                axes=s.axes,
                touches_withheld=touches,
                control_mean=None if ctrl is None else ctrl[0],
                control_stderr=None if ctrl is None else ctrl[1],
                withheld_mean=None if wh is None else wh[0],
                withheld_stderr=None if wh is None else wh[1],
                consistent_with_zero=consistent_zero,
            )
        )

    sent_hex = msg.to_hex()
    return CollaborationReport(
        config={
            **_channel_config(ch),
            "rounds": n,
            "resamples": resamples,
            "phases": list(constellation.phase_alphabet),
            "moduli": list(constellation.modulus_profile),
        },
        seed=seed,
        withheld=withheld,
        sent=sent_hex,
        decoded=decoded,
        decode_success=decoded is not None,
        match=decoded == sent_hex,
        estimates=estimates,
        strings=tuple(comparisons),
        warnings=tuple(warnings),
        elapsed_seconds=time.perf_counter() - start,
    )
