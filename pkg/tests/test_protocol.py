import io

import numpy as np
import pytest

from oamlink import qcore
from oamlink.channel import ChannelModel, apply as apply_channel, make_channel
from oamlink.codec import Message
from oamlink.invariants import eval_invariant, lookup
from oamlink.opexpr import PauliString, all_strings
from oamlink.protocol import (
    DecodingUnavailableError,
    NoQualifyingRoundsError,
    RecordSet,
    collaboration_test,
    estimate_invariant,
    estimate_string,
    outcome_probability_table,
    run_protocol,
    simulate,
)
from oamlink.qcore import StateCoefficients, density_of, make_state, random_coefficients

IDENTITY_CH = make_channel(ChannelModel.COLLECTIVE, 1.0, 0.0)
NOISY_CH = make_channel(ChannelModel.COLLECTIVE, np.sqrt(0.9), np.sqrt(0.1))

ALL_L = StateCoefficients((0, 0, 0, 1, 0))  # the |l,l,l> member of the family


def family_coeffs(seed):
    return random_coefficients(np.random.default_rng(seed))


# --- simulation -----------------------------------------------------------------


def test_simulate_zero_rounds():
    records = simulate(ALL_L, IDENTITY_CH, 0, seed=1)
    assert len(records) == 0


def test_simulate_is_deterministic():
    a = simulate(family_coeffs(2), NOISY_CH, 5000, seed=42)
    b = simulate(family_coeffs(2), NOISY_CH, 5000, seed=42)
    assert a == b
    c = simulate(family_coeffs(2), NOISY_CH, 5000, seed=43)
    assert a != c


def test_simulate_prefix_stability():
    """Round i depends only on (seed, i), never on the total round count."""
    short = simulate(family_coeffs(3), NOISY_CH, 400, seed=9)
    long = simulate(family_coeffs(3), NOISY_CH, 1000, seed=9)
    assert short == long[:400]


def test_simulate_bases_uniform():
    records = simulate(family_coeffs(5), NOISY_CH, 90_000, seed=11)
    counts = np.array(
        [[np.sum(records.bases[:, j] == code) for code in range(3)] for j in range(3)]
    )
    assert np.all(np.abs(counts - 30_000) < 5 * np.sqrt(90_000 * (1 / 3) * (2 / 3)))


def test_simulate_outcome_frequencies_track_born_rule():
    coeffs = family_coeffs(7)
    records = simulate(coeffs, NOISY_CH, 100_000, seed=13)
    rho = apply_channel(NOISY_CH, density_of(make_state(coeffs)))
    table = outcome_probability_table(rho)
    combos = records.bases[:, 0].astype(int) * 9 + records.bases[:, 1] * 3 + records.bases[:, 2]
    oidx = ((1 - records.outcomes.astype(int)) // 2) @ np.array([4, 2, 1])
    for combo in range(27):
        mask = combos == combo
        rounds = int(mask.sum())
        freqs = np.bincount(oidx[mask], minlength=8) / rounds
        assert np.max(np.abs(freqs - table[combo])) < 5 * np.sqrt(0.25 / rounds)


def test_record_set_sequence_interface():
    records = simulate(ALL_L, IDENTITY_CH, 10, seed=1)
    assert len(records) == 10
    rec = records[3]
    assert rec.round == 3
    assert all(b in ("x", "y", "z") for b in rec.bases)
    assert all(o in (-1, 1) for o in rec.outcomes)
    assert records[-1].round == 9
    assert len(records[2:5]) == 3


def test_record_set_csv_round_trip():
    records = simulate(family_coeffs(17), NOISY_CH, 200, seed=3)
    buf = io.StringIO()
    records.to_csv(buf)
    buf.seek(0)
    assert RecordSet.from_csv(buf) == records


def test_record_set_immutable():
    records = simulate(ALL_L, IDENTITY_CH, 5, seed=1)
    with pytest.raises(ValueError):
        records.outcomes[0, 0] = -1
    with pytest.raises(AttributeError):
        records.bases = None


# --- string estimation ------------------------------------------------------------


def test_estimate_string_deterministic_outcome():
    records = simulate(ALL_L, IDENTITY_CH, 3000, seed=5)
    est = estimate_string(records, PauliString(("z", "id", "id")))
    assert est.mean == 1.0
    assert est.stderr == 0.0
    assert est.count > 0


def test_estimate_string_identity_string():
    records = simulate(ALL_L, IDENTITY_CH, 1234, seed=5)
    est = estimate_string(records, PauliString(("id", "id", "id")))
    assert est.mean == 1.0
    assert est.count == 1234


def test_estimate_string_qualifying_fraction():
    n = 270_000
    records = simulate(family_coeffs(19), NOISY_CH, n, seed=21)
    est = estimate_string(records, PauliString(("x", "y", "z")))
    expected = n / 27
    assert abs(est.count - expected) < 5 * np.sqrt(n * (1 / 27) * (26 / 27))


def test_estimate_string_no_qualifying_rounds():
    with pytest.raises(NoQualifyingRoundsError):
        estimate_string(simulate(ALL_L, IDENTITY_CH, 0, seed=1), PauliString(("x", "x", "x")))


def test_string_estimates_consistent_with_exact():
    """|mean - exact| <= 4 stderr for >= 95% of randomized trials."""
    trials = 200
    good = 0
    for t in range(trials):
        rng = np.random.default_rng(1000 + t)
        coeffs = random_coefficients(rng)
        a2 = rng.uniform(0.5, 1.0)
        model = ChannelModel.COLLECTIVE if rng.integers(2) else ChannelModel.INDEPENDENT
        ch = make_channel(model, np.sqrt(a2), np.sqrt(1 - a2))
        records = simulate(coeffs, ch, 2000, seed=2000 + t)
        rho = apply_channel(ch, density_of(make_state(coeffs)))
        ok = True
        for s in all_strings():
            est = estimate_string(records, s)
            if est.count < 2 or est.stderr == 0.0:
                continue
            exact = qcore.expectation(rho, qcore.Operator(s.matrix())).real
            if abs(est.mean - exact) > 4 * est.stderr:
                ok = False
                break
        good += ok
    assert good >= 0.95 * trials


def test_stderr_scales_like_inverse_sqrt_n():
    coeffs = family_coeffs(23)
    ns = (1000, 10_000, 100_000)
    stderr = []
    for n in ns:
        records = simulate(coeffs, NOISY_CH, n, seed=25)
        stderr.append(estimate_string(records, PauliString(("x", "x", "x"))).stderr)
    slope = np.polyfit(np.log(ns), np.log(stderr), 1)[0]
    assert abs(slope + 0.5) < 0.05


# --- invariant estimation ------------------------------------------------------------


def test_estimate_invariant_tracks_exact_value():
    coeffs = family_coeffs(29)
    records = simulate(coeffs, NOISY_CH, 200_000, seed=31)
    rho = apply_channel(NOISY_CH, density_of(make_state(coeffs)))
    for inv_id in ("I5", "I6", "I7", "I8"):
        est = estimate_invariant(records, lookup(inv_id), resamples=200, seed=31)
        exact = eval_invariant(lookup(inv_id), rho)
        assert not est.degenerate and not exact.degenerate
        sd_re = (est.ci_real[1] - est.ci_real[0]) / (2 * 1.96)
        sd_im = (est.ci_imag[1] - est.ci_imag[0]) / (2 * 1.96)
        combined = np.hypot(sd_re, sd_im)
        assert abs(est.value - exact.value) <= 4 * combined


def test_estimate_invariant_flags_structural_zero():
    records = simulate(family_coeffs(37), NOISY_CH, 50_000, seed=41)
    est = estimate_invariant(records, lookup("I2"), resamples=200, seed=41)
    assert est.degenerate
    assert est.value is None


def test_estimate_invariant_ci_ordered():
    records = simulate(family_coeffs(43), NOISY_CH, 20_000, seed=47)
    est = estimate_invariant(records, lookup("I5"), resamples=100, seed=47)
    assert est.ci_real[0] <= est.ci_real[1]
    assert est.ci_imag[0] <= est.ci_imag[1]
    assert est.ci_real[0] <= est.value.real <= est.ci_real[1]


def test_estimate_invariant_single_resample_collapses():
    records = simulate(family_coeffs(43), NOISY_CH, 20_000, seed=47)
    est = estimate_invariant(records, lookup("I5"), resamples=1, seed=47)
    point = est.num / est.den
    assert est.ci_real == (point.real, point.real)
    assert est.ci_imag == (point.imag, point.imag)


def test_estimate_invariant_needs_rounds():
    with pytest.raises(NoQualifyingRoundsError):
        estimate_invariant(simulate(ALL_L, IDENTITY_CH, 0, seed=1), lookup("I5"))
    with pytest.raises(ValueError):
        estimate_invariant(simulate(ALL_L, IDENTITY_CH, 5, seed=1), lookup("I5"), resamples=0)


# --- end-to-end protocol ---------------------------------------------------------------


def test_run_protocol_noiseless():
    report = run_protocol(Message.from_hex("c3"), IDENTITY_CH, 50_000, seed=53)
    assert report.decoded == "c3"
    assert report.match
    assert report.per_symbol_correct == (True, True, True, True)
    assert not report.warnings


def test_run_protocol_collective_noise():
    report = run_protocol(Message.from_hex("5a"), NOISY_CH, 50_000, seed=59)
    assert report.decoded == "5a"
    assert report.estimates["I5"].min_count > 1000


def test_run_protocol_reports_are_reproducible():
    kwargs = dict(msg=Message.from_hex("7e"), ch=NOISY_CH, n=20_000, seed=61)
    d1 = run_protocol(**kwargs).to_dict(include_timing=False)
    d2 = run_protocol(**kwargs).to_dict(include_timing=False)
    assert d1 == d2


def test_run_protocol_too_few_rounds():
    try:
        report = run_protocol(Message.from_hex("5a"), NOISY_CH, 100, seed=67)
    except DecodingUnavailableError as exc:
        report = exc.report
        assert report.decoded is None
    assert any("insufficient statistics" in w for w in report.warnings)


# --- collaboration ------------------------------------------------------------------


def test_collaboration_control_succeeds():
    report = collaboration_test(Message.from_hex("9d"), NOISY_CH, 30_000, seed=71)
    assert report.withheld is None
    assert report.decode_success and report.match


def test_collaboration_withhold_c_kills_ladder_denominator():
    report = collaboration_test(
        Message.from_hex("9d"), NOISY_CH, 30_000, seed=71, withheld="C"
    )
    assert not report.decode_success
    assert not report.match
    # the I5 denominator has a ladder at C in every string, so its estimate
    # must be consistent with zero
    est = report.estimates["I5"]
    assert est.degenerate
    assert abs(est.den) <= 4 * est.den_spread


def test_collaboration_withheld_strings_lose_signal():
    report = collaboration_test(
        Message.from_hex("9d"), NOISY_CH, 30_000, seed=71, withheld="B"
    )
    for row in report.strings:
        if row.touches_withheld and row.withheld_stderr:
            assert abs(row.withheld_mean) <= 6 * row.withheld_stderr


def test_collaboration_identity_slot_strings_unchanged():
    """Strings that skip the withheld party reproduce the control run exactly."""
    control = collaboration_test(Message.from_hex("9d"), NOISY_CH, 20_000, seed=73)
    withheld = collaboration_test(
        Message.from_hex("9d"), NOISY_CH, 20_000, seed=73, withheld="A"
    )
    checked = 0
    for ctrl_row, wh_row in zip(control.strings, withheld.strings):
        assert ctrl_row.axes == wh_row.axes
        if not wh_row.touches_withheld:
            assert wh_row.withheld_mean == ctrl_row.control_mean
            assert wh_row.withheld_stderr == ctrl_row.control_stderr
            checked += 1
    assert checked == 16  # 4 x 4 strings with identity at slot A


def test_collaboration_rejects_unknown_party():
    with pytest.raises(ValueError):
        collaboration_test(Message.from_hex("00"), NOISY_CH, 100, seed=1, withheld="D")
