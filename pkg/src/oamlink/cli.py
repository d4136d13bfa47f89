"""Command-line front end.

Four commands:

* ``scan``       exact channel-deviation scan over a parameter grid
                 (CSV rows plus a JSON summary with fitted exponents)
* ``roundtrip``  encode -> simulate -> estimate -> decode one message (JSON)
* ``collab``     roundtrip with one party's outcomes replaced by coin flips (JSON)
* ``eval``       exact invariant values for given coefficients (JSON)

Exit codes: 0 success, 2 decode unavailable (degenerate estimate), 1 any
other error including usage problems.  A JSON config file can supply
defaults; command-line flags override it, and the OAM_SEED environment
variable is the seed fallback.  All structured outputs carry "schema": "v1".
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import channel as channel_mod
from . import codec, invariants, protocol, qcore
from .channel import ChannelModel

DEFAULT_A2 = 0.9
DEFAULT_ROUNDS = 200_000
DEFAULT_SEED = 1
DEFAULT_RESAMPLES = 200
DEFAULT_SCAN_SAMPLES = 100
DEFAULT_SCAN_GRID_A2 = (0.5, 0.7, 0.9, 0.99)

_STREAM_SCAN_STATES = 7


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1; exit 2 is reserved for degenerate-decode
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    model: str
    a: float
    b: float
    rounds: int
    seed: int
    resamples: int
    msg: str | None
    withhold: str | None
    samples: int
    grid: tuple[tuple[float, float], ...]
    coeffs: tuple[complex, ...] | None
    phases: tuple[float, ...] | None
    moduli: tuple[float, ...] | None
    out: str | None
    out_csv: str | None
    no_timing: bool


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="JSON file of default option values")
    p.add_argument("--seed", type=int, default=None, help="master seed (fallback: $OAM_SEED, then 1)")
    p.add_argument("--out", metavar="FILE", default=None, help="write the JSON report here instead of stdout")
    p.add_argument("--no-timing", action="store_true", help="omit timing fields (for byte-identical reruns)")


def _add_channel(p: argparse.ArgumentParser, models: Sequence[str]) -> None:
    p.add_argument("--model", choices=list(models), default=None, help="channel flip model")
    p.add_argument("--a2", type=float, default=None, help="survival probability a^2 in [0, 1]")
    p.add_argument("--b2", type=float, default=None, help="crosstalk probability b^2 in [0, 1] (alternative to --a2)")


def _add_constellation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phases", default=None, help="comma-separated phase alphabet override (radians)")
    p.add_argument("--moduli", default=None, help="comma-separated five-modulus profile override")


def build_parser() -> tuple[_Parser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="oamlink", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_scan = sub.add_parser("scan", help="exact invariance scan over a channel grid")
    _add_common(p_scan)
    _add_channel(p_scan, ("collective", "independent", "both"))
    p_scan.add_argument("--samples", type=int, default=None, help="number of random family states")
    p_scan.add_argument("--grid-a2", default=None, help="comma-separated a^2 grid values")
    p_scan.add_argument("--grid-b", default=None, help="comma-separated b grid values (alternative to --grid-a2)")
    p_scan.add_argument("--out-csv", metavar="FILE", default=None, help="write per-grid-point deviations here")

    p_round = sub.add_parser("roundtrip", help="end-to-end message round trip")
    _add_common(p_round)
    _add_channel(p_round, ("collective", "independent"))
    _add_constellation(p_round)
    p_round.add_argument("--msg", default=None, help="message byte as two hex digits")
    p_round.add_argument("--rounds", type=int, default=None, help="number of measurement rounds")
    p_round.add_argument("--resamples", type=int, default=None, help="bootstrap resamples")

    p_collab = sub.add_parser("collab", help="round trip with one party's outcomes withheld")
    _add_common(p_collab)
    _add_channel(p_collab, ("collective", "independent"))
    _add_constellation(p_collab)
    p_collab.add_argument("--msg", default=None, help="message byte as two hex digits")
    p_collab.add_argument("--rounds", type=int, default=None, help="number of measurement rounds")
    p_collab.add_argument("--resamples", type=int, default=None, help="bootstrap resamples")
    p_collab.add_argument("--withhold", choices=["A", "B", "C", "none"], default=None,
                          help="party whose outcomes are replaced by coin flips")

    p_eval = sub.add_parser("eval", help="exact invariant values for a state")
    _add_common(p_eval)
    _add_constellation(p_eval)
    p_eval.add_argument("--msg", default=None, help="encode this hex byte and evaluate")
    p_eval.add_argument("--coeffs", default=None,
                        help="five comma-separated complex coefficients, e.g. '1,1j,-1,0.5+0.5j,1'")

    return parser, {"scan": p_scan, "roundtrip": p_round, "collab": p_collab, "eval": p_eval}


def _float_list(text: str, what: str, parser: _Parser) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        parser.error(f"could not parse {what} {text!r} as comma-separated floats")
        raise AssertionError  # unreachable


def _apply_config_file(
    parser: _Parser, subparsers: dict[str, argparse.ArgumentParser], argv: list[str]
) -> None:
    """Peek at --config and inject file values as parser defaults."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if known.config is None:
        return
    try:
        with open(known.config, "r", encoding="utf-8") as fp:
            values = json.load(fp)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"could not read config file {known.config!r}: {exc}")
    if not isinstance(values, dict):
        parser.error(f"config file {known.config!r} must hold a JSON object")
    defaults = {key.replace("-", "_"): value for key, value in values.items()}
    for sub in subparsers.values():
        known_dests = {action.dest for action in sub._actions}
        sub.set_defaults(**{k: v for k, v in defaults.items() if k in known_dests})


def parse_config(argv: Sequence[str] | None = None) -> RunConfig:
    """Parse flags (plus optional config-file defaults) into a RunConfig."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    _apply_config_file(parser, subparsers, argv)
    ns = parser.parse_args(argv)

    seed = ns.seed
    if seed is None:
        env = os.environ.get("OAM_SEED")
        try:
            seed = int(env) if env is not None else DEFAULT_SEED
        except ValueError:
            parser.error(f"OAM_SEED value {env!r} is not an integer")

    a2 = getattr(ns, "a2", None)
    b2 = getattr(ns, "b2", None)
    if a2 is not None and b2 is not None:
        parser.error("supply exactly one of --a2 and --b2")
    if b2 is not None:
        if not 0.0 <= b2 <= 1.0:
            parser.error(f"--b2 value {b2!r} outside [0, 1]")
        a2 = 1.0 - b2
    if a2 is None:
        a2 = DEFAULT_A2
    if not 0.0 <= a2 <= 1.0:
        parser.error(f"--a2 value {a2!r} outside [0, 1]")
    a, b = math.sqrt(a2), math.sqrt(1.0 - a2)

    model = getattr(ns, "model", None)
    if model is None:
        model = "both" if ns.command == "scan" else "collective"

    grid: tuple[tuple[float, float], ...] = ()
    if ns.command == "scan":
        grid_a2 = getattr(ns, "grid_a2", None)
        grid_b = getattr(ns, "grid_b", None)
        if grid_a2 is not None and grid_b is not None:
            parser.error("supply at most one of --grid-a2 and --grid-b")
        try:
            if grid_b is not None:
                grid = invariants.grid_from_b(_float_list(grid_b, "--grid-b", parser))
            else:
                values = (
                    _float_list(grid_a2, "--grid-a2", parser)
                    if grid_a2 is not None
                    else DEFAULT_SCAN_GRID_A2
                )
                grid = invariants.grid_from_a2(values)
        except ValueError as exc:
            parser.error(str(exc))

    msg = getattr(ns, "msg", None)
    if ns.command in ("roundtrip", "collab"):
        if msg is None:
            parser.error(f"{ns.command} needs --msg (two hex digits)")
        try:
            codec.Message.from_hex(msg)
        except ValueError as exc:
            parser.error(str(exc))

    coeffs = None
    raw_coeffs = getattr(ns, "coeffs", None)
    if ns.command == "eval":
        if (msg is None) == (raw_coeffs is None):
            parser.error("eval needs exactly one of --msg and --coeffs")
        if raw_coeffs is not None:
            try:
                coeffs = tuple(complex(x.strip()) for x in raw_coeffs.split(","))
                qcore.StateCoefficients(coeffs)
            except ValueError as exc:
                parser.error(f"bad --coeffs: {exc}")

    rounds = getattr(ns, "rounds", None)
    if rounds is None:
        rounds = DEFAULT_ROUNDS
    if rounds < 0:
        parser.error("--rounds must be nonnegative")

    resamples = getattr(ns, "resamples", None)
    if resamples is None:
        resamples = DEFAULT_RESAMPLES
    if resamples < 1:
        parser.error("--resamples must be at least 1")

    samples = getattr(ns, "samples", None)
    if samples is None:
        samples = DEFAULT_SCAN_SAMPLES
    if ns.command == "scan" and samples < 1:
        parser.error("--samples must be at least 1")

    withhold = getattr(ns, "withhold", None)
    if withhold == "none":
        withhold = None

    phases = getattr(ns, "phases", None)
    moduli = getattr(ns, "moduli", None)
    return RunConfig(
        command=ns.command,
        model=model,
        a=a,
        b=b,
        rounds=int(rounds),
        seed=int(seed),
        resamples=int(resamples),
        msg=msg,
        withhold=withhold,
        samples=int(samples),
        grid=grid,
        coeffs=coeffs,
        phases=None if phases is None else _float_list(phases, "--phases", parser),
        moduli=None if moduli is None else _float_list(moduli, "--moduli", parser),
        out=ns.out,
        out_csv=getattr(ns, "out_csv", None),
        no_timing=ns.no_timing,
    )


def _constellation(cfg: RunConfig) -> codec.Constellation:
    kwargs = {}
    if cfg.phases is not None:
        kwargs["phase_alphabet"] = cfg.phases
    if cfg.moduli is not None:
        kwargs["modulus_profile"] = cfg.moduli
    return codec.Constellation(**kwargs) if kwargs else codec.DEFAULT_CONSTELLATION


def _emit_json(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fp:
            fp.write(text)


def _scan_models(name: str) -> tuple[ChannelModel, ...]:
    if name == "both":
        return (ChannelModel.COLLECTIVE, ChannelModel.INDEPENDENT)
    return (ChannelModel(name),)


def _run_scan(cfg: RunConfig) -> int:
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(_STREAM_SCAN_STATES,)))
    )
    states = [qcore.random_coefficients(rng) for _ in range(cfg.samples)]
    report = invariants.invariance_scan(states, _scan_models(cfg.model), cfg.grid)

    if cfg.out_csv is not None:
        with open(cfg.out_csv, "w", encoding="utf-8") as fp:
            fp.write("id,model,a,b,deviation\n")
            for row in sorted(
                report.rows, key=lambda r: (r.invariant_id, r.model.value, r.b, r.a)
            ):
                fp.write(
                    f"{row.invariant_id},{row.model.value},{row.a!r},{row.b!r},"
                    f"{row.max_rel_deviation!r}\n"
                )

    payload = {
        "schema": "v1",
        "config": {
            "command": "scan",
            "model": cfg.model,
            "samples": cfg.samples,
            "seed": cfg.seed,
            "grid": [[a, b] for a, b in cfg.grid],
        },
        "max_deviation": {
            f"{inv_id}/{model.value}": report.max_deviation(inv_id, model)
            for inv_id, model in sorted(report.exponents, key=lambda k: (k[0], k[1].value))
        },
        "exponents": {
            f"{inv_id}/{model.value}": exp
            for (inv_id, model), exp in sorted(
                report.exponents.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
            )
        },
        "degenerate": [
            {
                "id": row.invariant_id,
                "model": row.model.value,
                "a": row.a,
                "b": row.b,
                "input_degenerate": row.input_degenerate,
                "output_degenerate": row.output_degenerate,
            }
            for row in report.degenerate_rows
        ],
    }
    _emit_json(payload, cfg.out)
    return 0


def _run_roundtrip(cfg: RunConfig) -> int:
    ch = channel_mod.make_channel(ChannelModel(cfg.model), cfg.a, cfg.b)
    msg = codec.Message.from_hex(cfg.msg)
    try:
        report = protocol.run_protocol(
            msg, ch, cfg.rounds, cfg.seed, _constellation(cfg), cfg.resamples
        )
    except protocol.DecodingUnavailableError as exc:
        _emit_json(exc.report.to_dict(include_timing=not cfg.no_timing), cfg.out)
        return 2
    _emit_json(report.to_dict(include_timing=not cfg.no_timing), cfg.out)
    return 0


def _run_collab(cfg: RunConfig) -> int:
    ch = channel_mod.make_channel(ChannelModel(cfg.model), cfg.a, cfg.b)
    msg = codec.Message.from_hex(cfg.msg)
    report = protocol.collaboration_test(
        msg, ch, cfg.rounds, cfg.seed, cfg.withhold, _constellation(cfg), cfg.resamples
    )
    _emit_json(report.to_dict(include_timing=not cfg.no_timing), cfg.out)
    return 0 if report.decode_success else 2


def _run_eval(cfg: RunConfig) -> int:
    if cfg.coeffs is not None:
        coeffs = qcore.StateCoefficients(cfg.coeffs)
        source = {"coeffs": [[c.real, c.imag] for c in coeffs.alpha]}
    else:
        coeffs = codec.encode(codec.Message.from_hex(cfg.msg), _constellation(cfg))
        source = {"msg": cfg.msg}
    rho = qcore.density_of(qcore.make_state(coeffs))
    values = {}
    for spec in invariants.registry():
        val = invariants.eval_invariant(spec, rho)
        values[spec.id] = {
            "num": {"re": val.num.real, "im": val.num.imag},
            "den": {"re": val.den.real, "im": val.den.imag},
            "degenerate": val.degenerate,
            "value": None
            if val.value is None
            else {"re": val.value.real, "im": val.value.imag},
        }
    payload = {
        "schema": "v1",
        "config": {"command": "eval", **source},
        "invariants": values,
    }
    _emit_json(payload, cfg.out)
    return 0


def dispatch(cfg: RunConfig) -> int:
    """Run one parsed command; returns the process exit code."""
    runners = {
        "scan": _run_scan,
        "roundtrip": _run_roundtrip,
        "collab": _run_collab,
        "eval": _run_eval,
    }
    try:
        return runners[cfg.command](cfg)
    except BrokenPipeError:
        raise
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"oamlink: error: {exc}", file=sys.stderr)
        return 1


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(dispatch(parse_config(argv)))


if __name__ == "__main__":
    main()
