"""Command-line front end.

Exit codes: 0 success, 1 a verification check failed, 2 invalid config or
input, 3 numerical or structural failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .base_dynamics import (
    ShiftPoint,
    parse_word,
    periodic_word_array,
    sample_point,
    word_text,
)
from .config import RunConfig, load_config
from .errors import CocycleError, ConfigError, NumericalFailure, ValidationError
from .oseledets import (
    cyclic_matrices,
    ergodic_spectrum,
    group_exponents,
    oseledets_splitting,
    periodic_exponents_batch,
    sample_horizon,
)
from .periodic_approx import splitting_report
from .serialize import dumps, encode_float
from .verify import SUITES, run_suites

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def _fmt(value: float) -> str:
    v = encode_float(value + 0.0)  # drop the sign of zero
    return v if isinstance(v, str) else repr(v)


def _header(command: str, run: RunConfig) -> dict:
    return {
        "tool": "periodic-oseledets",
        "version": __version__,
        "command": command,
        "config": run.source,
        "overrides": list(run.overrides),
    }


class Outputs:
    def __init__(self, run: RunConfig, command: str, out_dir: str | None):
        self.dir = Path(out_dir if out_dir is not None else run.output["directory"])
        self.prefix = run.output["prefix"] or command
        self.formats = run.output["formats"]
        self.written: list[Path] = []

    def write(self, fmt: str, text: str, suffix: str = "") -> None:
        if fmt not in self.formats:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / f"{self.prefix}{suffix}.{fmt}"
        path.write_text(text)
        self.written.append(path)

    def report(self) -> None:
        for p in self.written:
            print(f"wrote {p}")


def parse_point(text: str, run: RunConfig, horizon: int) -> ShiftPoint:
    """``seed:N``, ``periodic:WORD`` or ``LEFT|CORE|RIGHT[@ORIGIN]``."""
    if text.startswith("seed:"):
        try:
            seed = int(text[5:])
        except ValueError as exc:
            raise ValidationError(f"point seed {text[5:]!r} is not an integer") from exc
        return sample_point(run.require_measure(), sample_horizon(run.gen, horizon), seed)
    if text.startswith("periodic:"):
        x = ShiftPoint.periodic(parse_word(text[9:]))
    else:
        body, _, origin = text.partition("@")
        parts = body.split("|")
        if len(parts) != 3:
            raise ValidationError(f"point {text!r} must be seed:N, periodic:WORD or LEFT|CORE|RIGHT[@ORIGIN]")
        left, core, right = (parse_word(p) if p else () for p in parts)
        try:
            x = ShiftPoint(left, core, right, int(origin) if origin else 0)
        except ValueError as exc:
            raise ValidationError(f"bad point origin {origin!r}") from exc
    x.check_admissible(run.spec)
    return x


def cmd_spectrum(run: RunConfig, args) -> int:
    e = run.experiment
    spectrum = ergodic_spectrum(run.gen, run.require_measure(), e["horizon"], e["samples"], e["seed"], e["grouping_gap"])
    print(f"horizon {e['horizon']}, samples {e['samples']}, seed {e['seed']}")
    i = 0
    for (exp, mult), vals in zip(spectrum.blocks, spectrum.block_values()):
        errs = spectrum.std_errors[i : i + mult]
        i += mult
        print(f"block exponent {_fmt(exp)} multiplicity {mult} std_error {_fmt(max(errs))}")
    out = Outputs(run, "spectrum", args.out)
    out.write("json", dumps({"header": _header("spectrum", run), "spectrum": spectrum.to_dict()}))
    out.report()
    return EXIT_OK


def cmd_split(run: RunConfig, args) -> int:
    e = run.experiment
    horizon = e["horizon"]
    point = parse_point(args.point if args.point else f"seed:{e['seed']}", run, horizon)
    est = oseledets_splitting(run.gen, point, horizon, e["grouping_gap"], e["intersect_tol"])
    for j, ((exp, mult), E) in enumerate(zip(est.spectrum.blocks, est.spaces), start=1):
        print(f"E^{j}: exponent {_fmt(exp)} multiplicity {mult} dim {E.dim}")
        for col in E.basis.T:
            print("  " + " ".join(_fmt(v) for v in col))
    print(f"equivariance defect {_fmt(est.equivariance_defect)}, duality defect {_fmt(est.duality_defect)}")
    out = Outputs(run, "split", args.out)
    out.write("json", dumps({"header": _header("split", run), "splitting": est.to_dict()}))
    out.report()
    return EXIT_OK


def cmd_periodic(run: RunConfig, args) -> int:
    e = run.experiment
    words = periodic_word_array(run.spec, args.n, cap=e["enumeration_cap"])
    gam = periodic_exponents_batch(cyclic_matrices(run.gen, words))
    d = gam.shape[1]
    cols = ["index", "word"] + [f"gamma_{j}" for j in range(1, d + 1)] + ["multiplicities"]
    rows = []
    for i, (w, g) in enumerate(zip(words, gam)):
        mults = group_exponents(g.tolist(), e["grouping_gap"])
        rows.append([i, word_text(w)] + [_fmt(v) for v in g] + [" ".join(map(str, mults))])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    writer.writerows(rows)
    print(f"{len(words)} periodic points of period {args.n}")
    print(buf.getvalue(), end="")
    out = Outputs(run, "periodic", args.out)
    table = [dict(zip(cols, r)) for r in rows]
    out.write("json", dumps({"header": _header("periodic", run), "period": args.n, "rows": table}))
    out.write("csv", buf.getvalue())
    out.report()
    return EXIT_OK


def cmd_approx(run: RunConfig, args) -> int:
    cfg = run.experiment_config(workers=args.workers)
    report = splitting_report(cfg)
    report.header = _header("approx", run)
    text = report.to_csv()
    print(text, end="")
    print("ladder (k: first period with good_fraction(1/k) > 1 - 1/k):", report.ladder())
    out = Outputs(run, "approx", args.out)
    out.write("json", dumps(report.to_dict()))
    out.write("csv", text)
    out.report()
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.list:
        for name in SUITES:
            print(name)
        if args.config:
            print("config")
        return EXIT_OK
    run = load_config(args.config, args.set) if args.config else None
    try:
        checks = run_suites(args.suite, run)
    except KeyError as exc:
        raise ValidationError(f"unknown suite {exc.args[0]!r}; see --list") from exc
    failed = [c for c in checks if not c.passed]
    for c in checks:
        print(c.line())
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    if failed:
        print("violated: " + ", ".join(f"{c.suite}.{c.invariant}" for c in failed), file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="periodic-oseledets",
        description="Lyapunov spectra, Oseledets splittings and their periodic approximation "
        "for matrix cocycles over subshifts of finite type.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("config", help="experiment config (TOML)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a config key (repeatable; echoed into output headers)")
        p.add_argument("--out", default=None, help="output directory (overrides output.directory)")

    p = sub.add_parser("spectrum", help="ergodic Lyapunov spectrum with standard errors")
    common(p)
    p = sub.add_parser("split", help="Oseledets splitting at one point")
    common(p)
    p.add_argument("--point", default=None,
                   help="seed:N (sampled), periodic:WORD, or LEFT|CORE|RIGHT[@ORIGIN]; default seed:<experiment.seed>")
    p = sub.add_parser("periodic", help="periodic points of period n with their exponents")
    common(p)
    p.add_argument("n", type=int, help="period")
    p = sub.add_parser("approx", help="periodic approximation report (JSON + CSV)")
    common(p)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="worker processes for per-sample splittings (default: CPU count)")
    p = sub.add_parser("verify", help="run the built-in invariant suites")
    p.add_argument("config", nargs="?", default=None, help="optional config whose generator is also checked")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--list", action="store_true", help="print suite names and exit")
    p.add_argument("--suite", action="append", default=None, help="run only this suite (repeatable)")
    return parser


COMMANDS = {"spectrum": cmd_spectrum, "split": cmd_split, "periodic": cmd_periodic, "approx": cmd_approx}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if getattr(args, "workers", 1) < 1:
            raise ValidationError("--workers must be positive")
        run = load_config(args.config, args.set)
        return COMMANDS[args.command](run, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as exc:
        print(f"invalid input: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CocycleError as exc:  # pragma: no cover - every subclass is handled above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
