"""Command line harness: constants, converge, pipeline and verify subcommands.

Exit codes: 0 success, 1 invariant failure, 2 configuration error, 3 resource
cap reached with no usable fallback.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields

from . import harness
from .chainsum import ResourceCapError
from .harness import (
    CONSTANTS_COLUMNS,
    SWEEP_COLUMNS,
    ConfigError,
    RunConfig,
    render_report,
)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--p", type=_parse_floats, help="comma list of exponents p")
    sub.add_argument("--n", type=_parse_ints, help="comma list of chain lengths n")
    sub.add_argument("--alpha", type=_parse_floats, help="comma list of level ratios alpha")
    sub.add_argument("--A", type=float, help="level-depth exponent A")
    sub.add_argument("--rel-tol", type=float, help="adaptive truncation tolerance")
    sub.add_argument("--cap-T", type=int, help="hard truncation cap")
    sub.add_argument("--precision", choices=("standard", "extended"))
    sub.add_argument("--format", choices=("csv", "json"), help="report format")
    sub.add_argument("--out", help="report path (stdout when omitted)")
    sub.add_argument("--seed", type=int, help="seed for sampled checks")
    sub.add_argument("--config", help="JSON file with RunConfig fields; flags override")


_FLAG_TO_FIELD = {
    "p": "p_list",
    "n": "n_list",
    "alpha": "alpha_list",
    "A": "A",
    "rel_tol": "rel_tol",
    "cap_T": "hard_cap_T",
    "precision": "precision_mode",
    "format": "output_format",
    "out": "output_path",
    "seed": "seed",
}


def build_config(args: argparse.Namespace, **defaults) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(RunConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(raw)
    for flag, name in _FLAG_TO_FIELD.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    for key, val in defaults.items():
        values.setdefault(key, val)
    for key in ("p_list", "n_list", "alpha_list"):
        if key in values:
            values[key] = tuple(values[key])
    return RunConfig(**values)


def _emit(report: str, path) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(report)
    else:
        sys.stdout.write(report)


def _summarize(lines) -> None:
    for line in lines:
        print(line, file=sys.stderr)


def cmd_constants(args) -> int:
    cfg = build_config(args)
    rows, ok = harness.run_constants(cfg.p_list)
    _emit(render_report(rows, CONSTANTS_COLUMNS, cfg.output_format), cfg.output_path)
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_converge(args) -> int:
    cfg = build_config(args)
    try:
        rows, summaries, ok = harness.run_converge(cfg)
    except ResourceCapError as err:
        print(f"resource cap: {err}", file=sys.stderr)
        return EXIT_RESOURCE
    _emit(render_report(rows, SWEEP_COLUMNS, cfg.output_format), cfg.output_path)
    _summarize(
        f"p={s['p']}: trend_ok={s['trend_ok']} "
        f"richardson_k={s['richardson_k']} rel_err={s['richardson_rel_err']}"
        for s in summaries
    )
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_pipeline(args) -> int:
    cfg = build_config(
        args,
        n_list=tuple(1 << e for e in range(6, 15)),
    )
    try:
        rows, summaries, ok = harness.run_pipeline(cfg)
    except ResourceCapError as err:
        print(f"resource cap: {err}", file=sys.stderr)
        return EXIT_RESOURCE
    _emit(render_report(rows, SWEEP_COLUMNS, cfg.output_format), cfg.output_path)
    _summarize(
        f"p={s['p']} alpha={s['alpha']}: k4={s['k4']:.6f} target={s['k4_target']:.6f} "
        f"rel_gap={s['rel_gap']:.4f} within_band={s['within_band']}"
        for s in summaries
    )
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_verify(args) -> int:
    cfg = build_config(args)
    results, ok = harness.run_verify(cfg.seed, mutate_binomial=args.dev_mutate)
    for res in results:
        status = "PASS" if res["passed"] else "FAIL"
        print(f"[{status}] {res['suite']}: {res['detail']}")
    return EXIT_OK if ok else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="valentlab",
        description="Chain-sum laboratory: constants, convergence and pipeline sweeps.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    for name, fn, doc in (
        ("constants", cmd_constants, "closed-form constants per p"),
        ("converge", cmd_converge, "k_n sweep against the closed-form limit"),
        ("pipeline", cmd_pipeline, "multiplier/maximum sweep over (p, alpha, n)"),
        ("verify", cmd_verify, "run the invariant suites"),
    ):
        sub = subs.add_parser(name, help=doc)
        _add_common(sub)
        sub.set_defaults(fn=fn)
        if name == "verify":
            sub.add_argument("--dev-mutate", action="store_true", help=argparse.SUPPRESS)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
