"""Command-line front end: ``qdlearn {validate,run,solve,sweep}``.

Exit codes: 0 success, 1 validation failure, 2 runtime or I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from qdlearn.config import (
    ConfigFileError,
    apply_overrides,
    build_config,
    load_preset,
    preset_names,
    read_config_file,
)
from qdlearn.harness import (
    ConfigValidationError,
    export_csv,
    run_experiment,
    run_many,
    validate_run_config,
    write_summary,
)
from qdlearn.mdp import validate_model
from qdlearn.oracle import solve_q_star

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _add_common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="experiment JSON file")
    src.add_argument("--preset", help=f"embedded preset ({', '.join(preset_names())})")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--steps", type=int, help="total steps (overrides the config)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--allow-m5-violation", action="store_true",
                   help="run even if the weight exponents are outside the convergence window")
    p.add_argument("--allow-disconnected", action="store_true",
                   help="run even if the mean communication graph is disconnected")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdlearn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("validate", "check a configuration without running it"),
        ("run", "run one experiment and write CSV + JSON summary"),
        ("solve", "solve the exact Q* for the configured model"),
        ("sweep", "run one configuration over several seeds"),
    ]:
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--seeds", required=True, help="e.g. '0-9' or '1,4,7'")
            p.add_argument("--workers", type=int, default=1)
    return parser


def parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds or min(seeds) < 0:
        raise ValueError(f"bad seed list {text!r}")
    return seeds


def _load(args):
    doc = load_preset(args.preset) if args.preset else read_config_file(args.config)
    doc = apply_overrides(
        doc, seed=args.seed, steps=args.steps, out=args.out,
        allow_m5_violation=args.allow_m5_violation, allow_disconnected=args.allow_disconnected,
    )
    return build_config(doc)


def _print_report(report) -> None:
    for c in report.checks:
        status = "PASS" if c.passed else ("WAIVED" if c.waived else "FAIL")
        print(f"[{status:6}] {c.name}: {c.detail}")


def cmd_validate(args) -> int:
    exp = _load(args)
    report = validate_run_config(exp.run)
    _print_report(report)
    return EXIT_OK if report.ok else EXIT_INVALID


def _run_one(exp, out_dir: Path) -> dict:
    record = run_experiment(exp.run)
    out_dir.mkdir(parents=True, exist_ok=True)
    export_csv(record, out_dir / "run.csv")
    extra = {"preset": exp.document.get("preset")}
    write_summary(record, out_dir / "summary.json", extra)
    return {**record.summary(), **extra}


def _print_summary(summary: dict) -> None:
    keys = [
        "seed", "total_steps", "q_star_sup_norm", "q_star_residual",
        "final_consensus_distance", "final_oracle_error_max", "final_centralized_error",
        "distributed_to_centralized_error_ratio", "bounded",
    ]
    width = max(map(len, keys))
    for k in keys:
        print(f"{k:<{width}}  {summary[k]}")


def cmd_run(args) -> int:
    exp = _load(args)
    summary = _run_one(exp, exp.output_dir)
    _print_summary(summary)
    print(f"wrote {exp.output_dir / 'run.csv'} and {exp.output_dir / 'summary.json'}")
    return EXIT_OK


def cmd_solve(args) -> int:
    exp = _load(args)
    problems = validate_model(exp.run.model)
    if problems:
        for p in problems:
            print(f"[FAIL  ] model: {p}")
        return EXIT_INVALID
    sol = solve_q_star(exp.run.model, tol=exp.run.oracle_tol)
    out = exp.output_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / "oracle.json"
    path.write_text(json.dumps(sol.to_json(), indent=2, sort_keys=True) + "\n")
    print(f"||Q*||_inf  {float(np.max(np.abs(sol.q_star)))!r}")
    print(f"iterations  {sol.iterations}")
    print(f"residual    {sol.sup_norm_residual!r}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    seeds = parse_seeds(args.seeds)
    base_args = vars(args).copy()
    exps = []
    for s in seeds:
        args.seed = s
        exps.append(_load(args))
    args.seed = base_args["seed"]
    for exp in exps:
        report = validate_run_config(exp.run)
        if not report.ok:
            _print_report(report)
            return EXIT_INVALID
    root = exps[0].output_dir
    records = run_many([e.run for e in exps], workers=args.workers)
    rows = []
    for exp, record in zip(exps, records):
        out = root / f"seed_{exp.run.seed}"
        out.mkdir(parents=True, exist_ok=True)
        export_csv(record, out / "run.csv")
        extra = {"preset": exp.document.get("preset")}
        write_summary(record, out / "summary.json", extra)
        rows.append({**record.summary(), **extra})
    (root / "sweep.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    print(f"{'seed':>6} {'consensus':>12} {'dist_err':>12} {'cent_err':>12}")
    for r in rows:
        print(f"{r['seed']:>6} {r['final_consensus_distance']:>12.5g} "
              f"{r['final_oracle_error_max']:>12.5g} {r['final_centralized_error']:>12.5g}")
    print(f"wrote {root / 'sweep.json'}")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "solve": cmd_solve, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigFileError, ConfigValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, ConfigValidationError):
            _print_report(exc.report)
        return EXIT_INVALID
    except ValueError as exc:
        # e.g. a malformed --seeds list
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
