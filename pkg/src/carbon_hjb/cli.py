"""Command line entry point: ``solve | check | figures | simulate``.

Exit codes: 0 success, 1 check or verification failure, 2 configuration or
invocation error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from carbon_hjb import pipeline
from carbon_hjb.checks import run_suite, suite_passed
from carbon_hjb.config import RunConfig, load_config
from carbon_hjb.errors import CarbonHJBError, MissingArtifacts, ParseError, ValidationError
from carbon_hjb.model import PenaltyConfig

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

logger = logging.getLogger("carbon_hjb")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="carbon-hjb", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=["solve", "check", "figures", "simulate"])
    ap.add_argument("--config", type=Path, default=None, help="key = value configuration file")
    ap.add_argument("--out", type=Path, default=None, help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, default=None, help="Monte Carlo seed (overrides sim.seed)")
    ap.add_argument("--eps", type=str, default=None, help="comma-separated penalty schedule")
    ap.add_argument("--reuse", action="store_true", help="load surfaces written by a previous solve")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _resolve(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ValidationError("--seed must be nonnegative")
        cfg = dataclasses.replace(cfg, sim=dataclasses.replace(cfg.sim, seed=args.seed))
    if args.eps is not None:
        try:
            sched = tuple(sorted({float(t) for t in args.eps.split(",") if t.strip()}, reverse=True))
        except ValueError:
            raise ValidationError(f"--eps expects numbers, got {args.eps!r}") from None
        if not sched:
            raise ValidationError("--eps needs at least one value")
        pen = PenaltyConfig(epsilon=sched[-1], epsilon_schedule=sched)
        cfg = dataclasses.replace(cfg, solver=dataclasses.replace(cfg.solver, penalty=pen))
    out = args.out if args.out is not None else Path(cfg.output_dir)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, output_dir=str(args.out))
    return cfg, out


def _artifacts(cfg: RunConfig, out: Path, reuse: bool):
    if reuse:
        return pipeline.load_artifacts(cfg, out)
    out.mkdir(parents=True, exist_ok=True)
    logs = out / "logs"
    logs.mkdir(exist_ok=True)
    return pipeline.solve_all(cfg, logs)


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    a = _artifacts(cfg, out, reuse=False)
    for path in pipeline.write_artifacts(a, cfg, out):
        logger.info("wrote %s", path)
    return EXIT_OK


def cmd_check(cfg: RunConfig, out: Path, reuse: bool = False) -> int:
    a = _artifacts(cfg, out, reuse)
    results = run_suite(a)
    lines = [f"# {pipeline.header(cfg)}"] + [r.line() for r in results]
    ok = suite_passed(results)
    lines.append(f"overall={'PASS' if ok else 'FAIL'}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "check.txt").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    print("\n".join(lines[1:]))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_figures(cfg: RunConfig, out: Path, reuse: bool = False) -> int:
    a = _artifacts(cfg, out, reuse)
    for path in pipeline.write_figures(a, cfg, out):
        logger.info("wrote %s", path)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path, reuse: bool = False) -> int:
    a = _artifacts(cfg, out, reuse)
    ok, lines = pipeline.run_simulations(a, cfg, out)
    print("\n".join(lines[1:]))
    return EXIT_OK if ok else EXIT_CHECK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg, out = _resolve(args)
    except (ParseError, ValidationError, OSError) as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    try:
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "check":
            return cmd_check(cfg, out, args.reuse)
        if args.command == "figures":
            return cmd_figures(cfg, out, args.reuse)
        return cmd_simulate(cfg, out, args.reuse)
    except MissingArtifacts as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except (ValidationError, ParseError) as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (CarbonHJBError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.error("solver failure: %s", exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
