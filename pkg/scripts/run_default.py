"""Full default run: solve, check, simulate and figures into one directory.

Usage: python scripts/run_default.py [--config FILE] [--out DIR]
"""

import argparse
import sys
import time

from carbon_hjb.cli import EXIT_OK, main


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default="out")
    args = ap.parse_args(argv)
    common = ["--out", args.out] + (["--config", args.config] if args.config else [])
    worst = EXIT_OK
    for cmd in (["solve"], ["check", "--reuse"], ["simulate", "--reuse"], ["figures", "--reuse"]):
        start = time.perf_counter()
        code = main([cmd[0], *common, *cmd[1:]])
        print(f"{cmd[0]}: exit={code} seconds={time.perf_counter() - start:.1f}", file=sys.stderr)
        if code == 3 or (cmd[0] == "solve" and code != EXIT_OK):
            return code
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    raise SystemExit(run())
