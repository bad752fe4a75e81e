"""Optimize the evaluation scenario, then write beampatterns for the result.

    python scripts/run_table1.py [--out out/table1] [--seed 0]
"""
import argparse
import sys
from pathlib import Path

from hris_dfrc import cli
from hris_dfrc.config import load_bundled


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out/table1"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = load_bundled().with_seed(args.seed)
    code = cli.cmd_optimize(cfg, args.out)
    cli.cmd_beampattern(cfg, args.out / "patterns", args.out / "design.json")
    print((args.out / "summary.txt").read_text(), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
