"""Power and threshold trade-off sweeps for HRIS, BS-only and BS-RIS.

    python scripts/run_sweeps.py [--out out] [--parallel 3] [--only power|threshold]

Writes ``sweep_power.csv`` and ``sweep_threshold.csv`` and prints the radar
SINR table per system.
"""
import argparse
import csv
import sys
from pathlib import Path

from hris_dfrc import cli
from hris_dfrc.config import load_bundled


def show(path):
    table = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            x = row["p_t_db"] if "power" in path.name else row["gamma_c_db"]
            table.setdefault(row["system"], []).append((x, row["eta_r_db"], row["converged"]))
    for system, pts in table.items():
        cells = "  ".join(f"{x:>3}: {float(v):7.2f}{'' if c == 'true' else '*'}" for x, v, c in pts)
        print(f"{system:<8} {cells}")
    print("(* not converged or infeasible)")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--parallel", type=int, default=1)
    ap.add_argument("--only", choices=["power", "threshold"])
    args = ap.parse_args()
    for kind in ("power", "threshold"):
        if args.only and kind != args.only:
            continue
        cfg = load_bundled(f"{kind}_sweep.cfg")
        out = args.out / f"{kind}_sweep"
        cli.cmd_sweep(cfg, out, parallel=args.parallel)
        print(f"\nradar SINR [dB], {kind} sweep")
        show(out / f"sweep_{kind}.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
