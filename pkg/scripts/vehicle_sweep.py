"""Verification margins of the vehicle benchmark across the horizon T.

    python scripts/vehicle_sweep.py --count 21 --jobs 4 --out results/vehicle_sweep.csv
"""

import argparse
import sys
from pathlib import Path

from l1verify import vehicle_bench as vb
from l1verify.cli import run_sweep, write_sweep_csv
from l1verify.config import parse_config


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--X", type=float, default=1.0)
    ap.add_argument("--count", type=int, default=21)
    ap.add_argument("--beyond", type=float, default=0.02,
                    help="extend the range past T_lim by this much")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    lo, hi = vb.t_min(args.alpha, args.X), vb.t_lim(args.alpha, args.X)
    cfg = parse_config(f"[problem]\nname = vehicle\n[parameters]\nalpha = {args.alpha!r}\n"
                       f"X = {args.X!r}\n[schedule]\nT = {hi!r}\nsource = oracle\n")
    step = (hi - lo) / args.count
    values = [lo + step * (k + 1) for k in range(args.count)] + [hi + args.beyond]
    rows = run_sweep(cfg, "T", values, args.jobs)
    if args.out == "-":
        write_sweep_csv(sys.stdout, rows, "T")
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            write_sweep_csv(fh, rows, "T")
        print(f"T_min={lo:.10g} T_lim={hi:.10g}; wrote {args.out}")


if __name__ == "__main__":
    main()
