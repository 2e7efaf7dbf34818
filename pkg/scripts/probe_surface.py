"""Cost surface of admissible neighbours of the vehicle extremal (offsets of both switches).

    python scripts/probe_surface.py --T 2.3 --radius 1e-2 --count 21 --out results/probe.csv
"""

import argparse
import csv
import sys

from l1verify import vehicle_bench as vb


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--X", type=float, default=1.0)
    ap.add_argument("--T", type=float, default=2.3)
    ap.add_argument("--radius", type=float, default=1e-2)
    ap.add_argument("--count", type=int, default=21)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    res = vb.perturbation_probe(vb.VehicleInstance(args.alpha, args.X, args.T),
                                radius=args.radius, count=args.count)
    fh = sys.stdout if args.out == "-" else open(args.out, "w")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["d1", "d2", "feasible", "difference", "w_a", "w_b", "terminal_gap"])
    for r in res.rows:
        wa, wb = r.get("w", ("", ""))
        w.writerow([r["d1"], r["d2"], int(r["feasible"]), r.get("difference", ""), wa, wb,
                    r.get("terminal_gap", "")])
    if fh is not sys.stdout:
        fh.close()
    print(f"min difference {res.min_difference:.3e}; fit c r^2: {res.quadratic_coefficient:.4g}; "
          f"fit c1 r + c2 r^2: {res.linear_coefficient:.4g}, {res.mixed_quadratic_coefficient:.4g}",
          file=sys.stderr)


if __name__ == "__main__":
    main()
