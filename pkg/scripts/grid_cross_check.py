#!/usr/bin/env python3
"""Cross-validate one braking step between the particle and grid solvers.

Advances the same initial density through the first fundamental step twice —
once as a sampled atom ensemble, once on a conservative phase-space grid —
at a ladder of grid resolutions, and prints how the marginal transport
distances between the two endpoints shrink as the mesh refines.
"""

import argparse
import csv
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), os.pardir, "src"))

from sparsealign.cli import main as cli_main

SMOKE = os.path.join(os.path.dirname(__file__), os.pardir, "scenarios", "smoke.ini")


def run(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", default="runs/grid_cross_check", help="output directory")
    ap.add_argument("--resolutions", default="64,128,256",
                    help="grid sizes to try, comma separated")
    ap.add_argument("--particles", type=int, default=10000, help="atoms to sample")
    args = ap.parse_args(argv)

    sizes = [int(p) for p in args.resolutions.split(",") if p.strip()]
    results = []
    for n in sizes:
        outdir = os.path.join(args.output, f"res{n}")
        code = cli_main(
            ["grid-compare", SMOKE, "--output", outdir,
             "--nx", str(n), "--nv", str(n),
             "--grid-particles", str(args.particles)]
        )
        if code != 0:
            return code
        with open(os.path.join(outdir, "compare.csv"), newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            vals = {k: float(v) for k, v in reader}
        results.append((n, vals))

    print(f"\n{'grid':>6} {'W1_x':>10} {'W1_v':>10} {'mass drift':>12} {'min dens':>10}")
    for n, vals in results:
        print(f"{n:>4}^2 {vals['w1_x_final']:>10.5f} {vals['w1_v_final']:>10.5f} "
              f"{vals['mass_drift']:>12.2e} {vals['min_density']:>10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
