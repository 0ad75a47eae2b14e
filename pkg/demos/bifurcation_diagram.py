"""Branches through (0, 1) on a short and a long interval, written as CSV.

On (0, pi/2) the branch turns at a fold and returns to (0, 0) through the
rescaled chart; on (0, 2 pi) lam grows without a turning point.
"""
import argparse
import csv
import math
from pathlib import Path

from logibranch import ProblemParams, assemble
from logibranch.continuation import continue_from_trivial_one
from logibranch.mesh import DomainSpec, build_mesh


def write(branch, path):
    rows = branch.rows()
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--out", default="demo_output")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(exist_ok=True)
    for name, L, max_lam in (("half_pi", math.pi / 2, None), ("two_pi", 2 * math.pi, 20.0)):
        forms = assemble(build_mesh(DomainSpec.interval(0.0, L), args.n))
        br = continue_from_trivial_one(forms, ProblemParams(), max_lambda=max_lam)
        write(br, out / f"branch_{name}.csv")
        fold = f"{br.lambda_star:.6f}" if br.lambda_star is not None else "none"
        kinds = ", ".join(e["kind"] for e in br.endpoints)
        print(f"{name}: {len(br.points)} points, fold at lam = {fold}, endpoints: {kinds}")


if __name__ == "__main__":
    main()
