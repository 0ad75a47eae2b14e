"""Number of positive solutions on (0, pi/2) from multistart Newton and from shooting."""
import math

import numpy as np

from logibranch import ProblemParams, assemble
from logibranch.mesh import DomainSpec, build_mesh
from logibranch.oracle1d import oracle_fold, shoot_count
from logibranch.solvers import newton_solve
from logibranch.errors import PreconditionError, SolverError


def solutions(forms, lam, starts):
    found = []
    for c in starts:
        try:
            rep = newton_solve(forms, np.full(forms.n, c), ProblemParams(lam=lam), with_gamma=True)
        except (SolverError, PreconditionError):
            continue
        if rep.accepted_positive and all(forms.l2_norm(rep.u - s.u) > 1e-6 for s in found):
            found.append(rep)
    return sorted(found, key=lambda r: r.u.max())


def main():
    interval = (0.0, math.pi / 2)
    forms = assemble(build_mesh(DomainSpec.interval(*interval), 1024))
    starts = np.geomspace(1e-4, 0.99, 16)
    print(f"oracle fold: {oracle_fold(interval):.6f}")
    print("lambda     newton  oracle  gamma1 per solution")
    for lam in (0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.32, 0.34, 0.5):
        found = solutions(forms, lam, starts)
        n_orc = shoot_count(interval, lam=lam).count
        gam = " ".join(f"{r.gamma1:+.4f}" for r in found)
        print(f"{lam:<10.3g} {len(found):^6d}  {n_orc:^6d}  {gam}")


if __name__ == "__main__":
    main()
