"""Small solutions on (0, pi/2): ||u||_H1 ~ lam^2 and lam^{-2} u -> v0 = C1 sin(x + C2)."""
import math

import numpy as np

from logibranch import ProblemParams, assemble
from logibranch.mesh import DomainSpec, build_mesh
from logibranch.oracle1d import shoot_limit_problem
from logibranch.solvers import lower_branch_rescaled


def main():
    interval = (0.0, math.pi / 2)
    forms = assemble(build_mesh(DomainSpec.interval(*interval), 1024))
    lams = np.geomspace(1e-5, 1e-1, 9)
    _, reps = lower_branch_rescaled(forms, ProblemParams(), lams)
    v0 = shoot_limit_problem(interval)(forms.mesh.nodes[:, 0])
    norms = np.array([forms.h1_norm(r.u) for r in reps])
    print("lambda       ||u||_H1      ||u/lam^2 - v0||_H1   gamma1")
    for lam, r, nu in zip(lams, reps, norms):
        print(f"{lam:<12.3g} {nu:<13.4e} {forms.h1_norm(r.u / lam ** 2 - v0):<21.4e} {r.gamma1:+.4f}")
    slope = np.polyfit(np.log(lams), np.log(norms), 1)[0]
    print(f"log-log slope: {slope:.5f}")


if __name__ == "__main__":
    main()
