"""Convergence of the unique positive state on (0, 2 pi) to the Dirichlet state as lam grows."""
import math

import numpy as np

from logibranch import ProblemParams, assemble
from logibranch.mesh import DomainSpec, build_mesh
from logibranch.solvers import dirichlet_logistic, sweep_lambda


def main():
    forms = assemble(build_mesh(DomainSpec.interval(0.0, 2 * math.pi), 1024))
    uD = dirichlet_logistic(forms).u
    lams = np.geomspace(0.1, 1000.0, 9)
    reps = sweep_lambda(forms, ProblemParams(lam=lams[0]), lams, np.full(forms.n, 0.9))
    print("lambda       L2 distance   u(0)          max u")
    for lam, r in zip(lams, reps):
        print(f"{lam:<12.4g} {forms.l2_norm(r.u - uD):<13.4e} {r.u[0]:<13.4e} {r.u.max():.6f}")


if __name__ == "__main__":
    main()
