import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from logibranch.assembly import ProblemParams
from logibranch.errors import NoTwoRoots, PreconditionError, PreconditionLambdaOmega, SolverError
from logibranch.solvers import (
    POSITIVITY_FLOOR,
    build_subsolution,
    dirichlet_logistic,
    is_subsolution,
    is_supersolution,
    lower_branch_rescaled,
    monotone_iterate,
    nehari_minimize,
    newton_solve,
    sweep_lambda,
)
from logibranch.variational import c_plus, energies, jb_bound, I_mu

from oracle_values import DIRICHLET_MAX, ORACLE_FOLD, SHOOT_S, SHOOT_S_TWO_PI


def test_neumann_newton(half_pi):
    # 0.5 is the critical point of u - u^2, so start above it
    rep = newton_solve(half_pi, np.full(half_pi.n, 0.8), ProblemParams(), tol=1e-11)
    assert np.abs(rep.u - 1).max() < 1e-10


def test_upper_branch_newton(half_pi):
    rep = newton_solve(half_pi, np.full(half_pi.n, 0.9), ProblemParams(lam=0.02))
    assert rep.residual_norm < 1e-10
    assert rep.accepted_positive and rep.u.max() < 1
    assert rep.gamma1 > 0
    assert rep.u[0] == pytest.approx(SHOOT_S[0.02][1], abs=1e-5)


def test_no_positive_solution_past_fold(half_pi, rng):
    params = ProblemParams(lam=2 * ORACLE_FOLD)
    for _ in range(20):
        guess = rng.uniform(0.05, 1.0) * (1 + 0.2 * rng.standard_normal(half_pi.n))
        try:
            rep = newton_solve(half_pi, np.abs(guess), params, with_gamma=False)
        except (SolverError, PreconditionError):
            continue
        assert not (rep.flags["positive_interior"] and rep.flags["positive_boundary"])


def test_subsolution_on_long_interval(two_pi):
    params = ProblemParams(lam=1.0)
    w, eps = build_subsolution(two_pi, params, return_eps=True)
    assert is_subsolution(two_pi, w, params)
    assert w.coeffs.min() > 0
    assert is_supersolution(two_pi, np.ones(two_pi.n), params)
    assert is_supersolution(two_pi, np.full(two_pi.n, 1.7), params)
    # a too large starting eps halves down to the same admissible value
    w2, eps2 = build_subsolution(two_pi, params, epsilon_sub=64.0, return_eps=True)
    assert eps2 <= eps and is_subsolution(two_pi, w2, params)


def test_subsolution_precondition(half_pi):
    with pytest.raises(PreconditionLambdaOmega):
        build_subsolution(half_pi, ProblemParams(lam=1.0))


def test_monotone_iteration(two_pi):
    params = ProblemParams(lam=1.0)
    w = build_subsolution(two_pi, params)
    rep = monotone_iterate(two_pi, w, np.ones(two_pi.n), params)
    assert rep.residual_norm < 1e-9
    assert rep.flags["min_increment"] >= -1e-13
    assert np.all(rep.u >= w.coeffs - 1e-14) and rep.u.max() < 1
    assert rep.u[0] == pytest.approx(SHOOT_S_TWO_PI[1.0], abs=1e-5)
    ref = newton_solve(two_pi, rep.u, params)
    assert np.abs(ref.u - rep.u).max() < 1e-8


def test_monotone_degenerate_bracket(two_pi):
    params = ProblemParams(lam=1.0)
    sol = newton_solve(two_pi, np.full(two_pi.n, 0.5), params, with_gamma=False).u
    rep = monotone_iterate(two_pi, sol, sol, params, check_brackets=False)
    assert rep.iterations == 1
    assert_allclose(rep.u, sol)


def test_nehari_plus(half_pi):
    params = ProblemParams(lam=0.02)
    rep = nehari_minimize(half_pi, params, "Plus")
    tr = rep.energies
    assert rep.J_value < 0
    assert abs(tr.E + tr.A + params.lam * tr.B) < 1e-8 * half_pi.h1_norm(rep.u) ** 2
    assert rep.flags["classification"] == "NehariPlus"
    assert rep.flags["polish_shift"] < 1e-6
    c = c_plus(params, math.pi / 2, 2.0)
    const = np.full(half_pi.n, c)
    J_const = energies(half_pi, const).E / 2 + energies(half_pi, const).A / 3 + params.lam * energies(half_pi, const).B / 1.5
    assert rep.J_value <= J_const
    assert np.abs(rep.u - c).max() < 0.05


def test_nehari_minus(half_pi):
    params = ProblemParams(lam=0.02)
    rep = nehari_minimize(half_pi, params, "Minus")
    assert rep.J_value > 0
    assert rep.flags["classification"] == "NehariMinus"
    assert rep.u[0] == pytest.approx(SHOOT_S[0.02][0], rel=1e-3)
    v = rep.chart_field.coeffs
    mu = params.lam ** 2
    pv = params.with_(mu=mu)
    assert I_mu(half_pi, v, pv) >= jb_bound(energies(half_pi, v), 2.0, 0.5)
    assert rep.gamma1 < 0


def test_nehari_preconditions(two_pi, half_pi):
    with pytest.raises(PreconditionLambdaOmega):
        nehari_minimize(two_pi, ProblemParams(lam=0.02))
    with pytest.raises((NoTwoRoots, PreconditionError)):
        nehari_minimize(half_pi, ProblemParams(lam=5.0), "Minus")


def test_dirichlet_state(two_pi, half_pi):
    rep = dirichlet_logistic(two_pi)
    assert rep.residual_norm < 1e-10
    assert rep.u.max() < 1 and rep.u[1:-1].min() > 0
    assert rep.u.max() == pytest.approx(DIRICHLET_MAX, rel=1e-4)
    with pytest.raises(PreconditionLambdaOmega):
        dirichlet_logistic(half_pi)


def test_sweep_toward_dirichlet(two_pi):
    lams = [0.1, 1.0, 10.0, 100.0]
    reps = sweep_lambda(two_pi, ProblemParams(lam=0.1), lams, np.full(two_pi.n, 0.9))
    uD = dirichlet_logistic(two_pi).u
    d = [two_pi.l2_norm(r.u - uD) for r in reps]
    assert np.all(np.diff(d) < 0) and d[-1] < 0.05
    for r, lam in zip(reps, lams):
        assert r.u[0] == pytest.approx(SHOOT_S_TWO_PI[lam], rel=1e-4)
        assert r.u[0] == pytest.approx(r.u[-1], rel=1e-10)


def test_lower_branch_scaling(half_pi):
    lams = [1e-4, 1e-3, 1e-2]
    limit, reps = lower_branch_rescaled(half_pi, ProblemParams(), lams)
    norms = [half_pi.h1_norm(r.u) for r in reps]
    slope = np.polyfit(np.log(lams), np.log(norms), 1)[0]
    assert abs(slope - 2) < 0.1
    for r in reps:
        assert r.flags["positive_boundary"] and r.gamma1 < 0
        assert r.u[0] > POSITIVITY_FLOOR
    assert half_pi.h1_norm(reps[0].chart_field.coeffs) > 1.0


def test_stability_threshold_holds(half_pi):
    for lam in (0.02, 0.1, 0.2):
        rep = newton_solve(half_pi, np.full(half_pi.n, 0.9), ProblemParams(lam=lam))
        if rep.u.min() >= 1 / 3:
            assert rep.gamma1 > 0


def test_no_bifurcation_from_zero(half_pi, rng):
    # at eps = 0 tiny positive guesses never lead to a tiny positive solution
    for lam in (0.25, 1.0, 4.0):
        for _ in range(3):
            guess = 1e-6 * rng.uniform(0.5, 1.5, half_pi.n)
            try:
                rep = newton_solve(half_pi, guess, ProblemParams(lam=lam), with_gamma=False)
            except (SolverError, PreconditionError):
                continue
            assert rep.flags["trivial"] or half_pi.h1_norm(rep.u) > 1e-3
