import math

import numpy as np
import pytest

from logibranch.assembly import ProblemParams, assemble
from logibranch.errors import LambdaOmegaNotGreaterThanOne
from logibranch.mesh import DomainSpec, build_mesh
from logibranch.oracle1d import analytic_eigen, sigma1_exact
from logibranch.spectra import (
    gamma1_linearized,
    gamma1_of_sigma,
    lambda_eps,
    lambda_omega,
    sigma1,
    stability_label,
)

from conftest import make_forms


@pytest.mark.parametrize("L, exact, tol", [(math.pi, 1.0, 1e-4), (math.pi / 2, 4.0, 4e-4)])
def test_dirichlet_interval(L, exact, tol):
    res = lambda_omega(make_forms(0, L))
    assert abs(res.value - exact) < tol
    assert res.principal and res.simple
    assert res.residual_norm < 1e-8
    assert res.vector.coeffs.max() == pytest.approx(1.0)


def test_dirichlet_square():
    f = assemble(build_mesh(DomainSpec.rectangle(0, math.pi, 0, math.pi), 128))
    res = lambda_omega(f)
    assert abs(res.value - 2.0) < 1e-3
    assert res.principal


def test_dense_and_sparse_paths_agree():
    f = make_forms(0, 1.3, 300)
    a = lambda_omega(f, dense_max=10 ** 6).value
    b = lambda_omega(f, dense_max=10).value
    assert abs(a - b) < 1e-9 * a


def test_h2_convergence():
    errs = [lambda_omega(make_forms(0, math.pi, n)).value - 1.0 for n in (32, 64, 128, 256)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


@pytest.mark.parametrize("L", [math.pi / 2, 1.0])
def test_sigma1_matches_tangent_formula(L):
    f = make_forms(0, L)
    res = sigma1(f)
    assert abs(res.value + math.tan(L / 2)) < 1e-3
    assert res.principal
    # boundary-norm normalization
    x = res.vector.coeffs
    assert x @ (f.M_bd @ x) == pytest.approx(1.0)


def test_sigma1_precondition(two_pi):
    with pytest.raises(LambdaOmegaNotGreaterThanOne):
        sigma1(two_pi)


def test_gamma1_family(half_pi):
    s1 = sigma1(half_pi).value
    assert abs(gamma1_of_sigma(half_pi, s1).value) < 1e-6
    g0 = gamma1_of_sigma(half_pi, 0.0).value
    assert -1 < g0 < 0
    grid = np.linspace(-3, 2, 11)
    vals = np.array([gamma1_of_sigma(half_pi, s).value for s in grid])
    assert np.all(np.diff(vals) < 0)
    # concavity on the sampled grid
    assert np.all(vals[:-2] - 2 * vals[1:-1] + vals[2:] <= 1e-12)


def test_gamma1_negative_when_dirichlet_below_one(two_pi):
    for s in np.linspace(-20, 5, 11):
        assert gamma1_of_sigma(two_pi, s).value < 0


def test_gamma1_at_trivial_one(half_pi):
    res = gamma1_linearized(half_pi, np.ones(half_pi.n), ProblemParams())
    assert res.value > 0
    assert res.principal


def test_charts_give_same_gamma(half_pi, rng):
    params = ProblemParams(lam=0.04)
    u = 0.3 + 0.2 * rng.uniform(size=half_pi.n)
    k = params.kappa
    v = u * params.lam ** (-k)
    mu = params.lam ** ((params.p - 1) * k)
    gu = gamma1_linearized(half_pi, u, params).value
    gv = gamma1_linearized(half_pi, v, params.with_(mu=mu), chart="V").value
    assert gu == pytest.approx(gv, rel=1e-8)


def test_lambda_eps(half_pi):
    s = sigma1(half_pi).value
    assert lambda_eps(half_pi, 0.01, 0.5, s) == pytest.approx(0.1, rel=1e-3)
    assert lambda_eps(half_pi, 1e-4, 0.5, s) == pytest.approx(0.01, rel=1e-3)
    vals = [lambda_eps(half_pi, e, 0.5, s) for e in (1e-2, 1e-4, 1e-8)]
    assert vals[0] > vals[1] > vals[2] > 0 and vals[2] < 1e-3


def test_stability_labels():
    assert stability_label(0.1) == "Stable"
    assert stability_label(-0.1) == "Unstable"
    assert stability_label(1e-9) == "Marginal"
    assert stability_label(None) == "NotComputed"


def test_analytic_oracle_values():
    assert analytic_eigen(DomainSpec.interval(0, math.pi))["lambda_omega"] == pytest.approx(1.0)
    assert sigma1_exact(DomainSpec.interval(0, math.pi / 2)) == pytest.approx(-1.0)
    assert analytic_eigen(DomainSpec.rectangle(0, math.pi, 0, math.pi))["lambda_omega"] == pytest.approx(2.0)
