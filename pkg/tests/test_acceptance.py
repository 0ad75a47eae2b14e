"""The fifteen acceptance criteria at their stated tolerances.

Every test prints one PASS/FAIL line (also collected in the terminal summary)
and then asserts. Heavy objects are built once per module.
"""
import math

import numpy as np
import pytest

from logibranch.assembly import (
    ProblemParams,
    assemble,
    jacobian,
    jacobian_rescaled,
    rescale_chart,
    residual,
    residual_rescaled,
    unscale_chart,
)
from logibranch.continuation import (
    continue_from_trivial_one,
    detect_bifurcation_from_zero,
    lambda_bound_sweep,
    project_onto_branch,
    trace_continuum_C0,
)
from logibranch.errors import LambdaOmegaNotGreaterThanOne, PreconditionError, SolverError
from logibranch.mesh import DomainSpec, build_mesh
from logibranch.oracle1d import oracle_fold, shoot_count, shoot_limit_problem
from logibranch.solvers import (
    build_subsolution,
    dirichlet_logistic,
    lower_branch_rescaled,
    monotone_iterate,
    nehari_minimize,
    newton_solve,
    sweep_lambda,
)
from logibranch.spectra import lambda_omega, sigma1
from logibranch.variational import (
    I_mu,
    J_lambda,
    c_plus,
    energies,
    fibering,
    jb_bound,
    sample_fields,
    two_root_threshold,
)

from conftest import ACCEPTANCE_LINES, make_forms

HALF = (0.0, math.pi / 2)
LAMS_5 = (0.02, 0.05)
LAMS_7 = (0.1, 1.0, 10.0, 100.0)
LAMS_8 = (1e-4, 1e-3, 1e-2)
DISTINCT_TOL = 1e-6


def report(k, checks):
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{name}={val}" for name, _, val in checks)
    line = f"criterion {k} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    failed = [name for name, good, _ in checks if not good]
    assert ok, f"criterion {k} failed checks: {failed}"


def positive(rep):
    return rep.flags["positive_interior"] and rep.flags["positive_boundary"] and not rep.flags["trivial"]


def distinct(forms, reps):
    out = []
    for r in reps:
        if all(forms.l2_norm(r.u - s.u) > DISTINCT_TOL for s in out):
            out.append(r)
    return out


def multistart(forms, params, guesses):
    found = []
    for g in guesses:
        try:
            rep = newton_solve(forms, g, params)
        except (SolverError, PreconditionError):
            continue
        if positive(rep):
            found.append(rep)
    return distinct(forms, found)


# --- shared objects ------------------------------------------------------------

@pytest.fixture(scope="module")
def skeleton(half_pi):
    return trace_continuum_C0(half_pi, ProblemParams())


@pytest.fixture(scope="module")
def branch5(half_pi):
    # independent run at a different step size, kept in chart U
    return continue_from_trivial_one(half_pi, ProblemParams(), step=0.013, switch_chart=False)


@pytest.fixture(scope="module")
def found5(half_pi, branch5):
    """Multistart Newton per lam: constants plus branch crossings as guesses."""
    out = {}
    for lam in LAMS_5:
        guesses = [np.full(half_pi.n, c) for c in np.geomspace(1e-4, 0.99, 12)]
        pts = branch5.points
        for a, b in zip(pts, pts[1:]):
            if (a.lam - lam) * (b.lam - lam) <= 0 and a.lam != b.lam:
                t = (lam - a.lam) / (b.lam - a.lam)
                guesses.append((1 - t) * a.u + t * b.u)
        out[lam] = multistart(half_pi, ProblemParams(lam=lam), guesses)
    return out


@pytest.fixture(scope="module")
def sweep7(two_pi):
    return sweep_lambda(two_pi, ProblemParams(lam=LAMS_7[0]), LAMS_7, np.full(two_pi.n, 0.9))


@pytest.fixture(scope="module")
def lower8(half_pi):
    return lower_branch_rescaled(half_pi, ProblemParams(), LAMS_8)[1]


@pytest.fixture(scope="module")
def nehari12(half_pi):
    pr = ProblemParams(lam=0.02)
    return nehari_minimize(half_pi, pr, "Plus"), nehari_minimize(half_pi, pr, "Minus")


@pytest.fixture(scope="module")
def monotone13(two_pi):
    pr = ProblemParams(lam=1.0)
    w = build_subsolution(two_pi, pr)
    rep = monotone_iterate(two_pi, w, np.ones(two_pi.n), pr)
    return w, rep


# --- criteria ----------------------------------------------------------------

def test_criterion_01_eigenvalues():
    checks = []
    for (a, b), target, tol in (((0.0, math.pi), 1.0, 1e-4), (HALF, 4.0, 4e-4)):
        val = lambda_omega(make_forms(a, b)).value
        checks.append((f"lambda_Omega(0,{b:.4g})", abs(val - target) < tol, f"{val:.9g}"))
    sq = assemble(build_mesh(DomainSpec.rectangle(0, math.pi, 0, math.pi), 128))
    val = lambda_omega(sq).value
    checks.append(("lambda_Omega(square,128^2)", abs(val - 2) < 1e-3, f"{val:.9g}"))
    errs = [abs(lambda_omega(make_forms(0.0, math.pi, n)).value - 1) for n in (32, 64)]
    ratio = errs[0] / errs[1]
    checks.append(("h2_ratio", 3.5 <= ratio <= 4.5, f"{ratio:.4f}"))
    report(1, checks)


def test_criterion_02_sigma1(half_pi, two_pi):
    s = sigma1(half_pi).value
    try:
        sigma1(two_pi)
        raised = False
    except LambdaOmegaNotGreaterThanOne:
        raised = True
    report(2, [("sigma1(0,pi/2)", abs(s + 1) < 1e-3, f"{s:.9g}"),
               ("sigma1(0,2pi) raises", raised, raised)])


def test_criterion_03_bifurcation(half_pi):
    s = sigma1(half_pi).value
    checks = []
    for eps in (1e-2, 1e-3):
        lam_b = detect_bifurcation_from_zero(half_pi, ProblemParams(eps=eps))
        pred = -s * eps ** 0.5
        rel = abs(lam_b - pred) / pred
        checks.append((f"eps={eps:g} rel_err", rel < 0.02, f"{rel:.2e}"))
    report(3, checks)


def test_criterion_04_positive_solutions(half_pi, two_pi, found5, sweep7, lower8, nehari12, monotone13, skeleton):
    sols = [(half_pi, r) for lam in LAMS_5 for r in found5[lam]]
    sols += [(two_pi, r) for r in sweep7]
    sols += [(half_pi, r) for r in lower8]
    sols += [(half_pi, r) for r in nehari12]
    sols += [(two_pi, monotone13[1])]
    accepted = [(f, r) for f, r in sols if r.accepted_positive]
    sup = max(r.u.max() for _, r in accepted)
    bd = [r.u[f.mesh.boundary_nodes].min() for f, r in accepted]
    report(4, [("accepted", len(accepted) == len(sols), f"{len(accepted)}/{len(sols)}"),
               ("max_u<1", sup < 1, f"{sup:.12g}"),
               ("boundary_node>1e-8", min(bd) > 1e-8, f"{min(bd):.6e}")])


def test_criterion_05_multiplicity_and_fold(branch5, found5):
    checks = []
    for lam in LAMS_5:
        n_fem = len(found5[lam])
        n_orc = shoot_count(HALF, lam=lam).count
        checks.append((f"count(lam={lam:g})", n_fem >= 2 and n_fem == n_orc, f"{n_fem}/{n_orc}"))
    fold = oracle_fold(HALF)
    rel = abs(branch5.lambda_star - fold) / fold
    checks.append(("fold_rel_err", branch5.fold_count == 1 and rel < 0.02,
                   f"{branch5.lambda_star:.8g} vs {fold:.8g}"))
    report(5, checks)


def test_criterion_06_nonexistence(half_pi, branch5, rng):
    lam = 2 * branch5.lambda_star
    guesses = [np.abs(rng.uniform(0.02, 1.0) * (1 + 0.2 * rng.standard_normal(half_pi.n)))
               for _ in range(20)]
    n_fem = len(multistart(half_pi, ProblemParams(lam=lam), guesses))
    n_orc = shoot_count(HALF, lam=lam).count
    report(6, [("newton_20_starts", n_fem == 0, n_fem), ("oracle", n_orc == 0, n_orc)])


def test_criterion_07_dirichlet_limit(two_pi, sweep7):
    uD = dirichlet_logistic(two_pi).u
    d = np.array([two_pi.l2_norm(r.u - uD) for r in sweep7])
    left = np.array([r.u[0] for r in sweep7])
    right = np.array([r.u[-1] for r in sweep7])
    report(7, [("L2_strictly_decreasing", bool(np.all(np.diff(d) < 0)), np.array2string(d, precision=4)),
               ("L2(100)<0.05", d[-1] < 0.05, f"{d[-1]:.4e}"),
               ("u(0)_decreasing", bool(np.all(np.diff(left) < 0)), f"{left[-1]:.3e}"),
               ("u(2pi)_decreasing", bool(np.all(np.diff(right) < 0)), f"{right[-1]:.3e}")])


def test_criterion_08_lower_branch_slope(half_pi, lower8):
    norms = [half_pi.h1_norm(r.u) for r in lower8]
    slope = np.polyfit(np.log(LAMS_8), np.log(norms), 1)[0]
    report(8, [("slope", abs(slope - 2) <= 0.05 * 2, f"{slope:.6f}")])


def test_criterion_09_limit_profile(half_pi, lower8):
    v0 = shoot_limit_problem(HALF)(half_pi.mesh.nodes[:, 0])
    # distance of lam^{-2} U to v0, ordered from the largest lam down to the smallest
    d = np.array([half_pi.h1_norm(r.u / lam ** 2 - v0) for lam, r in zip(LAMS_8, lower8)])[::-1]
    report(9, [("decreasing_as_lam_to_0", bool(np.all(np.diff(d) < 0)), np.array2string(d, precision=3)),
               ("final<1e-2", d[-1] < 1e-2, f"{d[-1]:.3e}")])


def test_criterion_10_stability_signs(half_pi, found5, sweep7, lower8):
    at = sorted(found5[0.02], key=lambda r: r.u.max())
    lower, upper = at[0], at[-1]
    pool = [r for lam in LAMS_5 for r in found5[lam]] + list(sweep7) + list(lower8)
    implied = [r.gamma1 > 0 for r in pool if r.u.min() >= 1 / 3]
    report(10, [("gamma1(upper)>0", upper.gamma1 > 0, f"{upper.gamma1:.4g}"),
                ("gamma1(lower)<0", lower.gamma1 < 0, f"{lower.gamma1:.4g}"),
                ("min_u>=1/3 => gamma1>0", len(implied) > 0 and all(implied), f"{sum(implied)}/{len(implied)}")])


def test_criterion_11_fibering(half_pi):
    rng = np.random.default_rng(2024)
    base = ProblemParams()
    fields = []
    for u in sample_fields(half_pi, rng, 2000):
        tr = energies(half_pi, u)
        if tr.A > 0 and tr.B > 0 and tr.E < 0:
            fields.append(u)
        if len(fields) == 200:
            break
    two = res = order = signs = scale = True
    worst_res, worst_scale = 0.0, 0.0
    for u in fields:
        thr = two_root_threshold(energies(half_pi, u), base.p, base.q)
        pr = base.with_(lam=0.5 * thr)
        rep = fibering(half_pi, u, pr)
        two &= len(rep.roots) == 2
        if len(rep.roots) != 2:
            continue
        t1, t2 = rep.roots
        worst_res = max(worst_res, max(rep.root_residuals))
        order &= t1 < rep.t0 < t2
        signs &= rep.second_derivatives[0] < 0 < rep.second_derivatives[1]
        for s in (0.1, 3.0, 10.0):
            rs = fibering(half_pi, s * u, pr)
            thr_s = two_root_threshold(energies(half_pi, s * u), base.p, base.q)
            err = max(abs(thr_s - thr) / thr, abs(s * rs.roots[0] - t1) / t1, abs(s * rs.roots[1] - t2) / t2)
            worst_scale = max(worst_scale, err)
    res = worst_res < 1e-10
    scale = worst_scale < 1e-10
    report(11, [("fields", len(fields) == 200, len(fields)), ("two_roots", two, two),
                ("residual<1e-10", res, f"{worst_res:.2e}"), ("t1<t0<t2", order, order),
                ("j''_signs", signs, signs), ("scale_invariance", scale, f"{worst_scale:.2e}")])


def test_criterion_12_nehari(half_pi, nehari12):
    plus, minus = nehari12
    pr = ProblemParams(lam=0.02)
    spec = half_pi.mesh.spec
    c = c_plus(pr, spec.volume, spec.surface)
    Jc = J_lambda(half_pi, np.full(half_pi.n, c), pr)
    v = minus.u * pr.lam ** (-pr.kappa)
    pv = pr.with_(mu=pr.lam ** ((pr.p - 1) * pr.kappa))
    Iv, bound = I_mu(half_pi, v, pv), jb_bound(energies(half_pi, v), pr.p, pr.q)
    report(12, [("J(u+)<0<J(u-)", plus.J_value < 0 < minus.J_value, f"{plus.J_value:.6g},{minus.J_value:.4g}"),
                ("J(u+)<=J(c+)", plus.J_value <= Jc, f"{plus.J_value:.12g}<={Jc:.12g}"),
                ("JB", Iv >= bound, f"{Iv:.6g}>={bound:.6g}")])


def test_criterion_13_monotone(two_pi, monotone13):
    w, rep = monotone13
    inc = rep.flags["min_increment"]
    inside = bool(np.all(rep.u >= w.coeffs) and np.all(rep.u <= 1))
    report(13, [("nondecreasing", inc >= 0, f"{inc:.3e}"), ("in_[w,1]", inside, inside),
                ("residual<1e-9", rep.residual_norm < 1e-9, f"{rep.residual_norm:.3e}")])


def test_criterion_14_charts_and_jacobian():
    forms = make_forms(*HALF, n=64)
    rng = np.random.default_rng(7)
    pr = ProblemParams(eps=0.1)
    trip, worst_u, worst_v = 0.0, 0.0, 0.0
    for _ in range(50):
        u = rng.uniform(0.0, 1.5, forms.n) * rng.choice([-1, 1], forms.n) ** (rng.uniform() < 0.3)
        lam = 10 ** rng.uniform(-3, 1)
        v, mu = rescale_chart(u, lam, pr)
        u2, lam2 = unscale_chart(v, mu, pr)
        trip = max(trip, np.abs(u2 - u).max() / np.abs(u).max(), abs(lam2 - lam) / lam)
        for kind in ("U", "V"):
            x, p = (u, pr.with_(lam=lam)) if kind == "U" else (v, pr.with_(mu=mu))
            res, jac = (residual, jacobian) if kind == "U" else (residual_rescaled, jacobian_rescaled)
            J = jac(forms, x, p).toarray()
            h = 1e-6 * max(1.0, np.abs(x).max())
            fd = np.empty_like(J)
            for j in range(forms.n):
                e = np.zeros(forms.n)
                e[j] = h
                fd[:, j] = (res(forms, x + e, p) - res(forms, x - e, p)) / (2 * h)
            err = np.linalg.norm(fd - J) / np.linalg.norm(J)
            if kind == "U":
                worst_u = max(worst_u, err)
            else:
                worst_v = max(worst_v, err)
    report(14, [("round_trip<1e-12", trip < 1e-12, f"{trip:.2e}"),
                ("jacobian_U", worst_u < 1e-5, f"{worst_u:.2e}"),
                ("jacobian_V", worst_v < 1e-5, f"{worst_v:.2e}")])


def test_criterion_15_skeleton(half_pi, skeleton, branch5):
    first, last = skeleton.points[0], skeleton.points[-1]
    e1 = max(abs(first.lam), np.abs(first.u - 1).max())
    e2 = max(abs(last.lam), np.abs(last.u).max())
    v0 = shoot_limit_problem(HALF)(half_pi.mesh.nodes[:, 0])
    ev = half_pi.h1_norm(last.field.coeffs - v0) if last.chart == "V" else np.inf
    # both runs are in chart U down to the skeleton's last U point
    last_u = [p for p in skeleton.points if p.chart == "U"][-1]
    floor = last_u.norms["min_boundary"]
    lower_ok = [p for p in branch5.points if p.lam > 0 and p.norms["min_boundary"] >= floor]
    contain = max(project_onto_branch(p, skeleton, half_pi, ProblemParams()) for p in lower_ok) if lower_ok else np.inf
    grid = np.arange(0.30, 0.40, 0.0025)
    lam0 = lambda_bound_sweep(half_pi, ProblemParams(), grid)
    lams = skeleton.lams
    in_set = bool(np.all(lams >= 0) and np.all(lams < lam0)
                  and all(p.u.max() < 1 for p in skeleton.points if p.lam > 0))
    report(15, [("start(0,1)", e1 < 1e-3, f"{e1:.2e}"), ("end(0,0)", e2 < 1e-3, f"{e2:.2e}"),
                ("V_end~v0", ev < 1e-3, f"{ev:.2e}"),
                ("contains_branch", contain < 1e-6, f"{contain:.2e} over {len(lower_ok)} pts"),
                ("in_region", in_set, f"Lambda0={lam0:.4g}")])
