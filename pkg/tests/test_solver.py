import json

import numpy as np
import pytest

from _fixtures import cycle4, edge2, grid_minimum, random_graph, single_vertex
from graphyamabe import (
    BoundViolation,
    ConvergenceError,
    DegenerateInputError,
    DomainError,
    ParameterError,
    PSolution,
    SolverConfig,
    check_lemma2_bounds,
    check_lemma3_bounds,
    compute_lambda,
    el_residual,
    eval_I,
    grad_I,
    minimize_I,
    project_to_gamma,
)
from graphyamabe.calculus import p_laplacian_field
from graphyamabe.solver import default_init, lambda_bounds, max_u_bounds


# -- functional and projection ----------------------------------------------

def test_eval_I_examples():
    G, d = single_vertex(g=1.0, h=1.0, alpha=3.0)
    assert eval_I([0.0], 2.0, d, G) == 0.0
    assert eval_I([2.0], 2.0, d, G) == 4.0
    E, de = edge2()
    assert eval_I([1.0, 2.0], 2.0, de, E) == 6.0
    with pytest.raises(DomainError):
        eval_I([-1.0, 2.0], 2.0, de, E)


def test_grad_I_examples():
    G, d = cycle4(gamma=1.5, eta=1.0)
    gI = grad_I(np.full(4, 0.7), 1.6, d, G)
    np.testing.assert_allclose(gI, 1.6 * 1.5 * 0.7 ** 0.6, rtol=1e-14)
    E, de = edge2()
    assert grad_I([1.0, 2.0], 2.0, de, E)[0] == pytest.approx(0.0, abs=1e-15)


def test_grad_I_matches_central_differences_p2():
    G, d = random_graph(5, n_min=5, n_max=5)
    phi = np.random.default_rng(0).uniform(0.5, 1.5, G.n)
    gI = grad_I(phi, 2.0, d, G)
    step = 1e-6
    fd = np.array([(eval_I(phi + step * e, 2.0, d, G) - eval_I(phi - step * e, 2.0, d, G)) / (2 * step)
                   for e in np.eye(G.n)])
    assert np.max(np.abs(gI - fd)) / np.max(np.abs(gI)) < 1e-6


def test_project_to_gamma_examples():
    G, d = single_vertex(g=1.0, h=1.0, alpha=3.0)
    assert project_to_gamma([2.0], d, G)[0] == pytest.approx(1.0, rel=1e-15)
    R, dr = random_graph(3)
    phi = np.linspace(0.2, 1.0, R.n)
    u = project_to_gamma(phi, dr, R)
    np.testing.assert_array_equal(project_to_gamma(u, dr, R), u)
    np.testing.assert_allclose(project_to_gamma(5 * phi, dr, R), u, rtol=1e-14)
    assert abs(float(np.dot(R.mu * dr.h, u ** dr.alpha)) - 1.0) < 1e-14
    with pytest.raises(DegenerateInputError):
        project_to_gamma(np.zeros(R.n), dr, R)


def test_compute_lambda_examples():
    G, d = single_vertex(g=1.0, h=1.0, alpha=3.0)
    assert compute_lambda([1.0], 2.0, d, G) == 1.0
    R, dr = random_graph(4)
    u = project_to_gamma(np.linspace(0.3, 1.0, R.n), dr, R)
    assert compute_lambda(u, 1.4, dr, R) == pytest.approx(eval_I(u, 1.4, dr, R), rel=1e-13)
    with pytest.raises(DegenerateInputError):
        compute_lambda([0.0], 2.0, d, G)


def test_compute_lambda_via_divergence_identity():
    R, dr = random_graph(8)
    p = 1.7
    u = project_to_gamma(np.linspace(0.3, 1.0, R.n), dr, R)
    lap = p_laplacian_field(u, p, R)
    rhs = float(np.dot(R.mu, -u * lap + dr.g * u ** p))
    assert compute_lambda(u, p, dr, R) == pytest.approx(rhs, rel=1e-10)


def test_el_residual_examples():
    G, d = single_vertex(g=1.0, h=1.0, alpha=3.0)
    assert el_residual([1.0], 1.0, 2.0, d, G) <= 1e-12
    C, dc = cycle4(gamma=1.0, eta=1.0)
    sol = minimize_I(1.5, dc, C)
    assert el_residual(sol.u, sol.lam, 1.5, dc, C) <= 1e-10
    prev = 0.0
    for delta in (1e-4, 1e-3, 1e-2):
        u = sol.u.copy()
        u[0] += delta
        r = el_residual(u, sol.lam, 1.5, dc, C)
        assert r > prev
        prev = r


# -- minimize_I ---------------------------------------------------------------

def test_minimize_single_vertex():
    G, d = single_vertex(g=1.0, h=1.0, alpha=3.0)
    sol = minimize_I(2.0, d, G)
    assert sol.u[0] == pytest.approx(1.0, abs=1e-14)
    assert sol.lam == pytest.approx(1.0, abs=1e-14)
    assert sol.converged


@pytest.mark.parametrize("p", [1.2, 1.5, 1.9])
def test_minimize_constant_cycle(p):
    C, dc = cycle4(gamma=0.5, eta=2.0, alpha=2.0)
    sol = minimize_I(p, dc, C, SolverConfig(grad_tol=1e-10))
    c = (2.0 * 4) ** (-1 / 2.0)
    np.testing.assert_allclose(sol.u, c, atol=1e-12)
    assert sol.lam == pytest.approx(0.25 * c ** (p - 2.0), rel=1e-12)


def test_minimize_two_vertex_matches_grid():
    G, d = edge2(g=(1.0, 2.0), alpha=3.0)
    sol = minimize_I(2.0, d, G, SolverConfig(grad_tol=1e-10))
    e_grid, u_grid = grid_minimum(2.0, G, d, step=1e-3)
    assert np.max(np.abs(sol.u - u_grid)) <= 2e-3
    assert sol.energy <= e_grid + 1e-9


def test_solution_invariants_on_random_graph():
    G, d = random_graph(11)
    sol = minimize_I(1.4, d, G, SolverConfig(grad_tol=1e-10))
    assert np.all(sol.u > 0)
    assert sol.constraint_residual <= 1e-12
    assert sol.lam > 0
    assert sol.structured_residual <= 1e-10 * sol.scale
    assert sol.energy == pytest.approx(eval_I(sol.u, 1.4, d, G), rel=1e-14)


def test_plain_method_converges_at_p2():
    G, d = random_graph(2)
    p = min(2.0, 0.5 * (d.alpha + 1.0)) - 0.2
    plain = minimize_I(p, d, G, SolverConfig(grad_tol=1e-8, method="plain", restarts=0))
    contract = minimize_I(p, d, G, SolverConfig(grad_tol=1e-8, restarts=0))
    assert plain.el_residual <= 1e-8 * plain.scale
    np.testing.assert_allclose(plain.u, contract.u, atol=1e-6)


def test_restarts_escape_constant_critical_point():
    # large g/h on a 4-cycle: the constant is critical but a concentrated field has lower energy
    C, dc = cycle4(gamma=4.0, eta=1.0, alpha=3.0)
    plain = minimize_I(1.5, dc, C, SolverConfig(restarts=0))
    best = minimize_I(1.5, dc, C)
    np.testing.assert_allclose(plain.u, plain.u[0])
    assert best.energy < plain.energy - 1e-3
    assert best.notes["restarts"] >= 1


def test_minimize_is_deterministic():
    G, d = random_graph(6)
    a = minimize_I(1.3, d, G)
    b = minimize_I(1.3, d, G)
    np.testing.assert_array_equal(a.u, b.u)
    assert a.lam == b.lam


def test_p_at_least_alpha_rejected():
    G, d = single_vertex(alpha=2.0)
    with pytest.raises(ParameterError, match="smaller than alpha"):
        minimize_I(2.0, d, G)
    with pytest.raises(ParameterError):
        minimize_I(1.0, d, G)


def test_non_convergence_carries_best_iterate():
    G, d = random_graph(9)
    with pytest.raises(ConvergenceError) as info:
        minimize_I(1.2, d, G, SolverConfig(grad_tol=1e-14, max_iters=2, max_outer=1))
    best = info.value.best
    assert isinstance(best, PSolution)
    assert not best.converged
    assert best.constraint_residual <= 1e-12
    assert best.energy <= eval_I(default_init(d, G), 1.2, d, G) + 1e-12


def test_bad_init_rejected():
    G, d = edge2()
    with pytest.raises(DomainError):
        minimize_I(1.5, d, G, init=[0.0, 0.0])
    with pytest.raises(DomainError):
        minimize_I(1.5, d, G, init=[-1.0, 1.0])


@pytest.mark.parametrize("bad", [dict(grad_tol=0.0), dict(armijo_c=1.0), dict(armijo_shrink=0.0),
                                 dict(eps_reg=-1.0), dict(max_iters=0), dict(method="newton"),
                                 dict(restarts=-1), dict(floor_clip=0.0)])
def test_config_validation(bad):
    with pytest.raises(ParameterError):
        SolverConfig(**bad)


def test_psolution_json_keys_and_roundtrip():
    G, d = random_graph(1)
    sol = minimize_I(1.5, d, G)
    doc = json.loads(json.dumps(sol.to_dict(G)))
    assert set(doc) == {"p", "lambda", "u", "el_residual", "constraint_residual", "iters", "energy"}
    back = PSolution.from_dict(doc, G)
    np.testing.assert_array_equal(back.u, sol.u)
    assert back.lam == sol.lam


# -- a-priori bounds ------------------------------------------------------------

def test_lemma2_examples():
    G, d = single_vertex(g=1.0, h=1.0, alpha=3.0)
    rep = check_lemma2_bounds(minimize_I(2.0, d, G), d, G)
    assert (rep.lower, rep.observed, rep.upper, rep.passed) == (1.0, 1.0, 1.0, True)
    C, dc = cycle4(alpha=2.0)
    assert max_u_bounds(dc, C) == (0.5, 1.0)
    sol = minimize_I(1.5, dc, C)
    assert check_lemma2_bounds(sol, dc, C).passed
    one = minimize_I(2.0, d, G)
    one.u = 2.0 * one.u
    rep = check_lemma2_bounds(one, d, G)
    assert not rep.passed
    with pytest.raises(BoundViolation):
        rep.require()


def test_lemma3_examples():
    G, d = single_vertex(g=1.0, h=1.0, alpha=3.0)
    sol = minimize_I(2.0, d, G)
    rep = check_lemma3_bounds(sol, d, G)
    assert rep.lower == 1.0 and rep.passed
    C, dc = cycle4(alpha=2.0)
    sol = minimize_I(1.5, dc, C)
    assert check_lemma3_bounds(sol, dc, C).passed
    lo, hi = lambda_bounds(dc, C)
    assert lo <= sol.lam <= hi
    sol.lam *= 10.0
    assert not check_lemma3_bounds(sol, dc, C).passed


def test_bound_report_serializes():
    C, dc = cycle4(alpha=2.0)
    doc = check_lemma3_bounds(minimize_I(1.5, dc, C), dc, C).to_dict()
    json.dumps(doc)
    assert {"name", "lower", "upper", "observed", "passed"} <= set(doc)
