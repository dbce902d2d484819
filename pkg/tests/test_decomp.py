import itertools

import numpy as np
import pytest

from lagdecomp.decomp import (
    DecompProblem, PrimalCopies, SolverConfig, conditional_gradient_step, eval_q, inner_min_p0, inner_min_pk,
    linear_schedule, optimal_step_size, proximal_solve, supergradient_solve, wk_initialize,
)
from lagdecomp.instances import random_net
from lagdecomp.netcore import Network, dense, network_eval
from lagdecomp.oracle import planet_lp_value, primal_violation
from lagdecomp.prebounds import Box, L2Ball, PreActBounds, compute_intermediate_bounds, interval_output, wk_backward_bound
from lagdecomp.simplex import simplex

from conftest import problem


def _rand_rho(rng, net, scale=1.0):
    return [scale * rng.standard_normal((1, d)) for d in net.hidden_dims()]


def test_p0_sign_rule():
    net = Network((dense(np.eye(2)), dense([[1.0, 1.0]])), ("relu",))
    z0, zA = inner_min_p0(net, Box([0, 0], [1, 1]), [[1.0, -2.0]])
    assert z0.tolist() == [[1.0, 0.0]] and zA.tolist() == [[1.0, 0.0]]
    z0, _ = inner_min_p0(net, Box([-1, -3], [1, 1]), [[0.0, 0.0]])
    assert z0.tolist() == [[-1.0, -3.0]]


def test_p0_matches_vertex_enumeration(rng):
    for _ in range(20):
        d = int(rng.integers(2, 8))
        net = random_net(rng, [d, 5, 1])
        lo = rng.uniform(-1, 0, d)
        dom = Box(lo, lo + rng.uniform(0.1, 1, d))
        rho1 = rng.standard_normal((1, 5))
        _, zA = inner_min_p0(net, dom, rho1)
        best = min(-(rho1[0] @ (net.affine[0].as_dense() @ np.array(v) + net.affine[0].bias))
                   for v in itertools.product(*zip(dom.lower, dom.upper)))
        assert -(rho1[0] @ zA[0]) == pytest.approx(best, abs=1e-12)


def test_p0_l2_ball(rng):
    net = random_net(rng, [3, 4, 1])
    ball = L2Ball([0.1, 0.2, 0.3], 0.5)
    rho = rng.standard_normal((1, 4))
    z0, _ = inner_min_p0(net, ball, rho)
    g = net.affine[0].transpose(rho)[0]
    assert np.allclose(z0[0], ball.center + 0.5 * g / np.linalg.norm(g))
    z0, _ = inner_min_p0(net, ball, np.zeros((1, 4)))
    assert np.array_equal(z0[0], ball.center)


def _scalar_prob(l, u):
    net = Network((dense([[1.0]]), dense([[1.0]])), ("relu",))
    bounds = PreActBounds(([l],), ([u],))
    return DecompProblem(net, Box([-5.0], [5.0]), bounds, [[1.0]])


def test_pk_scalar_examples():
    prob = _scalar_prob(-1.0, 1.0)
    zB, z, zA = inner_min_pk(prob, 1, [[0.5]], [[-1.0]])
    assert (zB[0, 0], z[0, 0]) == (-1.0, 0.0)
    *_, val = prob.pk(1, np.array([[0.5]]), np.array([[-1.0]]))
    assert val[0] == -0.5
    prob = _scalar_prob(-2.0, -1.0)
    zB, z, _ = inner_min_pk(prob, 1, [[1.0]], [[-1.0]])
    assert (zB[0, 0], z[0, 0]) == (-2.0, 0.0)


def _pk_lp(l, u, rho, w):
    """Subproblem over (zB, z) per neuron via the simplex oracle."""
    total = 0.0
    for j in range(l.size):
        A, b = [[1, 0], [-1, 0]], [u[j], -l[j]]
        A_eq, b_eq = None, None
        if u[j] <= 0:
            A_eq, b_eq = [[0, 1]], [0.0]
        elif l[j] >= 0:
            A_eq, b_eq = [[1, -1]], [0.0]
        else:
            s = u[j] / (u[j] - l[j])
            A += [[0, -1], [1, -1], [-s, 1]]
            b += [0.0, 0.0, -s * l[j]]
        total += simplex([rho[j], -w[j]], A, b, A_eq, b_eq).value
    return total


def test_pk_matches_simplex(rng):
    for s in range(10):
        net, dom, c, b = problem(s)
        prob = DecompProblem(net, dom, b, c)
        rho = _rand_rho(rng, net)
        for k in range(1, net.n):
            nxt = prob.coefficient(rho, k + 1)
            *_, val = prob.pk(k, rho[k - 1], nxt)
            w = net.affine[k].transpose(nxt)[0]
            ref = _pk_lp(b.lower[k - 1], b.upper[k - 1], rho[k - 1][0], w) - nxt[0] @ net.affine[k].bias
            assert val[0] == pytest.approx(ref, abs=1e-9)


def test_wk_init_reproduces_wk():
    for s in range(20):
        net, dom, c, b = problem(s)
        wk, st = wk_backward_bound(net, dom, b, c)
        q, _ = eval_q(net, dom, b, wk_initialize(st), c)
        assert abs(q[0] - wk[0]) <= 1e-8


def test_wk_init_special_cases(rng):
    W1 = rng.uniform(0.1, 1, (3, 2))
    net = Network((dense(W1, [5.0] * 3), dense(rng.standard_normal((1, 3)))), ("relu",))
    dom = Box([0, 0], [1, 1])
    b = compute_intermediate_bounds(net, dom)
    _, st = wk_backward_bound(net, dom, b, [1.0])
    assert np.array_equal(wk_initialize(st)[0], st.nu_hat[1])
    net = Network((dense(W1, [-5.0] * 3), dense(rng.standard_normal((1, 3)))), ("relu",))
    b = compute_intermediate_bounds(net, dom)
    _, st = wk_backward_bound(net, dom, b, [1.0])
    assert not np.any(wk_initialize(st)[0])


def test_zero_duals_give_interval_bound():
    for s in range(10):
        net, dom, c, b = problem(s)
        q, _ = eval_q(net, dom, b, [np.zeros((1, d)) for d in net.hidden_dims()], c)
        lo, hi = interval_output(net, dom, b)
        assert q[0] == pytest.approx(c @ (0.5 * (lo + hi)) - np.abs(c) @ (0.5 * (hi - lo)), abs=1e-12)


def test_random_duals_below_lp(rng):
    for s in range(15):
        net, dom, c, b = problem(s)
        lp = planet_lp_value(net, dom, b, c).value
        for scale in (0.1, 1.0, 10.0):
            q, primal = eval_q(net, dom, b, _rand_rho(rng, net, scale), c)
            assert q[0] <= lp + 1e-8
            assert primal_violation(net, dom, b, primal) <= 1e-9


def test_sigmoid_bound_sound(rng):
    for _ in range(5):
        net = random_net(rng, [3, 6, 5, 1], activation="sigmoid")
        dom = Box(-np.ones(3), np.ones(3))
        b = compute_intermediate_bounds(net, dom)
        val, _ = supergradient_solve(net, dom, b, SolverConfig(iterations=100), None, [1.0])
        xs = dom.sample(rng, 20000)
        assert val[0] <= network_eval(net, xs).min() + 1e-9
        val0, _ = eval_q(net, dom, b, [np.zeros((1, d)) for d in net.hidden_dims()], [1.0])
        assert val[0] >= val0[0]


def test_supergradient_zero_iterations(rng):
    net, dom, c, b = problem(3)
    rho = _rand_rho(rng, net)
    val, out = supergradient_solve(net, dom, b, SolverConfig(iterations=0), rho, c)
    assert val[0] == eval_q(net, dom, b, rho, c)[0][0]
    assert all(np.array_equal(a, o) for a, o in zip(rho, out))


@pytest.mark.parametrize("method", ["supergradient", "proximal"])
def test_anytime_and_best_so_far(method):
    solver = supergradient_solve if method == "supergradient" else proximal_solve
    for s in range(5):
        net, dom, c, b = problem(s)
        lp = planet_lp_value(net, dom, b, c).value
        hist = []
        _, st = wk_backward_bound(net, dom, b, c)
        best, _ = solver(net, dom, b, SolverConfig(method=method, iterations=60), wk_initialize(st), c, hist)
        vals = np.array([h[0] for h in hist])
        assert np.all(vals <= lp + 1e-8)
        assert best[0] == vals.max()
        assert np.all(np.diff(np.maximum.accumulate(vals)) >= 0)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(method="nope")
    with pytest.raises(ValueError):
        SolverConfig(momentum=1.0)
    with pytest.raises(ValueError):
        SolverConfig(eta_start=0.0)
    assert linear_schedule(1.0, 3.0, 0, 5) == 1.0 and linear_schedule(1.0, 3.0, 4, 5) == 3.0


def _state(rng, seed):
    net, dom, c, b = problem(seed)
    prob = DecompProblem(net, dom, b, c)
    rho = _rand_rho(rng, net)
    _, primal = prob.inner_min(_rand_rho(rng, net))
    return prob, rho, primal


def test_conditional_gradient_zero_residual(rng):
    prob, rho, _ = _state(rng, 2)
    _, primal = prob.inner_min(rho)
    # force agreement zB == zA: coefficients are exactly rho
    agreed = primal.copy()
    agreed.zB = [a.copy() for a in agreed.zA[:-1]]
    _, ref = prob.inner_min(rho)
    for k in range(prob.n):
        xhat = conditional_gradient_step(prob, k, agreed, rho, 7.0)
        for got, want in zip(xhat, ref.block(k)):
            assert np.array_equal(got, want)


def test_conditional_gradient_large_eta(rng):
    prob, rho, primal = _state(rng, 4)
    _, ref = prob.inner_min(rho)
    for k in range(prob.n):
        xhat = conditional_gradient_step(prob, k, primal, rho, 1e300)
        for got, want in zip(xhat, ref.block(k)):
            assert np.allclose(got, want)


def test_conditional_gradient_feasible(rng):
    for s in range(5):
        prob, rho, primal = _state(rng, s)
        trial = primal.copy()
        for k in range(prob.n):
            trial.set_block(k, conditional_gradient_step(prob, k, primal, rho, 3.0))
        assert primal_violation(prob.net, prob.dom, prob.bounds, trial) <= 1e-9


def test_step_size_clamp_cases():
    prob = _scalar_prob(-1.0, 1.0)
    primal = PrimalCopies(np.zeros((1, 1)), [np.zeros((1, 1)), np.zeros((1, 1))], [np.zeros((1, 1))],
                          [np.zeros((1, 1))])
    same = primal.block(1)
    assert optimal_step_size(prob, 1, primal, [np.array([[3.0]])], 1.0, same)[0] == 0.0
    move = (np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)))
    # unconstrained minimizer -rho: -3 clamps to 0, 2 clamps to 1
    assert optimal_step_size(prob, 1, primal, [np.array([[3.0]])], 1.0, move)[0] == 0.0
    assert optimal_step_size(prob, 1, primal, [np.array([[-2.0]])], 1.0, move)[0] == 1.0
    assert optimal_step_size(prob, 1, primal, [np.array([[-0.25]])], 1.0, move)[0] == 0.25


def test_step_size_is_line_search_optimum(rng):
    for s in range(5):
        prob, rho, primal = _state(rng, s)
        for k in range(prob.n):
            eta = float(rng.uniform(0.5, 50))
            xhat = conditional_gradient_step(prob, k, primal, rho, eta)
            g = optimal_step_size(prob, k, primal, rho, eta, xhat)

            def L(gam):
                p = primal.copy()
                p.set_block(k, tuple(gam * x + (1 - gam) * v for x, v in zip(xhat, primal.block(k))))
                return prob.augmented_lagrangian(p, rho, eta)[0]

            for d in (-0.01, 0.01):
                assert L(g[0]) <= L(float(np.clip(g[0] + d, 0, 1))) + 1e-10


def test_momentum_zero_runs():
    net, dom, c, b = problem(1)
    _, st = wk_backward_bound(net, dom, b, c)
    cfg = SolverConfig(method="proximal", iterations=30, momentum=0.0)
    val, _ = proximal_solve(net, dom, b, cfg, wk_initialize(st), c)
    assert val[0] >= eval_q(net, dom, b, wk_initialize(st), c)[0][0]


@pytest.mark.parametrize("method", ["supergradient", "proximal"])
def test_batched_equals_sequential(rng, method):
    net = random_net(rng, [4, 9, 7, 3])
    dom = Box(-np.ones(4) * 0.5, np.ones(4) * 0.5)
    b = compute_intermediate_bounds(net, dom)
    C = rng.standard_normal((5, 3))
    _, st = wk_backward_bound(net, dom, b, C)
    rho = wk_initialize(st)
    solver = supergradient_solve if method == "supergradient" else proximal_solve
    cfg = SolverConfig(method=method, iterations=25)
    batch, rb = solver(net, dom, b, cfg, rho, C)
    for i in range(5):
        one, ro = solver(net, dom, b, cfg, [r[i:i + 1] for r in rho], C[i:i + 1])
        assert np.array_equal(one, batch[i:i + 1])
        assert all(np.array_equal(x[i:i + 1], y) for x, y in zip(rb, ro))


def test_primal_feasible_through_proximal_run():
    net, dom, c, b = problem(7)
    _, st = wk_backward_bound(net, dom, b, c)
    seen = []

    def check(k, primal, rho, eta, xhat, gamma):
        seen.append(primal_violation(net, dom, b, primal))

    proximal_solve(net, dom, b, SolverConfig(method="proximal", iterations=20), wk_initialize(st), c,
                   on_step=check)
    assert seen and max(seen) <= 1e-9
