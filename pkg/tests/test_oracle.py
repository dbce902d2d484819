import numpy as np
import pytest
from scipy.optimize import linprog

from lagdecomp.hulls import AMBIGUOUS, relu_state
from lagdecomp.instances import random_net
from lagdecomp.netcore import Network, dense
from lagdecomp.oracle import (
    LpTooLarge, ambiguous_neurons, assemble_planet_lp, exact_min_enumerate, feasible_upper_bound,
    lp_point_from_forward, planet_lp_value, simplex_solve,
)
from lagdecomp.prebounds import Box, L2Ball, compute_intermediate_bounds
from lagdecomp.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, simplex

from conftest import problem


def test_simplex_trivial():
    sol = simplex([1.0], [[1.0], [-1.0]], [1.0, 0.0])
    assert sol.status == OPTIMAL and sol.value == 0.0 and sol.x.tolist() == [0.0]


def test_simplex_status():
    assert simplex([1.0], [[1.0], [-1.0]], [0.0, -1.0]).status == INFEASIBLE
    assert simplex([-1.0], [[-1.0]], [0.0]).status == UNBOUNDED


def test_simplex_vs_scipy(rng):
    for _ in range(100):
        n, m = int(rng.integers(2, 8)), int(rng.integers(1, 10))
        c = rng.standard_normal(n)
        A = np.vstack([rng.standard_normal((m, n)), np.eye(n), -np.eye(n)])
        b = np.concatenate([rng.uniform(0, 2, m), np.ones(2 * n)])
        A_eq = rng.standard_normal((1, n))
        sol = simplex(c, A, b, A_eq, [0.0])
        ref = linprog(c, A_ub=A, b_ub=b, A_eq=A_eq, b_eq=[0.0], bounds=[(None, None)] * n)
        assert sol.value == pytest.approx(ref.fun, abs=1e-8)


def test_simplex_degenerate_redundant():
    # duplicated equality rows and a degenerate vertex
    sol = simplex([1.0, 1.0], [[-1.0, 0.0], [0.0, -1.0], [-1.0, -1.0]], [0.0, 0.0, 0.0],
                  [[1.0, -1.0], [2.0, -2.0]], [0.0, 0.0])
    assert sol.status == OPTIMAL and sol.value == 0.0


def test_tiny_lp(tiny):
    net, dom, b = tiny
    lp = assemble_planet_lp(net, dom, b, [1.0])
    assert lp.n_vars == 5
    # 2 box rows + 3 hull rows per ambiguous neuron
    assert lp.A_ub.shape[0] == 2 + 3 * 2
    sol = simplex_solve(lp)
    assert sol.value == 0.0
    assert exact_min_enumerate(net, dom, b, [1.0]) == 0.0
    assert feasible_upper_bound(net, dom, b, [1.0], [[0.0]])[0] == 0.0


def test_all_blocked_rows():
    net = Network((dense([[1.0], [2.0]], [-5.0, -5.0]), dense([[1.0, -1.0]])), ("relu",))
    dom = Box([-1.0], [1.0])
    b = compute_intermediate_bounds(net, dom)
    lp = assemble_planet_lp(net, dom, b, [1.0])
    z = [lp.names.index(f"z_1_{j}") for j in range(2)]
    for j in z:
        rows = [i for i in range(lp.A_eq.shape[0]) if lp.A_eq[i, j] == 1.0 and np.count_nonzero(lp.A_eq[i]) == 1]
        assert rows and lp.b_eq[rows[0]] == 0.0


def test_errors(tiny, rng):
    net, dom, b = tiny
    with pytest.raises(LpTooLarge):
        assemble_planet_lp(net, dom, b, [1.0], var_cap=4)
    with pytest.raises(ValueError):
        assemble_planet_lp(net, L2Ball([0.0], 1.0), b, [1.0])
    big = random_net(rng, [2, 40, 1])
    bd = Box([-3, -3], [3, 3])
    bb = compute_intermediate_bounds(big, bd)
    assert len(ambiguous_neurons(big, bb)) > 16
    with pytest.raises(LpTooLarge):
        exact_min_enumerate(big, bd, bb, [1.0])


def test_lp_text_dump(tiny):
    net, dom, b = tiny
    text = assemble_planet_lp(net, dom, b, [1.0]).to_lp_text()
    assert text.startswith("\\ offset") and "Subject To" in text and text.rstrip().endswith("End")


def test_sandwich_and_ordering(rng):
    for s in range(15):
        net, dom, c, b = problem(s, max_width=8)
        lp = assemble_planet_lp(net, dom, b, c)
        sol = simplex_solve(lp)
        xs = np.vstack([dom.center, dom.sample(rng, 50)])
        for x in xs:
            pt = lp_point_from_forward(net, x)
            assert lp.violation(pt) <= 1e-9
            assert sol.value <= lp.value(pt) + 1e-9
        if len(ambiguous_neurons(net, b)) <= 10:
            ex = exact_min_enumerate(net, dom, b, c)
            assert ex >= sol.value - 1e-9
            assert feasible_upper_bound(net, dom, b, c, xs)[0] >= ex - 1e-9


def test_enumeration_without_ambiguous_equals_lp(rng):
    W1 = rng.uniform(0.1, 1, (3, 2))
    net = Network((dense(W1, [5.0, -9.0, 5.0]), dense(rng.standard_normal((1, 3)))), ("relu",))
    dom = Box([0, 0], [1, 1])
    b = compute_intermediate_bounds(net, dom)
    assert not np.any(relu_state(b.lower[0], b.upper[0]) == AMBIGUOUS)
    assert exact_min_enumerate(net, dom, b, [1.0]) == pytest.approx(planet_lp_value(net, dom, b, [1.0]).value,
                                                                  abs=1e-12)


def test_simplex_deterministic():
    net, dom, c, b = problem(9)
    vals = {planet_lp_value(net, dom, b, c).value for _ in range(3)}
    assert len(vals) == 1
