"""Desk-scale ground truth: explicit Planet LP, exact pattern enumeration, feasible points."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from lagdecomp.hulls import AMBIGUOUS, BLOCKED, PASSING, relu_state
from lagdecomp.netcore import Network, ShapeError, network_eval
from lagdecomp.prebounds import Box, PreActBounds
from lagdecomp.simplex import OPTIMAL, LpSolution, simplex

DEFAULT_VAR_CAP = 2000
MAX_ENUM_AMBIGUOUS = 16


class LpTooLarge(ValueError):
    pass


@dataclass
class ExplicitLp:
    """``min objective.x + offset  s.t.  A_ub x <= b_ub,  A_eq x = b_eq`` over free variables."""

    objective: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    offset: float = 0.0
    names: list | None = None

    @property
    def n_vars(self) -> int:
        return self.objective.size

    def violation(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        v = 0.0
        if self.A_ub.size:
            v = max(v, float(np.max(self.A_ub @ x - self.b_ub, initial=0.0)))
        if self.A_eq.size:
            v = max(v, float(np.max(np.abs(self.A_eq @ x - self.b_eq), initial=0.0)))
        return v

    def value(self, x) -> float:
        return float(self.objective @ np.asarray(x) + self.offset)

    def to_lp_text(self) -> str:
        """CPLEX LP text format, for cross-checking with external solvers."""
        names = self.names or [f"x{i}" for i in range(self.n_vars)]

        def expr(row):
            terms = [f"{'+' if a >= 0 else '-'} {abs(a):.17g} {names[i]}" for i, a in enumerate(row) if a != 0.0]
            return " ".join(terms) if terms else "0 " + names[0]

        lines = ["\\ offset " + repr(self.offset), "Minimize", " obj: " + expr(self.objective), "Subject To"]
        for i, (row, rhs) in enumerate(zip(self.A_ub, self.b_ub)):
            lines.append(f" u{i}: {expr(row)} <= {rhs:.17g}")
        for i, (row, rhs) in enumerate(zip(self.A_eq, self.b_eq)):
            lines.append(f" e{i}: {expr(row)} = {rhs:.17g}")
        lines.append("Bounds")
        lines.extend(f" {nm} free" for nm in names)
        lines.append("End")
        return "\n".join(lines) + "\n"


class _Rows:
    def __init__(self, nv):
        self.nv = nv
        self.A, self.b = [], []

    def add(self, coefs: dict, rhs: float):
        row = np.zeros(self.nv)
        for j, a in coefs.items():
            row[j] += a
        self.A.append(row)
        self.b.append(rhs)

    def add_block(self, M: np.ndarray, rhs: np.ndarray):
        self.A.extend(np.atleast_2d(M))
        self.b.extend(np.ravel(rhs))

    def arrays(self):
        if not self.A:
            return np.zeros((0, self.nv)), np.zeros(0)
        return np.array(self.A), np.array(self.b)


def _objective_row(net: Network, c) -> tuple[np.ndarray, float]:
    c = np.asarray(c, dtype=np.float64).ravel()
    if c.size != net.out_dim:
        raise ShapeError(f"objective has {c.size} entries, network output is {net.out_dim}")
    last = net.affine[-1]
    return last.as_dense().T @ c, float(c @ last.full_bias())


def assemble_planet_lp(net: Network, dom, bounds: PreActBounds, c, var_cap: int = DEFAULT_VAR_CAP) -> ExplicitLp:
    """Planet relaxation over variables ``(z0, zhat_1, z_1, ..., zhat_{n-1}, z_{n-1})``."""
    if not isinstance(dom, Box):
        raise ValueError("the explicit LP supports box input domains only")
    if any(a != "relu" for a in net.activations):
        raise ValueError("the explicit LP supports ReLU networks only")
    bounds.check(net)
    dims = net.hidden_dims()
    nv = net.in_dim + 2 * sum(dims)
    if nv > var_cap:
        raise LpTooLarge(f"{nv} variables exceed the cap of {var_cap}")
    offs, pos = [], net.in_dim
    for d in dims:
        offs.append(pos)
        pos += 2 * d
    names = [f"x_{i}" for i in range(net.in_dim)]
    for k, d in enumerate(dims, 1):
        names += [f"zh_{k}_{j}" for j in range(d)] + [f"z_{k}_{j}" for j in range(d)]

    ub, eq = _Rows(nv), _Rows(nv)
    x0 = np.arange(net.in_dim)
    ub.add_block(np.eye(nv)[x0], dom.upper)
    ub.add_block(-np.eye(nv)[x0], -dom.lower)

    prev = x0
    for k, d in enumerate(dims, 1):
        W = net.affine[k - 1].as_dense()
        zh = offs[k - 1] + np.arange(d)
        z = zh + d
        M = np.zeros((d, nv))
        M[:, zh] = np.eye(d)
        M[:, prev] -= W
        eq.add_block(M, net.affine[k - 1].full_bias())
        l, u = bounds.lower[k - 1], bounds.upper[k - 1]
        state = relu_state(l, u)
        for j in range(d):
            a, y = int(zh[j]), int(z[j])
            if state[j] == AMBIGUOUS:
                s = u[j] / (u[j] - l[j])
                ub.add({y: -1.0}, 0.0)
                ub.add({a: 1.0, y: -1.0}, 0.0)
                ub.add({y: 1.0, a: -s}, -s * l[j])
            else:
                if state[j] == PASSING:
                    eq.add({y: 1.0, a: -1.0}, 0.0)
                else:
                    eq.add({y: 1.0}, 0.0)
                ub.add({a: 1.0}, u[j])
                ub.add({a: -1.0}, -l[j])
        prev = z

    obj = np.zeros(nv)
    row, offset = _objective_row(net, c)
    obj[prev] = row
    A_ub, b_ub = ub.arrays()
    A_eq, b_eq = eq.arrays()
    return ExplicitLp(obj, A_ub, b_ub, A_eq, b_eq, offset, names)


def simplex_solve(lp: ExplicitLp) -> LpSolution:
    return simplex(lp.objective, lp.A_ub, lp.b_ub, lp.A_eq, lp.b_eq, offset=lp.offset)


def planet_lp_value(net, dom, bounds, c) -> LpSolution:
    return simplex_solve(assemble_planet_lp(net, dom, bounds, c))


def lp_point_from_forward(net: Network, x) -> np.ndarray:
    """LP variable vector of the true network evaluated at input ``x``."""
    parts = [np.asarray(x, dtype=np.float64)]
    h = parts[0]
    for k in range(net.n - 1):
        zh = net.affine[k].linear(h[None])[0] + net.affine[k].full_bias()
        h = np.maximum(zh, 0.0)
        parts += [zh, h]
    return np.concatenate(parts)


def _pattern_lp(net: Network, dom: Box, bounds: PreActBounds, pattern: dict, c):
    """LP over the input only, with every ReLU fixed by state or by ``pattern``."""
    d_in = net.in_dim
    A_rows, b_rows = [np.eye(d_in), -np.eye(d_in)], [dom.upper, -dom.lower]
    # zhat_k = M x + m, for the current layer
    M = np.eye(d_in)
    m = np.zeros(d_in)
    for k in range(1, net.n):
        W = net.affine[k - 1].as_dense()
        M = W @ M
        m = W @ m + net.affine[k - 1].full_bias()
        l, u = bounds.lower[k - 1].copy(), bounds.upper[k - 1].copy()
        state = relu_state(l, u)
        on = state == PASSING
        for j in np.flatnonzero(state == AMBIGUOUS):
            if pattern[(k, int(j))]:
                l[j] = 0.0
                on[j] = True
            else:
                u[j] = 0.0
        A_rows += [M, -M]
        b_rows += [u - m, m - l]
        M = M * on[:, None]
        m = m * on
    row, offset = _objective_row(net, c)
    obj = row @ M
    offset += row @ m
    return obj, np.vstack(A_rows), np.concatenate(b_rows), offset


def ambiguous_neurons(net: Network, bounds: PreActBounds) -> list:
    out = []
    for k in range(1, net.n):
        st = relu_state(bounds.lower[k - 1], bounds.upper[k - 1])
        out += [(k, int(j)) for j in np.flatnonzero(st == AMBIGUOUS)]
    return out


def exact_min_enumerate(net: Network, dom, bounds: PreActBounds, c, return_point: bool = False):
    """Exact minimum of ``c . f(x)`` over the domain by solving one LP per activation pattern."""
    if not isinstance(dom, Box):
        raise ValueError("enumeration supports box input domains only")
    if any(a != "relu" for a in net.activations):
        raise ValueError("enumeration supports ReLU networks only")
    amb = ambiguous_neurons(net, bounds)
    if len(amb) > MAX_ENUM_AMBIGUOUS:
        raise LpTooLarge(f"{len(amb)} ambiguous ReLUs exceed the enumeration limit {MAX_ENUM_AMBIGUOUS}")
    best, best_x = np.inf, None
    for bits in itertools.product((False, True), repeat=len(amb)):
        obj, A, b, off = _pattern_lp(net, dom, bounds, dict(zip(amb, bits)), c)
        sol = simplex(obj, A, b, offset=off)
        if sol.status == OPTIMAL and sol.value < best:
            best, best_x = sol.value, sol.x
    if return_point:
        return best, best_x
    return best


def feasible_upper_bound(net: Network, dom, bounds, c, candidates) -> tuple[float, np.ndarray]:
    """Best objective value among candidate inputs (all assumed inside the domain)."""
    cand = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    vals = network_eval(net, cand) @ np.asarray(c, dtype=np.float64).ravel()
    i = int(np.argmin(vals))
    return float(vals[i]), cand[i]


def primal_violation(net: Network, dom: Box, bounds: PreActBounds, primal, row: int = 0) -> float:
    """Largest violation of P_0 and every P_k by one batch row of decomposition copies."""
    v = 0.0
    z0 = primal.z0[row]
    v = max(v, float(np.max(dom.lower - z0, initial=0)), float(np.max(z0 - dom.upper, initial=0)))
    for k in range(1, net.n + 1):
        src = z0 if k == 1 else primal.z[k - 2][row]
        expect = net.affine[k - 1].linear(src[None])[0] + net.affine[k - 1].full_bias()
        v = max(v, float(np.max(np.abs(primal.zA[k - 1][row] - expect))))
    for k in range(1, net.n):
        l, u = bounds.lower[k - 1], bounds.upper[k - 1]
        zb, z = primal.zB[k - 1][row], primal.z[k - 1][row]
        v = max(v, float(np.max(l - zb, initial=0)), float(np.max(zb - u, initial=0)))
        st = relu_state(l, u)
        for j in range(l.size):
            if st[j] == PASSING:
                v = max(v, abs(z[j] - zb[j]))
            elif st[j] == BLOCKED:
                v = max(v, abs(z[j]))
            else:
                chord = u[j] * (zb[j] - l[j]) / (u[j] - l[j])
                v = max(v, -z[j], zb[j] - z[j], z[j] - chord)
    return v
