"""Lagrangian decomposition dual of the Planet relaxation and its two solvers.

Indexing: hidden layer ``k`` (1-based, ``k = 1..n-1``) lives at list position
``k - 1``. ``primal.zA[k - 1]`` is the copy of the pre-activation of affine
layer ``k`` owned by the subproblem before it (P_0 for k = 1); ``primal.zB[k - 1]``
is the copy owned by the subproblem P_k after it. The output duals are fixed
to ``-c`` and never stored.

Every quantity is batched over objectives: ``c`` has shape ``(B, out_dim)``
and every dual / primal block has a leading batch axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from lagdecomp.hulls import AMBIGUOUS, BLOCKED, PASSING, hull_edge_min, relu_state, relu_vertex_min, sigmoid_hull_build
from lagdecomp.netcore import Network, ShapeError
from lagdecomp.prebounds import PreActBounds, WkState


def _rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("bi,bi->b", a, b)


@dataclass(frozen=True)
class SolverConfig:
    method: str = "supergradient"
    iterations: int = 100
    alpha_start: float = 1e-2
    alpha_end: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    eta_start: float = 10.0
    eta_end: float = 500.0
    momentum: float = 0.3
    inner_iterations: int = 2

    def __post_init__(self):
        if self.method not in ("supergradient", "proximal", "dsg"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.iterations < 0 or self.inner_iterations < 1:
            raise ValueError("iteration counts must be non-negative (inner >= 1)")
        if min(self.alpha_start, self.alpha_end, self.eta_start, self.eta_end) <= 0:
            raise ValueError("step sizes and proximal weights must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


def linear_schedule(start: float, end: float, t: int, total: int) -> float:
    if total <= 1:
        return start
    return start + (end - start) * t / (total - 1)


@dataclass
class PrimalCopies:
    z0: np.ndarray
    zA: list
    zB: list = field(default_factory=list)
    z: list = field(default_factory=list)

    def copy(self) -> "PrimalCopies":
        return PrimalCopies(self.z0.copy(), [a.copy() for a in self.zA],
                            [b.copy() for b in self.zB], [v.copy() for v in self.z])

    def block(self, k: int):
        """Variables of subproblem P_k: ``(z0, zA1)`` for k=0, ``(zB_k, z_k, zA_{k+1})`` otherwise."""
        if k == 0:
            return (self.z0, self.zA[0])
        return (self.zB[k - 1], self.z[k - 1], self.zA[k])

    def set_block(self, k: int, values):
        if k == 0:
            self.z0, self.zA[0] = values
        else:
            self.zB[k - 1], self.z[k - 1], self.zA[k] = values

    def residuals(self) -> list:
        return [b - a for a, b in zip(self.zA, self.zB)]


class DecompProblem:
    """Fixed data of one bounding problem batch: network, domain, intermediate bounds, objectives."""

    def __init__(self, net: Network, dom, bounds: PreActBounds, c):
        c = np.atleast_2d(np.asarray(c, dtype=np.float64))
        if c.shape[1] != net.out_dim:
            raise ShapeError(f"objective has {c.shape[1]} entries, network output is {net.out_dim}")
        if dom.bounding_box().dim != net.in_dim:
            raise ShapeError("domain dimension does not match the network input")
        if bounds is None:
            raise ValueError("intermediate bounds are required")
        bounds.check(net)
        self.net, self.dom, self.bounds, self.c = net, dom, bounds, c
        self.n = net.n
        self.batch = c.shape[0]
        self.states = []
        self.hulls = []
        for h in range(self.n - 1):
            l, u = bounds.lower[h], bounds.upper[h]
            if net.activations[h] == "relu":
                self.states.append(relu_state(l, u))
                self.hulls.append(None)
            else:
                self.states.append(None)
                self.hulls.append([sigmoid_hull_build(a, b) for a, b in zip(l, u)])

    # objective coefficient of zA_n is c, i.e. rho_n = -c
    def rho_out(self) -> np.ndarray:
        return -self.c

    def zero_duals(self) -> list:
        return [np.zeros((self.batch, d)) for d in self.net.hidden_dims()]

    def check_duals(self, rho):
        dims = self.net.hidden_dims()
        if len(rho) != len(dims):
            raise ShapeError(f"expected {len(dims)} dual blocks, got {len(rho)}")
        for k, (r, d) in enumerate(zip(rho, dims)):
            if r.shape != (self.batch, d):
                raise ShapeError(f"dual block {k + 1}: shape {r.shape} != {(self.batch, d)}")

    def p0(self, rho1: np.ndarray):
        """argmin of ``-rho1 . zA1`` over P_0; returns ``(z0, zA1, value)``."""
        layer = self.net.affine[0]
        g = layer.transpose(rho1)
        z0 = self.dom.argmax_linear(g)
        zA1 = layer.linear(z0) + layer.full_bias()
        return z0, zA1, -_rows(rho1, zA1)

    def pk(self, k: int, rho_k: np.ndarray, rho_next: np.ndarray):
        """argmin of ``rho_k . zB_k - rho_next . zA_{k+1}`` over P_k; returns ``(zB, z, zA_next, value)``."""
        layer = self.net.affine[k]
        w = layer.transpose(rho_next)
        l, u = self.bounds.lower[k - 1], self.bounds.upper[k - 1]
        if self.states[k - 1] is not None:
            zB, z = self._relu_block(self.states[k - 1], l, u, rho_k, w)
        else:
            zB, z = self._sigmoid_block(self.hulls[k - 1], rho_k, w)
        zA = layer.linear(z) + layer.full_bias()
        return zB, z, zA, _rows(rho_k, zB) - _rows(rho_next, zA)

    @staticmethod
    def _relu_block(state, l, u, rho, w):
        shape = rho.shape
        zB = np.empty(shape)
        z = np.empty(shape)
        lb = np.broadcast_to(l, shape)
        ub = np.broadcast_to(u, shape)
        pas = np.broadcast_to(state == PASSING, shape)
        coef = rho - w
        zB[pas] = np.where(coef[pas] < 0, ub[pas], lb[pas])
        z[pas] = zB[pas]
        blk = np.broadcast_to(state == BLOCKED, shape)
        zB[blk] = np.where(rho[blk] < 0, ub[blk], lb[blk])
        z[blk] = 0.0
        amb = np.broadcast_to(state == AMBIGUOUS, shape)
        if amb.any():
            zb, zz, _ = relu_vertex_min(rho[amb], -w[amb], lb[amb], ub[amb])
            zB[amb] = zb
            z[amb] = zz
        return zB, z

    @staticmethod
    def _sigmoid_block(hulls, rho, w):
        zB = np.empty(rho.shape)
        z = np.empty(rho.shape)
        for b in range(rho.shape[0]):
            for j, hull in enumerate(hulls):
                # maximize w*z: upper (concave) edge if w >= 0, lower (convex) edge otherwise
                edge = hull.upper if w[b, j] >= 0 else hull.lower
                x, zx, _ = hull_edge_min(edge, rho[b, j], -w[b, j])
                zB[b, j] = x
                z[b, j] = zx
        return zB, z

    def coefficient(self, rho, k: int) -> np.ndarray:
        """Dual attached to layer k's pre-activation, ``-c`` past the last hidden layer."""
        return rho[k - 1] if k <= self.n - 1 else self.rho_out()

    def inner_min(self, rho) -> tuple[np.ndarray, PrimalCopies]:
        """Value of q(rho) and the minimizing copies."""
        n = self.n
        z0, zA1, total = self.p0(self.coefficient(rho, 1))
        primal = PrimalCopies(z0, [zA1])
        for k in range(1, n):
            zB, z, zA, val = self.pk(k, rho[k - 1], self.coefficient(rho, k + 1))
            primal.zB.append(zB)
            primal.z.append(z)
            primal.zA.append(zA)
            total = total + val
        return total, primal

    def lagrangian(self, primal: PrimalCopies, rho) -> np.ndarray:
        """``c . zA_n + sum_k rho_k . (zB_k - zA_k)`` at given copies."""
        val = _rows(self.c, primal.zA[-1])
        for k in range(1, self.n):
            val = val + _rows(rho[k - 1], primal.zB[k - 1] - primal.zA[k - 1])
        return val

    def augmented_lagrangian(self, primal: PrimalCopies, rho, eta: float) -> np.ndarray:
        val = self.lagrangian(primal, rho)
        for r in primal.residuals():
            val = val + _rows(r, r) / (2.0 * eta)
        return val


def inner_min_p0(net: Network, dom, rho1) -> tuple[np.ndarray, np.ndarray]:
    rho1 = np.atleast_2d(np.asarray(rho1, dtype=np.float64))
    layer = net.affine[0]
    z0 = dom.argmax_linear(layer.transpose(rho1))
    return z0, layer.linear(z0) + layer.full_bias()


def inner_min_pk(prob: DecompProblem, k: int, rho_k, rho_next):
    """P_k minimizer for hidden layer ``k`` of ``prob``; ``rho_next`` is ``-c`` when k = n-1."""
    if prob.bounds is None or len(prob.bounds) < k:
        raise ValueError(f"no intermediate bounds for layer {k}")
    return prob.pk(k, np.atleast_2d(rho_k), np.atleast_2d(rho_next))[:3]


def eval_q(net: Network, dom, bounds: PreActBounds, rho, c) -> tuple[np.ndarray, PrimalCopies]:
    prob = DecompProblem(net, dom, bounds, c)
    rho = [np.atleast_2d(np.asarray(r, dtype=np.float64)) for r in rho]
    prob.check_duals(rho)
    return prob.inner_min(rho)


def wk_initialize(state: WkState) -> list:
    """Decomposition duals reproducing the WK bound exactly: ``rho_k = nu_k``."""
    return [np.array(v, dtype=np.float64) for v in state.nu]


class _Adam:
    def __init__(self, params, cfg: SolverConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def ascend(self, params, grads, lr: float):
        cfg = self.cfg
        self.t += 1
        c1 = 1.0 - cfg.beta1 ** self.t
        c2 = 1.0 - cfg.beta2 ** self.t
        out = []
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            out.append(p + lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps_adam))
        return out


def _prepare(net, dom, bounds, c, rho_init):
    prob = DecompProblem(net, dom, bounds, c)
    if rho_init is None:
        rho = prob.zero_duals()
    else:
        rho = [np.array(np.atleast_2d(r), dtype=np.float64) for r in rho_init]
    prob.check_duals(rho)
    return prob, rho


def supergradient_solve(net, dom, bounds, config: SolverConfig, rho_init=None, c=None, history=None):
    """Adam ascent on q(rho). Returns ``(best bound per objective, final duals)``.

    ``history``, if a list, receives the bound evaluated at every iterate.
    """
    prob, rho = _prepare(net, dom, bounds, c, rho_init)
    adam = _Adam(rho, config)
    T = config.iterations
    best = None
    for t in range(T + 1):
        val, primal = prob.inner_min(rho)
        best = val if best is None else np.maximum(best, val)
        if history is not None:
            history.append(val)
        if t == T or prob.n == 1:
            break
        grads = primal.residuals()
        rho = adam.ascend(rho, grads, linear_schedule(config.alpha_start, config.alpha_end, t, T))
    return best, rho


def conditional_gradient_step(prob: DecompProblem, k: int, primal: PrimalCopies, rho, eta: float):
    """Minimizer of the augmented Lagrangian's linearization over P_k (k=0 is P_0).

    The linear coefficients are the next duals ``rho + (zB - zA) / eta``.
    """
    n = prob.n

    def g(j):
        if j > n - 1:
            return prob.rho_out()
        return rho[j - 1] + (primal.zB[j - 1] - primal.zA[j - 1]) / eta

    if k == 0:
        z0, zA1, _ = prob.p0(g(1))
        return (z0, zA1)
    zB, z, zA, _ = prob.pk(k, g(k), g(k + 1))
    return (zB, z, zA)


def optimal_step_size(prob: DecompProblem, k: int, primal: PrimalCopies, rho, eta: float, xhat) -> np.ndarray:
    """Exact line search of the augmented Lagrangian along ``xhat - current`` for block k, clamped to [0, 1]."""
    n = prob.n
    num = np.zeros(prob.batch)
    den = np.zeros(prob.batch)
    if k >= 1:
        d_b = xhat[0] - primal.zB[k - 1]
        g_k = rho[k - 1] + (primal.zB[k - 1] - primal.zA[k - 1]) / eta
        num += _rows(g_k, d_b)
        den += _rows(d_b, d_b) / eta
    d_a = xhat[-1] - primal.zA[k]
    if k + 1 <= n - 1:
        g_next = rho[k] + (primal.zB[k] - primal.zA[k]) / eta
        num -= _rows(g_next, d_a)
        den += _rows(d_a, d_a) / eta
    else:
        num += _rows(prob.c, d_a)
    safe = np.where(den < 1e-12, 1.0, den)
    return np.where(den < 1e-12, 0.0, np.clip(-num / safe, 0.0, 1.0))


def proximal_solve(net, dom, bounds, config: SolverConfig, rho_init=None, c=None, history=None,
                   on_step: Callable | None = None):
    """Method of multipliers with block Frank-Wolfe inner steps. Returns ``(best bound, final duals)``.

    ``on_step(k, primal, rho, eta, xhat, gamma)`` is called before every block update.
    """
    prob, rho = _prepare(net, dom, bounds, c, rho_init)
    n = prob.n
    val, primal = prob.inner_min(rho)
    best = val
    if history is not None:
        history.append(val)
    if n == 1:
        return best, rho
    pi = [np.zeros_like(r) for r in rho]
    T = config.iterations
    for t in range(T):
        eta = linear_schedule(config.eta_start, config.eta_end, t, T)
        steps = [r / eta for r in primal.residuals()]
        if config.momentum > 0:
            pi = [config.momentum * p + s for p, s in zip(pi, steps)]
            rho = [r + p for r, p in zip(rho, pi)]
        else:
            rho = [r + s for r, s in zip(rho, steps)]
        for _ in range(config.inner_iterations):
            for k in range(n):
                xhat = conditional_gradient_step(prob, k, primal, rho, eta)
                gamma = optimal_step_size(prob, k, primal, rho, eta, xhat)
                if on_step is not None:
                    on_step(k, primal, rho, eta, xhat, gamma)
                gcol = gamma[:, None]
                cur = primal.block(k)
                primal.set_block(k, tuple(gcol * x + (1.0 - gcol) * v for x, v in zip(xhat, cur)))
        val, _ = prob.inner_min(rho)
        best = np.maximum(best, val)
        if history is not None:
            history.append(val)
    return best, rho


def solve(net, dom, bounds, config: SolverConfig, rho_init=None, c=None, history=None):
    if config.method == "proximal":
        return proximal_solve(net, dom, bounds, config, rho_init, c, history)
    if config.method == "supergradient":
        return supergradient_solve(net, dom, bounds, config, rho_init, c, history)
    raise ValueError(f"{config.method!r} is not a decomposition solver")
