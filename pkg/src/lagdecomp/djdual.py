"""Plain Lagrangian-relaxation dual d(mu, lambda) for ReLU nets, its supergradient solver,
and the map from its duals to decomposition duals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lagdecomp.decomp import SolverConfig, _Adam, _rows, linear_schedule
from lagdecomp.netcore import Network, ShapeError
from lagdecomp.prebounds import PreActBounds, UnsupportedActivation, WkState


@dataclass
class DjDuals:
    """``mu[k-1]``, ``lam[k-1]`` for hidden layer k; each of shape ``(batch, dim_k)``."""

    mu: list
    lam: list

    def copy(self) -> "DjDuals":
        return DjDuals([m.copy() for m in self.mu], [v.copy() for v in self.lam])


@dataclass
class DjArgmin:
    z0: np.ndarray
    zhat: list
    z: list


def _check(net: Network, bounds: PreActBounds, c, duals: DjDuals):
    if any(a != "relu" for a in net.activations):
        raise UnsupportedActivation("the relaxation dual is implemented for ReLU networks only")
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    if c.shape[1] != net.out_dim:
        raise ShapeError(f"objective has {c.shape[1]} entries, network output is {net.out_dim}")
    bounds.check(net)
    dims = net.hidden_dims()
    if len(duals.mu) != len(dims) or len(duals.lam) != len(dims):
        raise ShapeError(f"expected {len(dims)} blocks of (mu, lambda)")
    for k, d in enumerate(dims):
        for v in (duals.mu[k], duals.lam[k]):
            if v.shape != (c.shape[0], d):
                raise ShapeError(f"dual block {k + 1}: shape {v.shape} != {(c.shape[0], d)}")
    return c


def _zhat_min(mu, lam, l, u):
    """Per-neuron argmin over [l, u] of ``mu*x - lam*relu(x)``; candidates l, 0, u, ties to the smallest."""
    shape = mu.shape
    lb = np.broadcast_to(l, shape)
    ub = np.broadcast_to(u, shape)
    mid = np.broadcast_to(np.clip(0.0, l, u), shape)
    best_x = lb.copy()
    best_v = mu * lb - lam * np.maximum(lb, 0.0)
    for x in (mid, ub):
        v = mu * x - lam * np.maximum(x, 0.0)
        better = v < best_v
        best_x = np.where(better, x, best_x)
        best_v = np.where(better, v, best_v)
    return best_x, best_v


def eval_d(net: Network, dom, bounds: PreActBounds, duals: DjDuals, c):
    """Returns ``(d(mu, lambda) per objective row, argmin)``; ``mu_n = -c``."""
    c = _check(net, bounds, c, duals)
    n = net.n
    mu = [np.asarray(m, dtype=np.float64) for m in duals.mu] + [-c]
    total = _rows(c, np.broadcast_to(net.affine[-1].full_bias(), c.shape))
    g0 = net.affine[0].transpose(mu[0])
    z0 = dom.argmax_linear(g0)
    total = total - _rows(g0, z0)
    zhats, zs = [], []
    for k in range(1, n):
        l, u = bounds.lower[k - 1], bounds.upper[k - 1]
        m, lam = mu[k - 1], duals.lam[k - 1]
        total = total - _rows(m, np.broadcast_to(net.affine[k - 1].full_bias(), m.shape))
        zh, val = _zhat_min(m, lam, l, u)
        total = total + val.sum(axis=1)
        a = lam - net.affine[k].transpose(mu[k])
        z = np.where(a < 0, np.maximum(u, 0.0), np.maximum(l, 0.0))
        total = total + _rows(a, z)
        zhats.append(zh)
        zs.append(z)
    return total, DjArgmin(z0, zhats, zs)


def supergradient(net: Network, arg: DjArgmin) -> DjDuals:
    """``d/dmu_k = zhat_k - W_k z_{k-1} - b_k``, ``d/dlam_k = z_k - relu(zhat_k)``."""
    g_mu, g_lam = [], []
    prev = arg.z0
    for k in range(1, net.n):
        layer = net.affine[k - 1]
        g_mu.append(arg.zhat[k - 1] - layer.linear(prev) - layer.full_bias())
        g_lam.append(arg.z[k - 1] - np.maximum(arg.zhat[k - 1], 0.0))
        prev = arg.z[k - 1]
    return DjDuals(g_mu, g_lam)


def dsg_initialize(state: WkState) -> DjDuals:
    mu = [np.array(v, dtype=np.float64) for v in state.nu]
    return DjDuals(mu, [np.zeros_like(m) for m in mu])


def dsg_supergradient_solve(net: Network, dom, bounds: PreActBounds, config: SolverConfig, init: DjDuals,
                            c=None, history=None):
    """Adam ascent on d. Returns ``(best bound per objective, duals attaining it)``.

    The duals are those of the best iterate (per objective row), so that feeding them
    to :func:`dec_dsg_bridge` can only improve on the returned bound.
    """
    duals = init.copy()
    _check(net, bounds, c, duals)
    params = duals.mu + duals.lam
    adam = _Adam(params, config)
    h = len(duals.mu)
    T = config.iterations
    best, best_params = None, None
    for t in range(T + 1):
        val, arg = eval_d(net, dom, bounds, DjDuals(params[:h], params[h:]), c)
        if best is None:
            best, best_params = val, [p.copy() for p in params]
        else:
            up = val > best
            best = np.where(up, val, best)
            best_params = [np.where(up[:, None], p, q) for p, q in zip(params, best_params)]
        if history is not None:
            history.append(val)
        if t == T or h == 0:
            break
        g = supergradient(net, arg)
        params = adam.ascend(params, g.mu + g.lam, linear_schedule(config.alpha_start, config.alpha_end, t, T))
    return best, DjDuals(best_params[:h], best_params[h:])


def dec_dsg_bridge(duals: DjDuals) -> list:
    """Decomposition duals ``rho_k = mu_k``, whose q value dominates d(mu, lambda)."""
    return [np.array(m, dtype=np.float64) for m in duals.mu]
