"""Convex hulls of ReLU / sigmoid on a box and the scalar minimizations over them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BLOCKED, PASSING, AMBIGUOUS = 0, 1, 2
# below this width an ambiguous interval is treated as linear
DEGENERATE_WIDTH = 1e-9


class HullDomainError(ValueError):
    pass


def relu_state(l, u) -> np.ndarray:
    """Per-neuron tag: BLOCKED (u <= 0), PASSING (l >= 0) or AMBIGUOUS."""
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    state = np.full(np.broadcast(l, u).shape, AMBIGUOUS, dtype=np.int8)
    state[u <= 0] = BLOCKED
    state[l >= 0] = PASSING
    tiny = (state == AMBIGUOUS) & (u - l < DEGENERATE_WIDTH)
    state[tiny & (0.5 * (l + u) > 0)] = PASSING
    state[tiny & (0.5 * (l + u) <= 0)] = BLOCKED
    return state


def relu_hull_eval(l: float, u: float, zhat: float) -> tuple[float, float]:
    """Lower and upper edge of the ReLU hull at ``zhat``."""
    if not l <= zhat <= u:
        raise HullDomainError(f"zhat={zhat} outside [{l}, {u}]")
    if u <= 0:
        return 0.0, 0.0
    if l >= 0:
        return zhat, zhat
    return max(0.0, zhat), u * (zhat - l) / (u - l)


def relu_vertex_min(a, b, l, u):
    """Minimize ``a*zhat + b*max(zhat, 0)`` over the triangle vertices (l,0), (0,0), (u,u).

    Vectorized over neurons. Ties go to the smallest ``zhat``.
    """
    a, b, l, u = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (a, b, l, u)))
    if np.any(l >= 0) or np.any(u <= 0):
        raise HullDomainError("relu_vertex_min needs ambiguous bounds l < 0 < u")
    v_l = a * l
    v_u = (a + b) * u
    zhat = np.where(v_l <= 0.0, l, 0.0)
    val = np.minimum(v_l, 0.0)
    take_u = v_u < val
    zhat = np.where(take_u, u, zhat)
    val = np.where(take_u, v_u, val)
    z = np.maximum(zhat, 0.0)
    if zhat.ndim == 0:
        return float(zhat), float(z), float(val)
    return zhat, z, val


def _sig(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _dsig(x: float) -> float:
    s = _sig(x)
    return s * (1.0 - s)


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class Piece:
    """One piece of a hull edge on ``[lo, hi]``: a line or the sigmoid itself."""

    lo: float
    hi: float
    kind: str  # "line" | "sigmoid"
    slope: float = 0.0
    intercept: float = 0.0

    def __call__(self, x):
        if self.kind == "line":
            return self.slope * x + self.intercept
        return _sig(x)


@dataclass(frozen=True)
class SigmoidHull:
    l: float
    u: float
    upper: tuple  # concave edge, pieces ordered by lo
    lower: tuple  # convex edge
    t_upper: float | None = None
    t_lower: float | None = None

    @property
    def degenerate(self) -> bool:
        return self.l == self.u

    @staticmethod
    def _eval(pieces, x):
        for p in pieces:
            if x <= p.hi:
                return p(x)
        return pieces[-1](x)

    def phi(self, x: float) -> float:
        return self._eval(self.upper, x)

    def psi(self, x: float) -> float:
        return self._eval(self.lower, x)


def _line(x0, y0, x1, y1, lo, hi) -> Piece:
    slope = (y1 - y0) / (x1 - x0)
    return Piece(lo, hi, "line", slope, y0 - slope * x0)


def tangent_point(l: float, hi: float = 50.0, tol: float = 1e-10) -> float:
    """``t > 0`` with ``sigma'(t) = (sigma(t) - sigma(l)) / (t - l)`` for ``l < 0``, by bisection."""
    sl = _sig(l)

    def f(t):
        return _dsig(t) * (t - l) - (_sig(t) - sl)

    a, b = max(0.0, l), hi
    if f(b) >= 0:
        raise HullDomainError(f"tangent point for l={l} not bracketed in [{a}, {b}]")
    if f(a) <= 0:
        # l within rounding of 0: sigma is already concave from l
        return a
    for _ in range(200):
        m = 0.5 * (a + b)
        if f(m) > 0:
            a = m
        else:
            b = m
        if b - a <= 1e-15 * max(1.0, abs(m)):
            break
    t = 0.5 * (a + b)
    resid = abs(_dsig(t) - (_sig(t) - sl) / (t - l))
    if resid > tol and t - l > 1e-6:
        raise HullDomainError(f"tangent solve residual {resid:.3e} for l={l}")
    return t


def _upper_pieces(l: float, u: float):
    if l >= 0:
        # sigma concave on [l, u]
        return (Piece(l, u, "sigmoid"),), None
    chord = (_sig(u) - _sig(l)) / (u - l)
    if _dsig(u) >= chord:
        return (_line(l, _sig(l), u, _sig(u), l, u),), None
    t = tangent_point(l)
    return (_line(l, _sig(l), t, _sig(t), l, t), Piece(t, u, "sigmoid")), t


def _mirror(pieces):
    # sigma(x) = 1 - sigma(-x): reflect an upper edge on [-u, -l] into a lower edge on [l, u]
    out = []
    for p in reversed(pieces):
        if p.kind == "line":
            out.append(Piece(-p.hi, -p.lo, "line", p.slope, 1.0 - p.intercept))
        else:
            out.append(Piece(-p.hi, -p.lo, "sigmoid"))
    return tuple(out)


def sigmoid_hull_build(l: float, u: float) -> SigmoidHull:
    if l > u:
        raise HullDomainError(f"l={l} > u={u}")
    if l == u:
        pt = (Piece(l, u, "sigmoid"),)
        return SigmoidHull(l, u, pt, pt)
    upper, t_up = _upper_pieces(l, u)
    refl, t_refl = _upper_pieces(-u, -l)
    lower = _mirror(refl)
    return SigmoidHull(l, u, upper, lower, t_up, None if t_refl is None else -t_refl)


def sigmoid_piece_min(c_lin: float, c_sig: float, l: float, u: float) -> tuple[float, float]:
    """Minimize ``c_lin*x + c_sig*sigmoid(x)`` over ``[l, u]``; ties to the smallest x."""
    cands = [l, u]
    if c_sig != 0.0:
        disc = 1.0 + 4.0 * c_lin / c_sig
        if disc >= 0.0:
            r = math.sqrt(disc)
            for s in ((1.0 - r) / 2.0, (1.0 + r) / 2.0):
                if 0.0 < s < 1.0:
                    x = _logit(s)
                    if l < x < u:
                        cands.append(x)
    best_x, best_v = None, math.inf
    for x in sorted(cands):
        v = c_lin * x + c_sig * _sig(x)
        if v < best_v:
            best_x, best_v = x, v
    return best_x, best_v


def hull_edge_min(pieces, c_lin: float, c_act: float) -> tuple[float, float, float]:
    """Minimize ``c_lin*x + c_act*edge(x)`` along a hull edge made of pieces.

    Returns ``(x, edge(x), value)``; ties to the smallest x.
    """
    best = (None, None, math.inf)
    for p in pieces:
        if p.kind == "line":
            coef = c_lin + c_act * p.slope
            x = p.hi if coef < 0 else p.lo
            v = coef * x + c_act * p.intercept
        else:
            x, v = sigmoid_piece_min(c_lin, c_act, p.lo, p.hi)
        if v < best[2]:
            best = (x, p(x), v)
    return best
