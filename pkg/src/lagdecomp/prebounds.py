"""Input domains, interval propagation, the WK backward-pass bound and intermediate bounds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lagdecomp.hulls import AMBIGUOUS, PASSING, relu_state
from lagdecomp.netcore import AffineLayer, Network, ShapeError, rowdot, sigmoid


class UnsupportedActivation(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=np.float64).ravel()
        hi = np.array(self.upper, dtype=np.float64).ravel()
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs matching shapes and lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def radius(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def bounding_box(self) -> "Box":
        return self

    def argmax_linear(self, g: np.ndarray) -> np.ndarray:
        """Maximizer of ``g . x`` row-wise; zero coefficients go to the lower bound."""
        return np.where(g > 0, self.upper, self.lower)

    def support(self, g: np.ndarray) -> np.ndarray:
        """``max_x g . x`` row-wise."""
        return rowdot(g, self.center) + rowdot(np.abs(g), self.radius)

    def contains(self, x, tol=0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng, m: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(m, self.dim))


@dataclass(frozen=True, eq=False)
class L2Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.array(self.center, dtype=np.float64).ravel())
        if not self.radius > 0:
            raise ValueError("l2 ball radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def bounding_box(self) -> Box:
        return Box(self.center - self.radius, self.center + self.radius)

    def argmax_linear(self, g: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(g, axis=-1, keepdims=True)
        safe = np.where(norm > 0, norm, 1.0)
        return np.where(norm > 0, self.center + self.radius * g / safe, self.center)

    def support(self, g: np.ndarray) -> np.ndarray:
        return rowdot(g, self.center) + self.radius * np.linalg.norm(g, axis=-1)

    def contains(self, x, tol=0.0) -> bool:
        return bool(np.linalg.norm(np.asarray(x) - self.center) <= self.radius + tol)

    def sample(self, rng, m: int) -> np.ndarray:
        d = rng.standard_normal((m, self.dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=(m, 1)) ** (1.0 / self.dim)
        return self.center + r * d


@dataclass(frozen=True, eq=False)
class PreActBounds:
    """``lower[k-1]``, ``upper[k-1]`` bracket the pre-activation of hidden layer ``k``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(np.array(v, dtype=np.float64).ravel() for v in self.lower)
        hi = tuple(np.array(v, dtype=np.float64).ravel() for v in self.upper)
        if len(lo) != len(hi):
            raise ShapeError("lower/upper layer counts differ")
        for k, (a, b) in enumerate(zip(lo, hi)):
            if a.shape != b.shape:
                raise ShapeError(f"layer {k + 1}: bound shapes differ")
            if np.any(a > b) or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k + 1}: need finite bounds with lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def __len__(self):
        return len(self.lower)

    def check(self, net: Network):
        if len(self) < net.n - 1:
            raise ShapeError(f"bounds cover {len(self)} hidden layers, network has {net.n - 1}")
        for k, dim in enumerate(net.hidden_dims()):
            if self.lower[k].size != dim:
                raise ShapeError(f"layer {k + 1}: bounds have {self.lower[k].size} entries, layer has {dim}")

    def clamp(self, k: int, j: int, *, lower=None, upper=None) -> "PreActBounds":
        """Copy with neuron ``j`` of hidden layer ``k`` (1-based) tightened."""
        lo = [a.copy() for a in self.lower]
        hi = [b.copy() for b in self.upper]
        if lower is not None:
            lo[k - 1][j] = max(lo[k - 1][j], lower)
        if upper is not None:
            hi[k - 1][j] = min(hi[k - 1][j], upper)
        return PreActBounds(tuple(lo), tuple(hi))


def _abs_layer(layer: AffineLayer) -> AffineLayer:
    return AffineLayer(
        layer.kind, np.abs(layer.weight), np.zeros_like(layer.bias), layer.in_shape,
        stride=layer.stride, padding=layer.padding,
    )


def interval_affine(layer: AffineLayer, lo: np.ndarray, hi: np.ndarray):
    mid = 0.5 * (lo + hi)
    rad = 0.5 * (hi - lo)
    c = layer.linear(mid[None, :])[0] + layer.full_bias()
    r = _abs_layer(layer).linear(rad[None, :])[0]
    return c - r, c + r


def activation_range(kind: str, lo: np.ndarray, hi: np.ndarray):
    if kind == "relu":
        return np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    return sigmoid(lo), sigmoid(hi)


def interval_propagate(net: Network, dom, upto: int | None = None) -> PreActBounds:
    """Interval bounds on hidden pre-activations (``upto`` layers; default all hidden)."""
    box = dom.bounding_box()
    if box.dim != net.in_dim:
        raise ShapeError(f"domain has dimension {box.dim}, network input is {net.in_dim}")
    upto = net.n - 1 if upto is None else upto
    lows, highs = [], []
    lo, hi = box.lower, box.upper
    for k in range(upto):
        l_k, u_k = interval_affine(net.affine[k], lo, hi)
        lows.append(l_k)
        highs.append(u_k)
        if k < len(net.activations):
            lo, hi = activation_range(net.activations[k], l_k, u_k)
    return PreActBounds(tuple(lows), tuple(highs))


def interval_output(net: Network, dom, bounds: PreActBounds) -> tuple[np.ndarray, np.ndarray]:
    """Interval bounds of the network output given (possibly tightened) hidden bounds."""
    if net.n == 1:
        box = dom.bounding_box()
        return interval_affine(net.affine[0], box.lower, box.upper)
    lo, hi = activation_range(net.activations[-1], bounds.lower[net.n - 2], bounds.upper[net.n - 2])
    return interval_affine(net.affine[-1], lo, hi)


@dataclass
class WkState:
    """Backward-pass quantities; ``nu[k-1]``/``scale[k-1]`` for hidden layer k, ``nu_hat[k]`` for k=0..n-1."""

    nu: list
    nu_hat: list
    scale: list
    nu_out: np.ndarray


def _relu_scale(l: np.ndarray, u: np.ndarray) -> np.ndarray:
    state = relu_state(l, u)
    d = np.zeros_like(l)
    d[state == PASSING] = 1.0
    amb = state == AMBIGUOUS
    d[amb] = u[amb] / (u[amb] - l[amb])
    return d


def wk_backward_bound(net: Network, dom, bounds: PreActBounds, c) -> tuple[np.ndarray, WkState]:
    """Lower bound on ``c . f(x)`` (row-wise for a batch of objectives) by the WK backward pass."""
    if any(a != "relu" for a in net.activations):
        raise UnsupportedActivation("WK bound is implemented for ReLU networks only")
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    if c.shape[1] != net.out_dim:
        raise ShapeError(f"objective has {c.shape[1]} entries, network output is {net.out_dim}")
    bounds.check(net)
    n = net.n
    nu_out = -c
    nus, scales = [None] * (n - 1), [None] * (n - 1)
    nu_hats = [None] * n
    nu = nu_out
    bound = -rowdot(nu, net.affine[n - 1].full_bias())
    for k in range(n - 1, 0, -1):
        nu_hat = net.affine[k].transpose(nu)
        nu_hats[k] = nu_hat
        l, u = bounds.lower[k - 1], bounds.upper[k - 1]
        d = _relu_scale(l, u)
        scales[k - 1] = d
        nu = nu_hat * d
        nus[k - 1] = nu
        bound = bound - rowdot(nu, net.affine[k - 1].full_bias())
        amb = relu_state(l, u) == AMBIGUOUS
        bound = bound + rowdot(np.maximum(nu[:, amb], 0.0), l[amb])
    nu_hat0 = net.affine[0].transpose(nu)
    nu_hats[0] = nu_hat0
    # -x.nu_hat0 - eps*||nu_hat0||  ==  -(support of the domain in direction nu_hat0)
    bound = bound - dom.support(nu_hat0)
    return bound, WkState(nus, nu_hats, scales, nu_out)


def compute_intermediate_bounds(net: Network, dom) -> PreActBounds:
    """Layer-wise best of interval propagation and WK for every hidden neuron."""
    box = dom.bounding_box()
    if box.dim != net.in_dim:
        raise ShapeError(f"domain has dimension {box.dim}, network input is {net.in_dim}")
    lows, highs = [], []
    lo, hi = box.lower, box.upper
    for k in range(1, net.n):
        l_ip, u_ip = interval_affine(net.affine[k - 1], lo, hi)
        l_k, u_k = l_ip, u_ip
        if all(a == "relu" for a in net.activations[: k - 1]):
            sub = net.truncated(k)
            d = net.affine[k - 1].out_dim
            eye = np.eye(d)
            prev = PreActBounds(tuple(lows), tuple(highs))
            wk, _ = wk_backward_bound(sub, dom, prev, np.vstack([eye, -eye]))
            l_k = np.maximum(l_ip, wk[:d])
            u_k = np.minimum(u_ip, -wk[d:])
            l_k = np.minimum(l_k, u_k)
        lows.append(l_k)
        highs.append(u_k)
        lo, hi = activation_range(net.activations[k - 1], l_k, u_k)
    return PreActBounds(tuple(lows), tuple(highs))
