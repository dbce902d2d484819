"""Best-first branch and bound over ReLU splits, with any of the bounding methods as subroutine."""
from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from lagdecomp.decomp import DecompProblem, SolverConfig, proximal_solve, supergradient_solve, wk_initialize
from lagdecomp.djdual import dec_dsg_bridge, dsg_initialize, dsg_supergradient_solve
from lagdecomp.hulls import AMBIGUOUS, relu_state
from lagdecomp.netcore import Network, ShapeError, network_eval
from lagdecomp.oracle import _pattern_lp
from lagdecomp.prebounds import (
    Box, PreActBounds, activation_range, compute_intermediate_bounds, interval_affine, interval_output,
    wk_backward_bound,
)
from lagdecomp.simplex import OPTIMAL, simplex

BOUND_METHODS = ("ip", "wk", "supergradient", "proximal", "dsg", "dec-dsg")

ROBUST, COUNTEREXAMPLE, TIMEOUT = "Robust", "CounterExample", "Timeout"


@dataclass
class Property:
    """``c . f(x) >= threshold`` for every x in the domain."""

    net: Network
    dom: object
    c: np.ndarray
    threshold: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        if self.c.size != self.net.out_dim:
            raise ShapeError(f"objective has {self.c.size} entries, network output is {self.net.out_dim}")

    def value(self, x) -> np.ndarray:
        return network_eval(self.net, np.atleast_2d(x)) @ self.c


@dataclass
class BoundResult:
    value: float
    warm: object  # duals to warm-start children with (method specific)
    rho: list  # decomposition-style duals used for branching scores
    points: np.ndarray  # inputs worth evaluating for the incumbent


@dataclass(order=False)
class BabDomain:
    decisions: tuple  # ((layer, index, passing), ...)
    bounds: PreActBounds
    warm: object = None
    lower: float = -np.inf
    rho: list | None = None
    ident: tuple = ()


@dataclass(frozen=True)
class BabConfig:
    method: str = "supergradient"
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(iterations=100))
    batch_size: int = 8
    max_domains: int = 100000
    time_limit: float | None = None
    recompute_bounds: bool = False
    n_samples: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.method not in BOUND_METHODS:
            raise ValueError(f"unknown bounding method {self.method!r}")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")


@dataclass
class Verdict:
    status: str
    witness: np.ndarray | None
    lower: float
    upper: float
    subproblems: int
    time_s: float


def compute_bound(method: str, net: Network, dom, bounds: PreActBounds, c, solver: SolverConfig,
                  warm=None) -> BoundResult:
    """Lower bound on ``c . f(x)`` over the domain with the given intermediate bounds."""
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    if method == "ip":
        lo, hi = interval_output(net, dom, bounds)
        val = c @ (0.5 * (lo + hi)) - np.abs(c) @ (0.5 * (hi - lo))
        _, st = wk_backward_bound(net, dom, bounds, c)
        return BoundResult(float(val[0]), None, st.nu, dom.bounding_box().center[None])
    wk, st = wk_backward_bound(net, dom, bounds, c)
    if method == "wk":
        rho = wk_initialize(st)
        z0 = dom.argmax_linear(st.nu_hat[0])
        return BoundResult(float(wk[0]), None, rho, z0)
    if method in ("supergradient", "proximal"):
        rho0 = warm if warm is not None else wk_initialize(st)
        fn = supergradient_solve if method == "supergradient" else proximal_solve
        val, rho = fn(net, dom, bounds, solver.with_(method=method), rho0, c)
        _, primal = DecompProblem(net, dom, bounds, c).inner_min(rho)
        return BoundResult(float(val[0]), rho, rho, primal.z0)
    init = warm if warm is not None else dsg_initialize(st)
    val, duals = dsg_supergradient_solve(net, dom, bounds, solver.with_(method="dsg"), init, c)
    rho = dec_dsg_bridge(duals)
    prob = DecompProblem(net, dom, bounds, c)
    q, primal = prob.inner_min(rho)
    if method == "dec-dsg":
        val = np.maximum(val, q)
    return BoundResult(float(val[0]), duals, rho, primal.z0)


def impact_scores(net: Network, bounds: PreActBounds, rho: list, c) -> list:
    """``|w| * u * |l| / (u - l)`` per ambiguous neuron, ``w`` the back-propagated dual; 0 elsewhere."""
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    out = []
    for k in range(1, net.n):
        nxt = rho[k] if k <= net.n - 2 else -c
        w = net.affine[k].transpose(np.atleast_2d(nxt))[0]
        l, u = bounds.lower[k - 1], bounds.upper[k - 1]
        s = np.zeros_like(l)
        amb = relu_state(l, u) == AMBIGUOUS
        s[amb] = np.abs(w[amb]) * u[amb] * -l[amb] / (u[amb] - l[amb])
        out.append(s)
    return out


def pick_split(net: Network, bounds: PreActBounds, rho: list, c):
    """Highest-score ambiguous neuron, ties to the lowest (layer, index); None at a leaf."""
    best, best_s = None, -np.inf
    for k, s in enumerate(impact_scores(net, bounds, rho, c), 1):
        amb = np.flatnonzero(relu_state(bounds.lower[k - 1], bounds.upper[k - 1]) == AMBIGUOUS)
        for j in amb:
            if s[j] > best_s:
                best, best_s = (k, int(j)), s[j]
    return best


def branch(dom: BabDomain, net: Network, c, split=None):
    """Two children of ``dom``: the chosen neuron clamped passing (l >= 0) and blocked (u <= 0)."""
    if split is None:
        split = pick_split(net, dom.bounds, dom.rho or [np.zeros((1, d)) for d in net.hidden_dims()], c)
    if split is None:
        raise LeafDomain("no ambiguous ReLU left to split")
    k, j = split
    on = BabDomain(dom.decisions + ((k, j, True),), dom.bounds.clamp(k, j, lower=0.0), dom.warm,
                   dom.lower, dom.rho, dom.ident + (0,))
    off = BabDomain(dom.decisions + ((k, j, False),), dom.bounds.clamp(k, j, upper=0.0), dom.warm,
                    dom.lower, dom.rho, dom.ident + (1,))
    return on, off


class LeafDomain(Exception):
    pass


def tighten_bounds(net: Network, dom, bounds: PreActBounds) -> PreActBounds | None:
    """Re-run IP and WK for later layers given (clamped) earlier ones; None if a layer becomes empty."""
    lows, highs = [bounds.lower[0]], [bounds.upper[0]]
    for k in range(2, net.n):
        lo, hi = activation_range("relu", lows[-1], highs[-1])
        l_ip, u_ip = interval_affine(net.affine[k - 1], lo, hi)
        d = net.affine[k - 1].out_dim
        eye = np.eye(d)
        wk, _ = wk_backward_bound(net.truncated(k), dom, PreActBounds(tuple(lows), tuple(highs)),
                                  np.vstack([eye, -eye]))
        l_k = np.maximum.reduce([bounds.lower[k - 1], l_ip, wk[:d]])
        u_k = np.minimum.reduce([bounds.upper[k - 1], u_ip, -wk[d:]])
        if np.any(l_k > u_k):
            return None
        lows.append(l_k)
        highs.append(u_k)
    return PreActBounds(tuple(lows), tuple(highs))


def leaf_minimum(net: Network, dom: Box, bounds: PreActBounds, c):
    """Exact minimum over a domain where every ReLU is fixed; ``(value, x)``, ``(inf, None)`` if empty."""
    obj, A, b, off = _pattern_lp(net, dom, bounds, {}, c)
    sol = simplex(obj, A, b, offset=off)
    if sol.status != OPTIMAL:
        return np.inf, None
    return sol.value, np.clip(sol.x, dom.lower, dom.upper)


def verify(prop: Property, config: BabConfig, bounds: PreActBounds | None = None, trace: list | None = None) -> Verdict:
    """Decide ``c . f(x) >= threshold`` over a box by best-first ReLU splitting.

    ``trace``, if a list, receives ``(global lower, incumbent)`` before every batch.
    """
    if not isinstance(prop.dom, Box):
        raise ValueError("branch and bound supports box domains only")
    if any(a != "relu" for a in prop.net.activations):
        raise ValueError("branch and bound splits ReLUs only")
    t0 = time.perf_counter()
    net, c, thr = prop.net, prop.c[None], prop.threshold
    rng = np.random.default_rng(config.seed)
    if bounds is None:
        bounds = compute_intermediate_bounds(net, prop.dom)
    counter = itertools.count()
    state = {"upper": np.inf, "x": None, "n": 0, "closed": np.inf}

    def offer(points):
        pts = np.clip(np.atleast_2d(points), prop.dom.lower, prop.dom.upper)
        vals = prop.value(pts)
        i = int(np.argmin(vals))
        if vals[i] < state["upper"]:
            state["upper"], state["x"] = float(vals[i]), pts[i]

    def done(status, lower):
        return Verdict(status, state["x"] if status == COUNTEREXAMPLE else None, lower, state["upper"],
                       state["n"], time.perf_counter() - t0)

    offer(np.vstack([prop.dom.center[None], prop.dom.sample(rng, config.n_samples)]))
    if state["upper"] < thr:
        return done(COUNTEREXAMPLE, -np.inf)

    undecided = False

    def evaluate(d: BabDomain):
        """Bound a domain; returns False if it is closed (pruned or decided exactly)."""
        nonlocal undecided
        state["n"] += 1
        if pick_split(net, d.bounds, [np.zeros((1, h)) for h in net.hidden_dims()], c) is None:
            val, x = leaf_minimum(net, prop.dom, d.bounds, c)
            d.lower = max(d.lower, val)
            state["closed"] = min(state["closed"], d.lower)
            if x is not None:
                offer(x)
                if val < thr and state["upper"] >= thr:
                    undecided = True  # exact leaf value below threshold but witness not reproduced
            return False
        res = compute_bound(config.method, net, prop.dom, d.bounds, c, config.solver, d.warm)
        d.lower = max(d.lower, res.value)  # a child's region lies inside its parent's
        d.warm, d.rho = res.warm, res.rho
        offer(res.points)
        if d.lower < min(thr, state["upper"]):
            return True
        state["closed"] = min(state["closed"], d.lower)
        return False

    def global_lower():
        return min(state["closed"], queue[0][0] if queue else np.inf)

    root = BabDomain((), bounds)
    queue = []
    if evaluate(root):
        heapq.heappush(queue, (root.lower, root.ident, next(counter), root))
    while True:
        if trace is not None:
            trace.append((global_lower(), state["upper"]))
        if state["upper"] < thr:
            return done(COUNTEREXAMPLE, global_lower())
        if not queue:
            return done(TIMEOUT if undecided else ROBUST, global_lower())
        if state["n"] >= config.max_domains or (
            config.time_limit is not None and time.perf_counter() - t0 > config.time_limit
        ):
            return done(TIMEOUT, global_lower())
        popped = [heapq.heappop(queue)[3] for _ in range(min(config.batch_size, len(queue)))]
        children = []
        for d in popped:
            for child in branch(d, net, c):
                if config.recompute_bounds:
                    tight = tighten_bounds(net, prop.dom, child.bounds)
                    if tight is None:
                        continue
                    child.bounds = tight
                children.append(child)
        for child in children:
            if evaluate(child):
                heapq.heappush(queue, (child.lower, child.ident, next(counter), child))
