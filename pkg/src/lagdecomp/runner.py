"""Run bounding methods over a set of problems and emit one CSV row per (problem, method)."""
from __future__ import annotations

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lagdecomp.bab import BOUND_METHODS, BabConfig, Property, verify
from lagdecomp.decomp import SolverConfig, eval_q, proximal_solve, supergradient_solve, wk_initialize
from lagdecomp.djdual import dec_dsg_bridge, dsg_initialize, dsg_supergradient_solve
from lagdecomp.instances import random_problem
from lagdecomp.modelio import load_model, load_property
from lagdecomp.oracle import planet_lp_value
from lagdecomp.prebounds import compute_intermediate_bounds, wk_backward_bound
from lagdecomp.simplex import OPTIMAL

METHODS = ("ip", "wk", "dsg", "dec-dsg", "supergradient", "proximal", "bab", "oracle")
COLUMNS = ("problem_id", "method", "iters", "time_s", "bound", "verdict", "subproblems")


class RunError(RuntimeError):
    def __init__(self, problem_id: str, message: str):
        super().__init__(f"{problem_id}: {message}")
        self.problem_id = problem_id


@dataclass
class Problem:
    ident: str
    net: object
    dom: object
    c: np.ndarray
    threshold: float = 0.0


@dataclass
class RunSpec:
    problems: list
    methods: tuple = ("wk",)
    solver: SolverConfig = field(default_factory=SolverConfig)
    iterations: dict = field(default_factory=dict)  # per-method overrides
    bab_method: str = "supergradient"
    bab_iters: int = 50
    max_domains: int = 100000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; expected one of {', '.join(METHODS)}")
        if self.bab_method not in BOUND_METHODS:
            raise ValueError(f"unknown bab bounding method {self.bab_method!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def iters_for(self, method: str) -> int:
        return self.iterations.get(method, self.solver.iterations)


def problems_from_files(models, properties) -> list:
    out = []
    for m in models:
        net = load_model(m)
        for p in properties:
            dom, c, thr = load_property(p)
            out.append(Problem(f"{Path(m).stem}:{Path(p).stem}", net, dom, c, thr))
    return out


def random_problems(count: int, seed: int, **kw) -> list:
    out = []
    for i in range(count):
        net, dom, c = random_problem(seed * 100003 + i, **kw)
        out.append(Problem(f"rand{seed}-{i:03d}", net, dom, c))
    return out


def _wk_start(net, dom, bounds, c):
    if any(a != "relu" for a in net.activations):
        return None, None
    wk, st = wk_backward_bound(net, dom, bounds, c)
    return wk, st


def run_one(prob: Problem, method: str, spec: RunSpec) -> dict:
    """One CSV row; intermediate bounds are computed per row so rows are independent."""
    t0 = time.perf_counter()
    c = prob.c[None]
    iters = spec.iters_for(method) if method in ("dsg", "dec-dsg", "supergradient", "proximal") else 0
    verdict, subproblems = "", ""
    try:
        bounds = compute_intermediate_bounds(prob.net, prob.dom)
        if method == "ip":
            zero = [np.zeros((1, d)) for d in prob.net.hidden_dims()]
            bound = eval_q(prob.net, prob.dom, bounds, zero, c)[0][0]
        elif method == "wk":
            bound = wk_backward_bound(prob.net, prob.dom, bounds, c)[0][0]
        elif method in ("supergradient", "proximal"):
            _, st = _wk_start(prob.net, prob.dom, bounds, c)
            rho0 = wk_initialize(st) if st is not None else None
            fn = supergradient_solve if method == "supergradient" else proximal_solve
            bound = fn(prob.net, prob.dom, bounds, spec.solver.with_(method=method, iterations=iters), rho0, c)[0][0]
        elif method in ("dsg", "dec-dsg"):
            _, st = wk_backward_bound(prob.net, prob.dom, bounds, c)
            cfg = spec.solver.with_(method="dsg", iterations=iters)
            bound, duals = dsg_supergradient_solve(prob.net, prob.dom, bounds, cfg, dsg_initialize(st), c)
            bound = bound[0]
            if method == "dec-dsg":
                bound = eval_q(prob.net, prob.dom, bounds, dec_dsg_bridge(duals), c)[0][0]
        elif method == "oracle":
            sol = planet_lp_value(prob.net, prob.dom, bounds, prob.c)
            if sol.status != OPTIMAL:
                raise ValueError(f"simplex returned status {sol.status}")
            bound = sol.value
        else:  # bab
            iters = spec.bab_iters
            cfg = BabConfig(method=spec.bab_method, solver=spec.solver.with_(iterations=iters),
                            max_domains=spec.max_domains, seed=spec.seed)
            v = verify(Property(prob.net, prob.dom, prob.c, prob.threshold), cfg, bounds)
            bound, verdict, subproblems = v.lower, v.status, v.subproblems
    except Exception as e:  # noqa: BLE001 - attach the problem id to whatever went wrong
        raise RunError(prob.ident, f"{method}: {e}") from e
    return {
        "problem_id": prob.ident,
        "method": method,
        "iters": iters,
        "time_s": f"{time.perf_counter() - t0:.4f}",
        "bound": repr(float(bound)),
        "verdict": verdict,
        "subproblems": subproblems,
    }


def _task(args):
    return run_one(*args)


def run_experiment(spec: RunSpec) -> list:
    """Rows in (problem, method) order, whatever the number of workers."""
    tasks = [(p, m, spec) for p in spec.problems for m in spec.methods]
    if spec.workers == 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=spec.workers) as pool:
        return list(pool.map(_task, tasks))


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS)
        w.writeheader()
        w.writerows(rows)


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
