"""Anytime bounds on ReLU/sigmoid network outputs via Lagrangian decomposition."""

from lagdecomp.netcore import AffineLayer, Network, ShapeError, dense, conv2d, network_eval
from lagdecomp.prebounds import Box, L2Ball, PreActBounds, compute_intermediate_bounds
from lagdecomp.decomp import SolverConfig, eval_q, supergradient_solve, proximal_solve
from lagdecomp.djdual import eval_d, dsg_supergradient_solve
from lagdecomp.oracle import planet_lp_value, exact_min_enumerate
from lagdecomp.bab import BabConfig, Property, Verdict, verify

__all__ = [
    "AffineLayer",
    "Network",
    "ShapeError",
    "dense",
    "conv2d",
    "network_eval",
    "Box",
    "L2Ball",
    "PreActBounds",
    "compute_intermediate_bounds",
    "SolverConfig",
    "eval_q",
    "supergradient_solve",
    "proximal_solve",
    "eval_d",
    "dsg_supergradient_solve",
    "planet_lp_value",
    "exact_min_enumerate",
    "BabConfig",
    "Property",
    "Verdict",
    "verify",
]
