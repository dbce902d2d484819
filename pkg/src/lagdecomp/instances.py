"""Random desk-scale networks and properties for tests and comparison runs."""
from __future__ import annotations

import numpy as np

from lagdecomp.netcore import Network, dense
from lagdecomp.prebounds import Box


def random_net(rng, dims, activation="relu", bias_scale=0.1) -> Network:
    """Dense net with layer widths ``dims``, weights ~ N(0, 1/fan_in)."""
    layers = []
    for a, b in zip(dims[:-1], dims[1:]):
        W = rng.standard_normal((b, a)) / np.sqrt(a)
        layers.append(dense(W, bias_scale * rng.standard_normal(b)))
    acts = [activation] * (len(layers) - 1)
    return Network(tuple(layers), tuple(acts))


def random_dims(rng, max_hidden=3, max_width=20, in_range=(2, 6), out_dim=1) -> list:
    depth = int(rng.integers(1, max_hidden + 1))
    hidden = [int(rng.integers(3, max_width + 1)) for _ in range(depth)]
    return [int(rng.integers(*in_range))] + hidden + [out_dim]


def random_problem(seed: int, max_hidden=3, max_width=20, radius=0.5, activation="relu"):
    """``(net, box, c)`` with a scalar output and ``c = [1]``."""
    rng = np.random.default_rng(seed)
    dims = random_dims(rng, max_hidden, max_width)
    net = random_net(rng, dims, activation)
    x = rng.uniform(-1, 1, dims[0])
    return net, Box(x - radius, x + radius), np.ones(1)


def tiny_abs_net() -> Network:
    """1 -> 2 -> 1 net computing relu(x) + relu(-x)."""
    return Network((dense([[1.0], [-1.0]]), dense([[1.0, 1.0]])), ("relu",))
