"""Feedforward networks: dense / conv2d affine layers with ReLU or sigmoid in between.

All vectors are handled as batches of flattened rows, shape ``(batch, dim)``.
Contractions use ``np.einsum`` so that a row's result does not depend on the
batch it was computed in (BLAS gemm/gemv dispatch does not give that).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "sigmoid")


class ShapeError(ValueError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite values in tensor")
    a.setflags(write=False)
    return a


def _as_batch(x, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"{what}: expected trailing dimension {dim}, got shape {x.shape}")
    return x, single


@dataclass(frozen=True, eq=False)
class AffineLayer:
    """``W x + b``; for conv2d ``W`` is an ``out_ch x in_ch x kh x kw`` kernel.

    ``in_shape`` is ``(in_dim,)`` for dense layers and ``(C, H, W)`` for conv2d.
    Conv biases are per output channel.
    """

    kind: str
    weight: np.ndarray
    bias: np.ndarray
    in_shape: tuple
    stride: int = 1
    padding: int = 0
    out_shape: tuple = field(init=False)
    _cols: np.ndarray | None = field(init=False, default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "weight", _frozen(self.weight))
        object.__setattr__(self, "bias", _frozen(self.bias))
        object.__setattr__(self, "in_shape", tuple(int(s) for s in self.in_shape))
        if self.kind == "dense":
            if self.weight.ndim != 2:
                raise ShapeError("dense weight must be a matrix")
            out, inp = self.weight.shape
            if self.in_shape != (inp,):
                raise ShapeError(f"dense layer expects input ({inp},), declared {self.in_shape}")
            if self.bias.shape != (out,):
                raise ShapeError(f"bias length {self.bias.size} != output dimension {out}")
            object.__setattr__(self, "out_shape", (out,))
        elif self.kind == "conv2d":
            if self.weight.ndim != 4:
                raise ShapeError("conv2d weight must be out_ch x in_ch x kh x kw")
            oc, ic, kh, kw = self.weight.shape
            if len(self.in_shape) != 3 or self.in_shape[0] != ic:
                raise ShapeError(f"conv2d expects input ({ic}, H, W), declared {self.in_shape}")
            if self.bias.shape != (oc,):
                raise ShapeError(f"conv bias length {self.bias.size} != out channels {oc}")
            if self.stride < 1 or self.padding < 0:
                raise ShapeError("conv2d needs stride >= 1 and padding >= 0")
            _, h, w = self.in_shape
            oh = (h + 2 * self.padding - kh) // self.stride + 1
            ow = (w + 2 * self.padding - kw) // self.stride + 1
            if oh < 1 or ow < 1:
                raise ShapeError("conv2d output would be empty")
            object.__setattr__(self, "out_shape", (oc, oh, ow))
            object.__setattr__(self, "_cols", self._unfold_index())
        else:
            raise ShapeError(f"unknown layer kind {self.kind!r}")

    @property
    def in_dim(self) -> int:
        return int(np.prod(self.in_shape))

    @property
    def out_dim(self) -> int:
        return int(np.prod(self.out_shape))

    def _unfold_index(self) -> np.ndarray:
        # index into the flattened zero-padded image, shape (C*kh*kw, OH*OW)
        c, h, w = self.in_shape
        _, _, kh, kw = self.weight.shape
        _, oh, ow = self.out_shape
        hp, wp = h + 2 * self.padding, w + 2 * self.padding
        ci, ki, kj = np.meshgrid(np.arange(c), np.arange(kh), np.arange(kw), indexing="ij")
        oi, oj = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
        rows = ki.reshape(-1, 1) + self.stride * oi.reshape(1, -1)
        cols = kj.reshape(-1, 1) + self.stride * oj.reshape(1, -1)
        idx = ci.reshape(-1, 1) * hp * wp + rows * wp + cols
        idx.setflags(write=False)
        return idx

    def _pad(self, x: np.ndarray) -> np.ndarray:
        c, h, w = self.in_shape
        p = self.padding
        img = x.reshape(-1, c, h, w)
        if p:
            img = np.pad(img, ((0, 0), (0, 0), (p, p), (p, p)))
        return img.reshape(img.shape[0], -1)

    def linear(self, x: np.ndarray) -> np.ndarray:
        """``W x`` on a batch, no bias."""
        if self.kind == "dense":
            return np.einsum("bi,oi->bo", x, self.weight)
        patches = self._pad(x)[:, self._cols]  # (B, C*kh*kw, OH*OW)
        kmat = self.weight.reshape(self.weight.shape[0], -1)
        return np.einsum("ok,bkp->bop", kmat, patches).reshape(x.shape[0], -1)

    def transpose(self, v: np.ndarray) -> np.ndarray:
        if self.kind == "dense":
            return np.einsum("bo,oi->bi", v, self.weight)
        oc = self.weight.shape[0]
        kmat = self.weight.reshape(oc, -1)
        grad_cols = np.einsum("ok,bop->bkp", kmat, v.reshape(v.shape[0], oc, -1))
        c, h, w = self.in_shape
        p = self.padding
        hp, wp = h + 2 * p, w + 2 * p
        out = np.zeros((v.shape[0], c * hp * wp))
        flat = np.broadcast_to(self._cols, grad_cols.shape)
        for b in range(v.shape[0]):
            np.add.at(out[b], flat[b], grad_cols[b])
        out = out.reshape(-1, c, hp, wp)[:, :, p : p + h, p : p + w]
        return out.reshape(v.shape[0], -1)

    def full_bias(self) -> np.ndarray:
        if self.kind == "dense":
            return self.bias
        _, oh, ow = self.out_shape
        return np.repeat(self.bias, oh * ow)

    def as_dense(self) -> np.ndarray:
        """Materialize ``W`` as an explicit ``out_dim x in_dim`` matrix."""
        if self.kind == "dense":
            return np.array(self.weight)
        return self.linear(np.eye(self.in_dim)).T


def rowdot(a: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``a @ v`` for a batch ``a`` of rows, independent of batch composition."""
    return np.einsum("bi,i->b", a, v)


def dense(weight, bias=None) -> AffineLayer:
    weight = np.atleast_2d(np.asarray(weight, dtype=np.float64))
    if bias is None:
        bias = np.zeros(weight.shape[0])
    return AffineLayer("dense", weight, bias, (weight.shape[1],))


def conv2d(weight, bias, in_shape, stride=1, padding=0) -> AffineLayer:
    return AffineLayer("conv2d", weight, bias, tuple(in_shape), stride=stride, padding=padding)


@dataclass(frozen=True, eq=False)
class Network:
    """Affine layers ``affine[0..n-1]`` with ``activations[k]`` applied after ``affine[k]``."""

    affine: tuple
    activations: tuple

    def __post_init__(self):
        object.__setattr__(self, "affine", tuple(self.affine))
        object.__setattr__(self, "activations", tuple(self.activations))
        if not self.affine:
            raise ShapeError("network needs at least one affine layer")
        if len(self.activations) != len(self.affine) - 1:
            raise ShapeError("activations must sit strictly between affine layers")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ShapeError(f"unknown activation {act!r}")
        for k in range(1, len(self.affine)):
            if self.affine[k].in_dim != self.affine[k - 1].out_dim:
                raise ShapeError(
                    f"layer {k}: input dimension {self.affine[k].in_dim} does not match "
                    f"previous output {self.affine[k - 1].out_dim}"
                )

    @classmethod
    def from_layers(cls, layers: Sequence) -> "Network":
        """Build from an alternating list ``[AffineLayer, "relu", AffineLayer, ...]``."""
        affine, acts = [], []
        expect_affine = True
        for item in layers:
            if expect_affine != isinstance(item, AffineLayer):
                raise ShapeError("layers must alternate affine / activation, starting and ending affine")
            (affine if expect_affine else acts).append(item)
            expect_affine = not expect_affine
        if expect_affine:
            raise ShapeError("network must end with an affine layer")
        return cls(tuple(affine), tuple(acts))

    @property
    def n(self) -> int:
        return len(self.affine)

    @property
    def in_dim(self) -> int:
        return self.affine[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.affine[-1].out_dim

    def hidden_dims(self) -> list[int]:
        return [layer.out_dim for layer in self.affine[:-1]]

    def truncated(self, k: int) -> "Network":
        """Subnetwork whose output is the pre-activation of affine layer ``k`` (1-based)."""
        return Network(self.affine[:k], self.activations[: k - 1])

    def with_last(self, layer: AffineLayer) -> "Network":
        return Network(self.affine[:-1] + (layer,), self.activations)


def forward_affine(layer: AffineLayer, x) -> np.ndarray:
    xb, single = _as_batch(x, layer.in_dim, "forward_affine")
    out = layer.linear(xb) + layer.full_bias()
    return out[0] if single else out


def adjoint_affine(layer: AffineLayer, v) -> np.ndarray:
    vb, single = _as_batch(v, layer.out_dim, "adjoint_affine")
    out = layer.transpose(vb)
    return out[0] if single else out


def activate(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    return sigmoid(x)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def network_eval(net: Network, x) -> np.ndarray:
    xb, single = _as_batch(x, net.in_dim, "network_eval")
    h = xb
    for k, layer in enumerate(net.affine):
        h = layer.linear(h) + layer.full_bias()
        if k < len(net.activations):
            h = activate(net.activations[k], h)
    return h[0] if single else h


def pre_activations(net: Network, x) -> list[np.ndarray]:
    """Pre-activation batches of every affine layer, for soundness checks."""
    xb, _ = _as_batch(x, net.in_dim, "pre_activations")
    out, h = [], xb
    for k, layer in enumerate(net.affine):
        zhat = layer.linear(h) + layer.full_bias()
        out.append(zhat)
        if k < len(net.activations):
            h = activate(net.activations[k], zhat)
    return out
