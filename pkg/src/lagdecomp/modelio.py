"""JSON model and property files.

Model::

    {"input_shape": [C, H, W],        # optional, needed when the first layer is conv2d
     "layers": [{"type": "dense", "weight": [[...]], "bias": [...]},
                {"type": "relu"},
                {"type": "conv2d", "weight": [[[[...]]]], "bias": [...], "stride": 1, "padding": 0},
                {"type": "sigmoid"}, ...]}

Property::

    {"domain": {"type": "box", "l": [...], "u": [...]} | {"type": "l2", "center": [...], "radius": r},
     "objective": [...], "threshold": t}
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from lagdecomp.netcore import Network, ShapeError, conv2d, dense
from lagdecomp.prebounds import Box, L2Ball


class ModelFormatError(ValueError):
    pass


def _parse_json(text: str, path) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: top level must be an object")
    return doc


def network_from_dict(doc: dict, where="model") -> Network:
    layers = doc.get("layers")
    if not isinstance(layers, list) or not layers:
        raise ModelFormatError(f"{where}: 'layers' must be a non-empty list")
    shape = tuple(doc["input_shape"]) if "input_shape" in doc else None
    items = []
    for i, spec in enumerate(layers):
        kind = spec.get("type") if isinstance(spec, dict) else None
        try:
            if kind in ("relu", "sigmoid"):
                items.append(kind)
                continue
            if kind == "dense":
                w = np.asarray(spec["weight"], dtype=np.float64)
                layer = dense(w, spec.get("bias"))
                if shape is not None and int(np.prod(shape)) != layer.in_dim:
                    raise ShapeError(f"input has {int(np.prod(shape))} entries, layer expects {layer.in_dim}")
            elif kind == "conv2d":
                if shape is None or len(shape) != 3:
                    raise ShapeError("conv2d needs a (C, H, W) input shape ('input_shape' for a first layer)")
                layer = conv2d(spec["weight"], spec.get("bias", np.zeros(len(spec["weight"]))), shape,
                               stride=int(spec.get("stride", 1)), padding=int(spec.get("padding", 0)))
            else:
                raise ModelFormatError(f"{where}: layer {i}: unknown type {kind!r}")
        except KeyError as e:
            raise ModelFormatError(f"{where}: layer {i} ({kind}): missing field {e}") from None
        except (ShapeError, ValueError) as e:
            if isinstance(e, ModelFormatError):
                raise
            raise ShapeError(f"{where}: layer {i} ({kind}): {e}") from None
        items.append(layer)
        shape = layer.out_shape
    try:
        return Network.from_layers(items)
    except ShapeError as e:
        raise ShapeError(f"{where}: {e}") from None


def network_to_dict(net: Network) -> dict:
    layers = []
    for k, layer in enumerate(net.affine):
        if layer.kind == "dense":
            layers.append({"type": "dense", "weight": layer.weight.tolist(), "bias": layer.bias.tolist()})
        else:
            layers.append({"type": "conv2d", "weight": layer.weight.tolist(), "bias": layer.bias.tolist(),
                           "stride": layer.stride, "padding": layer.padding})
        if k < len(net.activations):
            layers.append({"type": net.activations[k]})
    doc = {"layers": layers}
    if net.affine[0].kind == "conv2d":
        doc = {"input_shape": list(net.affine[0].in_shape), **doc}
    return doc


def load_model(path) -> Network:
    path = Path(path)
    return network_from_dict(_parse_json(path.read_text(), path), str(path))


def save_model(net: Network, path):
    # repr-exact floats, so a round trip reproduces every weight bit for bit
    Path(path).write_text(json.dumps(network_to_dict(net)) + "\n")


def domain_from_dict(spec: dict, where="property"):
    kind = spec.get("type")
    if kind == "box":
        return Box(spec["l"], spec["u"])
    if kind == "l2":
        return L2Ball(spec["center"], spec["radius"])
    raise ModelFormatError(f"{where}: unknown domain type {kind!r}")


def load_property(path) -> tuple:
    """``(domain, objective, threshold)``."""
    path = Path(path)
    doc = _parse_json(path.read_text(), path)
    try:
        dom = domain_from_dict(doc["domain"], str(path))
        c = np.asarray(doc["objective"], dtype=np.float64).ravel()
    except KeyError as e:
        raise ModelFormatError(f"{path}: missing field {e}") from None
    return dom, c, float(doc.get("threshold", 0.0))


def property_to_dict(dom, c, threshold=0.0) -> dict:
    if isinstance(dom, Box):
        d = {"type": "box", "l": dom.lower.tolist(), "u": dom.upper.tolist()}
    else:
        d = {"type": "l2", "center": dom.center.tolist(), "radius": dom.radius}
    return {"domain": d, "objective": np.asarray(c, dtype=np.float64).ravel().tolist(), "threshold": float(threshold)}


def save_property(dom, c, threshold, path):
    Path(path).write_text(json.dumps(property_to_dict(dom, c, threshold)) + "\n")
