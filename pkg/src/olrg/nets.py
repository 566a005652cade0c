"""Feed-forward networks over a flat parameter vector, and the checkpoint file format.

Keeping parameters in one flat float64 tensor makes Adam, finite differences
and serialization trivial. ``MLP`` only describes the layout.

Checkpoint layout (all integers little-endian)::

    8 bytes   magic b"OLRGCKPT"
    uint32    format version (1)
    uint32    header length in bytes
    header    UTF-8 JSON: {"kind", "config", "tensors": [{"name", "shape"}]}
    payload   float64 little-endian, tensors in header order, each row-major
"""

import json
import struct
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError

MAGIC = b"OLRGCKPT"
FORMAT_VERSION = 1

_ACTIVATIONS = {"relu": torch.relu, "tanh": torch.tanh}


@dataclass(frozen=True)
class MLP:
    """Dense layers ``sizes[0] -> ... -> sizes[-1]``; the activation follows every layer but the last."""

    sizes: tuple
    activation: str = "relu"

    def __post_init__(self):
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ConfigError(f"bad layer sizes {self.sizes}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def shapes(self):
        return [(o, i) for i, o in zip(self.sizes[:-1], self.sizes[1:])]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.shapes)

    def init(self, rng: np.random.Generator) -> np.ndarray:
        """He-normal weights for hidden layers, Glorot-normal for the output layer, zero biases."""
        chunks = []
        for j, (o, i) in enumerate(self.shapes):
            last = j == len(self.shapes) - 1
            std = np.sqrt(2.0 / (i + o)) if last or self.activation == "tanh" else np.sqrt(2.0 / i)
            chunks += [rng.standard_normal(o * i) * std, np.zeros(o)]
        return np.concatenate(chunks)

    def unflatten(self, theta):
        out, pos = [], 0
        for o, i in self.shapes:
            w = theta[pos : pos + o * i].reshape(o, i)
            pos += o * i
            out.append((w, theta[pos : pos + o]))
            pos += o
        return out

    def __call__(self, theta, x):
        act = _ACTIVATIONS[self.activation]
        layers = self.unflatten(theta)
        for j, (w, b) in enumerate(layers):
            x = x @ w.T + b
            if j < len(layers) - 1:
                x = act(x)
        return x


def save_checkpoint(path, kind: str, config: dict, tensors: dict):
    names = list(tensors)
    arrays = [np.ascontiguousarray(np.asarray(tensors[k], dtype="<f8")) for k in names]
    header = json.dumps(
        {"kind": kind, "config": config, "tensors": [{"name": k, "shape": list(a.shape)} for k, a in zip(names, arrays)]},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for a in arrays:
            fh.write(a.tobytes(order="C"))


def load_checkpoint(path):
    """Return ``(kind, config, {name: ndarray})``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ConfigError(f"{path} is not an OLRG checkpoint")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[16 : 16 + hlen])
    pos = 16 + hlen
    tensors = {}
    for spec in header["tensors"]:
        count = int(np.prod(spec["shape"], dtype=int))
        tensors[spec["name"]] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(spec["shape"]).copy()
        pos += 8 * count
    return header["kind"], header["config"], tensors
