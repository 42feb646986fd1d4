"""Class-conditional MLP noise predictor.

The network sees ``concat(x_t, time_embedding(t), class_embedding(c))`` and
outputs a noise estimate with the same width as ``x_t``. Row 0 of the class
embedding table is the learned null class used for classifier-free guidance;
real classes 1..C use rows 1..C.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numcore as nc
from .numcore import Node

NULL_CLASS = 0

_ACTIVATIONS = {"silu": nc.silu, "tanh": nc.tanh}


@dataclass(frozen=True)
class ArchConfig:
    D: int
    C: int
    hidden: tuple[int, ...] = (128, 128, 128)
    E: int = 16
    F: int = 8
    T: int = 1000
    activation: str = "silu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        dims = (self.D, self.E, self.F, self.T, *self.hidden)
        if any(int(v) != v or v <= 0 for v in dims) or not self.hidden:
            raise ValueError(f"all architecture sizes must be positive integers: {self}")
        if self.C < 2:
            raise ValueError("need at least two classes")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def input_width(self) -> int:
        return self.D + 2 * self.F + self.E

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(**{**d, "hidden": tuple(d["hidden"])})

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class DenoiserParams:
    arch: ArchConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def num_layers(self) -> int:
        return len(self.arch.hidden) + 1


def layer_shapes(arch: ArchConfig) -> list[tuple[int, int]]:
    widths = [arch.input_width, *arch.hidden, arch.D]
    return list(zip(widths[:-1], widths[1:]))


def init_params(arch: ArchConfig, seed: int | np.random.Generator) -> DenoiserParams:
    """Fan-in scaled uniform weights, zero biases, N(0, 0.02^2) class embeddings."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    tensors = {}
    for i, (fan_in, fan_out) in enumerate(layer_shapes(arch)):
        bound = 1.0 / np.sqrt(fan_in)
        tensors[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        tensors[f"b{i}"] = np.zeros(fan_out)
    tensors["class_embed"] = rng.normal(0.0, 0.02, size=(arch.C + 1, arch.E))
    return DenoiserParams(arch, tensors)


def time_embed(t: int, T: int, F: int) -> np.ndarray:
    """Sinusoidal features of tau = t/T at F geometric frequencies from 1 to 1000."""
    if not 1 <= t <= T:
        raise ValueError(f"timestep {t} outside [1, {T}]")
    omega = np.geomspace(1.0, 1000.0, F) if F > 1 else np.ones(1)
    phase = omega * (t / T)
    return np.concatenate([np.sin(phase), np.cos(phase)])


def check_labels(labels, C: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype.kind not in "iu":
        raise ValueError("class labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() > C):
        bad = labels[(labels < 0) | (labels > C)][0]
        raise ValueError(f"unknown class {int(bad)}; valid classes are 1..{C} or null (0)")
    return labels.astype(np.intp)


def forward(nodes: dict[str, Node], arch: ArchConfig, x_t: np.ndarray, t: int,
            labels) -> Node:
    """Differentiable forward pass; ``labels`` holds one class id per row (0 = null)."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.ndim != 2 or x_t.shape[1] != arch.D:
        raise nc.ShapeError(f"expected input of shape (B, {arch.D}), got {x_t.shape}")
    B = x_t.shape[0]
    labels = check_labels(np.broadcast_to(labels, (B,)), arch.C)
    temb = np.broadcast_to(time_embed(t, arch.T, arch.F), (B, 2 * arch.F))
    h = nc.concat_cols([nc.constant(x_t), nc.constant(np.ascontiguousarray(temb)),
                        nc.take_rows(nodes["class_embed"], labels)])
    act = _ACTIVATIONS[arch.activation]
    last = len(arch.hidden)
    for i in range(last + 1):
        h = nc.add_bias(nc.matmul(h, nodes[f"W{i}"]), nodes[f"b{i}"])
        if i < last:
            h = act(h)
    return h


class NoiseModel:
    """Callable ``model(x_t, t, labels) -> Node`` over a set of parameter nodes."""

    def __init__(self, params: DenoiserParams, trainable: bool = False):
        self.params = params
        self.arch = params.arch
        self.nodes = {k: Node(v, requires_grad=trainable) for k, v in params.tensors.items()}

    def __call__(self, x_t, t, labels) -> Node:
        return forward(self.nodes, self.arch, x_t, t, labels)


def predict_noise(params: DenoiserParams, x_t, t: int, c) -> np.ndarray:
    """Noise estimate for ``x_t`` at step ``t`` under class ``c`` (None or 0 for null)."""
    if c is None:
        c = NULL_CLASS
    if np.ndim(c) == 0 and not (isinstance(c, (int, np.integer)) and 0 <= c <= params.arch.C):
        raise ValueError(f"unknown class {c!r}; valid classes are 1..{params.arch.C} or null")
    nodes = {k: nc.constant(v) for k, v in params.tensors.items()}
    return forward(nodes, params.arch, x_t, t, c).value
