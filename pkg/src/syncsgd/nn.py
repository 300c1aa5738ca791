"""Dense feedforward network: forward pass, loss, backprop and the SGD step.

Weights follow the ``W^L`` convention of shape ``(out, in)``; a batch is a
``(batch, features)`` matrix, so one layer computes ``Z = A @ W.T + b``.
Hidden layers use the logistic sigmoid, the output layer softmax (or sigmoid,
for tiny test nets). Gradients are batch means.

The flattened parameter vector (layer by layer, weights then bias) is the unit
every coordination protocol exchanges; its byte length is the model size.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels

DEFAULT_TOPOLOGY = (784, 128, 64, 10)
DEFAULT_DTYPE = np.dtype("<f4")
LOSS_KINDS = ("quadratic", "cross-entropy")
CE_EPS = 1e-12


class ShapeError(ValueError):
    """Array shapes do not match the network topology."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 100
    epochs: int = 1
    loss_kind: str = "quadratic"
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")


def _layer_sizes(topology):
    return [(topology[i + 1], topology[i]) for i in range(len(topology) - 1)]


def num_params_for(topology) -> int:
    return sum(o * i + o for o, i in _layer_sizes(topology))


def _split_flat(vec, topology):
    weights, biases = [], []
    pos = 0
    for out_dim, in_dim in _layer_sizes(topology):
        weights.append(vec[pos:pos + out_dim * in_dim].reshape(out_dim, in_dim))
        pos += out_dim * in_dim
        biases.append(vec[pos:pos + out_dim])
        pos += out_dim
    return weights, biases


class _Layered:
    """Shared layout logic for parameter and gradient containers."""

    weights: list
    biases: list

    @property
    def topology(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def byte_size(self) -> int:
        return self.num_params * self.dtype.itemsize

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def to_bytes(self) -> bytes:
        return self.flatten().astype(self.dtype.newbyteorder("<"), copy=False).tobytes()

    def _check_layout(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(
                    f"layer {i}: expects {w.shape[1]} inputs, previous layer has "
                    f"{self.weights[i - 1].shape[0]} units"
                )


@dataclass
class ModelParams(_Layered):
    weights: list
    biases: list

    def __post_init__(self):
        self._check_layout()

    @classmethod
    def from_flat(cls, vec, topology) -> "ModelParams":
        """Views into ``vec``; no copy is made."""
        vec = np.asarray(vec)
        if vec.ndim != 1 or vec.size != num_params_for(topology):
            raise ShapeError(
                f"flat vector of {vec.size} does not fit topology {tuple(topology)}"
            )
        return cls(*_split_flat(vec, topology))

    @classmethod
    def from_bytes(cls, buf, topology, dtype=DEFAULT_DTYPE) -> "ModelParams":
        vec = np.frombuffer(buf, dtype=np.dtype(dtype).newbyteorder("<")).astype(dtype)
        return cls.from_flat(vec, topology)

    def copy(self) -> "ModelParams":
        return ModelParams.from_flat(self.flatten(), self.topology)

    def equal(self, other) -> bool:
        return np.array_equal(self.flatten(), other.flatten())


@dataclass
class GradientSet(_Layered):
    weights: list
    biases: list
    rank: int = 0
    iteration: int = 0
    count: int = 0

    def __post_init__(self):
        self._check_layout()

    @classmethod
    def from_flat(cls, vec, topology, **meta) -> "GradientSet":
        return cls(*_split_flat(np.asarray(vec), topology), **meta)

    def is_finite(self) -> bool:
        return all(np.isfinite(w).all() and np.isfinite(b).all()
                   for w, b in zip(self.weights, self.biases))


@dataclass
class Activations:
    """``z[i]`` is layer i+1's pre-activation; ``a[0]`` is the input batch."""

    z: list = field(default_factory=list)
    a: list = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.a[-1]


def init_params(topology=DEFAULT_TOPOLOGY, seed=0, dtype=DEFAULT_DTYPE) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for out_dim, in_dim in _layer_sizes(topology):
        bound = 1.0 / np.sqrt(in_dim)
        weights.append(rng.uniform(-bound, bound, size=(out_dim, in_dim)).astype(dtype))
        biases.append(rng.uniform(-bound, bound, size=out_dim).astype(dtype))
    return ModelParams(weights, biases)


def forward(params: ModelParams, batch_x, output="softmax") -> Activations:
    x = np.ascontiguousarray(batch_x, dtype=params.dtype)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    acts = Activations(a=[x])
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        prev = acts.a[-1]
        if prev.shape[1] != w.shape[1]:
            raise ShapeError(
                f"layer {i}: input width {prev.shape[1]} != expected {w.shape[1]}"
            )
        z = prev @ w.T
        z += b
        a = np.empty_like(z)
        if i == last and output == "softmax":
            kernels.softmax_rows(z, a)
        else:
            kernels.sigmoid(z.reshape(-1), a.reshape(-1))
        acts.z.append(z)
        acts.a.append(a)
    return acts


def loss(a_out, y, kind="quadratic") -> float:
    a_out = np.asarray(a_out)
    y = np.asarray(y, dtype=a_out.dtype)
    if a_out.shape != y.shape:
        raise ShapeError(f"prediction {a_out.shape} vs target {y.shape}")
    m = a_out.shape[0]
    if kind == "quadratic":
        diff = a_out - y
        return float(np.sum(diff * diff) / m)
    if kind == "cross-entropy":
        return float(-np.sum(y * np.log(np.maximum(a_out, CE_EPS))) / m)
    raise ValueError(f"unknown loss kind {kind!r}")


def _loss_grad(a_out, y, kind):
    m = a_out.shape[0]
    if kind == "quadratic":
        return (a_out - y) * (2.0 / m)
    if kind == "cross-entropy":
        # derivative of the clamped log is zero below the clamp
        safe = np.maximum(a_out, CE_EPS)
        return np.where(a_out > CE_EPS, -y / safe, 0).astype(a_out.dtype) / m
    raise ValueError(f"unknown loss kind {kind!r}")


def backward(params: ModelParams, acts: Activations, y, kind="quadratic",
             output="softmax") -> GradientSet:
    if len(acts.a) != len(params.weights) + 1:
        raise ShapeError(
            f"activations have {len(acts.a) - 1} layers, params have {len(params.weights)}"
        )
    a_out = acts.output
    y = np.asarray(y, dtype=a_out.dtype)
    if y.shape != a_out.shape:
        raise ShapeError(f"target {y.shape} vs output {a_out.shape}")

    grad_a = _loss_grad(a_out, y, kind)
    if output == "softmax":
        delta = a_out * (grad_a - np.sum(grad_a * a_out, axis=1, keepdims=True))
    else:
        delta = np.empty_like(grad_a)
        kernels.sigmoid_backward(grad_a.reshape(-1), a_out.reshape(-1), delta.reshape(-1))

    n_layers = len(params.weights)
    d_w = [None] * n_layers
    d_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        d_w[i] = delta.T @ acts.a[i]
        d_b[i] = delta.sum(axis=0)
        if i:
            grad_a = delta @ params.weights[i]
            delta = np.empty_like(grad_a)
            kernels.sigmoid_backward(grad_a.reshape(-1), acts.a[i].reshape(-1),
                                     delta.reshape(-1))
    return GradientSet(d_w, d_b, count=a_out.shape[0])


def gradients(params, batch_x, batch_y, kind="quadratic", output="softmax"):
    """forward + loss + backward on one mini-batch; returns (grads, loss)."""
    acts = forward(params, batch_x, output)
    return backward(params, acts, batch_y, kind, output), loss(acts.output, batch_y, kind)


def sgd_step_flat(flat_params, flat_grad, alpha):
    """``p - alpha * g`` on flat vectors; the one update rule every path uses."""
    if alpha < 0:
        raise ValueError("learning rate must be non-negative")
    out = np.empty_like(flat_params)
    kernels.sgd_step(np.ascontiguousarray(flat_params), np.ascontiguousarray(flat_grad),
                     float(alpha), out)
    return out


def apply_update(params: ModelParams, grads: GradientSet, alpha) -> ModelParams:
    if params.topology != grads.topology:
        raise ShapeError(f"params {params.topology} vs grads {grads.topology}")
    flat = sgd_step_flat(params.flatten(), grads.flatten().astype(params.dtype, copy=False),
                         alpha)
    return ModelParams.from_flat(flat, params.topology)


def measure_t_processing(params, batch_x, batch_y, reps=5, kind="quadratic") -> float:
    """Median wall time (s) of forward + loss + backward on one mini-batch."""
    if reps < 3:
        raise ValueError(f"reps must be >= 3, got {reps}")
    gradients(params, batch_x, batch_y, kind)  # warm-up
    samples = []
    for _ in range(reps):
        start = time.perf_counter()
        gradients(params, batch_x, batch_y, kind)
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)
