"""Network assembly, forward pass, and prefix-restricted backward pass.

A network is a chain of conv stages (conv -> ReLU -> 2x2 max-pool) on a
3x32x32 input, a flatten, a chain of dense+ReLU hidden stages, and a
dense output stage of 10 units. The first `frozen_prefix` conv stages
can be excluded from backpropagation entirely: their parameters get no
gradient slots and no input gradient is computed into them, while the
forward pass always runs every stage.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigNameError, InfeasibleArchitectureError, ShapeMismatchError
from .tensor import OpCounter, Tensor

INPUT_CHANNELS = 3
INPUT_SIZE = 32
NUM_CLASSES = 10


@dataclass(frozen=True)
class NetworkConfig:
    """One point of the hyperparameter grid."""

    conv_layers: int
    learning_rate: float
    filters: int
    filter_size: int
    hidden_units: tuple[int, ...]
    batch_size: int

    def __post_init__(self):
        object.__setattr__(self, "hidden_units", tuple(self.hidden_units))
        if self.conv_layers < 1:
            raise ValueError("conv_layers must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.filters < 1 or self.filter_size < 1 or self.batch_size < 1:
            raise ValueError("filters, filter_size and batch_size must be positive")
        units = self.hidden_units
        if not units:
            raise ValueError("hidden_units must be non-empty")
        if any(u < 1 for u in units):
            raise ValueError("hidden unit counts must be positive")
        if any(a <= b for a, b in zip(units, units[1:])):
            raise ValueError(f"hidden_units must be strictly decreasing, got {units}")


@dataclass(frozen=True)
class ConvStageShape:
    in_channels: int
    in_size: int
    conv_size: int   # spatial size after the valid conv
    out_size: int    # spatial size after 2x2/2 pooling
    filters: int
    kernel: int


@dataclass(frozen=True)
class ShapePlan:
    """Deterministic shape chain of a config, from 3x32x32 to 10 logits."""

    conv_stages: tuple[ConvStageShape, ...]
    flatten_dim: int
    dense_dims: tuple[tuple[int, int], ...]  # (in, out) pairs, output stage included


def shape_plan(config: NetworkConfig) -> ShapePlan:
    """Chain layer shapes; raise if any intermediate dimension is nonpositive."""
    c, size = INPUT_CHANNELS, INPUT_SIZE
    k = config.filter_size
    stages = []
    for i in range(config.conv_layers):
        conv_size = size - k + 1
        if conv_size < 1:
            raise InfeasibleArchitectureError(
                f"architecture infeasible: conv stage {i + 1} maps spatial size "
                f"{size} to {conv_size} with kernel {k}"
            )
        out_size = conv_size // 2
        if out_size < 1:
            raise InfeasibleArchitectureError(
                f"architecture infeasible: pooling at conv stage {i + 1} maps "
                f"spatial size {conv_size} to {out_size}"
            )
        stages.append(ConvStageShape(c, size, conv_size, out_size, config.filters, k))
        c, size = config.filters, out_size

    flatten = c * size * size
    dense_dims = []
    d = flatten
    for u in config.hidden_units:
        dense_dims.append((d, u))
        d = u
    dense_dims.append((d, NUM_CLASSES))
    return ShapePlan(tuple(stages), flatten, tuple(dense_dims))


@dataclass
class ConvStage:
    w: Tensor  # (F, C, k, k)
    b: Tensor  # (F,)


@dataclass
class DenseStage:
    w: Tensor  # (D, U)
    b: Tensor  # (U,)


@dataclass
class Network:
    config: NetworkConfig
    plan: ShapePlan
    conv_stages: list[ConvStage]
    dense_stages: list[DenseStage]  # hidden stages then the 10-unit output stage
    frozen_prefix: int = 0

    def trainable_parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for stage in self.conv_stages[self.frozen_prefix:]:
            params.extend((stage.w, stage.b))
        for stage in self.dense_stages:
            params.extend((stage.w, stage.b))
        return params

    def all_parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for stage in self.conv_stages + self.dense_stages:
            params.extend((stage.w, stage.b))
        return params

    def parameter_count(self) -> int:
        return sum(p.size for p in self.all_parameters())

    def set_frozen_prefix(self, zeta: int) -> None:
        if not 0 <= zeta < self.config.conv_layers:
            raise ValueError(
                f"frozen prefix {zeta} out of range for {self.config.conv_layers} conv layers"
            )
        self.frozen_prefix = zeta


def _kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                     fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def build_network(config: NetworkConfig, seed: int) -> Network:
    """Initialize all stages from a seeded PRNG; biases zero, frozen_prefix 0.

    Weights use Kaiming-uniform bounds +-sqrt(6/fan_in); draw order is
    conv stages first then dense stages, so equal (config, seed) pairs
    produce bit-identical parameters.
    """
    plan = shape_plan(config)
    rng = np.random.Generator(np.random.PCG64(seed))
    conv_stages = []
    for s in plan.conv_stages:
        fan_in = s.in_channels * s.kernel * s.kernel
        w = _kaiming_uniform(rng, (s.filters, s.in_channels, s.kernel, s.kernel), fan_in)
        conv_stages.append(ConvStage(Tensor(w), Tensor(np.zeros(s.filters, np.float32))))
    dense_stages = []
    for d, u in plan.dense_dims:
        w = _kaiming_uniform(rng, (d, u), d)
        dense_stages.append(DenseStage(Tensor(w), Tensor(np.zeros(u, np.float32))))
    return Network(config, plan, conv_stages, dense_stages, frozen_prefix=0)


@dataclass
class ForwardCache:
    """Activations captured during forward_train for the backward pass."""

    conv_inputs: list[Tensor] = field(default_factory=list)
    conv_cols: list[np.ndarray | None] = field(default_factory=list)
    conv_pre_relu: list[Tensor] = field(default_factory=list)
    pool_inputs: list[Tensor] = field(default_factory=list)
    pool_indices: list[np.ndarray] = field(default_factory=list)
    dense_inputs: list[Tensor] = field(default_factory=list)
    dense_pre_relu: list[Tensor] = field(default_factory=list)
    flatten_shape: tuple[int, ...] | None = None


def _check_batch(net: Network, batch: Tensor) -> None:
    expect = (batch.shape[0], INPUT_CHANNELS, INPUT_SIZE, INPUT_SIZE)
    if batch.shape != expect:
        raise ShapeMismatchError(f"batch shape {batch.shape} != expected {expect}")


def forward(net: Network, batch: Tensor, counter: OpCounter | None = None) -> Tensor:
    """Inference through every stage, frozen ones included; returns (N, 10) logits."""
    _check_batch(net, batch)
    x = batch
    for stage in net.conv_stages:
        z = ops.conv2d_forward(x, stage.w, stage.b, counter)
        x, _ = ops.maxpool2_forward(ops.relu(z), counter)
    x = Tensor(x.data.reshape(x.shape[0], -1))
    last = len(net.dense_stages) - 1
    for j, stage in enumerate(net.dense_stages):
        x = ops.dense_forward(x, stage.w, stage.b, counter)
        if j != last:
            x = ops.relu(x)
    return x


def forward_train(net: Network, batch: Tensor,
                  counter: OpCounter | None = None) -> tuple[Tensor, ForwardCache]:
    """Forward pass that also captures the activation cache backward() needs."""
    _check_batch(net, batch)
    cache = ForwardCache()
    x = batch
    for i, stage in enumerate(net.conv_stages):
        cache.conv_inputs.append(x)
        if i >= net.frozen_prefix:
            z = ops.conv2d_forward(x, stage.w, stage.b, counter,
                                   cols_out=cache.conv_cols)
        else:
            # frozen stages never run backward, so their cols are not kept
            z = ops.conv2d_forward(x, stage.w, stage.b, counter)
            cache.conv_cols.append(None)
        a = ops.relu(z)
        cache.conv_pre_relu.append(z)
        cache.pool_inputs.append(a)
        x, idx = ops.maxpool2_forward(a, counter)
        cache.pool_indices.append(idx)

    cache.flatten_shape = x.shape
    x = Tensor(x.data.reshape(x.shape[0], -1))

    last = len(net.dense_stages) - 1
    for j, stage in enumerate(net.dense_stages):
        cache.dense_inputs.append(x)
        y = ops.dense_forward(x, stage.w, stage.b, counter)
        if j != last:
            cache.dense_pre_relu.append(y)
            x = ops.relu(y)
        else:
            x = y
    return x, cache


def backward(net: Network, dlogits: Tensor, cache: ForwardCache,
             counter: OpCounter | None = None) -> None:
    """Populate .grad on every trainable parameter; frozen stages get none.

    Backpropagation stops at the frozen/trainable boundary: the first conv
    stage whose input needs no gradient (stage 1, or the stage directly
    above the frozen prefix) skips the input-gradient computation, so the
    frozen stages contribute zero backward work.
    """
    if cache.flatten_shape is None or not cache.dense_inputs:
        raise ShapeMismatchError("backward called without a forward activation cache")

    zeta = net.frozen_prefix
    dy = dlogits
    last = len(net.dense_stages) - 1
    for j in range(last, -1, -1):
        stage = net.dense_stages[j]
        if j != last:
            dy = ops.relu_backward(cache.dense_pre_relu[j], dy)
        dx, dw, db = ops.dense_backward(cache.dense_inputs[j], stage.w, dy,
                                        counter, need_dx=True)
        stage.w.grad = dw.data
        stage.b.grad = db.data
        dy = dx

    dy = Tensor(dy.data.reshape(cache.flatten_shape))
    for i in range(len(net.conv_stages) - 1, zeta - 1, -1):
        stage = net.conv_stages[i]
        da = ops.maxpool2_backward(cache.pool_indices[i], dy,
                                   cache.pool_inputs[i].shape, counter)
        dz = ops.relu_backward(cache.conv_pre_relu[i], da)
        need_dx = i - 1 >= zeta  # the stage below exists and is trainable
        dx, dw, db = ops.conv2d_backward(cache.conv_inputs[i], stage.w, dz,
                                         counter, need_dx=need_dx,
                                         cols=cache.conv_cols[i])
        stage.w.grad = dw.data
        stage.b.grad = db.data
        if dx is not None:
            dy = dx


def config_name(config: NetworkConfig, nrl: int) -> str:
    """CNN_<ncl>_<nfcl>_<nrl>: conv layers, fully connected hidden layers, reused layers."""
    if not 0 <= nrl < config.conv_layers:
        raise ConfigNameError(
            f"reused layer count {nrl} must be < conv layers {config.conv_layers}"
        )
    return f"CNN_{config.conv_layers}_{len(config.hidden_units)}_{nrl}"


_NAME_RE = re.compile(r"^CNN_(\d+)_(\d+)_(\d+)$")


def parse_config_name(name: str) -> tuple[int, int, int]:
    """Inverse of config_name: (ncl, nfcl, nrl)."""
    m = _NAME_RE.match(name)
    if not m:
        raise ConfigNameError(f"name {name!r} does not match CNN_<ncl>_<nfcl>_<nrl>")
    ncl, nfcl, nrl = (int(g) for g in m.groups())
    if ncl < 1 or nfcl < 1:
        raise ConfigNameError(f"name {name!r} has nonpositive layer counts")
    if nrl >= ncl:
        raise ConfigNameError(
            f"name {name!r} reuses {nrl} layers but only has {ncl} conv layers"
        )
    return ncl, nfcl, nrl
