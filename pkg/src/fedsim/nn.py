"""Minimal deterministic neural-network engine on numpy.

Supports the two architecture families used by the simulator: a conv net
(3x3 convolutions with padding 1, 2x2 max pooling, dense head) and small
MLPs for fast tests. Parameters live in a single flat float32 vector (the
unit that attacks and aggregators manipulate); the flattening order is
canonical: layers in order, weight before bias, C-order within tensors.

Design notes:
  * weight init is fan-in-scaled uniform, biases zero, fully determined
    by (arch, seed);
  * the optimizer is plain mini-batch SGD on softmax cross-entropy;
  * parameter storage and layer arithmetic are float32 (bit-flip attacks
    need a fixed 32-bit representation); loss values, confidence matrices
    and other reductions are accumulated in float64;
  * the layer math is dtype-generic so gradient checks can run the same
    code in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

from .errors import ConfigurationError, DataError, DimensionError

__all__ = [
    "Conv",
    "MaxPool",
    "Relu",
    "Flatten",
    "Dense",
    "ModelArch",
    "ParamVector",
    "mlp_arch",
    "conv_arch",
    "arch_to_dict",
    "arch_from_dict",
    "init_model",
    "forward",
    "loss_and_grad",
    "cross_entropy_loss",
    "train_local",
    "evaluate",
]

_CHUNK = 512  # rows per forward chunk, bounds im2col memory


# --------------------------------------------------------------------------
# Architecture description
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Conv:
    """3x3 convolution, stride 1, padding 1 (spatial size preserved)."""
    in_channels: int
    out_channels: int


@dataclass(frozen=True)
class MaxPool:
    """2x2 max pooling, stride 2. Requires even spatial dims."""


@dataclass(frozen=True)
class Relu:
    """Elementwise max(0, x)."""


@dataclass(frozen=True)
class Flatten:
    """Collapse (C, H, W) feature maps to a vector."""


@dataclass(frozen=True)
class Dense:
    """Affine layer; weight shape (in_dim, out_dim), bias (out_dim,)."""
    in_dim: int
    out_dim: int


LayerSpec = Union[Conv, MaxPool, Relu, Flatten, Dense]

_LAYER_NAMES = {Conv: "conv", MaxPool: "pool", Relu: "relu", Flatten: "flatten", Dense: "dense"}


@dataclass(frozen=True)
class ModelArch:
    """Layer stack over a fixed input shape, ending in a Dense layer whose
    output feeds the softmax head. Shape consistency is checked eagerly."""

    input_shape: tuple[int, int, int]  # (C, H, W)
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self._validate()

    def _validate(self):
        if len(self.input_shape) != 3 or any(v < 1 for v in self.input_shape):
            raise ConfigurationError(f"input shape must be (C, H, W) with positive dims, got {self.input_shape}")
        if not self.layers or not isinstance(self.layers[-1], Dense):
            raise ConfigurationError("architecture must end with a Dense layer feeding the softmax head")
        shape = self.input_shape  # (C,H,W) tuple or (d,) once flattened
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv):
                if len(shape) != 3:
                    raise ConfigurationError(f"layer {i}: Conv applied to flattened input")
                if layer.in_channels != shape[0]:
                    raise ConfigurationError(
                        f"layer {i}: Conv expects {layer.in_channels} channels, input has {shape[0]}")
                if layer.out_channels < 1:
                    raise ConfigurationError(f"layer {i}: Conv needs at least one output channel")
                shape = (layer.out_channels, shape[1], shape[2])
            elif isinstance(layer, MaxPool):
                if len(shape) != 3:
                    raise ConfigurationError(f"layer {i}: MaxPool applied to flattened input")
                if shape[1] % 2 or shape[2] % 2 or shape[1] < 2 or shape[2] < 2:
                    raise ConfigurationError(f"layer {i}: MaxPool needs even spatial dims, got {shape}")
                shape = (shape[0], shape[1] // 2, shape[2] // 2)
            elif isinstance(layer, Relu):
                pass
            elif isinstance(layer, Flatten):
                if len(shape) != 3:
                    raise ConfigurationError(f"layer {i}: repeated Flatten")
                shape = (shape[0] * shape[1] * shape[2],)
            elif isinstance(layer, Dense):
                if len(shape) != 1:
                    raise ConfigurationError(f"layer {i}: Dense needs a Flatten first")
                if layer.in_dim != shape[0]:
                    raise ConfigurationError(
                        f"layer {i}: Dense expects in_dim {shape[0]}, declared {layer.in_dim}")
                if layer.out_dim < 1:
                    raise ConfigurationError(f"layer {i}: Dense needs out_dim >= 1")
                shape = (layer.out_dim,)
            else:
                raise ConfigurationError(f"layer {i}: unknown layer spec {layer!r}")

    @property
    def class_count(self) -> int:
        return self.layers[-1].out_dim

    @cached_property
    def arch_id(self) -> str:
        parts = ["in=%dx%dx%d" % self.input_shape]
        for layer in self.layers:
            name = _LAYER_NAMES[type(layer)]
            if isinstance(layer, Conv):
                parts.append(f"conv({layer.in_channels},{layer.out_channels})")
            elif isinstance(layer, Dense):
                parts.append(f"dense({layer.in_dim},{layer.out_dim})")
            else:
                parts.append(name)
        return "|".join(parts)

    @cached_property
    def param_layout(self) -> tuple:
        """Per parameterized layer: (layer index, w slice, w shape, b slice, b shape)."""
        layout = []
        offset = 0
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv):
                w_shape = (layer.out_channels, layer.in_channels, 3, 3)
                b_shape = (layer.out_channels,)
            elif isinstance(layer, Dense):
                w_shape = (layer.in_dim, layer.out_dim)
                b_shape = (layer.out_dim,)
            else:
                continue
            w_size = int(np.prod(w_shape))
            b_size = b_shape[0]
            layout.append((i, slice(offset, offset + w_size), w_shape,
                           slice(offset + w_size, offset + w_size + b_size), b_shape))
            offset += w_size + b_size
        return tuple(layout)

    @property
    def param_count(self) -> int:
        layout = self.param_layout
        if not layout:
            return 0
        last = layout[-1]
        return last[3].stop


def mlp_arch(input_shape, hidden=(), classes=10, relu=True) -> ModelArch:
    """Fully connected net: Flatten -> [Dense -> Relu]* -> Dense."""
    c, h, w = input_shape
    dims = [c * h * w, *hidden, classes]
    layers: list[LayerSpec] = [Flatten()]
    for i in range(len(dims) - 1):
        layers.append(Dense(dims[i], dims[i + 1]))
        if relu and i < len(dims) - 2:
            layers.append(Relu())
    return ModelArch(tuple(input_shape), tuple(layers))


def conv_arch(input_shape=(1, 28, 28), classes=10, channels=(32, 64), dense_width=128,
              relu=True) -> ModelArch:
    """Conv stack for grayscale images: [Conv -> (Relu) -> MaxPool]* -> Flatten
    -> Dense -> (Relu) -> Dense.

    Defaults give the full-scale net (channels 32/64, dense width 128 on
    28x28 inputs); shrink ``channels``/``dense_width``/``input_shape`` for a
    desk-scale variant. ``relu=False`` drops the activations so the literal
    conv/pool/dense stack is expressible.
    """
    c, h, w = input_shape
    layers: list[LayerSpec] = []
    in_ch = c
    for out_ch in channels:
        layers.append(Conv(in_ch, out_ch))
        if relu:
            layers.append(Relu())
        layers.append(MaxPool())
        h, w = h // 2, w // 2
        in_ch = out_ch
    layers.append(Flatten())
    layers.append(Dense(in_ch * h * w, dense_width))
    if relu:
        layers.append(Relu())
    layers.append(Dense(dense_width, classes))
    return ModelArch(tuple(input_shape), tuple(layers))


def arch_to_dict(arch: ModelArch) -> dict:
    layers = []
    for layer in arch.layers:
        entry = {"kind": _LAYER_NAMES[type(layer)]}
        if isinstance(layer, Conv):
            entry.update(in_channels=layer.in_channels, out_channels=layer.out_channels)
        elif isinstance(layer, Dense):
            entry.update(in_dim=layer.in_dim, out_dim=layer.out_dim)
        layers.append(entry)
    return {"input_shape": list(arch.input_shape), "layers": layers}


def arch_from_dict(spec: dict) -> ModelArch:
    makers = {
        "conv": lambda e: Conv(int(e["in_channels"]), int(e["out_channels"])),
        "pool": lambda e: MaxPool(),
        "relu": lambda e: Relu(),
        "flatten": lambda e: Flatten(),
        "dense": lambda e: Dense(int(e["in_dim"]), int(e["out_dim"])),
    }
    try:
        layers = tuple(makers[e["kind"]](e) for e in spec["layers"])
        return ModelArch(tuple(spec["input_shape"]), layers)
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"bad architecture spec: {exc}") from exc


# --------------------------------------------------------------------------
# Parameter vector
# --------------------------------------------------------------------------

@dataclass
class ParamVector:
    """Flat float32 parameter vector plus the architecture that defines its
    layout. Treated as immutable by convention; ops return fresh vectors."""

    values: np.ndarray
    arch: ModelArch

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 1 or len(self.values) != self.arch.param_count:
            raise DimensionError(
                f"expected {self.arch.param_count} parameters for {self.arch.arch_id}, "
                f"got shape {self.values.shape}")

    @property
    def arch_id(self) -> str:
        return self.arch.arch_id

    def __len__(self) -> int:
        return len(self.values)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.arch)


def _unflatten(values: np.ndarray, arch: ModelArch) -> dict:
    """Zero-copy views (w, b) per parameterized layer index."""
    out = {}
    for i, w_sl, w_shape, b_sl, b_shape in arch.param_layout:
        out[i] = (values[w_sl].reshape(w_shape), values[b_sl].reshape(b_shape))
    return out


def init_model(arch: ModelArch, rng_seed: int) -> ParamVector:
    """Deterministic init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0.

    fan_in is in_channels*9 for conv layers and in_dim for dense layers.
    Draws happen in canonical layer order, so the result is a pure function
    of (arch, rng_seed).
    """
    rng = np.random.default_rng(rng_seed)
    values = np.zeros(arch.param_count, dtype=np.float32)
    tensors = _unflatten(values, arch)
    for i, (w, _b) in sorted(tensors.items()):
        layer = arch.layers[i]
        fan_in = layer.in_channels * 9 if isinstance(layer, Conv) else layer.in_dim
        bound = 1.0 / np.sqrt(fan_in)
        w[...] = rng.uniform(-bound, bound, size=w.shape).astype(np.float32)
    return ParamVector(values, arch)


# --------------------------------------------------------------------------
# Forward / backward
# --------------------------------------------------------------------------

def _conv_windows(x_padded, h, w):
    """View of all 3x3 windows: (B, C, H, W, 3, 3), no copy."""
    b, c = x_padded.shape[:2]
    s = x_padded.strides
    return np.lib.stride_tricks.as_strided(
        x_padded, (b, c, h, w, 3, 3), (s[0], s[1], s[2], s[3], s[2], s[3]))


def _forward_layers(values: np.ndarray, arch: ModelArch, images: np.ndarray, keep_cache: bool):
    """Run the stack up to the logits. Returns (logits, caches)."""
    tensors = _unflatten(values, arch)
    x = images
    caches = [] if keep_cache else None
    for i, layer in enumerate(arch.layers):
        if isinstance(layer, Conv):
            w, b = tensors[i]
            xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
            windows = _conv_windows(xp, x.shape[2], x.shape[3])
            x = np.einsum("bchwuv,ocuv->bohw", windows, w) + b[None, :, None, None]
            if keep_cache:
                caches.append(windows)
        elif isinstance(layer, MaxPool):
            b_, c_, h_, w_ = x.shape
            tiles = x.reshape(b_, c_, h_ // 2, 2, w_ // 2, 2).transpose(0, 1, 2, 4, 3, 5)
            tiles = tiles.reshape(b_, c_, h_ // 2, w_ // 2, 4)
            idx = np.argmax(tiles, axis=-1)
            x = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
            if keep_cache:
                caches.append(((b_, c_, h_, w_), idx))
        elif isinstance(layer, Relu):
            mask = x > 0
            x = x * mask
            if keep_cache:
                caches.append(mask)
        elif isinstance(layer, Flatten):
            shape = x.shape
            x = x.reshape(shape[0], -1)
            if keep_cache:
                caches.append(shape)
        else:  # Dense
            w, b = tensors[i]
            if keep_cache:
                caches.append(x)
            x = x @ w + b
    return x, caches


def _backward_layers(values: np.ndarray, arch: ModelArch, caches, dlogits: np.ndarray) -> np.ndarray:
    """Backprop dlogits through the stack; returns the flat gradient."""
    tensors = _unflatten(values, arch)
    grad = np.zeros_like(values)
    gtensors = _unflatten(grad, arch)
    dy = dlogits
    ci = len(caches)
    for i in range(len(arch.layers) - 1, -1, -1):
        layer = arch.layers[i]
        ci -= 1
        if isinstance(layer, Dense):
            w, _b = tensors[i]
            gw, gb = gtensors[i]
            x_in = caches[ci]
            gw += x_in.T @ dy
            gb += dy.sum(axis=0)
            dy = dy @ w.T
        elif isinstance(layer, Flatten):
            dy = dy.reshape(caches[ci])
        elif isinstance(layer, Relu):
            dy = dy * caches[ci]
        elif isinstance(layer, MaxPool):
            (b_, c_, h_, w_), idx = caches[ci]
            tiles = np.zeros((b_, c_, h_ // 2, w_ // 2, 4), dtype=dy.dtype)
            np.put_along_axis(tiles, idx[..., None], dy[..., None], axis=-1)
            dy = (tiles.reshape(b_, c_, h_ // 2, w_ // 2, 2, 2)
                  .transpose(0, 1, 2, 4, 3, 5).reshape(b_, c_, h_, w_))
        else:  # Conv
            w, _b = tensors[i]
            gw, gb = gtensors[i]
            windows = caches[ci]
            gw += np.einsum("bchwuv,bohw->ocuv", windows, dy)
            gb += dy.sum(axis=(0, 2, 3))
            h_, w_ = dy.shape[2], dy.shape[3]
            dxp = np.zeros((dy.shape[0], w.shape[1], h_ + 2, w_ + 2), dtype=dy.dtype)
            for u in range(3):
                for v in range(3):
                    dxp[:, :, u:u + h_, v:v + w_] += np.einsum("bohw,oc->bchw", dy, w[:, :, u, v])
            dy = dxp[:, :, 1:h_ + 1, 1:w_ + 1]
    return grad


def _check_batch(arch: ModelArch, images: np.ndarray):
    if images.ndim != 4 or tuple(images.shape[1:]) != arch.input_shape:
        raise DimensionError(
            f"batch shape {images.shape} does not match input shape {arch.input_shape}")
    if images.shape[0] < 1:
        raise DimensionError("empty batch")


def forward(params: ParamVector, images: np.ndarray) -> np.ndarray:
    """Softmax confidence matrix (N, L) in float64.

    Rows are probability distributions: entries in (0, 1), each row summing
    to 1 within 1e-5 for any finite input (tiny probabilities are floored at
    1e-15 and the row renormalized).
    """
    _check_batch(params.arch, images)
    rows = []
    for lo in range(0, images.shape[0], _CHUNK):
        logits, _ = _forward_layers(params.values, params.arch, images[lo:lo + _CHUNK], False)
        z = logits.astype(np.float64)
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p = np.maximum(p, 1e-15)
        p /= p.sum(axis=1, keepdims=True)
        rows.append(p)
    return np.concatenate(rows, axis=0)


def loss_and_grad(values: np.ndarray, arch: ModelArch, images: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy over the batch and its flat gradient.

    dtype-generic: float64 parameter values give float64 gradients, which is
    what finite-difference checks run against.
    """
    n = images.shape[0]
    logits, caches = _forward_layers(values, arch, images.astype(values.dtype), True)
    zmax = logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits - zmax).sum(axis=1, keepdims=True)) + zmax
    loss = float(np.mean((lse[:, 0] - logits[np.arange(n), labels]).astype(np.float64)))
    probs = np.exp(logits - lse)
    dlogits = probs
    dlogits[np.arange(n), labels] -= 1
    dlogits /= n
    grad = _backward_layers(values, arch, caches, dlogits)
    return loss, grad


def cross_entropy_loss(params: ParamVector, data) -> float:
    """Mean cross-entropy of a dataset, accumulated in float64."""
    total = 0.0
    n = len(data.labels)
    if n == 0:
        raise DataError("empty dataset")
    for lo in range(0, n, _CHUNK):
        images, labels = data.images[lo:lo + _CHUNK], data.labels[lo:lo + _CHUNK]
        logits, _ = _forward_layers(params.values, params.arch, images, False)
        z = logits.astype(np.float64)
        zmax = z.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z - zmax).sum(axis=1)) + zmax[:, 0]
        total += float(np.sum(lse - z[np.arange(len(labels)), labels]))
    return total / n


def train_local(params: ParamVector, data, epochs: int, batch_size: int, lr: float,
                rng_seed: int) -> ParamVector:
    """Mini-batch SGD for ``epochs`` passes; returns fresh parameters.

    Batch order is a pure function of rng_seed (per-call generator, no
    global state), the input vector is never mutated, and repeated calls
    are bitwise-reproducible.
    """
    if epochs < 1:
        raise ConfigurationError(f"epochs must be >= 1, got {epochs}")
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    n = len(data.labels)
    if n == 0:
        raise DataError("empty dataset")
    _check_batch(params.arch, data.images)
    values = params.values.copy()
    lr32 = np.float32(lr)
    rng = np.random.default_rng(rng_seed)
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            take = order[lo:lo + batch_size]
            _, grad = loss_and_grad(values, params.arch, data.images[take], data.labels[take])
            values -= lr32 * grad
    return ParamVector(values, params.arch)


def evaluate(params: ParamVector, data) -> float:
    """Fraction of samples whose argmax confidence hits the true label.

    Ties resolve to the lowest class index (argmax convention).
    """
    n = len(data.labels)
    if n == 0:
        raise DataError("empty dataset")
    hits = 0
    for lo in range(0, n, _CHUNK):
        logits, _ = _forward_layers(params.values, params.arch, data.images[lo:lo + _CHUNK], False)
        hits += int(np.sum(np.argmax(logits, axis=1) == data.labels[lo:lo + _CHUNK]))
    return hits / n
