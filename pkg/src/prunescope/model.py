"""Maskable multilayer perceptrons and their flattened parameter layout.

The network family is fixed: affine layers with ReLU on hidden layers and a
softmax cross-entropy head. Parameters live in one flat float64 vector, laid
out layer by layer as the row-major weight matrix followed by the bias
vector. Only affine-layer weights are prunable; biases never are.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .numerics import RngStream


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths of an MLP: (input, hidden..., output).

    Hidden activations are ReLU and the training loss is mean softmax
    cross-entropy; neither is configurable in this toolkit.
    """

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ValueError("a network needs at least input and output layers")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] < 2:
            raise ValueError("output layer must have at least 2 classes")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    @property
    def param_count(self) -> int:
        return sum(
            n_in * n_out + n_out
            for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        )


def layer_slices(spec: NetworkSpec) -> list[tuple[slice, slice, tuple[int, int]]]:
    """(weight slice, bias slice, weight shape) per layer in the flat layout."""
    out = []
    pos = 0
    for n_in, n_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        w_sl = slice(pos, pos + n_out * n_in)
        pos += n_out * n_in
        b_sl = slice(pos, pos + n_out)
        pos += n_out
        out.append((w_sl, b_sl, (n_out, n_in)))
    return out


def split_params(spec: NetworkSpec, w: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of the flat vector as per-layer (weight matrix, bias) pairs."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (spec.param_count,):
        raise DimensionMismatchError(
            f"parameter vector has length {w.shape}, spec needs {spec.param_count}"
        )
    return [
        (w[w_sl].reshape(shape), w[b_sl])
        for w_sl, b_sl, shape in layer_slices(spec)
    ]


def join_params(spec: NetworkSpec, layers) -> np.ndarray:
    """Inverse of :func:`split_params`: flatten per-layer arrays canonically."""
    parts = []
    for (W, b), (_, _, shape) in zip(layers, layer_slices(spec)):
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if W.shape != shape or b.shape != (shape[0],):
            raise DimensionMismatchError(f"layer shape mismatch: {W.shape} vs {shape}")
        parts.append(W.reshape(-1))
        parts.append(b)
    return np.concatenate(parts)


def prunable_coords(spec: NetworkSpec) -> np.ndarray:
    """Boolean vector marking weight coordinates (biases are never prunable)."""
    out = np.zeros(spec.param_count, dtype=bool)
    for w_sl, _, _ in layer_slices(spec):
        out[w_sl] = True
    return out


def dense_mask(spec: NetworkSpec) -> np.ndarray:
    return np.ones(spec.param_count, dtype=bool)


def init_params(spec: NetworkSpec, rng: RngStream) -> np.ndarray:
    """He-initialized weights (std sqrt(2/fan_in)), zero biases."""
    gen = rng.generator()
    layers = []
    for n_in, n_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        W = gen.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
        layers.append((W, np.zeros(n_out)))
    return join_params(spec, layers)


def apply_mask(w: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Elementwise product keeping only the mask's active coordinates."""
    w = np.asarray(w, dtype=np.float64)
    m = np.asarray(m, dtype=bool)
    if w.shape != m.shape:
        raise DimensionMismatchError(f"mask length {m.shape} != params {w.shape}")
    return w * m


@dataclass(frozen=True)
class LossContext:
    """An immutable (architecture, dataset slice) bundle.

    Fixing both makes the training loss a pure function of the parameter
    vector, which is what every landscape probe differentiates or scans.
    """

    spec: NetworkSpec
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DimensionMismatchError("features must be a nonempty (n, d) matrix")
        if X.shape[1] != self.spec.input_size:
            raise DimensionMismatchError(
                f"feature width {X.shape[1]} != network input {self.spec.input_size}"
            )
        if y.shape != (X.shape[0],):
            raise DimensionMismatchError("labels must be one integer per sample")
        if y.min() < 0 or y.max() >= self.spec.output_size:
            raise ValueError(
                f"labels must lie in [0, {self.spec.output_size}), "
                f"got range [{y.min()}, {y.max()}]"
            )
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.spec.param_count

    def subset(self, indices: np.ndarray) -> "LossContext":
        return LossContext(self.spec, self.features[indices], self.labels[indices])

    # Protocol used by the landscape module: loss / grad / hvp over (w, mask).
    def loss(self, w: np.ndarray, mask: np.ndarray) -> float:
        return loss_on(self, w, mask)

    def grad(self, w: np.ndarray, mask: np.ndarray):
        from .autodiff import grad as _grad

        return _grad(self, w, mask)

    def hvp(self, w: np.ndarray, mask: np.ndarray, v: np.ndarray) -> np.ndarray:
        from .autodiff import hvp as _hvp

        return _hvp(self, w, mask, v)


def loss_on(ctx: LossContext, w: np.ndarray, m: np.ndarray) -> float:
    """Mean softmax cross-entropy of the masked network over ctx's slice."""
    from .autodiff import forward_loss

    return forward_loss(ctx, w, m)


def accuracy_on(ctx: LossContext, w: np.ndarray, m: np.ndarray) -> float:
    """Fraction of samples whose argmax logit matches the label.

    Ties resolve to the lowest class index (numpy argmax convention).
    """
    from .autodiff import forward_logits

    logits = forward_logits(ctx, w, m)
    predictions = np.argmax(logits, axis=1)
    return float(np.mean(predictions == ctx.labels))
