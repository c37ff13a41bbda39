"""Reverse-mode differentiation of the MLP loss, with exact Hessian-vector
products.

The forward pass records a Tape of layer-level primitives (affine, ReLU,
fused softmax cross-entropy) together with their activations; the gradient
replays the tape backward once. Hessian-vector products use the classic
R-operator trick: propagate a tangent through the forward pass, then through
the backward pass, which yields H @ v without ever materializing H.

Two conventions worth knowing:

* masked coordinates are frozen at zero — the Hessian and gradient are the
  restriction to the active subspace, exactly zero elsewhere;
* ReLU's second derivative is taken to be zero everywhere (subgradient
  convention), so HVPs are exact away from kinks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailureError
from .model import LossContext, apply_mask, join_params, split_params


@dataclass
class Tape:
    """Recorded forward pass: primitive nodes plus their output values.

    ``nodes[i]`` is ``(kind, input_node_index, layer_index)``; ``values[i]``
    is that node's forward output. Replaying forward then backward visits
    each node exactly once each way.
    """

    nodes: list[tuple[str, int, int]]
    values: list[np.ndarray]
    layers: list[tuple[np.ndarray, np.ndarray]]
    labels: np.ndarray
    probs: np.ndarray
    loss: float


@dataclass(frozen=True)
class GradResult:
    loss: float
    gradient: np.ndarray


def _check_finite(x: np.ndarray, node: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalFailureError(f"non-finite value produced by node {node}")


def _forward_chain(ctx: LossContext, layers) -> tuple[list, list]:
    """Shared affine/ReLU chain; returns (nodes, values) ending at the logits."""
    nodes = [("input", -1, -1)]
    values = [ctx.features]
    a = ctx.features
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = a @ W.T + b
        _check_finite(z, f"affine[{i}]")
        nodes.append(("affine", len(values) - 1, i))
        values.append(z)
        if i < last:
            a = np.maximum(z, 0.0)
            nodes.append(("relu", len(values) - 1, i))
            values.append(a)
        else:
            a = z
    return nodes, values


def _softmax_ce(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and softmax probabilities, log-sum-exp stabilized."""
    zmax = logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits - zmax).sum(axis=1, keepdims=True)) + zmax
    n = logits.shape[0]
    per_sample = lse[:, 0] - logits[np.arange(n), labels]
    loss = float(per_sample.mean())
    probs = np.exp(logits - lse)
    return loss, probs


def build_tape(ctx: LossContext, w: np.ndarray, mask: np.ndarray) -> Tape:
    layers = split_params(ctx.spec, apply_mask(w, mask))
    nodes, values = _forward_chain(ctx, layers)
    loss, probs = _softmax_ce(values[-1], ctx.labels)
    _check_finite(np.asarray(loss), "softmax_ce")
    nodes.append(("softmax_ce", len(values) - 1, -1))
    values.append(np.asarray(loss))
    return Tape(nodes, values, layers, ctx.labels, probs, loss)


def forward_loss(ctx: LossContext, w: np.ndarray, mask: np.ndarray) -> float:
    return build_tape(ctx, w, mask).loss


def forward_logits(ctx: LossContext, w: np.ndarray, mask: np.ndarray) -> np.ndarray:
    layers = split_params(ctx.spec, apply_mask(w, mask))
    _, values = _forward_chain(ctx, layers)
    return values[-1]


def _backward(tape: Tape) -> list[tuple[np.ndarray, np.ndarray]]:
    """Replay the tape in reverse, accumulating per-layer parameter adjoints."""
    n = tape.labels.shape[0]
    grads: list = [None] * len(tape.layers)
    adjoint: dict[int, np.ndarray] = {}

    for idx in range(len(tape.nodes) - 1, -1, -1):
        kind, src, layer = tape.nodes[idx]
        if kind == "softmax_ce":
            dz = tape.probs.copy()
            dz[np.arange(n), tape.labels] -= 1.0
            dz /= n
            adjoint[src] = dz
        elif kind == "relu":
            adjoint[src] = adjoint[idx] * (tape.values[src] > 0.0)
        elif kind == "affine":
            dz = adjoint[idx]
            a_in = tape.values[src]
            W, _ = tape.layers[layer]
            grads[layer] = (dz.T @ a_in, dz.sum(axis=0))
            if src > 0:
                adjoint[src] = dz @ W
    return grads


def grad(ctx: LossContext, w: np.ndarray, mask: np.ndarray) -> GradResult:
    """Loss and exact gradient at ``mask * w``, zeroed on masked coordinates."""
    tape = build_tape(ctx, w, mask)
    flat = join_params(ctx.spec, _backward(tape))
    return GradResult(tape.loss, apply_mask(flat, mask))


def hvp(ctx: LossContext, w: np.ndarray, mask: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Hessian-vector product H @ v restricted to the mask's active subspace.

    Equivalent to differentiating <grad(w), v>: a tangent copy of v is pushed
    through the forward pass, then through the backward pass (the R-operator),
    so the result is exact to machine precision for the piecewise-smooth loss.
    """
    v = apply_mask(np.asarray(v, dtype=np.float64), mask)
    tape = build_tape(ctx, w, mask)
    v_layers = split_params(ctx.spec, v)
    n = tape.labels.shape[0]

    # tangents of every tape value (same indexing as tape.values)
    r_values: list = [np.zeros_like(tape.values[0])]
    ra = r_values[0]
    last = len(tape.layers) - 1
    for idx in range(1, len(tape.nodes)):
        kind, src, layer = tape.nodes[idx]
        if kind == "affine":
            W, _ = tape.layers[layer]
            V, c = v_layers[layer]
            rz = r_values[src] @ W.T + tape.values[src] @ V.T + c
            r_values.append(rz)
        elif kind == "relu":
            r_values.append(r_values[src] * (tape.values[src] > 0.0))
        else:  # softmax_ce tangent is not needed for the backward sweep
            r_values.append(np.zeros(1))

    # combined reverse sweep: plain adjoints dz and their tangents R{dz}
    hgrads: list = [None] * len(tape.layers)
    adjoint: dict[int, np.ndarray] = {}
    r_adjoint: dict[int, np.ndarray] = {}
    for idx in range(len(tape.nodes) - 1, -1, -1):
        kind, src, layer = tape.nodes[idx]
        if kind == "softmax_ce":
            p = tape.probs
            rz = r_values[src]
            dz = p.copy()
            dz[np.arange(n), tape.labels] -= 1.0
            dz /= n
            # R{softmax}: p * (rz - sum(p * rz))
            rp = p * (rz - (p * rz).sum(axis=1, keepdims=True))
            adjoint[src] = dz
            r_adjoint[src] = rp / n
        elif kind == "relu":
            gate = tape.values[src] > 0.0
            adjoint[src] = adjoint[idx] * gate
            r_adjoint[src] = r_adjoint[idx] * gate
        elif kind == "affine":
            dz = adjoint[idx]
            rdz = r_adjoint[idx]
            a_in = tape.values[src]
            ra_in = r_values[src]
            W, _ = tape.layers[layer]
            V, _ = v_layers[layer]
            hgrads[layer] = (rdz.T @ a_in + dz.T @ ra_in, rdz.sum(axis=0))
            if src > 0:
                adjoint[src] = dz @ W
                r_adjoint[src] = rdz @ W + dz @ V
    flat = join_params(ctx.spec, hgrads)
    return apply_mask(flat, mask)
