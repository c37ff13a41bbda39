"""Shared fixtures: analytic loss contexts and finite-difference oracles.

The landscape module consumes any object with loss/grad/hvp/dim, so analytic
quadratics double as closed-form oracles for radii, spectra, and Taylor
estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

import prunescope as ps
from prunescope.autodiff import GradResult


@dataclass(frozen=True)
class QuadraticContext:
    """loss(w) = offset + 0.5 * (m*w - c)^T H (m*w - c) with closed forms."""

    hessian: np.ndarray
    center: np.ndarray | None = None
    offset: float = 0.0

    def _center(self) -> np.ndarray:
        if self.center is None:
            return np.zeros(self.hessian.shape[0])
        return self.center

    @property
    def dim(self) -> int:
        return self.hessian.shape[0]

    def loss(self, w, mask) -> float:
        d = np.asarray(w) * np.asarray(mask, bool) - self._center()
        return self.offset + 0.5 * float(d @ self.hessian @ d)

    def grad(self, w, mask) -> GradResult:
        m = np.asarray(mask, bool)
        d = np.asarray(w) * m - self._center()
        return GradResult(self.loss(w, mask), (self.hessian @ d) * m)

    def hvp(self, w, mask, v) -> np.ndarray:
        m = np.asarray(mask, bool)
        return (self.hessian @ (np.asarray(v) * m)) * m


def diag_quadratic(diag) -> QuadraticContext:
    return QuadraticContext(np.diag(np.asarray(diag, dtype=np.float64)))


@dataclass(frozen=True)
class FlatContext:
    """Constant loss everywhere (degenerate landscape)."""

    value: float = 0.0
    dim: int = 2

    def loss(self, w, mask) -> float:
        return self.value

    def grad(self, w, mask) -> GradResult:
        return GradResult(self.value, np.zeros(np.asarray(w).size))

    def hvp(self, w, mask, v) -> np.ndarray:
        return np.zeros(np.asarray(v).size)


def random_net_ctx(seed: int, layer_sizes=(2, 8, 2), n_samples: int = 12):
    """A random network + batch whose pre-activations stay clear of ReLU
    kinks, so finite-difference oracles are valid. Returns (ctx, w)."""
    spec = ps.NetworkSpec(layer_sizes)
    rng = ps.RngStream(seed, 0xFD)
    ds = ps.gen_spirals(
        max(2, n_samples // layer_sizes[-1]), layer_sizes[-1], 0.3, rng.derive(0)
    )
    if spec.input_size != 2:
        raise ValueError("random_net_ctx generates 2-D inputs")
    ctx = ps.LossContext(spec, ds.features, ds.labels)
    mask = ps.dense_mask(spec)
    for attempt in range(200):
        w = ps.init_params(spec, rng.derive(1, attempt))
        if min_preactivation(ctx, w, mask) > 1e-3:
            return ctx, w
    raise RuntimeError("could not sample a kink-free configuration")


def min_preactivation(ctx, w, mask) -> float:
    """Smallest |pre-activation| over all hidden units and samples."""
    from prunescope.model import split_params

    layers = split_params(ctx.spec, ps.apply_mask(w, mask))
    a = ctx.features
    closest = math.inf
    for i, (W, b) in enumerate(layers[:-1]):
        z = a @ W.T + b
        closest = min(closest, float(np.min(np.abs(z))))
        a = np.maximum(z, 0.0)
    return closest


def fd_gradient(ctx, w, mask, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the loss, coordinate by coordinate."""
    g = np.zeros(w.size)
    for i in np.flatnonzero(np.asarray(mask, bool)):
        e = np.zeros(w.size)
        e[i] = h
        g[i] = (ps.loss_on(ctx, w + e, mask) - ps.loss_on(ctx, w - e, mask)) / (2 * h)
    return g


def fd_hvp(ctx, w, mask, v, h: float = 1e-4) -> np.ndarray:
    """Central finite difference of gradients along v."""
    gp = ps.grad(ctx, w + h * v, mask).gradient
    gm = ps.grad(ctx, w - h * v, mask).gradient
    return (gp - gm) / (2 * h)


def fd_hessian(ctx, w, mask, h: float = 1e-5) -> np.ndarray:
    """Dense symmetric finite-difference Hessian (tiny networks only)."""
    d = w.size
    H = np.zeros((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        H[:, i] = (
            ps.grad(ctx, w + e, mask).gradient - ps.grad(ctx, w - e, mask).gradient
        ) / (2 * h)
    return 0.5 * (H + H.T)


def max_rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.max(np.abs(b))), floor)
    return float(np.max(np.abs(a - b))) / scale
