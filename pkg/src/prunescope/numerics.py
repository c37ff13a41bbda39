"""Dense-vector primitives, seeded random streams, and small eigensolvers.

Vectors are plain 1-D ``numpy.ndarray`` objects of float64; masks are 1-D
boolean arrays of the same length. Everything here is a pure function of its
inputs, so values can be shared freely across threads.

Randomness comes from :class:`RngStream`, a thin wrapper over the Philox
counter-based bit generator: the pair ``(seed, stream_id)`` fully determines
the sample sequence, and derived streams are independent by construction.
This is what makes per-direction / per-probe work order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegeneratePlaneError,
    DimensionMismatchError,
    EmptySubspaceError,
    NumericalFailureError,
)

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer (used to derive child stream ids)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    ``generator()`` always starts from the same state, so two calls with
    identical keys yield identical sequences. Use :meth:`derive` to split off
    independent child streams (e.g. one per random direction index).
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def derive(self, *indices: int) -> "RngStream":
        sid = self.stream_id & _MASK64
        for k in indices:
            sid = _splitmix64(sid ^ _splitmix64(k & _MASK64))
        return RngStream(self.seed, sid)


def mix_seed(seed: int, *indices: int) -> int:
    """Deterministically fold indices into a 64-bit seed (for per-level seeds)."""
    s = seed & _MASK64
    for k in indices:
        s = _splitmix64(s ^ _splitmix64(k & _MASK64))
    return s


def as_vector(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatchError(f"expected a nonempty 1-D vector, got shape {v.shape}")
    return v


def _check_same_length(*vectors: np.ndarray) -> int:
    n = vectors[0].shape[0]
    for v in vectors[1:]:
        if v.shape[0] != n:
            raise DimensionMismatchError(
                f"vector length mismatch: {n} vs {v.shape[0]}"
            )
    return n


def lerp(p: np.ndarray, q: np.ndarray, alpha: float) -> np.ndarray:
    """Point ``(1 - alpha) * p + alpha * q`` on the segment from p to q."""
    p = as_vector(p)
    q = as_vector(q)
    _check_same_length(p, q)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return (1.0 - alpha) * p + alpha * q


def plane_basis(origin: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (u, v) spanning the plane through three anchor points.

    u points along ``a - origin``; v is ``b - origin`` with its u-component
    removed (one Gram-Schmidt step). Raises :class:`DegeneratePlaneError`
    when the anchors are collinear (|cos| >= 1 - 1e-12).
    """
    origin = as_vector(origin)
    da = as_vector(a) - origin
    db = as_vector(b) - origin
    _check_same_length(da, db)
    na = float(np.linalg.norm(da))
    nb = float(np.linalg.norm(db))
    if na == 0.0 or nb == 0.0:
        raise DegeneratePlaneError("anchor coincides with origin")
    cos = float(np.dot(da, db)) / (na * nb)
    if abs(cos) >= 1.0 - 1e-12:
        raise DegeneratePlaneError(f"anchors are collinear (|cos angle| = {abs(cos):.17g})")
    u = da / na
    v = db - np.dot(db, u) * u
    v -= np.dot(v, u) * u  # second pass keeps near-collinear anchors orthogonal
    v /= np.linalg.norm(v)
    return u, v


def project_to_plane(
    r: np.ndarray, origin: np.ndarray, u: np.ndarray, v: np.ndarray
) -> tuple[float, float]:
    """Coordinates of r in the (u, v) plane through origin: (<r-o,u>, <r-o,v>)."""
    r = as_vector(r)
    origin = as_vector(origin)
    _check_same_length(r, origin, u, v)
    d = r - origin
    return float(np.dot(d, u)), float(np.dot(d, v))


@dataclass(frozen=True)
class Tridiagonal:
    """Symmetric tridiagonal matrix: main diagonal plus one off-diagonal."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=np.float64)
        e = np.asarray(self.offdiag, dtype=np.float64)
        if d.ndim != 1 or d.size == 0:
            raise DimensionMismatchError("diag must be a nonempty 1-D vector")
        if e.shape != (d.size - 1,):
            raise DimensionMismatchError(
                f"offdiag must have length {d.size - 1}, got {e.shape}"
            )
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def size(self) -> int:
        return self.diag.size


def tridiag_eigenvalues(t: Tridiagonal, max_sweeps: int = 50) -> np.ndarray:
    """All eigenvalues of a symmetric tridiagonal matrix, sorted descending.

    Implicit-shift QL iteration with deflation (eigenvalues only). Backward
    stable; each eigenvalue is accurate to a few ulps relative to ||T||.
    Raises :class:`NumericalFailureError` if any eigenvalue fails to converge
    within ``max_sweeps`` implicit QL sweeps.
    """
    n = t.size
    d = t.diag.copy()
    e = np.zeros(n)
    e[: n - 1] = t.offdiag
    eps = np.finfo(np.float64).eps

    for l in range(n):
        sweeps = 0
        while True:
            # locate the first negligible off-diagonal at or beyond l
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            sweeps += 1
            if sweeps > max_sweeps:
                raise NumericalFailureError(
                    f"tridiagonal QL failed to converge for eigenvalue {l} "
                    f"after {max_sweeps} sweeps"
                )
            # implicit Wilkinson-style shift from the leading 2x2
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    # recover from underflow: skip the rest of this sweep
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0

    return np.sort(d)[::-1].copy()


def random_unit_direction(mask: np.ndarray, rng: RngStream) -> np.ndarray:
    """Unit vector with standard-normal components on the mask's active
    coordinates and exact zeros elsewhere."""
    mask = np.asarray(mask, dtype=bool)
    active = int(mask.sum())
    if active == 0:
        raise EmptySubspaceError("mask has no active coordinates")
    gen = rng.generator()
    z = gen.standard_normal(mask.shape[0])
    direction = np.zeros(mask.shape[0])
    direction[mask] = z[mask]
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:  # probability zero with >= 1 active normal coordinate
        raise NumericalFailureError("sampled direction has zero norm")
    return direction / norm
