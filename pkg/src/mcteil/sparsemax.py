"""Sparsemax, discrete Tsallis entropy, and the Brier score.

The sparsemax of a score vector is its Euclidean projection onto the
probability simplex.  Unlike softmax it can assign exactly zero mass,
so the support of the resulting distribution is explicit and typically
small.  The ``1/2 * (1 - sum p^2)`` Tsallis entropy and the Brier score
live here as well because all three share the same simplex geometry:
sparsemax is the prox of the negative Tsallis entropy, and the expected
Brier score of a distribution against its own draws equals its Tsallis
entropy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SimplexVector",
    "SparsemaxResult",
    "sparsemax",
    "sparsemax_batch",
    "tsallis_entropy_discrete",
    "brier_score",
]

# Construction accepts float drift up to 1e-9 and renormalizes; after
# construction all simplex identities are expected to hold to 1e-12.
SUM_ATOL = 1e-9
SIMPLEX_ATOL = 1e-12


@dataclass(frozen=True)
class SimplexVector:
    """A probability vector over n >= 1 outcomes.

    Entries below -1e-12 are rejected outright; tiny negative drift is
    clamped to zero.  The vector is renormalized when its sum is within
    1e-9 of one and rejected otherwise, which separates accumulated
    float error from genuine logic bugs upstream.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("a simplex vector must be 1-D and nonempty")
        if not np.all(np.isfinite(p)):
            raise ValueError("simplex entries must be finite")
        if np.any(p < -SIMPLEX_ATOL):
            raise ValueError(f"negative probability {p.min()!r}")
        p = np.maximum(p, 0.0)
        total = float(p.sum())
        if abs(total - 1.0) > SUM_ATOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "probs", p / total)

    @property
    def support(self) -> np.ndarray:
        """Indices carrying strictly positive probability."""
        return np.flatnonzero(self.probs > 0.0)

    def __len__(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class SparsemaxResult:
    """Projection output: the distribution, its threshold tau, and support."""

    dist: SimplexVector
    threshold: float
    support: np.ndarray
    support_size: int


def sparsemax_batch(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise sparsemax of a 2-D score array.

    Uses the sort-based simplex projection: sort each row in descending
    order, find the largest k with ``1 + k*z_(k) > sum_{j<=k} z_(j)``,
    set ``tau = (sum_{j<=k} z_(j) - 1)/k`` and clip ``z - tau`` at zero.
    Ties at the support boundary enter or leave together, so the rule is
    well defined for repeated scores.

    Returns (probs, tau, support_size) with shapes (B, n), (B,), (B,).
    """
    z = np.asarray(scores, dtype=float)
    if z.ndim != 2 or z.shape[1] == 0:
        raise ValueError("expected a nonempty 2-D score array")
    if not np.all(np.isfinite(z)):
        raise ValueError("sparsemax scores must be finite")
    n = z.shape[1]
    z_sorted = -np.sort(-z, axis=1)
    cumsum = np.cumsum(z_sorted, axis=1)
    ks = np.arange(1, n + 1, dtype=float)
    # 1 + k*z_(k) - cumsum_k is non-increasing in k, so the feasible set
    # is a prefix and its size equals the count of positive entries.
    feasible = 1.0 + ks * z_sorted > cumsum
    k_support = feasible.sum(axis=1)
    top = np.take_along_axis(cumsum, k_support[:, None] - 1, axis=1)[:, 0]
    tau = (top - 1.0) / k_support
    probs = np.maximum(z - tau[:, None], 0.0)
    return probs, tau, k_support


def sparsemax(scores) -> SparsemaxResult:
    """Euclidean projection of a score vector onto the probability simplex.

    argmin_p ||p - scores||^2 over the simplex.  The threshold tau is the
    amount subtracted from every supported score: dist[i] = scores[i] - tau
    on the support and exactly zero elsewhere.
    """
    z = np.atleast_1d(np.asarray(scores, dtype=float))
    if z.ndim != 1:
        raise ValueError("sparsemax expects a single score vector")
    probs, tau, _ = sparsemax_batch(z[None, :])
    dist = SimplexVector(probs[0])
    support = dist.support
    return SparsemaxResult(dist, float(tau[0]), support, int(support.size))


def _as_probs(dist) -> np.ndarray:
    if isinstance(dist, SimplexVector):
        return dist.probs
    return SimplexVector(np.asarray(dist, dtype=float)).probs


def tsallis_entropy_discrete(dist) -> float:
    """Tsallis entropy ``1/2 * (1 - sum_i p_i^2)`` of a distribution.

    Zero exactly on deterministic distributions and maximal, at
    ``(1 - 1/n)/2``, on the uniform distribution.
    """
    p = _as_probs(dist)
    return 0.5 * (1.0 - float(p @ p))


def brier_score(dist, outcome: int) -> float:
    """Quadratic scoring rule ``1/2 * sum_a (1{a == outcome} - p_a)^2``.

    The expectation of this score over ``outcome ~ dist`` equals
    ``tsallis_entropy_discrete(dist)``.
    """
    p = _as_probs(dist)
    idx = int(outcome)
    if idx != outcome or not 0 <= idx < p.size:
        raise ValueError(f"outcome {outcome!r} is not a valid index for {p.size} outcomes")
    err = -p.copy()
    err[idx] += 1.0
    return 0.5 * float(err @ err)
