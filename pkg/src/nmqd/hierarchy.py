"""Multi-index bookkeeping for the auxiliary-state hierarchies.

Indices h = (h_1..h_K) with sum h_k <= H_max are enumerated in graded
lexicographic order (by total depth, then lexicographically), giving a
deterministic flat layout shared by the wavefunction and density-matrix
solvers.  Neighbor tables map (index, mode) to the positions of h +- e_k,
with -1 marking truncated neighbors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DomainError

__all__ = ["HierarchyIndexSet", "enumerate_hierarchy"]

DEFAULT_MAX_INDICES = 5_000_000


@dataclass(frozen=True)
class HierarchyIndexSet:
    """Flattened multi-index set with up/down neighbor tables."""

    K: int
    H_max: int
    indices: np.ndarray   # [n, K] int32
    up: np.ndarray        # [n, K] int32, -1 if truncated
    down: np.ndarray      # [n, K] int32, -1 if h_k = 0

    @property
    def n_indices(self) -> int:
        return self.indices.shape[0]


def _compositions(K: int, total: int):
    """All h with sum h = total, K parts, in lexicographic order."""
    if K == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(K - 1, total - first):
            yield (first,) + rest


def enumerate_hierarchy(K: int, H_max: int,
                        max_indices: int = DEFAULT_MAX_INDICES) -> HierarchyIndexSet:
    """Build the downward-closed index set {h : sum h_k <= H_max}."""
    if K < 1:
        raise DomainError("K must be >= 1")
    if H_max < 0:
        raise DomainError("H_max must be >= 0")
    count = math.comb(K + H_max, K)
    if count > max_indices:
        raise CapacityError(
            f"hierarchy would contain {count} indices (budget {max_indices})")

    rows = []
    for level in range(H_max + 1):
        rows.extend(_compositions(K, level))
    indices = np.array(rows, dtype=np.int32).reshape(count, K)
    position = {h: i for i, h in enumerate(rows)}

    up = np.full((count, K), -1, dtype=np.int32)
    down = np.full((count, K), -1, dtype=np.int32)
    for i, h in enumerate(rows):
        for k in range(K):
            if sum(h) < H_max:
                up[i, k] = position[h[:k] + (h[k] + 1,) + h[k + 1:]]
            if h[k] > 0:
                down[i, k] = position[h[:k] + (h[k] - 1,) + h[k + 1:]]
    return HierarchyIndexSet(K, H_max, indices, up, down)
