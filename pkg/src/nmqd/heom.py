"""Hierarchical-equations-of-motion reference dynamics.

Deterministic companion to the stochastic wavefunction solver: the same
exponential bath modes drive a hierarchy of auxiliary density matrices, and
the physical reduced density sits at index 0.  Auxiliaries are rescaled by
sqrt(prod_k h_k! |c_k|^{h_k}), giving the generator

    d rho_h = -i[H, rho_h] - sum_k h_k g_k rho_h
              - i sum_k sqrt((h_k+1)|c_k|) [V, rho_{h+k}]
              - i sum_k sqrt(h_k/|c_k|) (c_k V rho_{h-k} - cbar_k rho_{h-k} V)

where cbar_k are the conjugate-rate coefficients of alpha*(t).  Initial
conditions need not be Hermitian (operator-valued sources appear in the
spectrum calculation), so Hermiticity is only enforced when requested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .bath import BathModes, conjugate_coefficients
from .errors import DomainError, IntegrationError, ShapeError
from .grids import TimeGrid
from .hierarchy import HierarchyIndexSet, enumerate_hierarchy
from .hops import SystemSpec

__all__ = [
    "DensityTrajectory",
    "HeomWorkspace",
    "heom_propagate",
    "population_difference",
]


@dataclass(frozen=True)
class DensityTrajectory:
    """Reduced density matrix at every grid point."""

    rho: np.ndarray          # [N+1, Ns, Ns]
    H_max: int
    failed_at: int = -1

    @property
    def ok(self) -> bool:
        return self.failed_at < 0

    def populations(self) -> np.ndarray:
        return np.einsum("nii->ni", self.rho).real


class HeomWorkspace:
    """Precomputed coefficient tables for one (system, modes, truncation)."""

    def __init__(self, sys: SystemSpec, modes: BathModes, H_max: int,
                 idxset: HierarchyIndexSet | None = None):
        if idxset is None:
            idxset = enumerate_hierarchy(modes.count, H_max)
        if idxset.K != modes.count or idxset.H_max != H_max:
            raise ShapeError("index set does not match modes / truncation")
        self.sys = sys
        self.modes = modes
        self.idxset = idxset
        h = idxset.indices.astype(float)
        absc = np.abs(modes.c)
        if np.any(absc == 0):
            raise DomainError("modes with c = 0 cannot be rescaled")
        cbar = conjugate_coefficients(modes)
        self.gsum = h @ modes.g
        root = np.sqrt(h / absc)
        self.down_a = root * modes.c
        self.down_b = root * cbar
        self.down_a[idxset.down < 0] = 0.0
        self.down_b[idxset.down < 0] = 0.0
        self.up_coef = np.sqrt((h + 1.0) * absc).astype(complex)
        self.up_coef[idxset.up < 0] = 0.0

    @property
    def n_indices(self) -> int:
        return self.idxset.n_indices


def heom_propagate(rho0: np.ndarray, ws: HeomWorkspace, grid: TimeGrid,
                   require_hermitian: bool = True) -> DensityTrajectory:
    """Propagate an initial reduced density (or operator source).

    With ``require_hermitian`` the input must be Hermitian with unit trace;
    disable it to propagate coherence sources such as |1><2|.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    Ns = ws.sys.dim
    if rho0.shape != (Ns, Ns):
        raise ShapeError("rho0 does not match the system dimension")
    if require_hermitian:
        if not np.allclose(rho0, rho0.conj().T, atol=1e-10):
            raise DomainError("initial density must be Hermitian")
        if not np.isclose(np.trace(rho0).real, 1.0, atol=1e-10):
            raise DomainError("initial density must have unit trace")
    R = np.zeros((ws.n_indices, Ns, Ns), dtype=complex)
    R[0] = rho0
    out = np.empty((grid.n_points, Ns, Ns), dtype=complex)
    fail = kernels.heom_propagate_kernel(
        R, out, ws.sys.H, ws.gsum,
        ws.idxset.down, ws.down_a, ws.down_b,
        ws.idxset.up, ws.up_coef, ws.sys.V,
        grid.dt, grid.n_steps)
    return DensityTrajectory(out, ws.idxset.H_max, int(fail))


def population_difference(traj: DensityTrajectory) -> np.ndarray:
    """Delta(t) = rho_11 - rho_22 for a two-level reduced density."""
    if traj.rho.shape[-1] != 2:
        raise ShapeError("population difference is defined for 2x2 densities")
    if not traj.ok:
        raise IntegrationError(
            f"propagation failed at step {traj.failed_at}")
    return (traj.rho[:, 0, 0] - traj.rho[:, 1, 1]).real
