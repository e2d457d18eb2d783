"""Hierarchy-of-pure-states propagation (linear and nonlinear).

Produces the stochastic wavefunction trajectories that serve as training and
validation data for the operator learner.  Auxiliary states are rescaled by
sqrt(prod_k h_k! |c_k|^{h_k}) so deep hierarchies stay in floating-point
range; the physical state (index 0) is unaffected.  In the rescaled
convention the generator reads

    d psi_h = (-i H_s - sum_k h_k g_k + zt V) psi_h
              + sum_k sqrt(h_k |c_k|) (c_k/|c_k|) V psi_{h-k}
              - (V^dag - <V^dag>_t) sum_k sqrt((h_k+1) |c_k|) psi_{h+k}

with hard truncation above H_max.  The linear variant drops the expectation
terms and uses zt = z*_t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .bath import BathModes
from .errors import DomainError, IntegrationError, ShapeError
from .grids import TimeGrid
from .hierarchy import HierarchyIndexSet, enumerate_hierarchy
from .noise import NoiseTrajectory

__all__ = [
    "SystemSpec",
    "StateTrajectory",
    "spin_boson",
    "HopsWorkspace",
    "shifted_noise_step",
    "hops_rhs_reference",
    "propagate",
    "propagate_ensemble",
]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

NORM_LIMIT = 1e6


@dataclass(frozen=True)
class SystemSpec:
    """System Hamiltonian and coupling operator."""

    H: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        V = np.asarray(self.V, dtype=complex)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "V", V)
        if H.shape != V.shape or H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ShapeError("H and V must be square matrices of equal size")
        if not np.allclose(H, H.conj().T, atol=1e-12):
            raise DomainError("system Hamiltonian must be Hermitian")

    @property
    def dim(self) -> int:
        return self.H.shape[0]


def spin_boson(omega: float = 1.0, delta: float = 0.5) -> SystemSpec:
    """The benchmark two-level system H = (omega/2) s_z + delta s_x, V = s_z."""
    return SystemSpec((omega / 2) * SIGMA_Z + delta * SIGMA_X, SIGMA_Z)


@dataclass(frozen=True)
class StateTrajectory:
    """Physical state at every grid point for one noise realization."""

    psi: np.ndarray          # [N+1, Ns]
    seed: int
    init_label: str
    mode: str                # "linear" | "nonlinear"
    failed_at: int = -1      # first failing step, -1 if clean

    @property
    def ok(self) -> bool:
        return self.failed_at < 0


def shifted_noise_step(shift_mem: np.ndarray, exp_vdag: complex,
                       modes: BathModes, dt: float):
    """One exact-exponential update of the shifted-noise accumulators.

    s_k <- exp(-g*_k dt) (s_k + dt c*_k <V^dag>_t); returns the updated
    accumulators and their sum (the shift contribution to zt).
    """
    updated = np.exp(-np.conj(modes.g) * dt) * (
        shift_mem + dt * np.conj(modes.c) * exp_vdag)
    return updated, updated.sum()


class HopsWorkspace:
    """Precomputed coefficient tables for a (system, modes, truncation)."""

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
        phase = np.where(absc > 0, modes.c / np.where(absc > 0, absc, 1.0), 0.0)
        self.gsum = h @ modes.g
        self.down_coef = np.sqrt(h * absc) * phase
        self.down_coef[idxset.down < 0] = 0.0
        self.up_coef = np.sqrt((h + 1.0) * absc).astype(complex)
        self.up_coef[idxset.up < 0] = 0.0
        self.Hm = -1j * sys.H
        self.V = sys.V
        self.Vd = sys.V.conj().T

    @property
    def n_indices(self) -> int:
        return self.idxset.n_indices


def hops_rhs_reference(ws: HopsWorkspace, psi: np.ndarray, z_tilde: complex,
                       mode: str) -> np.ndarray:
    """Straightforward numpy evaluation of the generator, for tests.

    ``psi`` has shape [n_indices, Ns]; nonlinear mode computes <V^dag> from
    the normalized physical component.
    """
    if np.isnan(psi).any():
        raise IntegrationError("NaN in hierarchy state")
    idx = ws.idxset
    ev = 0.0
    if mode == "nonlinear":
        p0 = psi[0]
        n2 = np.vdot(p0, p0).real
        if n2 > 0:
            ev = np.vdot(p0, ws.Vd @ p0) / n2
    out = psi @ ws.Hm.T - ws.gsum[:, None] * psi + z_tilde * (psi @ ws.V.T)
    down = np.where(idx.down >= 0, idx.down, 0)
    up = np.where(idx.up >= 0, idx.up, 0)
    for k in range(idx.K):
        out += ws.down_coef[:, k, None] * (psi[down[:, k]] @ ws.V.T)
        contrib = psi[up[:, k]] @ ws.Vd.T - ev * psi[up[:, k]]
        out -= ws.up_coef[:, k, None] * contrib
    return out


def _noise_lengths(grid: TimeGrid) -> tuple[int, int]:
    # grid-sampled, or half-step sampled (exact RK4 stage values)
    return grid.n_points, 2 * grid.n_steps + 1


def _prepare_noise(z, grid: TimeGrid):
    arr = z.z if isinstance(z, NoiseTrajectory) else np.asarray(z, dtype=complex)
    if arr.shape[-1] not in _noise_lengths(grid):
        raise ShapeError("noise trajectory does not match the time grid")
    return arr


def propagate_ensemble(psi0: np.ndarray, Z: np.ndarray, ws: HopsWorkspace,
                       grid: TimeGrid, mode: str = "nonlinear",
                       dtype=np.complex128, batch: int = 32,
                       init_label: str = "", seeds=None) -> list[StateTrajectory]:
    """Propagate many noise realizations of one initial state.

    ``Z`` is [M, N+1].  Trajectories are advanced in lockstep batches so the
    hierarchy coefficient tables are traversed once per RK4 stage for the
    whole batch.  Results are bit-reproducible for a fixed batch size.
    """
    if mode not in ("linear", "nonlinear"):
        raise DomainError(f"unknown mode {mode!r}")
    psi0 = np.asarray(psi0, dtype=complex)
    if not np.isclose(np.linalg.norm(psi0), 1.0, atol=1e-8):
        raise DomainError("initial state must be normalized")
    M = Z.shape[0]
    if Z.shape[1] not in _noise_lengths(grid):
        raise ShapeError("noise array does not match the time grid")
    if seeds is None:
        seeds = np.arange(M)
    Ns = ws.sys.dim
    out = []
    for lo in range(0, M, batch):
        hi = min(lo + batch, M)
        B = hi - lo
        P = np.zeros((ws.n_indices, Ns, B), dtype=dtype)
        P[0] = psi0[:, None]
        states = np.empty((B, grid.n_points, Ns), dtype=dtype)
        fail = np.full(B, -1, dtype=np.int64)
        kernels.hops_propagate_batch(
            P, np.ascontiguousarray(Z[lo:hi].astype(dtype)), states, fail,
            ws.Hm.astype(dtype), ws.gsum.astype(dtype),
            ws.idxset.down, ws.down_coef.astype(dtype),
            ws.idxset.up, ws.up_coef.astype(dtype),
            ws.V.astype(dtype), ws.Vd.astype(dtype),
            np.conj(ws.modes.c).astype(dtype), np.conj(ws.modes.g).astype(dtype),
            dtype(grid.dt), mode == "nonlinear", NORM_LIMIT)
        for b in range(B):
            out.append(StateTrajectory(
                states[b].astype(np.complex128), int(seeds[lo + b]),
                init_label, mode, int(fail[b])))
    return out


def propagate(psi0, z, ws: HopsWorkspace, grid: TimeGrid,
              mode: str = "nonlinear", dtype=np.complex128,
              init_label: str = "") -> StateTrajectory:
    """Single-trajectory wrapper around :func:`propagate_ensemble`."""
    arr = _prepare_noise(z, grid)
    seed = z.seed if isinstance(z, NoiseTrajectory) else 0
    return propagate_ensemble(
        psi0, arr[None, :], ws, grid, mode=mode, dtype=dtype,
        init_label=init_label, seeds=[seed])[0]
