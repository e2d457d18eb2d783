"""Downstream consumers of operator and trajectory ensembles.

Reduced densities, dipole correlation functions and absorption spectra,
dynamical maps, transfer tensors, and long-horizon propagation.  Densities
are vectorized row-major: vec(rho)[i*N_s + j] = rho_ij, and the map
E_n satisfies vec(rho(t_n)) = E_n vec(rho(0)).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .grids import TimeGrid
from .heom import DensityTrajectory, HeomWorkspace, heom_propagate
from .hops import SIGMA_X, StateTrajectory

__all__ = [
    "DipoleSetup",
    "DynamicalMap",
    "TransferTensorSet",
    "ETA_SET",
    "apply_operator",
    "reduced_density",
    "dipole_decomposition",
    "correlation_function",
    "absorption_spectrum",
    "dynamical_maps",
    "dynamical_maps_heom",
    "transfer_tensors",
    "ttm_propagate",
]

ETA_SET = (1, -1, 1j, -1j)

ETA_LABELS = {1: "eta:+1", -1: "eta:-1", 1j: "eta:+i", -1j: "eta:-i"}


@dataclass(frozen=True)
class DipoleSetup:
    """Dipole operator and ground-state density for the spectrum pipeline."""

    mu: np.ndarray = field(default_factory=lambda: SIGMA_X.copy())
    rho0: np.ndarray = field(
        default_factory=lambda: np.array([[0., 0.], [0., 1.]], dtype=complex))

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=complex)
        rho0 = np.asarray(self.rho0, dtype=complex)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "rho0", rho0)
        if not np.allclose(mu, mu.conj().T, atol=1e-12):
            raise DomainError("dipole operator must be Hermitian")


@dataclass(frozen=True)
class DynamicalMap:
    """E_n for n = 1..N, row-major vectorization."""

    E: np.ndarray            # [N, Ns^2, Ns^2]
    grid: TimeGrid
    source: str = ""

    @property
    def n_sys(self) -> int:
        return int(round(np.sqrt(self.E.shape[1])))


@dataclass(frozen=True)
class TransferTensorSet:
    """Memory kernels T_k for k = 1..K_ttm."""

    T: np.ndarray            # [K_ttm, Ns^2, Ns^2]
    grid: TimeGrid
    source: str = ""

    @property
    def cutoff(self) -> int:
        return self.T.shape[0]


def apply_operator(U, psi0, grid: TimeGrid, init_label: str = "",
                   expected_label: str | None = None,
                   mode: str = "nonlinear", seed: int = 0) -> StateTrajectory:
    """psi_n = U_n psi0 with psi_0 prepended at t_0.

    The constructed operator is specific to the initial state it was trained
    for; a label mismatch is reported as a warning, not an error.
    """
    U = np.asarray(U, dtype=complex)
    psi0 = np.asarray(psi0, dtype=complex)
    if U.ndim != 3 or U.shape[1] != U.shape[2] or U.shape[1] != psi0.size:
        raise ShapeError("operator trajectory does not match the state size")
    if U.shape[0] != grid.n_steps:
        raise ShapeError("operator trajectory does not match the time grid")
    if expected_label is not None and init_label != expected_label:
        warnings.warn(
            f"operator constructed for {init_label!r} applied to "
            f"{expected_label!r}; the operator is initial-state specific",
            stacklevel=2)
    psi = np.concatenate([psi0[None, :], U @ psi0])
    return StateTrajectory(psi, seed, init_label, mode)


def _common_mode(trajs) -> str:
    modes = {t.mode for t in trajs}
    if len(modes) != 1:
        raise DomainError(f"ensemble mixes modes {sorted(modes)}")
    return modes.pop()


def reduced_density(trajs, raw_projectors: bool | None = None) -> DensityTrajectory:
    """Ensemble-average projector estimate of the reduced density.

    Nonlinear trajectories average normalized projectors (the unbiased
    estimator for the norm-preserving unraveling); linear trajectories
    average raw projectors.  ``raw_projectors`` forces either behavior.
    """
    trajs = list(trajs)
    if not trajs:
        raise DomainError("empty ensemble")
    mode = _common_mode(trajs)
    if raw_projectors is None:
        raw_projectors = mode == "linear"
    shapes = {t.psi.shape for t in trajs}
    if len(shapes) != 1:
        raise ShapeError("trajectories do not share a grid")
    P = np.array([t.psi for t in trajs])                 # [M, N+1, Ns]
    proj = np.einsum("mni,mnj->mnij", P, P.conj())
    if not raw_projectors:
        norm2 = np.sum(np.abs(P) ** 2, axis=2)
        proj = proj / norm2[:, :, None, None]
    return DensityTrajectory(proj.mean(axis=0), H_max=-1)


def dipole_decomposition(setup: DipoleSetup):
    """Four weighted pure states with
    sum_eta (eta/2) |psi0(eta)><psi0(eta)| = mu rho0 = |1><2|."""
    if setup.mu.shape != (2, 2) or not np.allclose(setup.mu, SIGMA_X):
        raise DomainError("decomposition requires the sigma_x dipole")
    if not np.allclose(setup.rho0, np.array([[0., 0.], [0., 1.]])):
        raise DomainError("decomposition requires rho0 = |2><2|")
    out = []
    for eta in ETA_SET:
        psi = np.array([1.0, eta], dtype=complex) / np.sqrt(2)
        out.append((eta / 2, psi))
    return out


def _eta_states(ensembles_by_eta):
    missing = [eta for eta in ETA_SET if eta not in ensembles_by_eta]
    if missing:
        raise DomainError(f"missing eta ensembles: {missing}")
    return {eta: list(ensembles_by_eta[eta]) for eta in ETA_SET}


def correlation_function(ensembles_by_eta, setup: DipoleSetup,
                         mode: str = "mu_inserted") -> np.ndarray:
    """Dipole correlation C(t_n) from the four eta-labelled ensembles.

    mu_inserted (default): C = sum_eta (eta/2) E<psi|mu|psi>, the form whose
    Fourier transform is the absorption spectrum.  paper_literal drops mu
    and reduces to sum_eta (eta/2) E<psi|psi>, which vanishes identically
    for unitary evolution; retained as a diagnostic.
    """
    if mode not in ("mu_inserted", "paper_literal"):
        raise DomainError(f"unknown correlation mode {mode!r}")
    groups = _eta_states(ensembles_by_eta)
    C = None
    for eta, trajs in groups.items():
        P = np.array([t.psi for t in trajs])             # [M, N+1, Ns]
        if mode == "mu_inserted":
            vals = np.einsum("mni,ij,mnj->mn", P.conj(), setup.mu, P)
        else:
            vals = np.einsum("mni,mni->mn", P.conj(), P)
        term = (eta / 2) * vals.mean(axis=0)
        C = term if C is None else C + term
    return C


def absorption_spectrum(C: np.ndarray, grid: TimeGrid,
                        window_fraction: float = 0.8,
                        omega: np.ndarray | None = None):
    """Finite-window transform C(w) = Re sum_n dt C(t_n) e^{+i w t_n}.

    The sum runs over 0 < t_n <= window_fraction * t_max (rectangular
    window; minor negative side lobes are expected).  The +iwt kernel puts
    the absorption line at positive frequency for a ground-state rho0.
    Returns (omega, C(w)).
    """
    C = np.asarray(C, dtype=complex)
    if C.shape[0] != grid.n_points:
        raise ShapeError("correlation series does not match the grid")
    if omega is None:
        omega = np.arange(-4.0, 4.0 + 1e-12, 0.005)
    t = grid.times
    mask = (t > 0) & (t <= window_fraction * grid.t_max + 1e-12)
    if not mask.any():
        raise DomainError("empty transform window")
    phases = np.exp(1j * np.outer(omega, t[mask]))
    return omega, (grid.dt * phases @ C[mask]).real


def _vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(rho.shape[:-2] + (-1,))   # row-major


def dynamical_maps(ensembles_by_label, grid: TimeGrid,
                   raw_projectors: bool | None = None,
                   source: str = "stochastic") -> DynamicalMap:
    """Maps E_n from six labelled ensembles ("1", "2", and the four etas).

    Basis columns: |1><1| and |2><2| from the computational-basis ensembles,
    |1><2| from the eta-weighted sum, |2><1| by Hermiticity of the channel.
    """
    needed = ["1", "2"] + [ETA_LABELS[eta] for eta in ETA_SET]
    missing = [lab for lab in needed if lab not in ensembles_by_label]
    if missing:
        raise DomainError(f"missing ensembles for labels {missing}")
    eta_groups = _eta_states(
        {eta: ensembles_by_label[ETA_LABELS[eta]] for eta in ETA_SET})
    rho_1 = reduced_density(ensembles_by_label["1"], raw_projectors).rho
    rho_2 = reduced_density(ensembles_by_label["2"], raw_projectors).rho
    coh = None
    for eta, trajs in eta_groups.items():
        r = reduced_density(trajs, raw_projectors).rho
        term = (eta / 2) * r
        coh = term if coh is None else coh + term
    Ns = rho_1.shape[-1]
    N = grid.n_steps
    if rho_1.shape[0] != N + 1:
        raise ShapeError("ensembles do not match the grid")
    E = np.empty((N, Ns * Ns, Ns * Ns), dtype=complex)
    E[:, :, 0] = _vec(rho_1[1:])
    E[:, :, 3] = _vec(rho_2[1:])
    E[:, :, 1] = _vec(coh[1:])
    E[:, :, 2] = _vec(coh[1:].conj().transpose(0, 2, 1))
    return DynamicalMap(E, grid, source)


def dynamical_maps_heom(ws: HeomWorkspace, grid: TimeGrid) -> DynamicalMap:
    """Deterministic maps: propagate the basis matrices directly.

    |1><2| is propagated as a non-Hermitian source; |2><1| follows by
    Hermiticity.
    """
    e11 = np.array([[1., 0.], [0., 0.]], dtype=complex)
    e22 = np.array([[0., 0.], [0., 1.]], dtype=complex)
    e12 = np.array([[0., 1.], [0., 0.]], dtype=complex)
    r11 = heom_propagate(e11, ws, grid).rho
    r22 = heom_propagate(e22, ws, grid).rho
    r12 = heom_propagate(e12, ws, grid, require_hermitian=False).rho
    N = grid.n_steps
    E = np.empty((N, 4, 4), dtype=complex)
    E[:, :, 0] = _vec(r11[1:])
    E[:, :, 3] = _vec(r22[1:])
    E[:, :, 1] = _vec(r12[1:])
    E[:, :, 2] = _vec(r12[1:].conj().transpose(0, 2, 1))
    return DynamicalMap(E, grid, "heom")


def transfer_tensors(maps: DynamicalMap, cutoff: int) -> TransferTensorSet:
    """T_n = E_n - sum_{k=1}^{n-1} T_{n-k} E_k, for n = 1..cutoff."""
    E = maps.E
    if cutoff < 1 or cutoff > E.shape[0]:
        raise DomainError("cutoff must be in 1..N")
    T = np.empty((cutoff, E.shape[1], E.shape[2]), dtype=complex)
    for n in range(1, cutoff + 1):
        acc = E[n - 1].copy()
        for k in range(1, n):
            acc -= T[n - k - 1] @ E[k - 1]
        T[n - 1] = acc
    return TransferTensorSet(T, maps.grid, maps.source)


def ttm_propagate(tensors: TransferTensorSet, rho0: np.ndarray,
                  n_long: int) -> DensityTrajectory:
    """rho(t_n) = sum_{k=1}^{min(n,K)} T_k rho(t_{n-k}) out to n_long."""
    if n_long < 1:
        raise DomainError("n_long must be >= 1")
    T = tensors.T
    Ns = int(round(np.sqrt(T.shape[1])))
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (Ns, Ns):
        raise ShapeError("rho0 does not match the tensor dimension")
    hist = np.empty((n_long + 1, Ns * Ns), dtype=complex)
    hist[0] = _vec(rho0)
    K = T.shape[0]
    for n in range(1, n_long + 1):
        acc = np.zeros(Ns * Ns, dtype=complex)
        for k in range(1, min(n, K) + 1):
            acc += T[k - 1] @ hist[n - k]
        hist[n] = acc
    return DensityTrajectory(hist.reshape(n_long + 1, Ns, Ns),
                             H_max=-1)
