"""Correlated complex Gaussian noise with covariance E[z_t z*_s] = alpha(t-s).

The discretized process is sampled exactly: the Hermitian Toeplitz covariance
built from the exponential-mode correlation function is Cholesky-factored
once per bath, and each trajectory is L @ xi with iid complex normals xi.
Normals come from Box-Muller on a counter-based Philox stream keyed by
(base_seed, trajectory index), so any trajectory is regenerable in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .bath import BathModes, bcf_from_modes
from .errors import FactorizationError, ShapeError
from .grids import TimeGrid

__all__ = [
    "NoiseTrajectory",
    "CovarianceFactor",
    "build_covariance",
    "factor_covariance",
    "sample_noise",
    "sample_noise_batch",
    "empirical_covariance",
]


@dataclass(frozen=True)
class NoiseTrajectory:
    """One realization z_{t_0..t_N} plus the key that regenerates it."""

    z: np.ndarray
    seed: int
    bath_id: str
    base_seed: int = 0


@dataclass(frozen=True)
class CovarianceFactor:
    """Lower-triangular factor with L L^dag ~= C up to the applied jitter."""

    L: np.ndarray
    jitter: float
    bath_id: str


def build_covariance(modes: BathModes, grid: TimeGrid) -> np.ndarray:
    """Hermitian Toeplitz covariance C_mn = alpha(t_m - t_n), m >= n.

    The diagonal uses Re(sum_k c_k): the |t| exponential form carries a
    spurious imaginary part at t = 0 (the equal-time variance of a valid
    process is real), and dropping it is what keeps C Hermitian.
    """
    col = bcf_from_modes(modes, grid.times)
    col[0] = col[0].real
    return toeplitz(col, np.conj(col))


def factor_covariance(C: np.ndarray, bath_id: str = "") -> CovarianceFactor:
    """Cholesky-factor C, escalating diagonal jitter on failure.

    Jitter starts at 1e-12 * tr(C)/n and doubles up to 1e-6 * tr(C)/n
    before giving up with a ``FactorizationError``.
    """
    C = np.asarray(C)
    n = C.shape[0]
    scale = np.trace(C).real / n
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(C + jitter * np.eye(n))
            return CovarianceFactor(L, jitter, bath_id)
        except np.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = 1e-12 * scale
            elif jitter < 1e-6 * scale:
                jitter = min(2 * jitter, 1e-6 * scale)
            else:
                raise FactorizationError(
                    f"covariance not positive definite at max jitter {jitter:.3e}")


def _standard_complex_normals(base_seed: int, stream: int, n: int) -> np.ndarray:
    """n iid complex normals with E[xi xi*] = 1, E[xi xi] = 0.

    Box-Muller on a Philox counter stream keyed by (base_seed, stream);
    platform-independent and embarrassingly parallel over streams.
    """
    key = np.array([base_seed, stream], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    u = gen.random(n)
    v = gen.random(n)
    r = np.sqrt(-2.0 * np.log1p(-u))
    return (r * np.cos(2 * np.pi * v) + 1j * r * np.sin(2 * np.pi * v)) / np.sqrt(2)


def sample_noise(factor: CovarianceFactor, seed: int,
                 base_seed: int = 0) -> NoiseTrajectory:
    """Draw one trajectory z = L xi from the stream (base_seed, seed)."""
    xi = _standard_complex_normals(base_seed, seed, factor.L.shape[0])
    return NoiseTrajectory(factor.L @ xi, seed, factor.bath_id, base_seed)


def sample_noise_batch(factor: CovarianceFactor, base_seed: int,
                       count: int, offset: int = 0) -> np.ndarray:
    """Trajectories offset..offset+count-1 as an array [count, N+1]."""
    n = factor.L.shape[0]
    out = np.empty((count, n), dtype=complex)
    for i in range(count):
        xi = _standard_complex_normals(base_seed, offset + i, n)
        out[i] = factor.L @ xi
    return out


def empirical_covariance(samples) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance (1/M) sum z z^dag and pseudo-covariance
    (1/M) sum z z^T of a trajectory ensemble."""
    if isinstance(samples, np.ndarray):
        Z = samples
    else:
        Z = np.array([s.z if isinstance(s, NoiseTrajectory) else s
                      for s in samples])
    if Z.ndim != 2:
        raise ShapeError("samples must share a common length")
    M = Z.shape[0]
    cov = Z.T @ Z.conj() / M
    pseudo = Z.T @ Z / M
    return cov, pseudo
