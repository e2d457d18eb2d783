"""Bath correlation functions and their exponential-sum decompositions.

The environment enters the dynamics only through the correlation function

    alpha(t) = (1/2 pi) int_0^inf dw J(w) [coth(beta w / 2) cos(w t) - i sin(w t)]

with a Drude or Brownian spectral density J(w).  ``bcf_quadrature`` evaluates
this integral numerically (the oracle), while ``pade_decompose`` produces the
exponential-sum form  alpha(t) ~= sum_k c_k exp(-g_k |t|)  consumed by the
noise generator and the hierarchy solvers.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.linalg import eigvalsh_tridiagonal
from scipy.special import sici

from .errors import DecompositionError, DomainError, QuadratureError

__all__ = [
    "SpectralDensity",
    "BathSpec",
    "BathModes",
    "sdf_eval",
    "bcf_quadrature",
    "pade_decompose",
    "bcf_from_modes",
    "validate_decomposition",
    "conjugate_coefficients",
    "modes_to_json",
    "modes_from_json",
]

DRUDE = "drude"
BROWNIAN = "brownian"


@dataclass(frozen=True)
class SpectralDensity:
    """Drude or Brownian spectral density (dimensionless units, hbar = 1)."""

    kind: str
    lam: float
    gamma: float
    omega_b: float | None = None

    def __post_init__(self):
        if self.kind not in (DRUDE, BROWNIAN):
            raise DomainError(f"unknown spectral density kind {self.kind!r}")
        if self.lam <= 0:
            raise DomainError("reorganization energy lambda must be > 0")
        if self.gamma <= 0:
            raise DomainError("width gamma must be > 0")
        if self.kind == BROWNIAN:
            if self.omega_b is None or self.omega_b <= 0:
                raise DomainError("Brownian SDF requires omega_b > 0")

    @property
    def frequency_scale(self) -> float:
        w = max(self.gamma, 1.0)
        if self.kind == BROWNIAN:
            w = max(w, self.omega_b)
        return w


@dataclass(frozen=True)
class BathSpec:
    """Spectral density plus inverse temperature."""

    sdf: SpectralDensity
    beta: float

    def __post_init__(self):
        if self.beta <= 0:
            raise DomainError("inverse temperature beta must be > 0")


@dataclass(frozen=True)
class BathModes:
    """Exponential decomposition alpha(t) = sum_k c_k exp(-g_k |t|)."""

    c: np.ndarray
    g: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        g = np.asarray(self.g, dtype=complex)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "g", g)
        if c.ndim != 1 or g.ndim != 1 or len(c) != len(g):
            raise DomainError("c and g must be 1-d arrays of equal length")
        if np.any(g.real <= 0):
            raise DomainError("all decay rates must have Re(g_k) > 0")

    @property
    def count(self) -> int:
        return len(self.c)

    def content_hash(self) -> str:
        """Stable identifier used to tag noise and dataset files."""
        payload = np.concatenate([self.c.view(float), self.g.view(float)])
        return hashlib.sha256(payload.tobytes()).hexdigest()[:16]


def sdf_eval(sdf: SpectralDensity, omega):
    """Evaluate J(omega) for omega >= 0 (scalar or array)."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise DomainError("spectral density is defined for omega >= 0")
    out = _sdf_rational(sdf, w)
    return out.real if np.isrealobj(omega) or np.isscalar(omega) else out


def _sdf_rational(sdf: SpectralDensity, w):
    """J evaluated as a rational function; valid for complex arguments."""
    if sdf.kind == DRUDE:
        return 2.0 * sdf.lam * sdf.gamma * w / (w**2 + sdf.gamma**2)
    wb2 = sdf.omega_b**2
    return (
        2.0 * sdf.lam * sdf.gamma * wb2 * w
        / ((w**2 - wb2) ** 2 + sdf.gamma**2 * w**2)
    )


# ---------------------------------------------------------------------------
# quadrature oracle


def _tail_coefficients(sdf: SpectralDensity) -> list[tuple[int, float]]:
    """Leading terms of J(w) ~ sum a_m / w**m for large w."""
    lam, gam = sdf.lam, sdf.gamma
    if sdf.kind == DRUDE:
        return [(1, 2 * lam * gam), (3, -2 * lam * gam * gam**2),
                (5, 2 * lam * gam * gam**4)]
    wb2 = sdf.omega_b**2
    p = gam**2 - 2 * wb2
    q = wb2**2
    a = 2 * lam * gam * wb2
    return [(3, a), (5, -a * p), (7, a * (p**2 - q))]


def _oscillatory_tail(coeffs, w_cut: float, t: float) -> complex:
    """sum_m a_m int_{w_cut}^inf w^-m exp(-i w t) dw via Si/Ci recursion."""
    si, ci = sici(w_cut * t)
    t_m = {1: -ci - 1j * (np.pi / 2 - si)}
    phase = np.exp(-1j * w_cut * t)
    m_max = max(m for m, _ in coeffs)
    for m in range(2, m_max + 1):
        t_m[m] = phase / ((m - 1) * w_cut ** (m - 1)) - 1j * t / (m - 1) * t_m[m - 1]
    return sum(a * t_m[m] for m, a in coeffs)


def bcf_quadrature(bath: BathSpec, t: float, rtol: float = 1e-8,
                   cutoff_factor: float = 1.0) -> complex:
    """Evaluate alpha(t) by adaptive quadrature of the defining integral.

    The thermal part J(w) * 2 n(w) decays exponentially and is integrated on
    a finite window; the zero-temperature part is integrated up to a cutoff
    with the remainder summed analytically from the large-w expansion of J.
    ``cutoff_factor`` scales both windows (used by the refinement check).

    Raises ``QuadratureError`` when the accumulated error estimate exceeds
    the requested relative accuracy.
    """
    if t <= 0:
        raise DomainError("bcf_quadrature requires t > 0")
    sdf, beta = bath.sdf, bath.beta
    scale = sdf.frequency_scale

    # thermal part: J(w) coth(beta w/2) cos(w t) minus its T=0 limit
    w_th = cutoff_factor * max(50.0 / beta, 12.0 * scale)

    def thermal(w):
        if w == 0.0:
            if sdf.kind == DRUDE:
                slope = 2 * sdf.lam / sdf.gamma
            else:
                slope = 2 * sdf.lam * sdf.gamma / sdf.omega_b**2
            return 2.0 * slope / beta
        return _sdf_rational(sdf, w) * 2.0 / np.expm1(beta * w)

    th_val, th_err = integrate.quad(
        thermal, 0.0, w_th, weight="cos", wvar=t,
        epsabs=1e-13, epsrel=1e-11, limit=800)

    # zero-temperature part: J(w) exp(-i w t), analytic oscillatory tail
    w_cut = cutoff_factor * 120.0 * scale

    def bare(w):
        return _sdf_rational(sdf, w)

    re_val, re_err = integrate.quad(
        bare, 0.0, w_cut, weight="cos", wvar=t,
        epsabs=1e-13, epsrel=1e-11, limit=800)
    im_val, im_err = integrate.quad(
        bare, 0.0, w_cut, weight="sin", wvar=t,
        epsabs=1e-13, epsrel=1e-11, limit=800)
    coeffs = _tail_coefficients(sdf)
    tail = _oscillatory_tail(coeffs, w_cut, t)
    # crude bound on the truncated expansion of J in the tail
    m_last, a_last = coeffs[-1]
    tail_err = abs(a_last) / (w_cut**m_last) * scale**2 / w_cut

    val = (th_val + re_val - 1j * im_val + tail) / (2.0 * np.pi)
    err = (th_err + re_err + im_err + tail_err) / (2.0 * np.pi)
    if err > rtol * max(abs(val), sdf.lam):
        raise QuadratureError(
            f"quadrature for alpha({t}) did not converge (residual {err:.3e})",
            residual=err)
    return val


# ---------------------------------------------------------------------------
# Pade / Matsubara decomposition of coth


def pade_frequencies(n_poles: int, scheme: str = "pade"):
    """Poles xi_j and weights kappa_j of the [N-1/N] expansion

        coth(x/2) ~= 2/x + sum_j 4 kappa_j x / (x**2 + xi_j**2).

    The Matsubara scheme returns the textbook series xi_j = 2 pi j,
    kappa_j = 1 instead.
    """
    if n_poles == 0:
        return np.zeros(0), np.zeros(0)
    if scheme == "matsubara":
        j = np.arange(1, n_poles + 1)
        return 2.0 * np.pi * j, np.ones(n_poles)
    if scheme != "pade":
        raise DomainError(f"unknown decomposition scheme {scheme!r}")

    n = n_poles
    off = np.array([1.0 / np.sqrt((2 * k + 3) * (2 * k + 5))
                    for k in range(2 * n - 1)])
    evals = eigvalsh_tridiagonal(np.zeros(2 * n), off)
    if evals[n - 1] >= 0:
        raise DecompositionError("Pade eigenvalue solve returned wrong pole count")
    xi = np.sort(-2.0 / evals[:n])

    if n > 1:
        off_p = np.array([1.0 / np.sqrt((2 * k + 5) * (2 * k + 7))
                          for k in range(2 * n - 2)])
        evals_p = eigvalsh_tridiagonal(np.zeros(2 * n - 1), off_p)
        chi = np.sort(-2.0 / evals_p[: n - 1])
    else:
        chi = np.zeros(0)

    prefactor = 0.5 * n * (2 * (n + 1) + 1)
    kappa = np.empty(n)
    for j in range(n):
        term = prefactor
        for k in range(n - 1):
            term *= (chi[k] ** 2 - xi[j] ** 2) / (
                xi[k] ** 2 - xi[j] ** 2 + (1.0 if k == j else 0.0))
        term /= xi[n - 1] ** 2 - xi[j] ** 2 + (1.0 if n - 1 == j else 0.0)
        kappa[j] = term
    return xi, kappa


def _coth(x):
    return 1.0 / np.tanh(x)


def _sdf_pole_modes(bath: BathSpec) -> tuple[np.ndarray, np.ndarray]:
    """Modes from the poles of J(w) in the lower half plane."""
    sdf, beta = bath.sdf, bath.beta
    if sdf.kind == DRUDE:
        x = beta * sdf.gamma / 2.0
        if abs(np.sin(x)) < 1e-12:
            raise DecompositionError(
                "beta*gamma/2 hits a pole of cot; perturb the parameters")
        c = 0.5 * sdf.lam * sdf.gamma * (np.cos(x) / np.sin(x) - 1j)
        return np.array([c]), np.array([sdf.gamma + 0j])

    wb2 = sdf.omega_b**2
    roots = np.roots([1.0, 0.0, sdf.gamma**2 - 2 * wb2, 0.0, wb2**2])
    lower = roots[roots.imag < 0]
    if len(lower) != 2 or abs(lower[0] - lower[1]) < 1e-10 * sdf.omega_b:
        raise DecompositionError(
            "degenerate Brownian poles (critical damping gamma = 2 omega_b)")
    cs, gs = [], []
    for w_p in lower:
        num = 2 * sdf.lam * sdf.gamma * wb2 * w_p
        den_prime = 4 * w_p**3 + 2 * (sdf.gamma**2 - 2 * wb2) * w_p
        residue = num / den_prime
        cs.append(-0.5j * residue * (_coth(beta * w_p / 2.0) + 1.0))
        gs.append(1j * w_p)
    return np.array(cs), np.array(gs)


def pade_decompose(bath: BathSpec, n_poles: int,
                   scheme: str = "pade") -> BathModes:
    """Decompose alpha(t) into exponentials.

    One mode per pole of J (Drude) or two (Brownian), plus ``n_poles``
    thermal modes from the [N-1/N] expansion of coth (or the Matsubara
    series).  The total mode count is recorded in the metadata.
    """
    if n_poles < 0:
        raise DomainError("n_poles must be >= 0")
    c_sdf, g_sdf = _sdf_pole_modes(bath)
    xi, kappa = pade_frequencies(n_poles, scheme)
    sdf, beta = bath.sdf, bath.beta
    c_th = np.array([-1j * k * _sdf_rational(sdf, -1j * x / beta) / beta
                     for x, k in zip(xi, kappa)], dtype=complex)
    g_th = (xi / beta).astype(complex)
    meta = {
        "kind": sdf.kind, "lambda": sdf.lam, "gamma": sdf.gamma,
        "omega_b": sdf.omega_b, "beta": beta,
        "scheme": scheme, "n_poles": n_poles,
    }
    return BathModes(np.concatenate([c_sdf, c_th]),
                     np.concatenate([g_sdf, g_th]), meta)


def bcf_from_modes(modes: BathModes, t) -> complex | np.ndarray:
    """sum_k c_k exp(-g_k |t|); even in t by construction."""
    tt = np.abs(np.asarray(t, dtype=float))
    vals = np.tensordot(np.exp(-np.multiply.outer(tt, modes.g)), modes.c, axes=1)
    return complex(vals) if np.isscalar(t) else vals


def validate_decomposition(modes: BathModes, bath: BathSpec, grid) -> float:
    """Max relative residual of the exponential fit against the quadrature
    oracle, normalized by the largest |alpha| on the grid."""
    ts = np.asarray(grid, dtype=float)
    if ts.size == 0:
        raise DomainError("validation grid must not be empty")
    if np.any(ts <= 0):
        raise DomainError("validation grid points must be > 0")
    exact = np.array([bcf_quadrature(bath, t) for t in ts])
    fit = bcf_from_modes(modes, ts)
    return float(np.max(np.abs(fit - exact)) / np.max(np.abs(exact)))


def conjugate_coefficients(modes: BathModes, rtol: float = 1e-9) -> np.ndarray:
    """Coefficients cbar_k with alpha*(t) = sum_k cbar_k exp(-g_k |t|).

    Each mode is matched with the mode whose rate is the complex conjugate
    of its own (itself, for real rates).
    """
    g = modes.g
    cbar = np.empty_like(modes.c)
    scale = np.max(np.abs(g))
    for k, gk in enumerate(g):
        matches = np.nonzero(np.abs(g - np.conj(gk)) <= rtol * scale)[0]
        if len(matches) == 0:
            raise DecompositionError(
                "mode set is not closed under conjugation of the rates")
        cbar[k] = np.conj(modes.c[matches[0]])
    return cbar


# ---------------------------------------------------------------------------
# JSON serialization


def modes_to_json(modes: BathModes) -> str:
    doc = {
        "K": modes.count,
        "c": [[z.real, z.imag] for z in modes.c],
        "g": [[z.real, z.imag] for z in modes.g],
        "meta": modes.meta,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def modes_from_json(text: str) -> BathModes:
    doc = json.loads(text)
    c = np.array([complex(re, im) for re, im in doc["c"]])
    g = np.array([complex(re, im) for re, im in doc["g"]])
    if doc.get("K") != len(c):
        raise DomainError("mode count K disagrees with coefficient list")
    return BathModes(c, g, doc.get("meta", {}))
