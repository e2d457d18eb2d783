"""Fourier-layer operator network.

The learner maps the per-trajectory channel encoding (time stamp, noise,
initial state) to a time series of system-sized complex matrices.  Input and
output projections are pointwise feedforward stacks; between them, parallel
blocks of Fourier layers with increasing depth process the same lifted
sequence and their outputs are summed.  Everything runs in double precision:
the spectral weights are the only complex parameters, the rest of the
arithmetic is real.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..errors import DomainError, ForwardError, ShapeError
from ..grids import TimeGrid
from ..noise import NoiseTrajectory

__all__ = ["ArchConfig", "NeuralOperator", "build_model", "encode_input",
           "extend_modes", "model_forward"]


@dataclass(frozen=True)
class ArchConfig:
    """Network geometry; `paper` is the publication-scale instantiation."""

    N: int
    n_sys: int = 2
    block_depths: tuple = (1, 2, 4)
    latent_dim: int = 32
    n_modes: int = 256
    projection_depth: int = 4
    projection_hidden: int = 128

    def __post_init__(self):
        object.__setattr__(self, "block_depths", tuple(self.block_depths))
        if min((self.N, self.n_sys, self.latent_dim, self.n_modes,
                self.projection_depth, self.projection_hidden,
                *self.block_depths)) < 1:
            raise DomainError("all architecture sizes must be positive")
        if self.n_modes > self.N // 2 + 1:
            raise DomainError("n_modes exceeds the spectrum length N/2+1")
        if any(a >= b for a, b in zip(self.block_depths, self.block_depths[1:])):
            raise DomainError("block_depths must be strictly ascending")

    @property
    def in_channels(self) -> int:
        return 3 + 2 * self.n_sys

    @property
    def out_channels(self) -> int:
        return 2 * self.n_sys * self.n_sys

    @classmethod
    def paper(cls, N: int = 1000, n_sys: int = 2) -> "ArchConfig":
        return cls(N=N, n_sys=n_sys)

    @classmethod
    def tiny(cls, N: int = 32, n_sys: int = 2) -> "ArchConfig":
        """Smallest useful instantiation, for gradient and overfit checks."""
        return cls(N=N, n_sys=n_sys, block_depths=(1, 2), latent_dim=4,
                   n_modes=min(8, N // 2 + 1), projection_depth=3,
                   projection_hidden=64)

    @classmethod
    def desk(cls, N: int = 1000, n_sys: int = 2) -> "ArchConfig":
        """Laptop-scale model for the reduced training runs."""
        return cls(N=N, n_sys=n_sys, block_depths=(1, 2), latent_dim=16,
                   n_modes=min(64, N // 2 + 1), projection_depth=2,
                   projection_hidden=64)

    def to_dict(self) -> dict:
        return {
            "N": self.N, "n_sys": self.n_sys,
            "block_depths": list(self.block_depths),
            "latent_dim": self.latent_dim, "n_modes": self.n_modes,
            "projection_depth": self.projection_depth,
            "projection_hidden": self.projection_hidden,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(N=int(d["N"]), n_sys=int(d["n_sys"]),
                   block_depths=tuple(d["block_depths"]),
                   latent_dim=int(d["latent_dim"]), n_modes=int(d["n_modes"]),
                   projection_depth=int(d["projection_depth"]),
                   projection_hidden=int(d["projection_hidden"]))


def encode_input(grid: TimeGrid, z, psi0) -> np.ndarray:
    """Channel encoding [N, 3 + 2 N_s] for time points t_1..t_N.

    Channels: scaled time t_n/t_max, Re/Im of the noise at t_n, then Re/Im
    of each initial-state amplitude broadcast along time.  t_0 is excluded
    since the evolution operator there is the identity.
    """
    zarr = z.z if isinstance(z, NoiseTrajectory) else np.asarray(z, dtype=complex)
    psi0 = np.asarray(psi0, dtype=complex)
    if zarr.ndim != 1 or zarr.shape[0] != grid.n_points:
        raise ShapeError("noise length does not match the time grid")
    if not np.isclose(np.linalg.norm(psi0), 1.0, atol=1e-8):
        raise DomainError("initial state must be normalized")
    N = grid.n_steps
    out = np.empty((N, 3 + 2 * psi0.size), dtype=float)
    out[:, 0] = grid.times[1:] / grid.t_max
    out[:, 1] = zarr[1:].real
    out[:, 2] = zarr[1:].imag
    out[:, 3::2] = psi0.real
    out[:, 4::2] = psi0.imag
    return out


def _mlp(depth: int, c_in: int, hidden: int, c_out: int) -> torch.nn.Sequential:
    widths = [c_in] + [hidden] * (depth - 1) + [c_out]
    layers = []
    for i, (a, b) in enumerate(zip(widths, widths[1:])):
        layers.append(torch.nn.Linear(a, b, dtype=torch.float64))
        if i < depth - 1:
            layers.append(torch.nn.GELU())
    return torch.nn.Sequential(*layers)


class FourierLayer(torch.nn.Module):
    """y = GELU(W x + b + irfft(R * truncated rfft(x)))."""

    def __init__(self, latent: int, n_modes: int):
        super().__init__()
        self.n_modes = n_modes
        self.pointwise = torch.nn.Linear(latent, latent, dtype=torch.float64)
        scale = 1.0 / (latent * np.sqrt(n_modes))
        self.spectral = torch.nn.Parameter(
            scale * torch.randn(latent, latent, n_modes, dtype=torch.complex128))

    def forward(self, x):
        # x: [B, N, latent]; DFT along time, forward unnormalized,
        # inverse carries the 1/N
        xf = torch.fft.rfft(x, dim=1)
        kept = torch.einsum("bfi,iof->bfo", xf[:, :self.n_modes], self.spectral)
        pad = xf.shape[1] - kept.shape[1]
        if pad > 0:
            kept = torch.nn.functional.pad(kept.transpose(1, 2), (0, pad)
                                           ).transpose(1, 2)
        conv = torch.fft.irfft(kept, n=x.shape[1], dim=1)
        return torch.nn.functional.gelu(self.pointwise(x) + conv)


class NeuralOperator(torch.nn.Module):
    """Lift, parallel Fourier blocks on the shared lifted input, project."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        self.lift = _mlp(cfg.projection_depth, cfg.in_channels,
                         cfg.projection_hidden, cfg.latent_dim)
        self.blocks = torch.nn.ModuleList(
            torch.nn.Sequential(*[FourierLayer(cfg.latent_dim, cfg.n_modes)
                                  for _ in range(depth)])
            for depth in cfg.block_depths)
        self.project = _mlp(cfg.projection_depth, cfg.latent_dim,
                            cfg.projection_hidden, cfg.out_channels)

    def parameter_count(self) -> int:
        # complex parameters count as their real degrees of freedom
        return sum((2 if p.is_complex() else 1) * p.numel()
                   for p in self.parameters())

    def forward(self, x):
        """x: [B, N, in_channels] real -> U: [B, N, N_s, N_s] complex."""
        if x.ndim != 3 or x.shape[1] != self.cfg.N \
                or x.shape[2] != self.cfg.in_channels:
            raise ShapeError("input does not match the architecture")
        h = self.lift(x)
        if not torch.isfinite(h).all():
            raise ForwardError("non-finite activations", locus="lift")
        acc = None
        for bi, block in enumerate(self.blocks):
            y = block(h)
            if not torch.isfinite(y).all():
                raise ForwardError("non-finite activations", locus=f"block{bi}")
            acc = y if acc is None else acc + y
        out = self.project(acc)
        if not torch.isfinite(out).all():
            raise ForwardError("non-finite activations", locus="project")
        ns = self.cfg.n_sys
        real = out[..., 0::2].reshape(x.shape[0], self.cfg.N, ns, ns)
        imag = out[..., 1::2].reshape(x.shape[0], self.cfg.N, ns, ns)
        return torch.complex(real, imag)


def _init_linear(module):
    if isinstance(module, torch.nn.Linear):
        fan_out, fan_in = module.weight.shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        with torch.no_grad():
            module.weight.uniform_(-bound, bound)
            module.bias.zero_()


def build_model(cfg: ArchConfig, seed: int = 0) -> NeuralOperator:
    """Deterministically initialized network for a given seed.

    Linear weights are uniform in +-sqrt(6/(fan_in+fan_out)) with zero
    biases; spectral weights stay at their complex Gaussian draw of scale
    1/(latent * sqrt(n_modes)).
    """
    torch.manual_seed(seed)
    model = NeuralOperator(cfg)
    model.apply(_init_linear)
    return model


def extend_modes(model: NeuralOperator, n_modes: int) -> NeuralOperator:
    """Widen the kept spectrum; new coefficients start at zero, so the
    represented function is unchanged at the extension point."""
    cfg = model.cfg
    if n_modes < cfg.n_modes:
        raise DomainError("extend_modes cannot shrink the spectrum")
    new_cfg = ArchConfig(N=cfg.N, n_sys=cfg.n_sys,
                         block_depths=cfg.block_depths,
                         latent_dim=cfg.latent_dim, n_modes=n_modes,
                         projection_depth=cfg.projection_depth,
                         projection_hidden=cfg.projection_hidden)
    wide = NeuralOperator(new_cfg)
    with torch.no_grad():
        for src, dst in zip(model.parameters(), wide.parameters()):
            if src.is_complex():
                dst.zero_()
                dst[:, :, :cfg.n_modes] = src
            else:
                dst.copy_(src)
    return wide


def model_forward(model: NeuralOperator, channels) -> np.ndarray:
    """Single-trajectory convenience wrapper; returns U as [N, N_s, N_s]."""
    x = torch.as_tensor(np.asarray(channels, dtype=float))[None]
    with torch.no_grad():
        return model(x)[0].numpy()
