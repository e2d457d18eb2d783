"""Trajectory dataset generation and on-disk layout.

A dataset pairs each noise realization with the stochastic wavefunction it
drives, which is exactly what the operator learner consumes.  Records are
[N+1, 1+Ns] complex arrays with the noise in column 0 and the state in the
remaining columns; seeds, initial-state labels and the train/validation
split live in the JSON header.  Trajectories that blow up are dropped, not
clipped, and the drop count is surfaced in the header so sampling bias
stays visible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bath import BathModes, modes_to_json, modes_from_json
from .errors import DomainError, FileFormatError
from .fileio import read_container, write_container
from .grids import TimeGrid
from .hops import HopsWorkspace, propagate_ensemble
from .noise import CovarianceFactor, sample_noise_batch

__all__ = [
    "TrajectoryDataset",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "save_noise",
    "load_noise",
]


@dataclass
class TrajectoryDataset:
    """In-memory trajectory collection with its provenance."""

    noises: np.ndarray        # [M, N+1] complex
    states: np.ndarray        # [M, N+1, Ns] complex
    seeds: np.ndarray         # [M] int
    labels: list
    grid: TimeGrid
    mode: str
    psi0: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.states.shape[0]

    def subset(self, idx) -> "TrajectoryDataset":
        idx = np.asarray(idx, dtype=int)
        local = np.arange(len(idx))
        return TrajectoryDataset(
            self.noises[idx], self.states[idx], self.seeds[idx],
            [self.labels[i] for i in idx], self.grid, self.mode, self.psi0,
            local, local[:0], dict(self.meta))

    @property
    def train(self) -> "TrajectoryDataset":
        return self.subset(self.train_idx)

    @property
    def val(self) -> "TrajectoryDataset":
        return self.subset(self.val_idx)


def generate_dataset(psi0, ws: HopsWorkspace, factor: CovarianceFactor,
                     grid: TimeGrid, count: int, base_seed: int = 0,
                     train_fraction: float = 5000 / 7000,
                     mode: str = "linear", batch: int = 32,
                     init_label: str = "1,0") -> TrajectoryDataset:
    """Sample ``count`` noise realizations and propagate each one.

    The split assigns the leading fraction of surviving trajectories to
    training (5000 of 7000 by default), the rest to validation.
    """
    if not 0 < train_fraction < 1:
        raise DomainError("train_fraction must be in (0, 1)")
    Z = sample_noise_batch(factor, base_seed, count)
    trajs = propagate_ensemble(psi0, Z, ws, grid, mode=mode, batch=batch,
                               init_label=init_label)
    keep = [i for i, t in enumerate(trajs) if t.ok]
    dropped = count - len(keep)
    states = np.array([trajs[i].psi for i in keep])
    noises = Z[keep]
    seeds = np.array([trajs[i].seed for i in keep], dtype=int)
    n_train = int(round(train_fraction * len(keep)))
    idx = np.arange(len(keep))
    meta = {
        "bath_id": factor.bath_id,
        "base_seed": base_seed,
        "requested": count,
        "dropped": dropped,
        "K": ws.modes.count,
        "H_max": ws.idxset.H_max,
    }
    return TrajectoryDataset(
        noises, states, seeds, [init_label] * len(keep), grid, mode,
        np.asarray(psi0, dtype=complex), idx[:n_train], idx[n_train:], meta)


def save_dataset(path, ds: TrajectoryDataset,
                 modes: BathModes | None = None) -> None:
    header = {
        "grid": ds.grid.to_dict(),
        "mode": ds.mode,
        "psi0": [[float(v.real), float(v.imag)] for v in ds.psi0],
        "seeds": [int(s) for s in ds.seeds],
        "labels": list(ds.labels),
        "train_idx": [int(i) for i in ds.train_idx],
        "val_idx": [int(i) for i in ds.val_idx],
        "meta": {k: v for k, v in ds.meta.items() if k != "modes"},
    }
    modes_json = modes_to_json(modes) if modes is not None else ds.meta.get("modes")
    if modes_json is not None:
        header["modes"] = modes_json
    records = np.concatenate([ds.noises[:, :, None], ds.states], axis=2)
    write_container(path, "trajectories", header, records)


def load_dataset(path) -> TrajectoryDataset:
    header, records = read_container(path, expect_kind="trajectories")
    try:
        grid = TimeGrid.from_dict(header["grid"])
        psi0 = np.array([re + 1j * im for re, im in header["psi0"]])
        ds = TrajectoryDataset(
            np.ascontiguousarray(records[:, :, 0]),
            np.ascontiguousarray(records[:, :, 1:]),
            np.array(header["seeds"], dtype=int),
            list(header["labels"]), grid, header["mode"], psi0,
            np.array(header["train_idx"], dtype=int),
            np.array(header["val_idx"], dtype=int),
            dict(header.get("meta", {})))
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: malformed dataset header ({exc})") from exc
    if "modes" in header:
        ds.meta["modes"] = header["modes"]
    return ds


def save_noise(path, Z: np.ndarray, grid: TimeGrid, bath_id: str,
               base_seed: int, offset: int = 0) -> None:
    header = {
        "grid": grid.to_dict(),
        "bath_id": bath_id,
        "count": int(Z.shape[0]),
        "base_seed": int(base_seed),
        "offset": int(offset),
    }
    write_container(path, "noise", header, np.asarray(Z, dtype=complex))


def load_noise(path):
    """Returns (Z [M, N+1], grid, header)."""
    header, Z = read_container(path, expect_kind="noise")
    try:
        grid = TimeGrid.from_dict(header["grid"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: malformed noise header ({exc})") from exc
    return Z, grid, header
