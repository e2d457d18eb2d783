"""Training loop, loss, checkpoints, and the time-resolved error metric.

The loss is the per-sample mean over time points of the complex vector
2-norm (not squared) between the recorded state and the operator applied to
the initial state, averaged over the batch.  Optimization uses AdamW with
decoupled weight decay; a fixed seed plus single-threaded execution makes
runs bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..datasets import TrajectoryDataset
from ..errors import DomainError, FileFormatError, ForwardError, ShapeError
from ..fileio import MAGIC, VERSION
from .model import ArchConfig, NeuralOperator, build_model, encode_input

import json
import struct

__all__ = ["TrainLog", "loss_fn", "train", "error_metric",
           "save_checkpoint", "load_checkpoint", "dataset_tensors"]


@dataclass
class TrainLog:
    """Per-epoch loss record of one optimization run."""

    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    aborted_at: int = -1

    @property
    def ok(self) -> bool:
        return self.aborted_at < 0


def loss_fn(U: torch.Tensor, psi: torch.Tensor, psi0: torch.Tensor) -> torch.Tensor:
    """(1/N_t) sum_n ||psi_n - U_n psi0||_2, averaged over the batch."""
    if U.shape[:2] != psi.shape[:2]:
        raise ShapeError("operator and state sequences disagree in shape")
    pred = torch.einsum("bnij,bj->bni", U, psi0)
    return torch.linalg.vector_norm(psi - pred, dim=2).mean(dim=1).mean()


def dataset_tensors(ds: TrajectoryDataset):
    """Channel encodings, target states (t_1..t_N), and initial states.

    The per-trajectory initial state is read off the stored record at t_0,
    so one dataset may mix several initial states."""
    P0 = ds.states[:, 0, :]
    X = np.stack([encode_input(ds.grid, ds.noises[i], P0[i])
                  for i in range(ds.count)])
    return (torch.as_tensor(X),
            torch.as_tensor(ds.states[:, 1:, :]),
            torch.as_tensor(P0.copy()))


def train(model: NeuralOperator, ds: TrajectoryDataset, epochs: int,
          lr: float = 1e-4, batch_size: int = 64, weight_decay: float = 0.01,
          seed: int = 0, val_ds: TrajectoryDataset | None = None,
          log_every: int = 1, callback=None,
          cosine_decay: bool = False) -> TrainLog:
    """AdamW over shuffled mini-batches.

    On a NaN loss the run aborts and the model is rolled back to the last
    finite epoch.  ``callback(epoch, log)``, when given, runs after each
    logged epoch (checkpoint cadence hook).  ``cosine_decay`` anneals the
    learning rate to zero over the run.
    """
    if epochs < 1:
        raise DomainError("epochs must be >= 1")
    X, Y, P0 = dataset_tensors(ds)
    vX = vY = vP0 = None
    if val_ds is not None and val_ds.count:
        vX, vY, vP0 = dataset_tensors(val_ds)
    opt = torch.optim.AdamW(model.parameters(), lr=lr, betas=(0.9, 0.999),
                            eps=1e-8, weight_decay=weight_decay)
    sched = (torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=epochs)
             if cosine_decay else None)
    gen = torch.Generator().manual_seed(seed)
    log = TrainLog()
    good = {k: v.detach().clone() for k, v in model.state_dict().items()}
    M = X.shape[0]
    for epoch in range(epochs):
        order = torch.randperm(M, generator=gen)
        total = 0.0
        for lo in range(0, M, batch_size):
            sel = order[lo:lo + batch_size]
            opt.zero_grad()
            try:
                loss = loss_fn(model(X[sel]), Y[sel], P0[sel])
            except ForwardError:
                loss = None
            if loss is None or not torch.isfinite(loss):
                model.load_state_dict(good)
                log.aborted_at = epoch
                return log
            loss.backward()
            opt.step()
            total += loss.item() * len(sel)
        if sched is not None:
            sched.step()
        if epoch % log_every == 0 or epoch == epochs - 1:
            log.epochs.append(epoch)
            log.train_loss.append(total / M)
            if vX is not None:
                with torch.no_grad():
                    log.val_loss.append(float(loss_fn(model(vX), vY, vP0)))
            good = {k: v.detach().clone() for k, v in model.state_dict().items()}
            if callback is not None:
                callback(epoch, log)
    return log


def error_metric(model: NeuralOperator, ds: TrajectoryDataset,
                 reducer: str = "mean", raw: bool = False,
                 batch_size: int = 64):
    """Time-resolved operator error L(t_n) = F|1 - <psi_n|U_n psi0>|.

    Both states are normalized before the overlap unless ``raw``; F is the
    mean or max over samples.  Returns (series [N], excluded-sample count);
    zero-norm states exclude the whole sample.
    """
    if reducer not in ("mean", "max"):
        raise DomainError(f"unknown reducer {reducer!r}")
    X, Y, P0 = dataset_tensors(ds)
    rows = []
    excluded = 0
    with torch.no_grad():
        for lo in range(0, X.shape[0], batch_size):
            U = model(X[lo:lo + batch_size])
            psi = Y[lo:lo + batch_size]
            pred = torch.einsum("bnij,bj->bni", U, P0[lo:lo + batch_size])
            if not raw:
                npsi = torch.linalg.vector_norm(psi, dim=2, keepdim=True)
                npred = torch.linalg.vector_norm(pred, dim=2, keepdim=True)
                bad = ((npsi.squeeze(2) == 0) | (npred.squeeze(2) == 0)).any(dim=1)
                excluded += int(bad.sum())
                psi = psi / torch.where(npsi == 0, torch.ones_like(npsi), npsi)
                pred = pred / torch.where(npred == 0, torch.ones_like(npred), npred)
                keep = ~bad
            else:
                keep = torch.ones(psi.shape[0], dtype=torch.bool)
            overlap = torch.einsum("bni,bni->bn", psi.conj(), pred)
            rows.append(torch.abs(1 - overlap)[keep])
    L = torch.cat(rows)
    if L.shape[0] == 0:
        raise DomainError("all validation samples were excluded")
    series = L.mean(dim=0) if reducer == "mean" else L.max(dim=0).values
    return series.numpy(), excluded


def save_checkpoint(path, model: NeuralOperator, seed: int = 0,
                    dataset_hash: str = "", extra: dict | None = None) -> None:
    """Header JSON plus one flat little-endian f64 blob per parameter,
    in declared (named_parameters) order; complex weights interleaved."""
    names = []
    blobs = []
    for name, p in model.named_parameters():
        a = p.detach().numpy()
        if np.iscomplexobj(a):
            flat = np.empty(2 * a.size, dtype="<f8")
            flat[0::2] = a.real.ravel()
            flat[1::2] = a.imag.ravel()
        else:
            flat = np.ascontiguousarray(a, dtype="<f8").ravel()
        names.append({"name": name, "shape": list(a.shape),
                      "complex": bool(np.iscomplexobj(a))})
        blobs.append(flat)
    header = {
        "kind": "checkpoint",
        "arch": model.cfg.to_dict(),
        "seed": int(seed),
        "dataset_hash": dataset_hash,
        "optimizer": {"name": "adamw", "deterministic": True},
        "params": names,
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        for flat in blobs:
            fh.write(flat.tobytes())


def load_checkpoint(path):
    """Returns (model, header) with weights restored."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise FileFormatError(f"{path}: bad magic")
        version, hlen = struct.unpack("<HI", fh.read(6))
        if version != VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        header = json.loads(fh.read(hlen).decode())
        if header.get("kind") != "checkpoint":
            raise FileFormatError(f"{path}: not a checkpoint file")
        cfg = ArchConfig.from_dict(header["arch"])
        model = build_model(cfg, seed=header.get("seed", 0))
        state = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            size = int(np.prod(shape, dtype=np.int64)) if shape else 1
            width = 2 * size if entry["complex"] else size
            raw = np.frombuffer(fh.read(width * 8), dtype="<f8")
            if raw.size != width:
                raise FileFormatError(f"{path}: truncated parameter blob")
            if entry["complex"]:
                arr = (raw[0::2] + 1j * raw[1::2]).reshape(shape)
            else:
                arr = raw.reshape(shape)
            state[entry["name"]] = torch.as_tensor(arr.copy())
    model.load_state_dict(state)
    return model, header
