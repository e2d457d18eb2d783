"""Build the desk-scale trained-model artifacts used by the long-time test.

Generates a mixed-initial-state linear-mode trajectory dataset (six initial
states: the two basis states and the four coherence-decomposition states),
trains the desk-scale operator network on it, and stores both next to the
tests.  The long-time propagation test builds stochastic dynamical maps
from the trained operator and compares the transfer-tensor extrapolation
against the deterministic reference; training takes tens of minutes on one
core, which is why the artifact is built here rather than inside the test.

Usage: python3 scripts/desk_model_artifacts.py [outdir] [per_label] [epochs]
"""

import sys
import time
from pathlib import Path

import numpy as np

from nmqd.bath import BathSpec, SpectralDensity, pade_decompose
from nmqd.cli import STATE_LABELS
from nmqd.datasets import TrajectoryDataset, load_dataset, save_dataset
from nmqd.fileio import file_hash
from nmqd.grids import TimeGrid
from nmqd.hops import HopsWorkspace, propagate_ensemble, spin_boson
from nmqd.neural import ArchConfig, build_model, error_metric, save_checkpoint, train
from nmqd.noise import build_covariance, factor_covariance, sample_noise_batch

OUTDIR = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(
    __file__).resolve().parent.parent / "tests" / "data"
PER_LABEL = int(sys.argv[2]) if len(sys.argv) > 2 else 110
EPOCHS = int(sys.argv[3]) if len(sys.argv) > 3 else 150

BETA = 1.0
H_MAX = 6
GRID = TimeGrid(0.01, 1000)
LABELS = ["1", "2", "eta:+1", "eta:-1", "eta:+i", "eta:-i"]
VAL_PER_LABEL = 20


def build_dataset(path):
    sdf = SpectralDensity("drude", 0.1, 1.0)
    modes = pade_decompose(BathSpec(sdf, BETA), 5)
    factor = factor_covariance(build_covariance(modes, GRID),
                               bath_id=modes.content_hash())
    ws = HopsWorkspace(spin_boson(), modes, H_MAX)
    noises, states, seeds, labels = [], [], [], []
    t0 = time.time()
    for li, label in enumerate(LABELS):
        offset = li * PER_LABEL
        Z = sample_noise_batch(factor, 0, PER_LABEL, offset=offset)
        trajs = propagate_ensemble(STATE_LABELS[label], Z, ws, GRID,
                                   mode="linear", init_label=label,
                                   seeds=offset + np.arange(PER_LABEL))
        for i, t in enumerate(trajs):
            if not t.ok:
                continue
            noises.append(Z[i])
            states.append(t.psi)
            seeds.append(t.seed)
            labels.append(label)
        print(f"label {label}: {len(states)} total, "
              f"{time.time() - t0:.0f}s", flush=True)
    M = len(states)
    per = M // len(LABELS)
    train_idx, val_idx = [], []
    for li in range(len(LABELS)):
        block = np.arange(li * per, (li + 1) * per)
        train_idx.extend(block[:-VAL_PER_LABEL])
        val_idx.extend(block[-VAL_PER_LABEL:])
    ds = TrajectoryDataset(
        np.array(noises), np.array(states), np.array(seeds), labels, GRID,
        "linear", STATE_LABELS["1"].copy(),
        np.array(train_idx), np.array(val_idx),
        {"bath_id": factor.bath_id, "base_seed": 0, "requested": M,
         "dropped": len(LABELS) * PER_LABEL - M, "K": modes.count,
         "H_max": H_MAX, "labels": LABELS})
    save_dataset(path, ds, modes=modes)
    print(f"wrote {path} with {M} trajectories", flush=True)


def main():
    OUTDIR.mkdir(parents=True, exist_ok=True)
    ds_path = OUTDIR / "desk_multilabel.nmqd"
    ck_path = OUTDIR / "desk_model.ckpt"
    if not ds_path.exists():
        build_dataset(ds_path)
    ds = load_dataset(ds_path)
    cfg = ArchConfig.desk(N=ds.grid.n_steps)
    model = build_model(cfg, seed=0)
    t0 = time.time()

    def progress(epoch, log):
        if epoch % 25 == 0 or epoch == EPOCHS - 1:
            print(f"epoch {epoch}: train {log.train_loss[-1]:.4f} "
                  f"val {log.val_loss[-1] if log.val_loss else float('nan'):.4f} "
                  f"{time.time() - t0:.0f}s", flush=True)

    log = train(model, ds.train, epochs=EPOCHS, lr=1e-3, seed=0,
                val_ds=ds.val, callback=progress)
    series, _ = error_metric(model, ds.val, reducer="mean")
    n_win = int(0.8 * len(series))
    plateau = float(series[:n_win].mean())
    print(f"val mean-L plateau (0.8 window): {plateau:.4f}", flush=True)
    save_checkpoint(ck_path, model, seed=0, dataset_hash=file_hash(ds_path),
                    extra={"epochs": EPOCHS, "lr": 1e-3,
                           "val_mean_L_plateau": plateau,
                           "final_train_loss": log.train_loss[-1],
                           "final_val_loss": log.val_loss[-1]})
    print(f"wrote {ck_path}", flush=True)


if __name__ == "__main__":
    main()
