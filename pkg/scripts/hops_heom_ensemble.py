"""Generate the stochastic-ensemble summary used by the consistency test.

Runs the nonlinear hierarchy for 2000 noise realizations (Drude bath,
lambda = 0.1, gamma = 1, beta = 1, five-mode hierarchy truncated at depth
20) and stores the ensemble mean density, the population-difference series
with its per-point standard error, and the run settings.  The test suite
verifies the stored statistics against a fresh deterministic reference; the
heavy ensemble lives here because a single desktop core needs hours for it.

Restartable: progress accumulates in a checkpoint file in chunks.

Usage: python3 scripts/hops_heom_ensemble.py [out.nmqd] [M]
"""

import sys
import time
from pathlib import Path

import numpy as np

from nmqd.bath import BathSpec, SpectralDensity, pade_decompose
from nmqd.datasets import TrajectoryDataset
from nmqd.fileio import write_container
from nmqd.grids import TimeGrid
from nmqd.hops import HopsWorkspace, propagate_ensemble, spin_boson
from nmqd.noise import build_covariance, factor_covariance, sample_noise_batch

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(
    __file__).resolve().parent.parent / "tests" / "data" / "hops_heom_ensemble.nmqd"
M = int(sys.argv[2]) if len(sys.argv) > 2 else 2000
CHUNK = 96
CKPT = Path("/tmp/hops_heom_ensemble_ckpt.npz")

BETA = 1.0
H_MAX = 20
K_HIER = 5          # five-mode hierarchy per the benchmark settings
K_NOISE = 6         # six-mode covariance: positive semidefinite on this grid
GRID = TimeGrid(0.01, 1000)
BASE_SEED = 0


def main():
    sdf = SpectralDensity("drude", 0.1, 1.0)
    modes_h = pade_decompose(BathSpec(sdf, BETA), K_HIER - 1)
    modes_n = pade_decompose(BathSpec(sdf, BETA), K_NOISE - 1)
    assert modes_h.count == K_HIER and modes_n.count == K_NOISE
    factor = factor_covariance(build_covariance(modes_n, GRID),
                               bath_id=modes_n.content_hash())
    ws = HopsWorkspace(spin_boson(), modes_h, H_MAX)
    psi0 = np.array([1.0, 0.0], dtype=complex)

    if CKPT.exists():
        ck = np.load(CKPT)
        done = int(ck["done"])
        rho_sum = ck["rho_sum"]
        d_sum = ck["d_sum"]
        d_sq = ck["d_sq"]
        dropped = int(ck["dropped"])
        print(f"resuming at {done}/{M}", flush=True)
    else:
        done = 0
        rho_sum = np.zeros((GRID.n_points, 2, 2), dtype=complex)
        d_sum = np.zeros(GRID.n_points)
        d_sq = np.zeros(GRID.n_points)
        dropped = 0

    t0 = time.time()
    while done < M:
        n = min(CHUNK, M - done)
        Z = sample_noise_batch(factor, BASE_SEED, n, offset=done)
        trajs = propagate_ensemble(psi0, Z, ws, GRID, mode="nonlinear",
                                   batch=32, init_label="1",
                                   seeds=BASE_SEED + done + np.arange(n))
        for t in trajs:
            if not t.ok:
                dropped += 1
                continue
            norm2 = np.sum(np.abs(t.psi) ** 2, axis=1)
            proj = np.einsum("ni,nj->nij", t.psi, t.psi.conj()) / \
                norm2[:, None, None]
            rho_sum += proj
            d = (proj[:, 0, 0] - proj[:, 1, 1]).real
            d_sum += d
            d_sq += d * d
        done += n
        np.savez(CKPT, done=done, rho_sum=rho_sum, d_sum=d_sum, d_sq=d_sq,
                 dropped=dropped)
        rate = (time.time() - t0) / done if done else 0
        print(f"{done}/{M} trajectories, dropped {dropped}, "
              f"{rate:.2f} s/traj", flush=True)

    kept = M - dropped
    mean_d = d_sum / kept
    var_d = d_sq / kept - mean_d ** 2
    se_d = np.sqrt(np.maximum(var_d, 0.0) / kept)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    write_container(OUT, "ensemble_summary", {
        "grid": GRID.to_dict(),
        "M": M, "kept": kept, "dropped": dropped,
        "base_seed": BASE_SEED, "mode": "nonlinear",
        "H_max": H_MAX, "K_hierarchy": K_HIER, "K_noise": K_NOISE,
        "beta": BETA, "sdf": {"kind": "drude", "lambda": 0.1, "gamma": 1.0},
        "columns": ["re_rho11+i im", "..."],
    }, [np.stack([rho_sum.real[:, 0, 0] / kept,
                  rho_sum.real[:, 1, 1] / kept,
                  rho_sum[:, 0, 1].real / kept,
                  rho_sum[:, 0, 1].imag / kept,
                  mean_d, se_d], axis=1)])
    print(f"wrote {OUT}", flush=True)


if __name__ == "__main__":
    main()
