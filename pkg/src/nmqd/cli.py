"""Command-line pipeline driver.

Subcommands wire the stages end to end: bath decomposition, noise sampling,
stochastic (wavefunction) and deterministic (density) hierarchy runs, model
training and validation, and the downstream applications.  Every run that
writes files also writes a JSON manifest next to its first output capturing
the resolved arguments, input hashes, and output hashes; ``repro
--manifest`` replays a manifest and, in deterministic mode, reproduces the
outputs byte for byte.  CSV reports get a companion PNG with the same stem.

Exit codes: 0 success, 1 domain error, 2 I/O error, 64 usage error.
Errors go to standard error as single-line JSON.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from .apps import (
    DipoleSetup,
    DynamicalMap,
    absorption_spectrum,
    dynamical_maps_heom,
    transfer_tensors,
    ttm_propagate,
)
from .bath import (
    BathSpec,
    SpectralDensity,
    modes_from_json,
    modes_to_json,
    pade_decompose,
    validate_decomposition,
)
from .datasets import (
    TrajectoryDataset,
    load_dataset,
    load_noise,
    save_dataset,
    save_noise,
)
from .errors import DomainError, NmqdError
from .fileio import file_hash, read_container, write_container, write_csv
from .grids import TimeGrid
from .heom import HeomWorkspace, heom_propagate, population_difference
from .hops import HopsWorkspace, StateTrajectory, propagate_ensemble, spin_boson
from .neural import (
    ArchConfig,
    build_model,
    error_metric,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .plotting import line_plot, png_path

__all__ = ["main", "dispatch"]

STATE_LABELS = {
    "1": np.array([1.0, 0.0], dtype=complex),
    "2": np.array([0.0, 1.0], dtype=complex),
    "eta:+1": np.array([1.0, 1.0], dtype=complex) / np.sqrt(2),
    "eta:-1": np.array([1.0, -1.0], dtype=complex) / np.sqrt(2),
    "eta:+i": np.array([1.0, 1.0j], dtype=complex) / np.sqrt(2),
    "eta:-i": np.array([1.0, -1.0j], dtype=complex) / np.sqrt(2),
}


# ---------------------------------------------------------------------------
# Argument plumbing


class UsageError(Exception):
    """Bad flags or subcommand; maps to exit code 64."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _jsonable(value):
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def _resolved_config(args: argparse.Namespace) -> dict:
    skip = {"func", "config", "manifest"}
    return {k: _jsonable(v) for k, v in sorted(vars(args).items())
            if k not in skip and not k.startswith("_")}


def _write_manifest(anchor, command, args, inputs, outputs,
                    deterministic=True):
    doc = {
        "command": list(command),
        "version": __version__,
        "deterministic": bool(deterministic),
        "config": _resolved_config(args),
        "inputs": {str(p): file_hash(p) for p in inputs},
        "outputs": {str(p): file_hash(p) for p in outputs},
    }
    path = str(anchor) + ".manifest.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def parse_state(text: str) -> np.ndarray:
    """Initial wavefunction from a label or comma-separated amplitudes."""
    if text in STATE_LABELS:
        return STATE_LABELS[text].copy()
    try:
        amps = np.array([complex(v.replace("i", "j")) for v in text.split(",")])
    except ValueError as exc:
        raise DomainError(f"cannot parse initial state {text!r}") from exc
    norm = np.linalg.norm(amps)
    if norm == 0:
        raise DomainError("initial state must be nonzero")
    return amps / norm


def parse_density(text: str) -> np.ndarray:
    """Initial density: 'diag:p1,p2' or a pure-state spec."""
    if text.startswith("diag:"):
        probs = np.array([float(v) for v in text[5:].split(",")])
        if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0, atol=1e-10):
            raise DomainError("diagonal entries must be a probability vector")
        return np.diag(probs).astype(complex)
    psi = parse_state(text)
    return np.outer(psi, psi.conj())


def _load_modes(path):
    try:
        with open(path) as fh:
            return modes_from_json(fh.read())
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"modes file not found: {path}") from exc


def _bath_from_meta(meta: dict) -> BathSpec:
    try:
        sdf = SpectralDensity(meta["kind"], float(meta["lambda"]),
                              float(meta["gamma"]),
                              meta.get("omega_b") and float(meta["omega_b"]))
        return BathSpec(sdf, float(meta["beta"]))
    except KeyError as exc:
        raise DomainError(f"modes metadata lacks field {exc}") from exc


def _apply_threads(args):
    n = getattr(args, "threads", None)
    if n is None:
        env = os.environ.get("NMQD_THREADS")
        n = int(env) if env else None
    if n is not None:
        if n < 1:
            raise DomainError("--threads must be >= 1")
        import torch
        torch.set_num_threads(n)
        try:
            import warnings

            import numba
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                numba.set_num_threads(n)
        except ValueError:
            pass


# ---------------------------------------------------------------------------
# bath


def cmd_bath_decompose(args, argv):
    omega_b = getattr(args, "omega_b", None)
    sdf = SpectralDensity(args.sdf, args.lam, args.gamma, omega_b)
    bath = BathSpec(sdf, args.beta)
    modes = pade_decompose(bath, args.poles, scheme=args.scheme)
    with open(args.out, "w") as fh:
        fh.write(modes_to_json(modes))
        fh.write("\n")
    _write_manifest(args.out, argv, args, [], [args.out])
    print(json.dumps({"out": args.out, "K": modes.count}))
    return 0


def cmd_bath_validate(args, argv):
    modes = _load_modes(args.modes)
    bath = _bath_from_meta(modes.meta)
    grid = np.linspace(args.tmin, args.tmax, args.points)
    residual = validate_decomposition(modes, bath, grid)
    print(json.dumps({"residual": residual, "points": args.points}))
    if args.out:
        from .bath import bcf_from_modes, bcf_quadrature
        fit = bcf_from_modes(modes, grid)
        ref = np.array([bcf_quadrature(bath, t) for t in grid])
        write_csv(args.out, {
            "t": grid,
            "re_alpha_fit": fit.real, "im_alpha_fit": fit.imag,
            "re_alpha_ref": ref.real, "im_alpha_ref": ref.imag,
            "abs_error": np.abs(fit - ref),
        }, metadata={"residual": residual, "modes": args.modes})
        line_plot(png_path(args.out), grid,
                  {"Re fit": fit.real, "Re ref": ref.real,
                   "Im fit": fit.imag, "Im ref": ref.imag},
                  xlabel="t", ylabel="alpha(t)", title="bath correlation fit")
        _write_manifest(args.out, argv, args, [args.modes],
                        [args.out, png_path(args.out)])
    return 0


# ---------------------------------------------------------------------------
# noise


def cmd_noise_sample(args, argv):
    from .noise import build_covariance, factor_covariance, sample_noise_batch
    modes = _load_modes(args.modes)
    grid = TimeGrid(args.dt, args.steps)
    C = build_covariance(modes, grid)
    factor = factor_covariance(C, bath_id=modes.content_hash())
    Z = sample_noise_batch(factor, args.seed, args.count, offset=args.offset)
    save_noise(args.out, Z, grid, factor.bath_id, args.seed, args.offset)
    _write_manifest(args.out, argv, args, [args.modes], [args.out])
    print(json.dumps({"out": args.out, "count": args.count,
                      "bath_id": factor.bath_id}))
    return 0


# ---------------------------------------------------------------------------
# hops


def cmd_hops_gen(args, argv):
    modes = _load_modes(args.modes)
    Z, grid, noise_header = load_noise(args.noise)
    psi0 = parse_state(args.init)
    sys_spec = spin_boson()
    ws = HopsWorkspace(sys_spec, modes, args.kmax)
    base_seed = int(noise_header.get("base_seed", 0))
    offset = int(noise_header.get("offset", 0))
    seeds = base_seed + offset + np.arange(Z.shape[0])
    trajs = propagate_ensemble(psi0, Z, ws, grid, mode=args.mode,
                               batch=args.batch, init_label=args.init,
                               seeds=seeds)
    keep = [i for i, t in enumerate(trajs) if t.ok]
    dropped = Z.shape[0] - len(keep)
    n_train = int(round(args.train_fraction * len(keep)))
    idx = np.arange(len(keep))
    ds = TrajectoryDataset(
        Z[keep], np.array([trajs[i].psi for i in keep]),
        seeds[keep], [args.init] * len(keep), grid, args.mode, psi0,
        idx[:n_train], idx[n_train:],
        {"bath_id": noise_header.get("bath_id", ""), "base_seed": base_seed,
         "requested": int(Z.shape[0]), "dropped": dropped,
         "K": modes.count, "H_max": args.kmax})
    save_dataset(args.out, ds, modes=modes)
    _write_manifest(args.out, argv, args, [args.modes, args.noise], [args.out])
    print(json.dumps({"out": args.out, "kept": len(keep), "dropped": dropped}))
    return 0


# ---------------------------------------------------------------------------
# heom


def _density_columns(times, rho):
    Ns = rho.shape[-1]
    cols = {"t": times}
    for i in range(Ns):
        for j in range(Ns):
            cols[f"re_rho{i + 1}{j + 1}"] = rho[:, i, j].real
            cols[f"im_rho{i + 1}{j + 1}"] = rho[:, i, j].imag
    return cols


def cmd_heom_run(args, argv):
    modes = _load_modes(args.modes)
    rho0 = parse_density(args.init)
    n_steps = int(round(args.tmax / args.dt))
    grid = TimeGrid(args.dt, n_steps)
    ws = HeomWorkspace(spin_boson(), modes, args.kmax)
    traj = heom_propagate(rho0, ws, grid)
    if not traj.ok:
        raise DomainError(f"propagation diverged at step {traj.failed_at}")
    cols = _density_columns(grid.times, traj.rho)
    write_csv(args.out, cols, metadata={
        "modes": args.modes, "kmax": args.kmax, "init": args.init})
    delta = population_difference(traj)
    line_plot(png_path(args.out), grid.times,
              {"rho11": traj.rho[:, 0, 0].real,
               "rho22": traj.rho[:, 1, 1].real, "delta": delta},
              xlabel="t", ylabel="population", title="reference dynamics")
    _write_manifest(args.out, argv, args, [args.modes],
                    [args.out, png_path(args.out)])
    return 0


# ---------------------------------------------------------------------------
# train / validate


def _arch_for(name: str, N: int) -> ArchConfig:
    builders = {"paper": ArchConfig.paper, "tiny": ArchConfig.tiny,
                "desk": ArchConfig.desk}
    if name not in builders:
        raise DomainError(f"unknown architecture {name!r}")
    return builders[name](N=N)


def cmd_train(args, argv):
    ds = load_dataset(args.data)
    cfg = _arch_for(args.arch, ds.grid.n_steps)
    model = build_model(cfg, seed=args.seed)
    val = ds.val if len(ds.val_idx) else None
    log = train(model, ds.train, epochs=args.epochs, lr=args.lr,
                batch_size=args.batch, weight_decay=args.weight_decay,
                seed=args.seed, val_ds=val, cosine_decay=args.cosine)
    save_checkpoint(args.out, model, seed=args.seed,
                    dataset_hash=file_hash(args.data),
                    extra={"argv": list(argv)})
    outputs = [args.out]
    if args.log_out:
        cols = {"epoch": np.array(log.epochs, dtype=float),
                "train_loss": np.array(log.train_loss)}
        if log.val_loss:
            cols["val_loss"] = np.array(log.val_loss)
        write_csv(args.log_out, cols,
                  metadata={"aborted_at": log.aborted_at, "arch": args.arch})
        line_plot(png_path(args.log_out), cols["epoch"],
                  {k: v for k, v in cols.items() if k != "epoch"},
                  xlabel="epoch", ylabel="loss", title="training loss",
                  logy=True)
        outputs += [args.log_out, png_path(args.log_out)]
    _write_manifest(args.out, argv, args, [args.data], outputs)
    print(json.dumps({"out": args.out,
                      "final_train_loss": log.train_loss[-1],
                      "aborted_at": log.aborted_at}))
    return 0 if log.ok else 1


def cmd_validate(args, argv):
    model, header = load_checkpoint(args.model)
    ds = load_dataset(args.data)
    part = ds.val if len(ds.val_idx) else ds
    series, excluded = error_metric(model, part, reducer=args.reducer,
                                    raw=args.raw)
    times = ds.grid.times[1:]
    write_csv(args.out, {"t": times, "L": series}, metadata={
        "reducer": args.reducer, "raw": args.raw, "excluded": excluded,
        "samples": part.count, "model": args.model})
    line_plot(png_path(args.out), times, {f"L ({args.reducer})": series},
              xlabel="t", ylabel="operator error L(t)",
              title="time-resolved operator error", logy=True)
    _write_manifest(args.out, argv, args, [args.model, args.data],
                    [args.out, png_path(args.out)])
    print(json.dumps({"out": args.out, "mean_L": float(series.mean()),
                      "excluded": excluded}))
    return 0


# ---------------------------------------------------------------------------
# apps


def _dataset_trajectories(ds: TrajectoryDataset):
    return [StateTrajectory(ds.states[i], int(ds.seeds[i]), ds.labels[i],
                            ds.mode) for i in range(ds.count)]


def cmd_apps_density(args, argv):
    from .apps import reduced_density
    ds = load_dataset(args.data)
    rho = reduced_density(_dataset_trajectories(ds),
                          raw_projectors=args.raw_projectors or None).rho
    cols = _density_columns(ds.grid.times, rho)
    write_csv(args.out, cols, metadata={
        "data": args.data, "count": ds.count, "mode": ds.mode})
    line_plot(png_path(args.out), ds.grid.times,
              {"rho11": rho[:, 0, 0].real, "rho22": rho[:, 1, 1].real,
               "delta": (rho[:, 0, 0] - rho[:, 1, 1]).real},
              xlabel="t", ylabel="population", title="reduced density")
    _write_manifest(args.out, argv, args, [args.data],
                    [args.out, png_path(args.out)])
    return 0


def heom_dipole_correlation(ws: HeomWorkspace, grid: TimeGrid,
                            setup: DipoleSetup | None = None) -> np.ndarray:
    """C(t) = Tr[mu rho_c(t)] with the coherence source rho_c(0) = mu rho0."""
    setup = setup or DipoleSetup()
    source = setup.mu @ setup.rho0
    traj = heom_propagate(source, ws, grid, require_hermitian=False)
    if not traj.ok:
        raise DomainError(f"propagation diverged at step {traj.failed_at}")
    return np.einsum("ij,nji->n", setup.mu, traj.rho)


def cmd_apps_spectrum(args, argv):
    modes = _load_modes(args.modes)
    n_steps = int(round(args.tmax / args.dt))
    grid = TimeGrid(args.dt, n_steps)
    ws = HeomWorkspace(spin_boson(), modes, args.kmax)
    C = heom_dipole_correlation(ws, grid)
    omega, spec = absorption_spectrum(C, grid, window_fraction=args.window)
    write_csv(args.out, {"omega": omega, "C": spec}, metadata={
        "modes": args.modes, "kmax": args.kmax, "window": args.window,
        "tmax": args.tmax})
    line_plot(png_path(args.out), omega, {"C(w)": spec},
              xlabel="omega", ylabel="C(omega)", title="absorption spectrum")
    _write_manifest(args.out, argv, args, [args.modes],
                    [args.out, png_path(args.out)])
    peak = float(omega[np.argmax(spec)])
    print(json.dumps({"out": args.out, "peak_omega": peak}))
    return 0


def save_maps(path, maps: DynamicalMap) -> None:
    write_container(path, "maps", {
        "grid": maps.grid.to_dict(), "source": maps.source}, maps.E)


def load_maps(path) -> DynamicalMap:
    header, E = read_container(path, expect_kind="maps")
    return DynamicalMap(E, TimeGrid.from_dict(header["grid"]),
                        header.get("source", ""))


def cmd_apps_maps(args, argv):
    modes = _load_modes(args.modes)
    grid = TimeGrid(args.dt, args.steps)
    ws = HeomWorkspace(spin_boson(), modes, args.kmax)
    maps = dynamical_maps_heom(ws, grid)
    save_maps(args.out, maps)
    _write_manifest(args.out, argv, args, [args.modes], [args.out])
    print(json.dumps({"out": args.out, "n_maps": int(maps.E.shape[0])}))
    return 0


def cmd_apps_ttm(args, argv):
    maps = load_maps(args.maps)
    tensors = transfer_tensors(maps, args.cutoff)
    rho0 = parse_density(args.init)
    traj = ttm_propagate(tensors, rho0, args.nlong)
    times = np.arange(args.nlong + 1) * maps.grid.dt
    delta = population_difference(traj)
    cols = _density_columns(times, traj.rho)
    cols["delta"] = delta
    write_csv(args.out, cols, metadata={
        "maps": args.maps, "cutoff": args.cutoff, "init": args.init})
    line_plot(png_path(args.out), times, {"delta": delta},
              xlabel="t", ylabel="population difference",
              title="memory-kernel long-time propagation")
    _write_manifest(args.out, argv, args, [args.maps],
                    [args.out, png_path(args.out)])
    return 0


# ---------------------------------------------------------------------------
# repro profiles


DESK_BATH = {"sdf": "drude", "lam": 0.1, "gamma": 1.0, "poles": 5}


def _desk_modes(beta: float):
    sdf = SpectralDensity(DESK_BATH["sdf"], DESK_BATH["lam"],
                          DESK_BATH["gamma"])
    return pade_decompose(BathSpec(sdf, beta), DESK_BATH["poles"])


def _repro_fig34(args, argv, reducer: str):
    """Mean (fig3) or max (fig4) operator-error curve from a short desk
    training run on freshly generated linear trajectories."""
    from .noise import build_covariance, factor_covariance, sample_noise_batch
    modes = _desk_modes(args.beta)
    grid = TimeGrid(0.01, 1000)
    factor = factor_covariance(build_covariance(modes, grid),
                               bath_id=modes.content_hash())
    Z = sample_noise_batch(factor, args.seed, args.count)
    ws = HopsWorkspace(spin_boson(), modes, args.kmax)
    psi0 = STATE_LABELS["1"]
    trajs = propagate_ensemble(psi0, Z, ws, grid, mode="linear",
                               init_label="1",
                               seeds=args.seed + np.arange(args.count))
    keep = [i for i, t in enumerate(trajs) if t.ok]
    n_train = int(round(args.count * 5 / 6))
    idx = np.arange(len(keep))
    ds = TrajectoryDataset(Z[keep], np.array([trajs[i].psi for i in keep]),
                           np.asarray(keep), ["1"] * len(keep), grid,
                           "linear", psi0, idx[:n_train], idx[n_train:],
                           {"bath_id": factor.bath_id})
    cfg = ArchConfig.desk(N=grid.n_steps)
    model = build_model(cfg, seed=args.seed)
    train(model, ds.train, epochs=args.epochs, lr=1e-3, seed=args.seed,
          val_ds=ds.val)
    series, excluded = error_metric(model, ds.val, reducer=reducer)
    out = os.path.join(args.outdir, f"{args.profile}_error.csv")
    write_csv(out, {"t": grid.times[1:], "L": series}, metadata={
        "reducer": reducer, "epochs": args.epochs, "count": args.count,
        "excluded": excluded})
    line_plot(png_path(out), grid.times[1:], {f"L ({reducer})": series},
              xlabel="t", ylabel="operator error L(t)",
              title=f"desk-scale operator error ({reducer})", logy=True)
    return [out, png_path(out)]


def _repro_fig5(args, argv):
    """Population difference: stochastic hierarchy ensemble against the
    deterministic reference."""
    from .apps import reduced_density
    from .noise import build_covariance, factor_covariance, sample_noise_batch
    modes = _desk_modes(args.beta)
    grid = TimeGrid(0.01, 1000)
    factor = factor_covariance(build_covariance(modes, grid),
                               bath_id=modes.content_hash())
    Z = sample_noise_batch(factor, args.seed, args.count)
    ws = HopsWorkspace(spin_boson(), modes, args.kmax)
    psi0 = STATE_LABELS["1"]
    trajs = propagate_ensemble(psi0, Z, ws, grid, mode="nonlinear",
                               init_label="1",
                               seeds=args.seed + np.arange(args.count))
    ok = [t for t in trajs if t.ok]
    rho_s = reduced_density(ok).rho
    hws = HeomWorkspace(spin_boson(), modes, 8)
    ref = heom_propagate(np.outer(psi0, psi0.conj()), hws, grid)
    d_s = (rho_s[:, 0, 0] - rho_s[:, 1, 1]).real
    d_r = population_difference(ref)
    out = os.path.join(args.outdir, "fig5_delta.csv")
    write_csv(out, {"t": grid.times, "delta_stochastic": d_s,
                    "delta_reference": d_r},
              metadata={"count": len(ok), "kmax": args.kmax,
                        "beta": args.beta})
    line_plot(png_path(out), grid.times,
              {"stochastic": d_s, "reference": d_r},
              xlabel="t", ylabel="population difference",
              title="stochastic vs reference dynamics")
    return [out, png_path(out)]


def _repro_fig6(args, argv):
    """Absorption spectra for three temperatures from the reference path."""
    grid = TimeGrid(0.01, 4000)
    cols = {}
    omega = None
    for beta in (0.2, 1.0, 5.0):
        modes = _desk_modes(beta)
        ws = HeomWorkspace(spin_boson(), modes, 8)
        C = heom_dipole_correlation(ws, grid)
        omega, spec = absorption_spectrum(C, grid)
        cols[f"C_beta{beta:g}"] = spec
    out = os.path.join(args.outdir, "fig6_spectra.csv")
    write_csv(out, {"omega": omega, **cols}, metadata={
        "tmax": grid.t_max, "window": 0.8})
    line_plot(png_path(out), omega, cols, xlabel="omega",
              ylabel="C(omega)", title="absorption spectra")
    return [out, png_path(out)]


def _repro_fig7(args, argv):
    """Long-time propagation through transfer tensors built on a short
    window, against the direct reference."""
    modes = _desk_modes(args.beta)
    # the 500 memory kernels span the whole construction window; a finer
    # grid with the same cutoff would halve the covered memory and fail
    # at low temperature
    window = TimeGrid(0.02, 500)
    ws = HeomWorkspace(spin_boson(), modes, 8)
    maps = dynamical_maps_heom(ws, window)
    tensors = transfer_tensors(maps, 500)
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    n_long = 2000
    prop = ttm_propagate(tensors, rho0, n_long)
    long_grid = TimeGrid(0.02, n_long)
    direct = heom_propagate(rho0, ws, long_grid)
    d_t = population_difference(prop)
    d_r = population_difference(direct)
    out = os.path.join(args.outdir, "fig7_delta.csv")
    write_csv(out, {"t": long_grid.times, "delta_ttm": d_t,
                    "delta_reference": d_r},
              metadata={"beta": args.beta, "cutoff": 500,
                        "window_tmax": window.t_max})
    line_plot(png_path(out), long_grid.times,
              {"transfer tensors": d_t, "reference": d_r},
              xlabel="t", ylabel="population difference",
              title="long-time propagation beyond the construction window")
    return [out, png_path(out)]


def _paper_plan(args):
    """Full-size job plan; emitted as JSON, not executed."""
    beta = args.beta
    common = ["--lambda", "0.1", "--gamma", "1.0", "--beta", str(beta)]
    plan = {
        "profile": args.profile,
        "scale": "paper",
        "jobs": [
            ["bath", "decompose", "--sdf", "drude", *common,
             "--poles", "5", "--out", "modes.json"],
            ["noise", "sample", "--modes", "modes.json", "--dt", "0.01",
             "--steps", "1000", "--count", "7000", "--seed", "0",
             "--out", "noise.nmqd"],
            ["hops", "gen", "--modes", "modes.json", "--noise", "noise.nmqd",
             "--init", "1", "--kmax", "20", "--mode", "nonlinear",
             "--out", "train.nmqd"],
            ["train", "--data", "train.nmqd", "--arch", "paper",
             "--lr", "1e-4", "--epochs", "100000", "--batch", "64",
             "--seed", "0", "--out", "model.ckpt"],
            ["validate", "--model", "model.ckpt", "--data", "train.nmqd",
             "--reducer", "mean", "--out", "L.csv"],
        ],
        "note": "full publication-scale budget; not executed at desk scale",
    }
    out = os.path.join(args.outdir, f"{args.profile}_paper_plan.json")
    with open(out, "w") as fh:
        json.dump(plan, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [out]


def cmd_repro(args, argv):
    if args.manifest:
        with open(args.manifest) as fh:
            doc = json.load(fh)
        command = doc.get("command")
        if not isinstance(command, list) or not command:
            raise DomainError(f"{args.manifest}: manifest lacks a command")
        return dispatch([str(v) for v in command])
    if not args.profile:
        raise UsageError("repro: a profile (fig3..fig7) or --manifest "
                         "is required")
    os.makedirs(args.outdir, exist_ok=True)
    if args.scale == "paper":
        outputs = _paper_plan(args)
    elif args.profile == "fig3":
        outputs = _repro_fig34(args, argv, "mean")
    elif args.profile == "fig4":
        outputs = _repro_fig34(args, argv, "max")
    elif args.profile == "fig5":
        outputs = _repro_fig5(args, argv)
    elif args.profile == "fig6":
        outputs = _repro_fig6(args, argv)
    else:
        outputs = _repro_fig7(args, argv)
    _write_manifest(outputs[0], argv, args, [], outputs)
    print(json.dumps({"profile": args.profile, "scale": args.scale,
                      "outputs": outputs}))
    return 0


# ---------------------------------------------------------------------------
# Parser construction


def _add_common(sub):
    sub.add_argument("--config", help="TOML config file; flags override it")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker-pool bound (default NMQD_THREADS or 1)")


def build_parser() -> _Parser:
    parser = _Parser(prog="nmqd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    top = parser.add_subparsers(dest="cmd", metavar="subcommand")

    bath = top.add_parser("bath", help="correlation-function decomposition")
    bsub = bath.add_subparsers(dest="sub")
    bd = bsub.add_parser("decompose")
    bd.add_argument("--sdf", choices=["drude", "brownian"], default="drude")
    bd.add_argument("--lambda", dest="lam", type=float, required=True)
    bd.add_argument("--gamma", type=float, required=True)
    bd.add_argument("--omega-b", dest="omega_b", type=float, default=None)
    bd.add_argument("--beta", type=float, required=True)
    bd.add_argument("--poles", type=int, required=True)
    bd.add_argument("--scheme", choices=["pade", "matsubara"], default="pade")
    bd.add_argument("--out", required=True)
    _add_common(bd)
    bd.set_defaults(func=cmd_bath_decompose)
    bv = bsub.add_parser("validate")
    bv.add_argument("--modes", required=True)
    bv.add_argument("--tmin", type=float, default=0.1)
    bv.add_argument("--tmax", type=float, default=10.0)
    bv.add_argument("--points", type=int, default=50)
    bv.add_argument("--out", default=None)
    _add_common(bv)
    bv.set_defaults(func=cmd_bath_validate)

    noise = top.add_parser("noise", help="correlated noise sampling")
    nsub = noise.add_subparsers(dest="sub")
    ns = nsub.add_parser("sample")
    ns.add_argument("--modes", required=True)
    ns.add_argument("--dt", type=float, default=0.01)
    ns.add_argument("--steps", type=int, default=1000)
    ns.add_argument("--count", type=int, default=7000)
    ns.add_argument("--seed", type=int, default=0)
    ns.add_argument("--offset", type=int, default=0)
    ns.add_argument("--out", required=True)
    _add_common(ns)
    ns.set_defaults(func=cmd_noise_sample)

    hops = top.add_parser("hops", help="stochastic wavefunction hierarchy")
    hsub = hops.add_subparsers(dest="sub")
    hg = hsub.add_parser("gen")
    hg.add_argument("--modes", required=True)
    hg.add_argument("--noise", required=True)
    hg.add_argument("--init", default="1")
    hg.add_argument("--kmax", type=int, default=6,
                    help="hierarchy truncation depth")
    hg.add_argument("--mode", choices=["linear", "nonlinear"],
                    default="nonlinear")
    hg.add_argument("--batch", type=int, default=32)
    hg.add_argument("--train-fraction", dest="train_fraction", type=float,
                    default=5000 / 7000)
    hg.add_argument("--out", required=True)
    _add_common(hg)
    hg.set_defaults(func=cmd_hops_gen)

    heom = top.add_parser("heom", help="density-matrix hierarchy reference")
    esub = heom.add_subparsers(dest="sub")
    er = esub.add_parser("run")
    er.add_argument("--modes", required=True)
    er.add_argument("--init", default="diag:1,0")
    er.add_argument("--dt", type=float, default=0.01)
    er.add_argument("--tmax", type=float, default=10.0)
    er.add_argument("--kmax", type=int, default=8)
    er.add_argument("--out", required=True)
    _add_common(er)
    er.set_defaults(func=cmd_heom_run)

    tr = top.add_parser("train", help="fit the operator network")
    tr.add_argument("--data", required=True)
    tr.add_argument("--arch", choices=["paper", "tiny", "desk"],
                    default="desk")
    tr.add_argument("--lr", type=float, default=1e-4)
    tr.add_argument("--epochs", type=int, default=2000)
    tr.add_argument("--batch", type=int, default=64)
    tr.add_argument("--weight-decay", dest="weight_decay", type=float,
                    default=0.01)
    tr.add_argument("--cosine", action="store_true",
                    help="anneal the learning rate to zero")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)
    tr.add_argument("--log-out", dest="log_out", default=None)
    _add_common(tr)
    tr.set_defaults(func=cmd_train)

    va = top.add_parser("validate", help="time-resolved operator error")
    va.add_argument("--model", required=True)
    va.add_argument("--data", required=True)
    va.add_argument("--reducer", choices=["mean", "max"], default="mean")
    va.add_argument("--raw", action="store_true",
                    help="skip state normalization in the overlap")
    va.add_argument("--out", required=True)
    _add_common(va)
    va.set_defaults(func=cmd_validate)

    apps = top.add_parser("apps", help="densities, spectra, maps, tensors")
    asub = apps.add_subparsers(dest="sub")
    ad = asub.add_parser("density")
    ad.add_argument("--data", required=True)
    ad.add_argument("--raw-projectors", dest="raw_projectors",
                    action="store_true")
    ad.add_argument("--out", required=True)
    _add_common(ad)
    ad.set_defaults(func=cmd_apps_density)
    asp = asub.add_parser("spectrum")
    asp.add_argument("--modes", required=True)
    asp.add_argument("--dt", type=float, default=0.01)
    asp.add_argument("--tmax", type=float, default=40.0)
    asp.add_argument("--kmax", type=int, default=8)
    asp.add_argument("--window", type=float, default=0.8)
    asp.add_argument("--out", required=True)
    _add_common(asp)
    asp.set_defaults(func=cmd_apps_spectrum)
    am = asub.add_parser("maps")
    am.add_argument("--modes", required=True)
    am.add_argument("--dt", type=float, default=0.01)
    am.add_argument("--steps", type=int, default=1000)
    am.add_argument("--kmax", type=int, default=8)
    am.add_argument("--out", required=True)
    _add_common(am)
    am.set_defaults(func=cmd_apps_maps)
    at = asub.add_parser("ttm")
    at.add_argument("--maps", required=True)
    at.add_argument("--cutoff", type=int, default=500)
    at.add_argument("--init", default="diag:1,0")
    at.add_argument("--nlong", type=int, default=4000)
    at.add_argument("--out", required=True)
    _add_common(at)
    at.set_defaults(func=cmd_apps_ttm)

    rp = top.add_parser("repro", help="figure pipelines and manifest replay")
    rp.add_argument("profile", nargs="?",
                    choices=["fig3", "fig4", "fig5", "fig6", "fig7"])
    rp.add_argument("--scale", choices=["desk", "paper"], default="desk")
    rp.add_argument("--beta", type=float, default=1.0)
    rp.add_argument("--count", type=int, default=120,
                    help="trajectory count for stochastic profiles")
    rp.add_argument("--epochs", type=int, default=20)
    rp.add_argument("--kmax", type=int, default=6)
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--outdir", default=".")
    rp.add_argument("--manifest", default=None,
                    help="replay a recorded run instead of a profile")
    _add_common(rp)
    rp.set_defaults(func=cmd_repro)

    return parser


def _apply_config(args: argparse.Namespace) -> None:
    path = getattr(args, "config", None)
    if not path:
        return
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    section = doc.get(args.cmd, {})
    sub = getattr(args, "sub", None)
    if sub and isinstance(section.get(sub), dict):
        section = section[sub]
    for key, value in section.items():
        dest = key.replace("-", "_")
        if dest not in vars(args):
            raise DomainError(f"config key {key!r} unknown for {args.cmd}")
        if f"--{key}" not in args._explicit and f"--{dest}" not in args._explicit:
            setattr(args, dest, value)


def dispatch(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._explicit = {a for a in argv if a.startswith("--")}
    if not getattr(args, "cmd", None) or not hasattr(args, "func"):
        raise UsageError(parser.format_usage())
    _apply_config(args)
    _apply_threads(args)
    return args.func(args, argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return dispatch(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc).rstrip() + "\n")
        return 64
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    except (NmqdError, ValueError) as exc:
        sys.stderr.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
