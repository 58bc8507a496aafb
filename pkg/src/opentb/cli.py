"""Batch runner: config ingestion, experiment orchestration, artifacts.

Every run mode reads a JSON config (or flags that build one), writes CSV
and JSON artifacts into a directory named by the mode plus a content hash
of the config, prints a summary table, and exits 0 on success, 2 on
validation errors, 3 on invariant breaches under --strict, 4 on numerical
failure. Artifacts carry no timestamps: identical configs produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .continuation import (
    ContinuationError,
    SampledFunction,
    certify_uniqueness,
    continue_along_path,
)
from .dissipation import landauer_current, plateau_current, record_dissipation, transmission
from .model import (
    BiasProfile,
    TightBindingSystem,
    build_chain_system,
    ground_state_density_matrix,
    equilibrium_density_matrix,
    load_system_text,
    with_bond,
)
from .propagation import recurrence_time
from .reduced import (
    ExactReplayFunctional,
    IsolatedFunctional,
    WideBandFunctional,
    propagate_reduced,
)
from .rg_verifier import Grid1D, PotentialField, check_rg_identity, ground_state_1d, refinement_ladder
from . import report as rpt

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INVARIANT = 3
EXIT_NUMERICAL = 4

MODES = ("transport-full", "transport-reduced", "landauer", "continue", "certify", "rg-check")


class ConfigError(ValueError):
    """Config validation failure; message carries the field path."""


@dataclass
class RunConfig:
    mode: str
    params: dict
    output_dir: Path = Path("runs")
    strict: bool = False
    plot: bool = False

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be an object")
        mode = raw.get("mode")
        if mode not in MODES:
            raise ConfigError(f"config.mode: expected one of {MODES}, got {mode!r}")
        params = raw.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("config.params: must be an object")
        out = Path(raw.get("output_dir", "runs"))
        if base_dir is not None and not out.is_absolute():
            out = base_dir / out
        return cls(mode, params, out, bool(raw.get("strict", False)), bool(raw.get("plot", False)))

    def content_hash(self) -> str:
        return rpt.config_hash({"mode": self.mode, "params": self.params})


def _need(params: dict, key: str, typ, path: str):
    if key not in params:
        raise ConfigError(f"{path}.{key}: required field missing")
    val = params[key]
    try:
        return typ(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.{key}: cannot interpret {val!r}") from exc


def _opt(params: dict, key: str, typ, default, path: str):
    if key not in params or params[key] is None:
        return default
    return _need(params, key, typ, path)


def _build_system(p: dict, path: str) -> TightBindingSystem:
    n_l = _need(p, "n_l", int, path)
    n_d = _need(p, "n_d", int, path)
    n_r = _need(p, "n_r", int, path)
    matrix_file = p.get("matrix_file")
    if matrix_file:
        if not Path(matrix_file).exists():
            raise ConfigError(f"{path}.matrix_file: {matrix_file} does not exist")
        system = load_system_text(matrix_file, n_l, n_d, n_r)
    else:
        system = build_chain_system(
            n_l, n_d, n_r,
            _opt(p, "hopping", float, -1.0, path),
            _opt(p, "onsite", float, 0.0, path),
        )
    for bond in p.get("bonds", []):
        system = with_bond(system, int(bond[0]), int(bond[1]), float(bond[2]))
    return system


def _build_bias(p: dict, path: str) -> BiasProfile:
    b = p.get("bias", {})
    if not isinstance(b, dict):
        raise ConfigError(f"{path}.bias: must be an object")
    return BiasProfile(
        amplitude_l=_opt(b, "amplitude_l", float, 0.0, path + ".bias"),
        amplitude_r=_opt(b, "amplitude_r", float, 0.0, path + ".bias"),
        ramp_time=_opt(b, "ramp_time", float, 1.0, path + ".bias"),
        shape=_opt(b, "shape", str, "exp-ramp", path + ".bias"),
        device_interpolation=bool(b.get("device_interpolation", False)),
    )


def _write_replay_bundle(out: Path, run) -> None:
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "q_l_half.npy", run.q_l_half)
    np.save(out / "q_r_half.npy", run.q_r_half)
    np.save(out / "sigma_d.npy", run.sigma_d)
    np.save(out / "times.npy", run.times)
    rpt.write_json(out / "meta.json", {
        "dt": run.dt, "n_steps": run.n_steps,
        "n_d": int(run.sigma_d.shape[1]), "integrator": run.integrator,
    })


def _load_replay_bundle(path: Path):
    meta = json.loads((path / "meta.json").read_text())
    return (
        meta,
        np.load(path / "q_l_half.npy"),
        np.load(path / "q_r_half.npy"),
        np.load(path / "sigma_d.npy"),
    )


def _run_transport_full(cfg: RunConfig, art: Path) -> tuple[dict, list]:
    p = cfg.params
    path = "params"
    system = _build_system(p, path)
    profile = _build_bias(p, path)
    n_e = _opt(p, "n_electrons", int, system.n // 2, path)
    dt = _opt(p, "dt", float, 1e-2, path)
    n_steps = _need(p, "n_steps", int, path)
    integrator = _opt(p, "integrator", str, "rk4", path)
    sigma0 = ground_state_density_matrix(system, n_e,
                                         fractional_filling=bool(p.get("fractional_filling", False)))
    dump_every = _opt(p, "dump_matrices_every", int, 0, path)
    breaches: list[str] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        run = record_dissipation(system, profile, sigma0, dt, n_steps, integrator=integrator,
                                 store_matrices_every=dump_every or None)
    breaches += [str(w.message) for w in caught]

    total = run.tr_sigma["L"] + run.tr_sigma["D"] + run.tr_sigma["R"]
    trace_drift = float(np.max(np.abs(total - total[0])))
    if trace_drift > 1e-10 * max(total[0], 1.0):
        breaches.append(f"trace drift {trace_drift:.3e} exceeds 1e-10 relative")

    rpt.write_occupations_csv(art / "occupations.csv", run.times,
                              run.tr_sigma["L"], run.tr_sigma["D"], run.tr_sigma["R"])
    rpt.write_dissipation_csv(art / "dissipation.csv", run)
    if p.get("emit_replay", True):
        _write_replay_bundle(art / "replay", run)
    if run.trajectory is not None:
        from .propagation import write_trajectory_bin

        write_trajectory_bin(art / "trajectory.bin", run.trajectory)

    t_rec = recurrence_time(system)
    summary = {
        "mode": cfg.mode,
        "n": system.n,
        "t_rec": t_rec if np.isfinite(t_rec) else None,
        "trace_drift": trace_drift,
        "max_abs_J_L": float(np.max(np.abs(run.j_l))),
        "max_abs_J_R": float(np.max(np.abs(run.j_r))),
        "final_J_L": float(run.j_l[-1]),
        "final_J_R": float(run.j_r[-1]),
    }
    if np.isfinite(t_rec) and dt * n_steps >= 2 * t_rec / 3:
        summary["plateau_current"] = plateau_current(run, t_rec)
    return summary, breaches


def _run_transport_reduced(cfg: RunConfig, art: Path) -> tuple[dict, list]:
    p = cfg.params
    path = "params"
    fblock = p.get("functional", {})
    variant = _opt(fblock, "variant", str, "wide-band", path + ".functional")
    dt = _opt(p, "dt", float, 1e-2, path)
    n_steps = _need(p, "n_steps", int, path)
    integrator = _opt(p, "integrator", str, "rk4", path)
    breaches: list[str] = []
    summary: dict = {"mode": cfg.mode, "functional": variant}

    oracle_sigma_d = None
    if variant == "exact-replay":
        src = fblock.get("replay_from")
        if not src:
            raise ConfigError(f"{path}.functional.replay_from: required for exact-replay")
        src = Path(src)
        bundle = src / "replay" if (src / "replay").exists() else src
        if not (bundle / "meta.json").exists():
            raise ConfigError(f"{path}.functional.replay_from: no replay bundle at {src}")
        meta, q_l, q_r, oracle_sigma_d = _load_replay_bundle(bundle)
        functional = ExactReplayFunctional(meta["dt"], meta["n_steps"], q_l, q_r)
        if abs(dt - meta["dt"]) > 1e-12 or n_steps != meta["n_steps"]:
            raise ConfigError(
                f"{path}: (dt, n_steps) = ({dt}, {n_steps}) must match the replay grid "
                f"({meta['dt']}, {meta['n_steps']})"
            )
        system = _build_system(p, path)
        profile = _build_bias(p, path)
        sigma_d0 = oracle_sigma_d[0]
    elif variant == "none-isolated":
        functional = IsolatedFunctional()
        system = _build_system(p, path)
        profile = _build_bias(p, path)
        h_d = np.asarray(system.h0)[system.partition.D, system.partition.D]
        sigma_d0 = equilibrium_density_matrix(h_d, _opt(p, "mu", float, 0.0, path))
    elif variant == "wide-band":
        system = _build_system(p, path)
        profile = _build_bias(p, path)
        fp = path + ".functional"
        functional = WideBandFunctional(
            _opt(fblock, "gamma_l", float, 0.5, fp),
            _opt(fblock, "gamma_r", float, 0.5, fp),
            mu_l=_opt(fblock, "mu_l", float, 0.0, fp),
            mu_r=_opt(fblock, "mu_r", float, 0.0, fp),
            n_d=system.n_d,
            refresh_every=_opt(fblock, "refresh_every", int, 1, fp),
        )
        h_d = np.asarray(system.h0)[system.partition.D, system.partition.D]
        sigma_d0 = equilibrium_density_matrix(h_d, _opt(p, "mu", float, 0.0, path))
    else:
        raise ConfigError(f"{path}.functional.variant: unknown variant {variant!r}")

    traj = propagate_reduced(sigma_d0, system, profile, functional, dt, n_steps,
                             integrator=integrator,
                             store_every=_opt(p, "store_every", int, 1, path))
    rpt.write_reduced_csv(art / "trajectory.csv", traj)

    summary["final_J_L"] = float(traj.j_l[-1])
    summary["final_J_R"] = float(traj.j_r[-1])
    summary["final_tr_sigma_D"] = float(np.trace(traj.matrices[-1]).real)
    if oracle_sigma_d is not None:
        stride = traj.metadata["store_every"]
        devs = [
            float(np.linalg.norm(traj.matrices[k] - oracle_sigma_d[k * stride]))
            for k in range(traj.n_frames)
        ]
        summary["max_sigma_d_deviation"] = max(devs)
        if max(devs) > 1e-8:
            breaches.append(f"exact-replay deviation {max(devs):.3e} exceeds 1e-8")
    return summary, breaches


def _run_landauer(cfg: RunConfig, art: Path) -> tuple[dict, list]:
    p = cfg.params
    path = "params"
    system = _build_system(p, path)
    mu = _opt(p, "mu", float, 0.0, path)
    hop = system.hopping_scale()
    es = np.linspace(-2 * hop + mu + 1e-9, 2 * hop + mu - 1e-9,
                     _opt(p, "n_energies", int, 401, path))
    rows = [(float(e), transmission(system, float(e))) for e in es]
    rpt.write_csv(art / "transmission.csv", ["E", "T"], rows)
    vs = p.get("v_bias", [0.1])
    if not isinstance(vs, (list, tuple)):
        vs = [vs]
    breaches: list[str] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        currents = {repr(float(v)): landauer_current(system, float(v), mu) for v in vs}
    breaches += [str(w.message) for w in caught]
    summary = {"mode": cfg.mode, "mu": mu, "currents": currents,
               "max_T": float(max(r[1] for r in rows))}
    return summary, breaches


def _parse_box(spec, path: str):
    try:
        if isinstance(spec, str):
            lo, hi = (json.loads(f"[{part}]") for part in spec.split(":"))
        else:
            lo, hi = spec
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
    except Exception as exc:
        raise ConfigError(f"{path}: box must be 'lo:hi' lists, got {spec!r}") from exc
    return lo, hi


def _run_continue(cfg: RunConfig, art: Path) -> tuple[dict, list]:
    p = cfg.params
    path = "params"
    src = _need(p, "input", str, path)
    if not Path(src).exists():
        raise ConfigError(f"{path}.input: {src} does not exist")
    samples = SampledFunction.read_csv(src)
    to_lo, to_hi = _parse_box(_need(p, "to_box", lambda v: v, path), path + ".to_box")
    if "from_box" in p:
        fr_lo, fr_hi = _parse_box(p["from_box"], path + ".from_box")
        if np.any(fr_lo < samples.lo - 1e-9) or np.any(fr_hi > samples.hi + 1e-9):
            raise ConfigError(f"{path}.from_box: not contained in the sampled box")
    d_center = 0.5 * (samples.lo + samples.hi)
    u_center = 0.5 * (to_lo + to_hi)
    far = np.where(np.abs(to_hi - d_center) >= np.abs(to_lo - d_center), to_hi, to_lo)
    path_pts = p.get("path") or [d_center.tolist(), u_center.tolist(), far.tolist()]
    exclusions = [(np.asarray(e[0], float), float(e[1])) for e in p.get("exclusions", [])]
    result = continue_along_path(
        samples,
        path_pts,
        max_order=_opt(p, "order", int, 10, path),
        step_fraction=_opt(p, "step_fraction", float, 0.5, path),
        target_box=(to_lo, to_hi),
        out_spacing=_opt(p, "out_spacing", float, None, path),
        exclusions=exclusions,
    )
    shutil.copyfile(src, art / "samples_in.csv")
    result.output.write_csv(art / "continued.csv")
    rpt.write_json(art / "diagnostics.json", result.diagnostics())
    summary = {
        "mode": cfg.mode,
        "hops": len(result.steps),
        "furthest_point": [float(c) for c in result.furthest_point],
        "final_radius": float(result.models[-1].radius_estimate),
    }
    return summary, []


def _run_certify(cfg: RunConfig, art: Path) -> tuple[dict, list]:
    p = cfg.params
    path = "params"
    f = SampledFunction.read_csv(_need(p, "input_f", str, path))
    g = SampledFunction.read_csv(_need(p, "input_g", str, path))
    to_lo, to_hi = _parse_box(_need(p, "to_box", lambda v: v, path), path + ".to_box")
    rep = certify_uniqueness(
        f, g, (to_lo, to_hi),
        tol_agree=_opt(p, "tol_agree", float, 1e-9, path),
        max_order=_opt(p, "order", int, 10, path),
        step_fraction=_opt(p, "step_fraction", float, 0.5, path),
    )
    rpt.write_json(art / "certification.json", rep.to_dict())
    return {"mode": cfg.mode, **rep.to_dict()}, []


_PERTURBATIONS = {
    "quadratic": lambda x, eps: eps * x**2 / 2.0,
    "linear": lambda x, eps: eps * x,
    "gaussian": lambda x, eps: eps * np.exp(-(x**2)),
}


def _parse_perturbation(spec: str, path: str):
    try:
        name, eps = spec.split(":")
        return _PERTURBATIONS[name], float(eps)
    except (ValueError, KeyError) as exc:
        raise ConfigError(
            f"{path}: perturbation must be one of "
            f"{sorted(_PERTURBATIONS)} as 'name:eps', got {spec!r}"
        ) from exc


def _run_rg_check(cfg: RunConfig, art: Path) -> tuple[dict, list]:
    p = cfg.params
    path = "params"
    gspec = p.get("grid", {})
    x_min = _opt(gspec, "x_min", float, -8.0, path + ".grid")
    x_max = _opt(gspec, "x_max", float, 8.0, path + ".grid")
    dx = _opt(gspec, "dx", float, 1.0 / 64.0, path + ".grid")
    n = int(round((x_max - x_min) / dx)) - 1
    grid = Grid1D(x_min, x_max, n)
    dt = _opt(p, "dt", float, 5e-4, path)
    k = _opt(p, "k", int, 0, path)
    pert_fn, eps = _parse_perturbation(_opt(p, "perturbation", str, "quadratic:0.1", path), path)
    sub = p.get("subinterval")
    subinterval = tuple(float(s) for s in (sub.split(",") if isinstance(sub, str) else sub)) if sub else None

    v_static_fn = lambda x: 0.5 * x**2
    x = grid.x
    psi0 = ground_state_1d(grid, v_static_fn(x))
    v = PotentialField(v_static_fn(x), {k: pert_fn(x, eps)})
    v_p = PotentialField(v_static_fn(x), {})
    rep = check_rg_identity(psi0, v, v_p, k=k, dt=dt, subinterval=subinterval)
    rows = zip(x.tolist(), rep.lhs.tolist(), rep.rhs.tolist())
    rpt.write_csv(art / "rg_profile.csv", ["x", "time_derivative_side", "divergence_side"], rows)

    payload = {"identity": rep.to_dict()}
    n_levels = _opt(p, "ladder_levels", int, 3, path)
    if n_levels > 1:
        lad = refinement_ladder(grid, v_static_fn, lambda xx: pert_fn(xx, eps),
                                k=k, dt=dt, n_levels=n_levels, subinterval=subinterval)
        payload["ladder"] = lad.to_dict()
    rpt.write_json(art / "rg_report.json", payload)

    breaches = []
    if rep.inconclusive:
        breaches.append("finite-difference noise floor exceeds the signal; inconclusive")
    summary = {"mode": cfg.mode, "residual_rel": rep.residual_rel,
               "residual_max": rep.residual_max}
    if "ladder" in payload:
        summary["fitted_order"] = payload["ladder"]["fitted_order"]
    if subinterval:
        summary["rhs_max_abs_on_d"] = rep.rhs_max_abs_on_d
    return summary, breaches


_RUNNERS = {
    "transport-full": _run_transport_full,
    "transport-reduced": _run_transport_reduced,
    "landauer": _run_landauer,
    "continue": _run_continue,
    "certify": _run_certify,
    "rg-check": _run_rg_check,
}


def run(config: RunConfig) -> tuple[int, Path, dict]:
    """Execute one run; returns (exit_code, artifact_dir, summary)."""
    art = config.output_dir / f"{config.mode}-{config.content_hash()}"
    art.mkdir(parents=True, exist_ok=True)
    try:
        summary, breaches = _RUNNERS[config.mode](config, art)
    except ConfigError:
        raise
    except (ContinuationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        summary = {"mode": config.mode, "error": str(exc)}
        rpt.write_json(art / "summary.json", {
            "config_hash": config.content_hash(), "version": __version__, **summary,
        })
        return EXIT_NUMERICAL, art, summary
    summary["config_hash"] = config.content_hash()
    summary["version"] = __version__
    summary["breaches"] = breaches
    rpt.write_json(art / "summary.json", summary)
    if config.plot:
        rpt.render_run_figures(art)
    code = EXIT_INVARIANT if (config.strict and breaches) else EXIT_OK
    return code, art, summary


def compare_trajectories(file_a, file_b, tolerance: float, time_tol: float = 1e-9) -> dict:
    """Columnwise max deviations of two runs on matching schemas and grids."""
    ha, da = rpt.read_csv(file_a)
    hb, db = rpt.read_csv(file_b)
    if ha != hb:
        raise ValueError(f"schema mismatch: {ha} vs {hb}")
    if da.shape != db.shape:
        raise ValueError(f"shape mismatch: {da.shape} vs {db.shape}")
    if "t" in ha:
        tcol = ha.index("t")
        if np.max(np.abs(da[:, tcol] - db[:, tcol])) > time_tol:
            raise ValueError("time grids do not match")
    devs = {}
    for i, name in enumerate(ha):
        ca, cb = da[:, i], db[:, i]
        nan_a, nan_b = np.isnan(ca), np.isnan(cb)
        if not np.array_equal(nan_a, nan_b):
            raise ValueError(f"column {name}: non-numeric layout differs")
        devs[name] = float(np.max(np.abs(ca[~nan_a] - cb[~nan_b]))) if (~nan_a).any() else 0.0
    worst = max(devs.values())
    return {"columns": devs, "max_deviation": worst, "tolerance": tolerance,
            "passed": bool(worst <= tolerance)}


def _print_summary(summary: dict) -> None:
    width = max(len(k) for k in summary)
    for key in sorted(summary):
        print(f"  {key:<{width}}  {summary[key]}")


def _add_common(sp):
    sp.add_argument("--output-dir", default="runs")
    sp.add_argument("--strict", action="store_true")
    sp.add_argument("--plot", action="store_true", help="render figures next to the CSV output")


def _transport_params(args) -> dict:
    return {
        "n_l": args.n_l, "n_d": args.n_d, "n_r": args.n_r,
        "hopping": args.hopping, "onsite": args.onsite,
        "n_electrons": args.n_electrons,
        "dt": args.dt, "n_steps": args.n_steps, "integrator": args.integrator,
        "bias": {
            "amplitude_l": args.bias / 2.0, "amplitude_r": -args.bias / 2.0,
            "shape": args.bias_shape, "ramp_time": args.ramp_time,
        },
    }


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="opentb",
        description="Tight-binding open-system transport, continuation and response checks",
    )
    ap.add_argument("--version", action="version", version=f"opentb {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    rp = sub.add_parser("run", help="execute a JSON run config")
    rp.add_argument("config", type=Path)
    rp.add_argument("--jobs", type=int, default=1, help="parallel sweep points")
    _add_common(rp)

    for name in ("transport-full", "transport-reduced"):
        tp = sub.add_parser(name, help=f"{name} run from flags")
        tp.add_argument("--n-l", type=int, default=20)
        tp.add_argument("--n-d", type=int, default=4)
        tp.add_argument("--n-r", type=int, default=20)
        tp.add_argument("--hopping", type=float, default=-1.0)
        tp.add_argument("--onsite", type=float, default=0.0)
        tp.add_argument("--n-electrons", type=int, default=None)
        tp.add_argument("--bias", type=float, default=0.0)
        tp.add_argument("--bias-shape", choices=("step", "exp-ramp"), default="exp-ramp")
        tp.add_argument("--ramp-time", type=float, default=1.0)
        tp.add_argument("--dt", type=float, default=1e-2)
        tp.add_argument("--n-steps", type=int, required=True)
        tp.add_argument("--integrator", choices=("rk4", "crank-nicolson"), default="rk4")
        if name == "transport-reduced":
            tp.add_argument("--functional", choices=("none-isolated", "exact-replay", "wide-band"),
                            default="wide-band")
            tp.add_argument("--replay-from", type=Path)
            tp.add_argument("--gamma", type=float, default=0.5)
            tp.add_argument("--mu-l", type=float, default=0.0)
            tp.add_argument("--mu-r", type=float, default=0.0)
        _add_common(tp)

    lp = sub.add_parser("landauer", help="transmission curve and steady-state currents")
    lp.add_argument("--n-l", type=int, default=30)
    lp.add_argument("--n-d", type=int, default=4)
    lp.add_argument("--n-r", type=int, default=30)
    lp.add_argument("--hopping", type=float, default=-1.0)
    lp.add_argument("--onsite", type=float, default=0.0)
    lp.add_argument("--mu", type=float, default=0.0)
    lp.add_argument("--v-bias", type=float, nargs="+", default=[0.1])
    _add_common(lp)

    cp = sub.add_parser("continue", help="analytic continuation of sampled data")
    cp.add_argument("--input", required=True)
    cp.add_argument("--from-box", default=None, help="lo:hi (informational check)")
    cp.add_argument("--to-box", required=True, help="lo:hi target box, e.g. '1:2' or '[1,0]:[2,1]'")
    cp.add_argument("--order", type=int, default=10)
    cp.add_argument("--step-fraction", type=float, default=0.5)
    cp.add_argument("--out-spacing", type=float, default=None)
    _add_common(cp)

    zp = sub.add_parser("certify", help="uniqueness certification of two samplings")
    zp.add_argument("--input-f", required=True)
    zp.add_argument("--input-g", required=True)
    zp.add_argument("--to-box", required=True)
    zp.add_argument("--tol-agree", type=float, default=1e-9)
    zp.add_argument("--order", type=int, default=10)
    zp.add_argument("--step-fraction", type=float, default=0.5)
    _add_common(zp)

    gp = sub.add_parser("rg-check", help="density-potential response identity check")
    gp.add_argument("--grid", default="-8,8,0.015625", help="x_min,x_max,dx")
    gp.add_argument("--dt", type=float, default=5e-4)
    gp.add_argument("--k", type=int, default=0)
    gp.add_argument("--perturbation", default="quadratic:0.1")
    gp.add_argument("--subinterval", default=None, help="a,b")
    gp.add_argument("--ladder-levels", type=int, default=3)
    _add_common(gp)

    mp = sub.add_parser("compare", help="diff two trajectory CSVs")
    mp.add_argument("file_a", type=Path)
    mp.add_argument("file_b", type=Path)
    mp.add_argument("--tolerance", type=float, default=1e-8)

    fp = sub.add_parser("report", help="render figures for an existing run directory")
    fp.add_argument("run_dir", type=Path)
    return ap


def _config_from_args(args) -> RunConfig:
    cmd = args.command
    if cmd in ("transport-full", "transport-reduced"):
        params = _transport_params(args)
        if cmd == "transport-reduced":
            fblock = {"variant": args.functional, "gamma_l": args.gamma, "gamma_r": args.gamma,
                      "mu_l": args.mu_l, "mu_r": args.mu_r}
            if args.replay_from is not None:
                fblock["replay_from"] = str(args.replay_from)
            params["functional"] = fblock
        mode = cmd
    elif cmd == "landauer":
        params = {"n_l": args.n_l, "n_d": args.n_d, "n_r": args.n_r,
                  "hopping": args.hopping, "onsite": args.onsite,
                  "mu": args.mu, "v_bias": args.v_bias}
        mode = cmd
    elif cmd == "continue":
        params = {"input": args.input, "to_box": args.to_box,
                  "order": args.order, "step_fraction": args.step_fraction}
        if args.from_box:
            params["from_box"] = args.from_box
        if args.out_spacing:
            params["out_spacing"] = args.out_spacing
        mode = cmd
    elif cmd == "certify":
        params = {"input_f": args.input_f, "input_g": args.input_g, "to_box": args.to_box,
                  "tol_agree": args.tol_agree, "order": args.order,
                  "step_fraction": args.step_fraction}
        mode = cmd
    elif cmd == "rg-check":
        x_min, x_max, dx = (float(v) for v in args.grid.split(","))
        params = {"grid": {"x_min": x_min, "x_max": x_max, "dx": dx},
                  "dt": args.dt, "k": args.k, "perturbation": args.perturbation,
                  "ladder_levels": args.ladder_levels}
        if args.subinterval:
            params["subinterval"] = args.subinterval
        mode = "rg-check"
    else:  # pragma: no cover
        raise ConfigError(f"unhandled command {cmd}")
    return RunConfig(mode, params, Path(args.output_dir), args.strict, args.plot)


def _run_one_dict(raw: dict, base_dir: str) -> tuple[int, str, dict]:
    cfg = RunConfig.from_dict(raw, Path(base_dir))
    code, art, summary = run(cfg)
    return code, str(art), summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            result = compare_trajectories(args.file_a, args.file_b, args.tolerance)
            _print_summary({"max_deviation": result["max_deviation"],
                            "tolerance": result["tolerance"], "passed": result["passed"]})
            return EXIT_OK if result["passed"] else EXIT_NUMERICAL
        if args.command == "report":
            made = rpt.render_run_figures(args.run_dir)
            for pth in made:
                print(f"  wrote {pth}")
            return EXIT_OK
        if args.command == "run":
            raw = json.loads(Path(args.config).read_text())
            sweep = raw.pop("sweep", None)
            if sweep:
                configs = []
                for point in sweep:
                    merged = json.loads(json.dumps(raw))
                    merged.setdefault("params", {}).update(point)
                    merged["output_dir"] = str(Path(args.output_dir).absolute())
                    if args.strict:
                        merged["strict"] = True
                    if args.plot:
                        merged["plot"] = True
                    configs.append(merged)
                base = str(Path(args.config).parent)
                if args.jobs > 1:
                    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                        results = list(pool.map(_run_one_dict, configs, [base] * len(configs)))
                else:
                    results = [_run_one_dict(c, base) for c in configs]
                worst = EXIT_OK
                for code, art, summary in results:
                    print(f"== {art}")
                    _print_summary(summary)
                    worst = max(worst, code)
                return worst
            cfg = RunConfig.from_dict(raw, Path(args.config).parent)
            if args.strict:
                cfg.strict = True
            if args.plot:
                cfg.plot = True
            cfg.output_dir = Path(args.output_dir)
            code, art, summary = run(cfg)
            print(f"== {art}")
            _print_summary(summary)
            return code
        cfg = _config_from_args(args)
        code, art, summary = run(cfg)
        print(f"== {art}")
        _print_summary(summary)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ContinuationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
