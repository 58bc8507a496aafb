"""Artifact writers: delimited output, JSON reports, and rendered figures.

Simulation code never plots; runs emit deterministic CSV/JSON and the
figure helpers here re-read those artifacts and render PNGs next to them.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)


def config_hash(config: dict) -> str:
    """Content hash of a config dict (canonical JSON)."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def write_csv(path, header, rows) -> None:
    """RFC-4180 CSV with shortest-roundtrip float formatting."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in row])


def read_csv(path) -> tuple[list, np.ndarray]:
    """Header plus a float matrix; non-numeric cells become NaN."""
    with open(path, "r", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header = rows[0]
    data = []
    for r in rows[1:]:
        vals = []
        for c in r:
            try:
                vals.append(float(c))
            except ValueError:
                vals.append(np.nan)
        data.append(vals)
    return header, np.asarray(data, dtype=float)


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def occupation_rows(times, occ_l, occ_d, occ_r):
    for k in range(len(times)):
        yield (float(times[k]), float(occ_l[k]), float(occ_d[k]), float(occ_r[k]))


def write_occupations_csv(path, times, occ_l, occ_d, occ_r) -> None:
    write_csv(path, ["t", "tr_sigma_L", "tr_sigma_D", "tr_sigma_R"],
              occupation_rows(times, occ_l, occ_d, occ_r))


def write_dissipation_csv(path, run) -> None:
    """Per-step record: t, J_L, J_R, tr sigma_D, ||Q_L||_F, ||Q_R||_F."""
    rows = []
    for k in range(run.n_steps + 1):
        rows.append(
            (
                float(run.times[k]),
                float(run.j_l[k]),
                float(run.j_r[k]),
                float(run.tr_sigma["D"][k]),
                float(np.linalg.norm(run.q_l_half[2 * k])),
                float(np.linalg.norm(run.q_r_half[2 * k])),
            )
        )
    write_csv(path, ["t", "J_L", "J_R", "tr_sigma_D", "fro_Q_L", "fro_Q_R"], rows)


def write_reduced_csv(path, traj) -> None:
    """Reduced-run schema: occupations plus currents plus the mode column."""
    mode = traj.metadata.get("mode", "?")
    stride = traj.metadata.get("store_every", 1)
    rows = []
    for k in range(traj.n_frames):
        step = k * stride
        rows.append(
            (
                float(traj.times[k]),
                float(np.trace(traj.matrices[k]).real),
                float(traj.j_l[step]),
                float(traj.j_r[step]),
                mode,
            )
        )
    write_csv(path, ["t", "tr_sigma_D", "J_L", "J_R", "mode"], rows)


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------


def _finish(fig, out_path):
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)


def render_currents_figure(csv_path, out_path=None):
    """Terminal currents (and device charge) against time."""
    csv_path = Path(csv_path)
    out_path = out_path or csv_path.with_suffix(".png")
    header, data = read_csv(csv_path)
    col = {name: i for i, name in enumerate(header)}
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    ax1.plot(data[:, col["t"]], data[:, col["J_L"]], label="J_L")
    ax1.plot(data[:, col["t"]], data[:, col["J_R"]], label="J_R")
    ax1.set_ylabel("current")
    ax1.legend(frameon=False)
    ax2.plot(data[:, col["t"]], data[:, col["tr_sigma_D"]], color="k")
    ax2.set_xlabel("t")
    ax2.set_ylabel("tr sigma_D")
    return _finish(fig, out_path)


def render_occupations_figure(csv_path, out_path=None):
    csv_path = Path(csv_path)
    out_path = out_path or csv_path.with_suffix(".png")
    header, data = read_csv(csv_path)
    col = {name: i for i, name in enumerate(header)}
    fig, ax = plt.subplots(figsize=(7, 4))
    for name in ("tr_sigma_L", "tr_sigma_D", "tr_sigma_R"):
        ax.plot(data[:, col["t"]], data[:, col[name]], label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("block occupation")
    ax.legend(frameon=False)
    return _finish(fig, out_path)


def render_transmission_figure(csv_path, out_path=None):
    csv_path = Path(csv_path)
    out_path = out_path or csv_path.with_suffix(".png")
    header, data = read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(data[:, 0], data[:, 1])
    ax.set_xlabel("E")
    ax.set_ylabel("T(E)")
    ax.set_ylim(-0.02, 1.05)
    return _finish(fig, out_path)


def render_continuation_figure(samples_csv, continued_csv, out_path):
    from .continuation import SampledFunction

    src = SampledFunction.read_csv(samples_csv)
    cont = SampledFunction.read_csv(continued_csv)
    fig, ax = plt.subplots(figsize=(7, 4))
    if src.dim == 1:
        ax.plot(src.axis_nodes(0), src.values, "k.", ms=2, label="samples (D)")
        ax.plot(cont.axis_nodes(0), cont.values, "C1-", label="continued (U)")
        ax.set_xlabel("x")
        ax.set_ylabel("f")
        ax.legend(frameon=False)
    else:
        im = ax.imshow(
            cont.values.T,
            origin="lower",
            extent=(cont.lo[0], cont.hi[0], cont.lo[1], cont.hi[1]),
            aspect="auto",
        )
        fig.colorbar(im, ax=ax, label="continued value")
        ax.set_xlabel("x0")
        ax.set_ylabel("x1")
    return _finish(fig, out_path)


def render_rg_figure(profile_csv, out_path=None):
    profile_csv = Path(profile_csv)
    out_path = out_path or profile_csv.with_suffix(".png")
    header, data = read_csv(profile_csv)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(data[:, 0], data[:, 1], label="time-derivative side")
    ax.plot(data[:, 0], data[:, 2], "--", label="divergence side")
    ax.set_xlabel("x")
    ax.set_ylabel("response")
    ax.legend(frameon=False)
    return _finish(fig, out_path)


def render_run_figures(run_dir) -> list:
    """Render every known artifact in a run directory; returns figure paths."""
    run_dir = Path(run_dir)
    made = []
    for name, renderer in (
        ("dissipation.csv", render_currents_figure),
        ("occupations.csv", render_occupations_figure),
        ("trajectory.csv", render_currents_figure),
        ("transmission.csv", render_transmission_figure),
        ("rg_profile.csv", render_rg_figure),
    ):
        src = run_dir / name
        if src.exists():
            made.append(renderer(src))
    samples, cont = run_dir / "samples_in.csv", run_dir / "continued.csv"
    if samples.exists() and cont.exists():
        made.append(render_continuation_figure(samples, cont, run_dir / "continued.png"))
    return made
