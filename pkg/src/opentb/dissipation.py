"""Block extraction of the dissipative term Q_alpha and terminal currents.

For the partitioned equation of motion

    i d(sigma_D)/dt = [h_D, sigma_D] - i (Q_L + Q_R),

the lead-alpha term in block form is

    Q_alpha = i (h_{D,alpha} sigma_{alpha,D} - sigma_{D,alpha} h_{alpha,D}),

and the terminal current is J_alpha = -tr Q_alpha, positive when electrons
flow from lead alpha into the device. The module also carries an
independent steady-state oracle: the two-probe transmission computed with
the closed-form self-energy of a semi-infinite uniform chain, integrated
over the zero-temperature bias window.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import BiasProfile, Partition, TightBindingSystem, apply_bias
from .propagation import propagate_full

_ALPHAS = ("L", "R")


class ImaginaryCurrentError(ValueError):
    """tr Q picked up an imaginary part; hermiticity broke upstream."""


class BandWindowWarning(UserWarning):
    """The bias window reaches outside the lead band and was clipped."""


def compute_Q(
    sigma_full: np.ndarray, h_full: np.ndarray, partition: Partition, alpha: str
) -> np.ndarray:
    """Q_alpha from the off-diagonal blocks of sigma and h (block form)."""
    if alpha not in _ALPHAS:
        raise ValueError(f"alpha must be 'L' or 'R', got {alpha!r}")
    n = partition.n
    if sigma_full.shape != (n, n) or h_full.shape != (n, n):
        raise ValueError(
            f"expected ({n}, {n}) matrices for this partition, got "
            f"{sigma_full.shape} and {h_full.shape}"
        )
    h_da = partition.block(h_full, "D", alpha)
    h_ad = partition.block(h_full, alpha, "D")
    s_ad = partition.block(sigma_full, alpha, "D")
    s_da = partition.block(sigma_full, "D", alpha)
    return 1j * (h_da @ s_ad - s_da @ h_ad)


def compute_Q_eigenbasis(
    sigma_full: np.ndarray, h_full: np.ndarray, partition: Partition, alpha: str
) -> np.ndarray:
    """Q_alpha as the explicit sum over lead eigenstates k_alpha.

    Diagonalizes the alpha lead block and accumulates
    i sum_k (h_{n,k} sigma_{k,m} - sigma_{n,k} h_{k,m}) state by state.
    Algebraically identical to the block form; kept as an independent
    evaluation route for the identity test.
    """
    if alpha not in _ALPHAS:
        raise ValueError(f"alpha must be 'L' or 'R', got {alpha!r}")
    h_aa = partition.block(h_full, alpha, alpha)
    _, w_states = np.linalg.eigh(h_aa)
    h_dk = partition.block(h_full, "D", alpha) @ w_states
    h_kd = w_states.conj().T @ partition.block(h_full, alpha, "D")
    s_kd = w_states.conj().T @ partition.block(sigma_full, alpha, "D")
    s_dk = partition.block(sigma_full, "D", alpha) @ w_states
    n_d = h_dk.shape[0]
    q = np.zeros((n_d, n_d), dtype=complex)
    for k in range(h_dk.shape[1]):
        q += np.outer(h_dk[:, k], s_kd[k, :]) - np.outer(s_dk[:, k], h_kd[k, :])
    return 1j * q


def current(q_alpha: np.ndarray, imag_tol: float = 1e-10) -> float:
    """J_alpha = -tr Q_alpha; rejects a significant imaginary residue."""
    q_alpha = np.asarray(q_alpha)
    if q_alpha.ndim != 2 or q_alpha.shape[0] != q_alpha.shape[1]:
        raise ValueError(f"Q must be square, got shape {q_alpha.shape}")
    tr = complex(np.trace(q_alpha))
    if abs(tr.imag) > imag_tol:
        raise ImaginaryCurrentError(
            f"|Im tr Q| = {abs(tr.imag):.3e} > {imag_tol:.1e}: non-Hermitian input upstream"
        )
    return -tr.real


@dataclass
class DissipationRecord:
    """Per-step snapshot of the dissipative terms and currents."""

    t: float
    q_l: np.ndarray
    q_r: np.ndarray
    j_l: float
    j_r: float
    tr_sigma_d: float


@dataclass
class OracleRun:
    """Full-system reference run with Q sampled on the dt/2 half grid.

    The half-grid samples exist so a reduced propagation at step dt can
    read exact Q values at RK4 stage times (t, t + dt/2, t + dt).
    Index 2k on the half grid is grid point k.
    """

    dt: float
    n_steps: int
    times: np.ndarray            # (n_steps + 1,)
    sigma_d: np.ndarray          # (n_steps + 1, n_d, n_d)
    j_l: np.ndarray              # (n_steps + 1,)
    j_r: np.ndarray
    tr_sigma: dict               # block label -> (n_steps + 1,) occupations
    q_l_half: np.ndarray         # (2 n_steps + 1, n_d, n_d)
    q_r_half: np.ndarray
    integrator: str
    trajectory: object = None    # optional stored full-matrix trajectory

    def records(self) -> list[DissipationRecord]:
        out = []
        for k in range(self.n_steps + 1):
            out.append(
                DissipationRecord(
                    float(self.times[k]),
                    self.q_l_half[2 * k],
                    self.q_r_half[2 * k],
                    float(self.j_l[k]),
                    float(self.j_r[k]),
                    float(self.tr_sigma["D"][k]),
                )
            )
        return out


def record_dissipation(
    system: TightBindingSystem,
    profile: BiasProfile,
    sigma0: np.ndarray,
    dt: float,
    n_steps: int,
    integrator: str = "rk4",
    warn_recurrence: bool = True,
    store_matrices_every: Optional[int] = None,
) -> OracleRun:
    """Run the full oracle at step dt/2 and record Q on every half-grid node.

    Stores only device-block quantities, so acceptance-scale runs stay in
    tens of megabytes even though the underlying propagation is full size.
    store_matrices_every keeps every that-many-th full matrix on the
    trajectory attribute of the returned run (for binary dumps).
    """
    part = system.partition
    n_half = 2 * n_steps
    n_d = part.n_d
    q_l = np.empty((n_half + 1, n_d, n_d), dtype=complex)
    q_r = np.empty_like(q_l)
    sigma_d = np.empty((n_steps + 1, n_d, n_d), dtype=complex)
    occ = {a: np.empty(n_steps + 1) for a in ("L", "D", "R")}
    j_l = np.empty(n_steps + 1)
    j_r = np.empty(n_steps + 1)

    def observer(k: int, t: float, sigma: np.ndarray) -> None:
        h = apply_bias(system, profile, t)
        ql = compute_Q(sigma, h, part, "L")
        qr = compute_Q(sigma, h, part, "R")
        q_l[k] = ql
        q_r[k] = qr
        if k % 2 == 0:
            g = k // 2
            sigma_d[g] = sigma[part.D, part.D]
            for a in ("L", "D", "R"):
                occ[a][g] = np.trace(part.block(sigma, a, a)).real
            j_l[g] = current(ql)
            j_r[g] = current(qr)

    store_every = n_half if store_matrices_every is None else 2 * store_matrices_every
    trajectory = propagate_full(
        system,
        profile,
        sigma0,
        dt / 2.0,
        n_half,
        integrator=integrator,
        store_every=store_every,
        observer=observer,
        warn_recurrence=warn_recurrence,
    )
    times = dt * np.arange(n_steps + 1)
    run = OracleRun(dt, n_steps, times, sigma_d, j_l, j_r, occ, q_l, q_r, integrator)
    run.trajectory = trajectory if store_matrices_every is not None else None
    return run


# ---------------------------------------------------------------------------
# Landauer steady-state oracle (uniform-chain leads, closed-form self-energy)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _LeadParams:
    onsite: float
    hopping: float
    coupling_l: float
    coupling_r: float


def _uniform_chain_lead_params(system: TightBindingSystem) -> _LeadParams:
    part = system.partition
    if system.n_l < 1 or system.n_r < 1:
        raise ValueError("Landauer oracle needs both leads present")
    h0 = np.asarray(system.h0)
    onsites = []
    hoppings = []
    for sl in (part.L, part.R):
        blk = h0[sl, sl]
        diag = np.diag(blk).real
        if np.max(np.abs(np.diag(blk).imag)) > 1e-12:
            raise ValueError("lead on-site energies must be real")
        if np.ptp(diag) > 1e-12:
            raise ValueError("Landauer oracle requires uniform lead on-site energies")
        onsites.append(diag[0])
        if blk.shape[0] > 1:
            off = np.diag(blk, 1)
            if np.max(np.abs(blk - np.diag(diag) - np.diag(off, 1) - np.diag(off.conj(), -1))) > 1e-12:
                raise ValueError("lead blocks must be tridiagonal chains")
            if np.abs(off - off[0]).max() > 1e-12 or abs(off[0].imag) > 1e-12:
                raise ValueError("lead hoppings must be uniform and real")
            hoppings.append(float(off[0].real))
    if not hoppings:
        raise ValueError("single-site leads do not define a band; use longer leads")
    if len(set(np.round(onsites, 12))) > 1 or (len(hoppings) == 2 and abs(hoppings[0] - hoppings[1]) > 1e-12):
        raise ValueError("left and right leads must be identical uniform chains")
    cl = complex(h0[system.n_l - 1, system.n_l])                      # L_end -> D_0
    cr = complex(h0[system.n_l + system.n_d - 1, system.n_l + system.n_d])  # D_end -> R_0
    if abs(cl.imag) > 1e-12 or abs(cr.imag) > 1e-12:
        raise ValueError("junction bonds must be real for the 1D-chain oracle")
    return _LeadParams(float(onsites[0]), float(hoppings[0]), float(cl.real), float(cr.real))


def surface_green_function(e: float, onsite: float, hopping: float) -> complex:
    """Retarded surface Green's function of a semi-infinite uniform chain."""
    z = e - onsite
    t2 = hopping * hopping
    band = 2.0 * abs(hopping)
    if abs(z) <= band:
        return (z - 1j * np.sqrt(4.0 * t2 - z * z)) / (2.0 * t2)
    return (z - np.sign(z) * np.sqrt(z * z - 4.0 * t2)) / (2.0 * t2)


def transmission(system: TightBindingSystem, e: float) -> float:
    """Two-probe transmission T(E) with analytic 1D-chain lead self-energies."""
    lead = _uniform_chain_lead_params(system)
    part = system.partition
    h_d = np.asarray(system.h0)[part.D, part.D]
    n_d = part.n_d
    g_s = surface_green_function(e, lead.onsite, lead.hopping)
    sig_l = np.zeros((n_d, n_d), dtype=complex)
    sig_r = np.zeros((n_d, n_d), dtype=complex)
    sig_l[0, 0] = lead.coupling_l**2 * g_s
    sig_r[-1, -1] = lead.coupling_r**2 * g_s
    g_ret = np.linalg.inv(e * np.eye(n_d) - h_d - sig_l - sig_r)
    gam_l = 1j * (sig_l - sig_l.conj().T)
    gam_r = 1j * (sig_r - sig_r.conj().T)
    t_val = np.trace(gam_l @ g_ret @ gam_r @ g_ret.conj().T).real
    return float(max(t_val, 0.0))


def landauer_current(
    system: TightBindingSystem, v_bias: float, mu: float = 0.0, n_quad: int = 256
) -> float:
    """Zero-temperature Landauer current (1/2pi) int_{mu-V/2}^{mu+V/2} T(E) dE.

    The window is clipped to the lead band with a warning; fixed-order
    Gauss-Legendre quadrature keeps the result deterministic.
    """
    if v_bias == 0.0:
        return 0.0
    lead = _uniform_chain_lead_params(system)
    lo, hi = sorted((mu - v_bias / 2.0, mu + v_bias / 2.0))
    band_lo = lead.onsite - 2.0 * abs(lead.hopping)
    band_hi = lead.onsite + 2.0 * abs(lead.hopping)
    if lo < band_lo or hi > band_hi:
        warnings.warn(
            f"bias window [{lo:.3g}, {hi:.3g}] clipped to the lead band "
            f"[{band_lo:.3g}, {band_hi:.3g}]",
            BandWindowWarning,
            stacklevel=2,
        )
        lo, hi = max(lo, band_lo), min(hi, band_hi)
    if hi <= lo:
        return 0.0
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    es = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    ts = np.array([transmission(system, e) for e in es])
    integral = 0.5 * (hi - lo) * float(np.dot(weights, ts))
    return np.sign(v_bias) * integral / (2.0 * np.pi)


def plateau_current(
    run: OracleRun, t_rec: float, window: tuple[float, float] = (1.0 / 3.0, 2.0 / 3.0)
) -> float:
    """Mean symmetrized current over the plateau window of the echo horizon."""
    lo, hi = window[0] * t_rec, window[1] * t_rec
    mask = (run.times >= lo) & (run.times <= hi)
    if not mask.any():
        raise ValueError("plateau window contains no samples")
    return float(0.5 * (run.j_l[mask] - run.j_r[mask]).mean())
