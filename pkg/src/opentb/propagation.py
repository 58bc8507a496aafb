"""Brute-force propagation of the full-system density matrix.

Integrates i d(sigma)/dt = [h(t), sigma] with either classic RK4 or the
unitary Crank-Nicolson (Cayley) scheme evaluated at the midpoint
Hamiltonian. This module is the oracle the reduced dynamics is checked
against, so it favors reproducibility over speed: fixed step, no adaptivity.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import BiasProfile, TightBindingSystem, apply_bias, require_hermitian

INTEGRATORS = ("rk4", "crank-nicolson")


class StepSizeWarning(UserWarning):
    """dt * ||h|| is large enough to degrade the integrator."""


class RecurrenceWarning(UserWarning):
    """The run extends past the finite-lead echo time."""


@dataclass
class DensityMatrixTrajectory:
    """Stored density matrices on a uniform time grid.

    matrices[k] is sigma(times[k]); metadata records the integrator, step
    size, storage stride and a fingerprint of the generating system.
    """

    times: np.ndarray
    matrices: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.matrices = np.asarray(self.matrices, dtype=complex)
        if self.times.ndim != 1 or self.matrices.shape[0] != self.times.size:
            raise ValueError("times and matrices disagree on the number of frames")
        if self.times.size > 1:
            steps = np.diff(self.times)
            if steps.min() <= 0 or np.ptp(steps) > 1e-12 * steps.max():
                raise ValueError("time grid must be uniform and increasing")

    @property
    def n_frames(self) -> int:
        return self.times.size

    @property
    def dt_stored(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def hermiticity_drift(self) -> float:
        return float(
            max(
                np.linalg.norm(m - m.conj().T) for m in self.matrices
            )
        )

    def trace_drift(self) -> float:
        tr = np.einsum("kii->k", self.matrices).real
        return float(np.max(np.abs(tr - tr[0])))


def recurrence_time(system: TightBindingSystem) -> float:
    """Echo time of the finite leads: n_lead / |hopping|.

    Wavefronts travel at group velocity <= 2|hopping|, so the round trip
    through a lead of n sites returns after about n/|hopping|.
    """
    hop = system.hopping_scale()
    n_lead = min(n for n in (system.n_l, system.n_r) if n > 0) if (system.n_l or system.n_r) else 0
    if hop == 0.0 or n_lead == 0:
        return np.inf
    return n_lead / hop


def commutator_rhs(h: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """d(sigma)/dt = -i [h, sigma]."""
    return -1j * (h @ sigma - sigma @ h)


def rk4_step(
    sigma: np.ndarray, t: float, dt: float, h_of_t: Callable[[float], np.ndarray]
) -> np.ndarray:
    h0 = h_of_t(t)
    h_mid = h_of_t(t + 0.5 * dt)
    h1 = h_of_t(t + dt)
    k1 = commutator_rhs(h0, sigma)
    k2 = commutator_rhs(h_mid, sigma + 0.5 * dt * k1)
    k3 = commutator_rhs(h_mid, sigma + 0.5 * dt * k2)
    k4 = commutator_rhs(h1, sigma + dt * k3)
    return sigma + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def cayley_propagator(h_mid: np.ndarray, dt: float) -> np.ndarray:
    """Unitary U = (1 + i dt h/2)^-1 (1 - i dt h/2) for Hermitian h."""
    n = h_mid.shape[0]
    eye = np.eye(n, dtype=complex)
    a = eye + 0.5j * dt * h_mid
    b = eye - 0.5j * dt * h_mid
    return np.linalg.solve(a, b)


class _CayleyCache:
    """Reuses the Cayley propagator while the bias diagonal is unchanged."""

    def __init__(self, system: TightBindingSystem, profile: BiasProfile, dt: float):
        self.system = system
        self.profile = profile
        self.dt = dt
        self._bias: Optional[np.ndarray] = None
        self._u: Optional[np.ndarray] = None

    def propagator(self, t_mid: float) -> np.ndarray:
        bias = self.profile.diagonal(self.system.partition, t_mid)
        if self._bias is None or not np.array_equal(bias, self._bias):
            h_mid = np.asarray(self.system.h0) + np.diag(bias)
            self._u = cayley_propagator(h_mid, self.dt)
            self._bias = bias
        return self._u


def propagate_full(
    system: TightBindingSystem,
    profile: BiasProfile,
    sigma0: np.ndarray,
    dt: float,
    n_steps: int,
    integrator: str = "crank-nicolson",
    store_every: int = 1,
    observer: Optional[Callable[[int, float, np.ndarray], None]] = None,
    strict: bool = False,
    warn_recurrence: bool = True,
) -> DensityMatrixTrajectory:
    """Propagate sigma(t) under i d(sigma)/dt = [h(t), sigma].

    Parameters
    ----------
    sigma0 : ndarray
        Hermitian initial density matrix.
    dt, n_steps : float, int
        Fixed step and number of steps; the trajectory has n_steps + 1 grid
        points. n_steps must be divisible by store_every.
    integrator : {"crank-nicolson", "rk4"}
        Crank-Nicolson conjugates with the Cayley unitary of h(t + dt/2);
        RK4 is the classic fourth-order rule on the commutator flow.
    observer : callable, optional
        Called as observer(step_index, t, sigma) at every grid point,
        including the initial one. sigma is the live array; copy if kept.
    strict : bool
        Escalate step-size and recurrence warnings to ValueError.

    Returns
    -------
    DensityMatrixTrajectory
        Frames at every store_every-th grid point.
    """
    if integrator not in INTEGRATORS:
        raise ValueError(f"unknown integrator {integrator!r}; expected one of {INTEGRATORS}")
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError("dt must be positive and finite")
    if n_steps < 1 or int(n_steps) != n_steps:
        raise ValueError("n_steps must be a positive integer")
    if store_every < 1 or n_steps % store_every:
        raise ValueError("store_every must divide n_steps")
    sigma0 = np.asarray(sigma0, dtype=complex)
    require_hermitian(sigma0, "sigma0", atol=1e-10 * max(1.0, np.max(np.abs(sigma0))))

    h_start = apply_bias(system, profile, dt)
    h_norm = float(np.linalg.norm(h_start, 2))
    if dt * h_norm > 0.1:
        msg = f"dt * ||h|| = {dt * h_norm:.3g} > 0.1; integrator accuracy degrades"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, StepSizeWarning, stacklevel=2)
    t_rec = recurrence_time(system)
    if warn_recurrence and dt * n_steps > t_rec:
        msg = (
            f"run time {dt * n_steps:.3g} exceeds the finite-lead recurrence "
            f"horizon t_rec = {t_rec:.3g}; late-time data carries echoes"
        )
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, RecurrenceWarning, stacklevel=2)

    def h_of_t(t: float) -> np.ndarray:
        return apply_bias(system, profile, t)

    cache = _CayleyCache(system, profile, dt) if integrator == "crank-nicolson" else None

    sigma = 0.5 * (sigma0 + sigma0.conj().T)
    frames = [sigma.copy()]
    times = [0.0]
    if observer is not None:
        observer(0, 0.0, sigma)
    for k in range(n_steps):
        t = k * dt
        if integrator == "rk4":
            sigma = rk4_step(sigma, t, dt, h_of_t)
        else:
            u = cache.propagator(t + 0.5 * dt)
            sigma = u @ sigma @ u.conj().T
        if observer is not None:
            observer(k + 1, t + dt, sigma)
        if (k + 1) % store_every == 0:
            frames.append(sigma.copy())
            times.append((k + 1) * dt)

    meta = {
        "integrator": integrator,
        "dt": dt,
        "n_steps": int(n_steps),
        "store_every": int(store_every),
        "system": system.fingerprint(),
    }
    return DensityMatrixTrajectory(np.array(times), np.array(frames), meta)


def lead_occupation_sum(
    trajectory: DensityMatrixTrajectory, system: TightBindingSystem, alpha: str, t_index: int
) -> float:
    """tr sigma_alpha at the stored frame t_index (alpha in {"L", "D", "R"})."""
    if alpha not in ("L", "D", "R"):
        raise ValueError(f"alpha must be 'L', 'D' or 'R', got {alpha!r}")
    if not -trajectory.n_frames <= t_index < trajectory.n_frames:
        raise IndexError(f"frame index {t_index} out of range")
    block = system.partition.block(trajectory.matrices[t_index], alpha, alpha)
    return float(np.trace(block).real)


def write_trajectory_bin(path, trajectory: DensityMatrixTrajectory) -> None:
    """Binary dump: int64 n, int64 frame count, then row-major complex128 frames.

    All fields little-endian; each complex entry is a (re, im) pair of
    64-bit floats.
    """
    n = trajectory.matrices.shape[1]
    with open(path, "wb") as fh:
        fh.write(np.int64(n).astype("<i8").tobytes())
        fh.write(np.int64(trajectory.n_frames).astype("<i8").tobytes())
        fh.write(np.ascontiguousarray(trajectory.matrices, dtype="<c16").tobytes())


def read_trajectory_bin(path, dt_stored: float = 1.0) -> DensityMatrixTrajectory:
    with open(path, "rb") as fh:
        head = np.frombuffer(fh.read(16), dtype="<i8")
        if head.size != 2:
            raise ValueError(f"{path}: truncated header")
        n, n_frames = int(head[0]), int(head[1])
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != n_frames * n * n:
        raise ValueError(f"{path}: expected {n_frames * n * n} entries, found {data.size}")
    mats = data.reshape(n_frames, n, n).astype(complex)
    times = dt_stored * np.arange(n_frames)
    return DensityMatrixTrajectory(times, mats, {"source": str(path)})
