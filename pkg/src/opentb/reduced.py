"""Device-only propagation with a pluggable dissipation functional.

The reduced equation of motion

    i d(sigma_D)/dt = [h_D(t), sigma_D] - i (Q_L + Q_R)

is formally closed once Q_alpha is supplied as a functional of the device
state. No first-principles form of that functional exists here; the module
ships three concrete variants:

* isolated      -- Q_alpha = 0, the conventional closed-system limit;
* exact-replay  -- Q_alpha read back from a full-system oracle run, the
                   ground truth used to validate the closed form;
* wide-band     -- Q_alpha = 1/2 {Gamma_alpha, sigma_D - sigma_eq_alpha},
                   an anticommutator relaxation toward the lead-resolved
                   equilibrium. A practical approximation, not exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dissipation import OracleRun, current
from .model import (
    BiasProfile,
    TightBindingSystem,
    apply_bias,
    equilibrium_density_matrix,
    require_hermitian,
)
from .propagation import INTEGRATORS, cayley_propagator

_STAGE_TOL = 1e-9


class ReplayGridError(ValueError):
    """Replay records do not line up with the requested (dt, n_steps) grid."""


class DissipationFunctional:
    """Interface: q_terms(t, sigma_d, h_d) -> (Q_L, Q_R)."""

    mode = "base"

    def q_terms(self, t: float, sigma_d: np.ndarray, h_d: np.ndarray):
        raise NotImplementedError

    def bind_grid(self, dt: float, n_steps: int) -> None:
        """Hook for functionals that must match the propagation grid."""


class IsolatedFunctional(DissipationFunctional):
    """No leads: reduces the EOM to the isolated commutator flow."""

    mode = "none-isolated"

    def q_terms(self, t, sigma_d, h_d):
        z = np.zeros_like(sigma_d)
        return z, z.copy()


class ExactReplayFunctional(DissipationFunctional):
    """Q_alpha(t) replayed from an oracle run sampled on the dt/2 half grid.

    RK4 stage times land exactly on half-grid nodes, so the replay feeds
    the reduced integrator the same dissipative term the full system felt,
    making the reduced trajectory collapse onto the oracle's device block.
    """

    mode = "exact-replay"

    def __init__(self, dt: float, n_steps: int, q_l_half: np.ndarray, q_r_half: np.ndarray):
        q_l_half = np.asarray(q_l_half, dtype=complex)
        q_r_half = np.asarray(q_r_half, dtype=complex)
        if q_l_half.shape != q_r_half.shape or q_l_half.shape[0] != 2 * n_steps + 1:
            raise ReplayGridError(
                f"replay arrays must hold 2*n_steps+1 = {2 * n_steps + 1} half-grid "
                f"samples, got {q_l_half.shape[0]}"
            )
        self.dt = float(dt)
        self.n_steps = int(n_steps)
        self.q_l_half = q_l_half
        self.q_r_half = q_r_half

    @classmethod
    def from_oracle(cls, run: OracleRun) -> "ExactReplayFunctional":
        return cls(run.dt, run.n_steps, run.q_l_half, run.q_r_half)

    def bind_grid(self, dt: float, n_steps: int) -> None:
        if abs(dt - self.dt) > _STAGE_TOL * self.dt or n_steps > self.n_steps:
            raise ReplayGridError(
                f"replay recorded at (dt={self.dt}, n_steps={self.n_steps}) cannot "
                f"drive a run at (dt={dt}, n_steps={n_steps})"
            )

    def _index(self, t: float) -> int:
        x = 2.0 * t / self.dt
        k = int(round(x))
        if abs(x - k) > 1e-6 or not 0 <= k < self.q_l_half.shape[0]:
            raise ReplayGridError(
                f"time {t!r} is not a half-grid node of the replay (dt={self.dt})"
            )
        return k

    def q_terms(self, t, sigma_d, h_d):
        k = self._index(t)
        return self.q_l_half[k], self.q_r_half[k]


class WideBandFunctional(DissipationFunctional):
    """Anticommutator relaxation Q_alpha = 1/2 {Gamma_alpha, sigma_D - sigma_eq_alpha}.

    Gamma_alpha is a Hermitian positive-semidefinite broadening supported on
    the device sites facing lead alpha; sigma_eq_alpha is the zero-temperature
    equilibrium state of the instantaneous h_D at chemical potential
    mu_alpha, recomputed every refresh_every steps of the driving grid.

    This closure is a design decision of the package, not a result carried
    over from the reduced-EOM derivation.
    """

    mode = "wide-band"

    def __init__(
        self,
        gamma_l: np.ndarray | float,
        gamma_r: np.ndarray | float,
        mu_l: float = 0.0,
        mu_r: float = 0.0,
        n_d: Optional[int] = None,
        refresh_every: int = 1,
    ):
        if isinstance(gamma_l, (int, float)) or isinstance(gamma_r, (int, float)):
            if n_d is None:
                raise ValueError("scalar Gamma needs n_d to place edge-site broadening")
        self.gamma_l = self._as_matrix(gamma_l, n_d, edge="first")
        self.gamma_r = self._as_matrix(gamma_r, n_d, edge="last")
        for name, g in (("Gamma_L", self.gamma_l), ("Gamma_R", self.gamma_r)):
            require_hermitian(g, name)
            w = np.linalg.eigvalsh(g)
            if w.min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite, min eig {w.min():.3e}")
        self.mu_l = float(mu_l)
        self.mu_r = float(mu_r)
        self.refresh_every = max(int(refresh_every), 1)
        self._eq_cache: dict = {}

    @staticmethod
    def _as_matrix(gamma, n_d, edge):
        if isinstance(gamma, (int, float)):
            g = np.zeros((n_d, n_d))
            g[0 if edge == "first" else -1, 0 if edge == "first" else -1] = float(gamma)
            return g
        return np.asarray(gamma, dtype=complex)

    def _sigma_eq(self, h_d: np.ndarray, mu: float) -> np.ndarray:
        key = (hash(h_d.tobytes()), mu)
        if key not in self._eq_cache:
            if len(self._eq_cache) > 64:
                self._eq_cache.clear()
            self._eq_cache[key] = equilibrium_density_matrix(h_d, mu)
        return self._eq_cache[key]

    def q_terms(self, t, sigma_d, h_d):
        h_d = np.ascontiguousarray(h_d)
        q = []
        for gamma, mu in ((self.gamma_l, self.mu_l), (self.gamma_r, self.mu_r)):
            delta = sigma_d - self._sigma_eq(h_d, mu)
            q.append(0.5 * (gamma @ delta + delta @ gamma))
        return q[0], q[1]


def wide_band_Q(sigma_d: np.ndarray, gamma_alpha: np.ndarray, sigma_eq_alpha: np.ndarray) -> np.ndarray:
    """Single-lead wide-band term 1/2 {Gamma, sigma_D - sigma_eq}."""
    gamma_alpha = np.asarray(gamma_alpha)
    require_hermitian(gamma_alpha, "Gamma")
    if np.linalg.eigvalsh(gamma_alpha).min() < -1e-12:
        raise ValueError("Gamma must be positive semidefinite")
    delta = sigma_d - sigma_eq_alpha
    return 0.5 * (gamma_alpha @ delta + delta @ gamma_alpha)


@dataclass
class ReducedTrajectory:
    """Device-block trajectory with per-step terminal currents."""

    times: np.ndarray
    matrices: np.ndarray
    j_l: np.ndarray
    j_r: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return self.times.size


def _device_h(system: TightBindingSystem, profile: BiasProfile, t: float) -> np.ndarray:
    part = system.partition
    return apply_bias(system, profile, t)[part.D, part.D]


def propagate_reduced(
    sigma_d0: np.ndarray,
    system: TightBindingSystem,
    profile: BiasProfile,
    functional: DissipationFunctional,
    dt: float,
    n_steps: int,
    integrator: str = "rk4",
    store_every: int = 1,
) -> ReducedTrajectory:
    """Integrate the reduced EOM with the supplied dissipation functional.

    The trajectory stores sigma_D every store_every steps; terminal currents
    J_alpha = -tr Q_alpha are recorded at every grid point from the
    functional evaluated at the grid time.
    """
    if integrator not in INTEGRATORS:
        raise ValueError(f"unknown integrator {integrator!r}; expected one of {INTEGRATORS}")
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError("dt must be positive and finite")
    if n_steps < 1 or store_every < 1 or n_steps % store_every:
        raise ValueError("store_every must divide n_steps")
    part = system.partition
    sigma = np.asarray(sigma_d0, dtype=complex)
    if sigma.shape != (part.n_d, part.n_d):
        raise ValueError(f"sigma_d0 must be ({part.n_d}, {part.n_d}), got {sigma.shape}")
    require_hermitian(sigma, "sigma_d0", atol=1e-10 * max(1.0, np.max(np.abs(sigma))))
    functional.bind_grid(dt, n_steps)

    def rhs(t: float, s: np.ndarray) -> np.ndarray:
        h_d = _device_h(system, profile, t)
        q_l, q_r = functional.q_terms(t, s, h_d)
        return -1j * (h_d @ s - s @ h_d) - (q_l + q_r)

    def grid_currents(t: float, s: np.ndarray) -> tuple[float, float]:
        h_d = _device_h(system, profile, t)
        q_l, q_r = functional.q_terms(t, s, h_d)
        return current(q_l), current(q_r)

    sigma = 0.5 * (sigma + sigma.conj().T)
    frames = [sigma.copy()]
    times = [0.0]
    j_l = np.empty(n_steps + 1)
    j_r = np.empty(n_steps + 1)
    j_l[0], j_r[0] = grid_currents(0.0, sigma)
    for k in range(n_steps):
        t = k * dt
        if integrator == "rk4":
            k1 = rhs(t, sigma)
            k2 = rhs(t + 0.5 * dt, sigma + 0.5 * dt * k1)
            k3 = rhs(t + 0.5 * dt, sigma + 0.5 * dt * k2)
            k4 = rhs(t + dt, sigma + dt * k3)
            sigma = sigma + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            # Cayley step for the commutator, midpoint source for Q: O(dt^2).
            h_mid = _device_h(system, profile, t + 0.5 * dt)
            u = cayley_propagator(h_mid, dt)
            sigma_star = u @ sigma @ u.conj().T
            q_l_mid, q_r_mid = functional.q_terms(
                t + 0.5 * dt, 0.5 * (sigma + sigma_star), h_mid
            )
            sigma = sigma_star - dt * (q_l_mid + q_r_mid)
        j_l[k + 1], j_r[k + 1] = grid_currents(t + dt, sigma)
        if (k + 1) % store_every == 0:
            frames.append(sigma.copy())
            times.append((k + 1) * dt)

    meta = {
        "mode": functional.mode,
        "integrator": integrator,
        "dt": dt,
        "n_steps": int(n_steps),
        "store_every": int(store_every),
        "system": system.fingerprint(),
    }
    return ReducedTrajectory(np.array(times), np.array(frames), j_l, j_r, meta)
