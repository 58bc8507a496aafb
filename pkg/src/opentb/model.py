"""Lead-device-lead tight-binding systems, bias profiles, and block partitions.

Units: hbar = 1, energies in units of the nominal hopping magnitude, time in
inverse energy. Site indices run left lead (L), device (D), right lead (R).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

HERMITICITY_ATOL = 1e-12


class DegenerateFillingError(ValueError):
    """Raised when the requested filling cuts through a degenerate multiplet."""


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def require_hermitian(m: np.ndarray, name: str = "matrix", atol: float = HERMITICITY_ATOL) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if dev > atol:
        raise ValueError(f"{name} is not Hermitian: max |m - m^H| = {dev:.3e} > {atol:.1e}")


@dataclass(frozen=True)
class Partition:
    """Index ranges of the L, D, R blocks of an n x n matrix."""

    n_l: int
    n_d: int
    n_r: int

    def __post_init__(self) -> None:
        if self.n_d < 1:
            raise ValueError("device block needs at least one site")
        if self.n_l < 0 or self.n_r < 0:
            raise ValueError("lead site counts must be nonnegative")

    @property
    def n(self) -> int:
        return self.n_l + self.n_d + self.n_r

    @property
    def L(self) -> slice:
        return slice(0, self.n_l)

    @property
    def D(self) -> slice:
        return slice(self.n_l, self.n_l + self.n_d)

    @property
    def R(self) -> slice:
        return slice(self.n_l + self.n_d, self.n)

    def block(self, m: np.ndarray, row: str, col: str) -> np.ndarray:
        sl = {"L": self.L, "D": self.D, "R": self.R}
        return m[sl[row], sl[col]]


@dataclass(frozen=True)
class TightBindingSystem:
    """Single-particle Hamiltonian of the full L+D+R system.

    Attributes
    ----------
    h0 : ndarray
        Hermitian (n, n) matrix, n = n_l + n_d + n_r.
    n_l, n_d, n_r : int
        Site counts of the three blocks.
    """

    h0: np.ndarray
    n_l: int
    n_d: int
    n_r: int

    def __post_init__(self) -> None:
        part = Partition(self.n_l, self.n_d, self.n_r)
        h0 = np.asarray(self.h0, dtype=complex)
        if h0.shape != (part.n, part.n):
            raise ValueError(f"h0 shape {h0.shape} inconsistent with counts (n={part.n})")
        if not np.all(np.isfinite(h0)):
            raise ValueError("h0 contains non-finite entries")
        require_hermitian(h0, "h0", atol=1e-14 * max(1.0, np.max(np.abs(h0))))
        object.__setattr__(self, "h0", _as_readonly(h0))

    @property
    def n(self) -> int:
        return self.n_l + self.n_d + self.n_r

    @property
    def partition(self) -> Partition:
        return Partition(self.n_l, self.n_d, self.n_r)

    @property
    def lr_coupled(self) -> bool:
        p = self.partition
        if self.n_l == 0 or self.n_r == 0:
            return False
        return bool(np.any(p.block(self.h0, "L", "R") != 0))

    def hopping_scale(self) -> float:
        """Largest off-diagonal magnitude inside the lead blocks (band scale)."""
        p = self.partition
        best = 0.0
        for sl in (p.L, p.R):
            blk = self.h0[sl, sl]
            if blk.shape[0] > 1:
                best = max(best, float(np.max(np.abs(blk - np.diag(np.diag(blk))))))
        if best == 0.0:
            blk = self.h0[p.D, p.D]
            if blk.shape[0] > 1:
                best = float(np.max(np.abs(blk - np.diag(np.diag(blk)))))
        return best

    def fingerprint(self) -> str:
        hsh = hashlib.sha256()
        hsh.update(np.ascontiguousarray(self.h0).tobytes())
        hsh.update(f"{self.n_l},{self.n_d},{self.n_r}".encode())
        return hsh.hexdigest()[:16]


def build_chain_system(
    n_l: int, n_d: int, n_r: int, hopping: float = -1.0, onsite: float = 0.0
) -> TightBindingSystem:
    """Nearest-neighbor chain with uniform hopping and on-site energy.

    All three blocks must have at least one site; leads couple only to the
    device through the single junction bonds, never to each other.
    """
    for name, cnt in (("n_l", n_l), ("n_d", n_d), ("n_r", n_r)):
        if int(cnt) != cnt or cnt < 1:
            raise ValueError(f"{name} must be a positive integer, got {cnt}")
    if not np.isfinite(hopping) or not np.isfinite(onsite):
        raise ValueError("hopping and onsite must be finite")
    if hopping == 0:
        raise ValueError("hopping must be nonzero (degenerate chain)")
    n = n_l + n_d + n_r
    h = np.zeros((n, n), dtype=float)
    np.fill_diagonal(h, onsite)
    idx = np.arange(n - 1)
    h[idx, idx + 1] = hopping
    h[idx + 1, idx] = hopping
    return TightBindingSystem(h, n_l, n_d, n_r)


def with_bond(system: TightBindingSystem, i: int, j: int, hopping: float) -> TightBindingSystem:
    """Copy of the system with the (i, j) bond amplitude replaced."""
    if i == j:
        raise ValueError("bond requires two distinct sites")
    h = np.array(system.h0, dtype=complex)
    h[i, j] = hopping
    h[j, i] = np.conj(hopping)
    return TightBindingSystem(h, system.n_l, system.n_d, system.n_r)


@dataclass(frozen=True)
class BiasProfile:
    """Time profile of the applied bias on the leads.

    shape "step" switches instantly at t = 0; "exp-ramp" rises as
    1 - exp(-t/ramp_time), which is analytic in t for t > 0 and is the
    default elsewhere in the package. The step profile is the ramp_time -> 0
    limit and is not analytic at t = 0.
    """

    amplitude_l: float = 0.0
    amplitude_r: float = 0.0
    ramp_time: float = 1.0
    shape: str = "exp-ramp"
    device_interpolation: bool = False

    def __post_init__(self) -> None:
        if self.shape not in ("step", "exp-ramp"):
            raise ValueError(f"unknown bias shape {self.shape!r}")
        if self.shape == "exp-ramp" and not self.ramp_time > 0:
            raise ValueError("exp-ramp requires ramp_time > 0")
        for v in (self.amplitude_l, self.amplitude_r, self.ramp_time):
            if not np.isfinite(v):
                raise ValueError("bias parameters must be finite")

    def switching_factor(self, t: float) -> float:
        if t <= 0:
            return 0.0
        if self.shape == "step":
            return 1.0
        return 1.0 - np.exp(-t / self.ramp_time)

    def diagonal(self, partition: Partition, t: float) -> np.ndarray:
        """On-site energy shifts for every site at time t."""
        if not np.isfinite(t):
            raise ValueError("time must be finite")
        f = self.switching_factor(t)
        v = np.zeros(partition.n)
        if f == 0.0:
            return v
        v[partition.L] = self.amplitude_l * f
        v[partition.R] = self.amplitude_r * f
        if self.device_interpolation and partition.n_d > 0:
            frac = (np.arange(partition.n_d) + 1.0) / (partition.n_d + 1.0)
            v[partition.D] = f * (self.amplitude_l + (self.amplitude_r - self.amplitude_l) * frac)
        return v

    @property
    def is_zero(self) -> bool:
        return self.amplitude_l == 0.0 and self.amplitude_r == 0.0


ZERO_BIAS = BiasProfile(0.0, 0.0, 1.0, "step")


def apply_bias(system: TightBindingSystem, profile: BiasProfile, t: float) -> np.ndarray:
    """Full Hamiltonian h(t) = h0 + diag(bias pattern at t)."""
    return np.asarray(system.h0) + np.diag(profile.diagonal(system.partition, t))


def ground_state_density_matrix(
    system_or_h,
    n_electrons: int,
    fractional_filling: bool = False,
    degeneracy_tol: float = 1e-9,
) -> np.ndarray:
    """Zero-temperature density matrix from the lowest eigenvectors.

    Occupies the n_electrons lowest single-particle levels of h0. If the
    Fermi level cuts a degenerate multiplet, either raises
    DegenerateFillingError or, with fractional_filling=True, spreads the
    remaining charge evenly across the multiplet (which breaks idempotency
    but preserves symmetry and hermiticity).
    """
    h = system_or_h.h0 if isinstance(system_or_h, TightBindingSystem) else np.asarray(system_or_h)
    require_hermitian(h, "h")
    n = h.shape[0]
    if int(n_electrons) != n_electrons or not 0 <= n_electrons <= n:
        raise ValueError(f"n_electrons must lie in [0, {n}], got {n_electrons}")
    w, v = np.linalg.eigh(h)
    ne = int(n_electrons)
    occ = np.zeros(n)
    if ne > 0:
        occ[:ne] = 1.0
    if 0 < ne < n and w[ne] - w[ne - 1] < degeneracy_tol:
        lo = np.searchsorted(w, w[ne - 1] - degeneracy_tol, side="left")
        hi = np.searchsorted(w, w[ne - 1] + degeneracy_tol, side="right")
        if not fractional_filling:
            raise DegenerateFillingError(
                f"levels {lo}..{hi - 1} are degenerate at the Fermi level "
                f"(eigenvalue {w[ne - 1]:.12g}); set fractional_filling=True "
                "to occupy the multiplet evenly"
            )
        occ[lo:hi] = (ne - lo) / (hi - lo)
    sigma = (v * occ) @ v.conj().T
    return 0.5 * (sigma + sigma.conj().T)


def equilibrium_density_matrix(h: np.ndarray, mu: float, degeneracy_tol: float = 1e-12) -> np.ndarray:
    """Zero-temperature density matrix of h at chemical potential mu.

    Levels below mu are filled; levels within degeneracy_tol of mu get
    occupation 1/2.
    """
    require_hermitian(h, "h")
    w, v = np.linalg.eigh(h)
    occ = np.where(w < mu - degeneracy_tol, 1.0, np.where(w <= mu + degeneracy_tol, 0.5, 0.0))
    sigma = (v * occ) @ v.conj().T
    return 0.5 * (sigma + sigma.conj().T)


@dataclass(frozen=True)
class PartitionedMatrix:
    """The nine L/D/R blocks of a square matrix."""

    partition: Partition
    ll: np.ndarray
    ld: np.ndarray
    lr: np.ndarray
    dl: np.ndarray
    dd: np.ndarray
    dr: np.ndarray
    rl: np.ndarray
    rd: np.ndarray
    rr: np.ndarray

    @classmethod
    def from_matrix(cls, m: np.ndarray, partition: Partition) -> "PartitionedMatrix":
        m = np.asarray(m)
        if m.shape != (partition.n, partition.n):
            raise ValueError(f"matrix shape {m.shape} does not match partition (n={partition.n})")
        b = partition.block
        return cls(
            partition,
            b(m, "L", "L"), b(m, "L", "D"), b(m, "L", "R"),
            b(m, "D", "L"), b(m, "D", "D"), b(m, "D", "R"),
            b(m, "R", "L"), b(m, "R", "D"), b(m, "R", "R"),
        )

    def reassemble(self) -> np.ndarray:
        return np.block(
            [
                [self.ll, self.ld, self.lr],
                [self.dl, self.dd, self.dr],
                [self.rl, self.rd, self.rr],
            ]
        )


def write_matrix_text(path, m: np.ndarray) -> None:
    """Plain-text matrix format: header line n, then n^2 lines 'row col re im'.

    Indices are 0-based.
    """
    m = np.asarray(m, dtype=complex)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValueError("matrix must be square")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{n}\n")
        for i in range(n):
            for j in range(n):
                fh.write(f"{i} {j} {float(m[i, j].real)!r} {float(m[i, j].imag)!r}\n")


def read_matrix_text(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    try:
        n = int(lines[0])
    except ValueError as exc:
        raise ValueError(f"{path}: header must be the matrix dimension") from exc
    if n < 1 or len(lines) != 1 + n * n:
        raise ValueError(f"{path}: expected {n * n} entry lines, found {len(lines) - 1}")
    m = np.zeros((n, n), dtype=complex)
    seen = np.zeros((n, n), dtype=bool)
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 4:
            raise ValueError(f"{path}: malformed entry line {ln!r}")
        i, j = int(parts[0]), int(parts[1])
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"{path}: index ({i}, {j}) out of range for n={n}")
        m[i, j] = float(parts[2]) + 1j * float(parts[3])
        seen[i, j] = True
    if not seen.all():
        raise ValueError(f"{path}: {int((~seen).sum())} matrix entries missing")
    return m


def load_system_text(path, n_l: int, n_d: int, n_r: int) -> TightBindingSystem:
    """Build a system from a plain-text Hermitian matrix file."""
    return TightBindingSystem(read_matrix_text(path), n_l, n_d, n_r)
