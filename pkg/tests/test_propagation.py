import numpy as np
import pytest

from opentb import (
    BiasProfile,
    TightBindingSystem,
    build_chain_system,
    ground_state_density_matrix,
    lead_occupation_sum,
    propagate_full,
    recurrence_time,
    with_bond,
)
from opentb.model import ZERO_BIAS
from opentb.propagation import (
    RecurrenceWarning,
    StepSizeWarning,
    read_trajectory_bin,
    write_trajectory_bin,
)


def test_zero_hamiltonian_is_stationary():
    system = TightBindingSystem(np.zeros((3, 3)), 0, 3, 0)
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    sigma0 = 0.5 * (a + a.conj().T)
    traj = propagate_full(system, ZERO_BIAS, sigma0, 0.05, 40)
    assert np.allclose(traj.matrices[-1], traj.matrices[0], atol=1e-14)


def test_commuting_diagonal_case_is_stationary():
    system = TightBindingSystem(np.diag([0.3, -0.2, 1.0]), 0, 3, 0)
    sigma0 = np.diag([1.0, 0.5, 0.0]).astype(complex)
    for integrator in ("rk4", "crank-nicolson"):
        traj = propagate_full(system, ZERO_BIAS, sigma0, 0.01, 100, integrator=integrator)
        assert np.allclose(traj.matrices[-1], sigma0, atol=1e-13)


@pytest.mark.parametrize("integrator,tol", [("rk4", 1e-9), ("crank-nicolson", 2e-5)])
def test_two_level_rabi_oscillation(integrator, tol):
    # h = [[0, J], [J, 0]], sigma0 = |0><0|: sigma_00(t) = cos^2(J t)
    j_coup = 0.7
    system = TightBindingSystem(np.array([[0.0, j_coup], [j_coup, 0.0]]), 0, 2, 0)
    sigma0 = np.diag([1.0, 0.0]).astype(complex)
    dt, n_steps = 1e-3, 2000
    traj = propagate_full(system, ZERO_BIAS, sigma0, dt, n_steps, integrator=integrator)
    t = traj.times
    expected = np.cos(j_coup * t) ** 2
    got = traj.matrices[:, 0, 0].real
    assert np.max(np.abs(got - expected)) < tol


def test_integrators_agree_and_halving_improves():
    # the analytic ramp keeps h(t) smooth, so the rk4 / Crank-Nicolson
    # discrepancy is the clean O(dt^2) one (a step bias injects an O(dt)
    # switch-on sampling error into the comparison)
    system = build_chain_system(8, 3, 8)
    profile = BiasProfile(0.25, -0.25, ramp_time=0.5, shape="exp-ramp")
    sigma0 = ground_state_density_matrix(system, 9)

    def run(dt, integrator, n_steps):
        return propagate_full(system, profile, sigma0, dt, n_steps,
                              integrator=integrator, store_every=n_steps)

    t_final = 1.0
    devs = []
    for dt in (2e-3, 1e-3):
        n = int(round(t_final / dt))
        a = run(dt, "rk4", n).matrices[-1]
        b = run(dt, "crank-nicolson", n).matrices[-1]
        devs.append(np.linalg.norm(a - b))
    assert devs[1] < 1e-5
    assert devs[0] / devs[1] >= 3.5  # second-order discrepancy shrinks >= 3.5x


def test_halving_dt_converges_second_order():
    # dt vs dt/2 deviation drops >= 3.5x when halved again (O(dt^2) scheme);
    # store_every aligns the stored grids across step sizes
    system = build_chain_system(8, 3, 8)
    profile = BiasProfile(0.25, -0.25, ramp_time=0.5, shape="exp-ramp")
    sigma0 = ground_state_density_matrix(system, 9)
    base_dt, t_final = 4e-3, 1.0

    def final_state(level):
        dt = base_dt / 2**level
        n = int(round(t_final / dt))
        traj = propagate_full(system, profile, sigma0, dt, n,
                              integrator="crank-nicolson", store_every=n)
        return traj.matrices[-1]

    s0, s1, s2 = (final_state(level) for level in range(3))
    dev01 = np.linalg.norm(s0 - s1)
    dev12 = np.linalg.norm(s1 - s2)
    assert dev01 / dev12 >= 3.5


def test_conservation_invariants(small_chain):
    system, profile, sigma0 = small_chain
    traj = propagate_full(system, profile, sigma0, 1e-3, 1000, integrator="crank-nicolson")
    assert traj.trace_drift() < 1e-10 * np.trace(sigma0).real
    assert traj.hermiticity_drift() < 1e-12
    idem = max(np.linalg.norm(m @ m - m) for m in traj.matrices)
    assert idem < 1e-8


def test_rk4_hermiticity_drift(small_chain):
    system, profile, sigma0 = small_chain
    traj = propagate_full(system, profile, sigma0, 1e-3, 1000, integrator="rk4")
    assert traj.hermiticity_drift() < 1e-9


def test_step_size_warning_and_strict_escalation(small_chain):
    system, profile, sigma0 = small_chain
    with pytest.warns(StepSizeWarning):
        propagate_full(system, profile, sigma0, 0.2, 4)
    with pytest.raises(ValueError, match="0.1"):
        propagate_full(system, profile, sigma0, 0.2, 4, strict=True)


def test_recurrence_warning(small_chain):
    system, profile, sigma0 = small_chain
    assert recurrence_time(system) == pytest.approx(8.0)
    with pytest.warns(RecurrenceWarning):
        propagate_full(system, profile, sigma0, 0.025, 400)  # t = 10 > t_rec = 8


def test_non_hermitian_initial_state_rejected(small_chain):
    system, profile, _ = small_chain
    bad = np.zeros((19, 19), dtype=complex)
    bad[0, 1] = 1.0
    with pytest.raises(ValueError, match="Hermitian"):
        propagate_full(system, profile, bad, 1e-3, 10)


def test_store_every_must_divide(small_chain):
    system, profile, sigma0 = small_chain
    with pytest.raises(ValueError, match="store_every"):
        propagate_full(system, profile, sigma0, 1e-3, 10, store_every=3)


def test_unknown_integrator(small_chain):
    system, profile, sigma0 = small_chain
    with pytest.raises(ValueError, match="integrator"):
        propagate_full(system, profile, sigma0, 1e-3, 10, integrator="euler")


def test_lead_occupation_additivity():
    system = build_chain_system(20, 4, 20)
    sigma0 = ground_state_density_matrix(system, 22)
    traj = propagate_full(system, ZERO_BIAS, sigma0, 0.01, 10)
    total = sum(lead_occupation_sum(traj, system, a, 0) for a in ("L", "D", "R"))
    assert total == pytest.approx(22.0, abs=1e-10)


def test_decoupled_lead_occupation_constant():
    system = build_chain_system(4, 3, 4)
    system = with_bond(system, 3, 4, 0.0)   # cut L-D junction
    system = with_bond(system, 6, 7, 0.0)   # cut D-R junction
    profile = BiasProfile(0.5, -0.5, shape="step")
    sigma0 = ground_state_density_matrix(system, 5, fractional_filling=True)
    traj = propagate_full(system, profile, sigma0, 0.01, 200)
    occ_l = [lead_occupation_sum(traj, system, "L", k) for k in range(traj.n_frames)]
    assert np.max(np.abs(np.diff(occ_l))) < 1e-12


def test_binary_dump_round_trip(tmp_path, small_chain):
    system, profile, sigma0 = small_chain
    traj = propagate_full(system, profile, sigma0, 0.01, 20, store_every=5)
    path = tmp_path / "traj.bin"
    write_trajectory_bin(path, traj)
    back = read_trajectory_bin(path, dt_stored=traj.dt_stored)
    assert np.array_equal(back.matrices, traj.matrices)
    assert back.n_frames == traj.n_frames


def test_observer_sees_every_step(small_chain):
    system, profile, sigma0 = small_chain
    seen = []
    propagate_full(system, profile, sigma0, 0.01, 10,
                   observer=lambda k, t, s: seen.append((k, t)))
    assert [k for k, _ in seen] == list(range(11))
    assert seen[-1][1] == pytest.approx(0.1)
