import numpy as np
import pytest

from opentb import (
    BiasProfile,
    ExactReplayFunctional,
    IsolatedFunctional,
    TightBindingSystem,
    WideBandFunctional,
    build_chain_system,
    equilibrium_density_matrix,
    propagate_full,
    propagate_reduced,
    record_dissipation,
    wide_band_Q,
)
from opentb.model import ZERO_BIAS
from opentb.reduced import ReplayGridError


class TestIsolatedLimit:
    @pytest.mark.parametrize("integrator", ["rk4", "crank-nicolson"])
    def test_matches_full_propagation_without_leads(self, device_only, integrator):
        h_d = np.asarray(device_only.h0)
        sigma0 = equilibrium_density_matrix(h_d, mu=0.0)
        full = propagate_full(device_only, ZERO_BIAS, sigma0, 1e-3, 500, integrator=integrator)
        red = propagate_reduced(sigma0, device_only, ZERO_BIAS, IsolatedFunctional(),
                                1e-3, 500, integrator=integrator)
        dev = max(np.linalg.norm(full.matrices[k] - red.matrices[k])
                  for k in range(full.n_frames))
        assert dev < 1e-13
        assert np.max(np.abs(red.j_l)) == 0.0


class TestExactReplay:
    def test_reduced_matches_oracle(self, small_chain):
        system, profile, sigma0 = small_chain
        dt, n_steps = 1e-3, 2000
        run = record_dissipation(system, profile, sigma0, dt, n_steps)
        functional = ExactReplayFunctional.from_oracle(run)
        traj = propagate_reduced(run.sigma_d[0], system, profile, functional, dt, n_steps)
        dev = max(np.linalg.norm(traj.matrices[k] - run.sigma_d[k])
                  for k in range(traj.n_frames))
        assert dev < 1e-8

    def test_currents_bit_for_bit(self, small_chain):
        system, profile, sigma0 = small_chain
        run = record_dissipation(system, profile, sigma0, 1e-3, 500)
        functional = ExactReplayFunctional.from_oracle(run)
        traj = propagate_reduced(run.sigma_d[0], system, profile, functional, 1e-3, 500)
        assert np.array_equal(traj.j_l, run.j_l)
        assert np.array_equal(traj.j_r, run.j_r)

    def test_grid_mismatch_rejected(self, small_chain):
        system, profile, sigma0 = small_chain
        run = record_dissipation(system, profile, sigma0, 1e-3, 100)
        functional = ExactReplayFunctional.from_oracle(run)
        with pytest.raises(ReplayGridError):
            propagate_reduced(run.sigma_d[0], system, profile, functional, 2e-3, 100)
        with pytest.raises(ReplayGridError):
            propagate_reduced(run.sigma_d[0], system, profile, functional, 1e-3, 200)

    def test_crank_nicolson_replay_second_order(self, small_chain):
        system, profile, sigma0 = small_chain
        dt, n_steps = 1e-3, 1000
        run = record_dissipation(system, profile, sigma0, dt, n_steps)
        functional = ExactReplayFunctional.from_oracle(run)
        traj = propagate_reduced(run.sigma_d[0], system, profile, functional, dt, n_steps,
                                 integrator="crank-nicolson")
        dev = max(np.linalg.norm(traj.matrices[k] - run.sigma_d[k])
                  for k in range(traj.n_frames))
        assert dev < 1e-4  # O(dt^2) source splitting


class TestWideBand:
    def test_equilibrium_is_fixed_point(self):
        system = build_chain_system(4, 3, 4)
        h_d = np.asarray(system.h0)[system.partition.D, system.partition.D]
        sigma_eq = equilibrium_density_matrix(h_d, 0.0)
        functional = WideBandFunctional(0.5, 0.5, 0.0, 0.0, n_d=3)
        traj = propagate_reduced(sigma_eq, system, ZERO_BIAS, functional, 1e-2, 300)
        assert np.linalg.norm(traj.matrices[-1] - sigma_eq) < 1e-12
        assert np.max(np.abs(traj.j_l)) < 1e-12

    def test_zero_gamma_reduces_to_isolated(self, device_only):
        h_d = np.asarray(device_only.h0)
        sigma0 = equilibrium_density_matrix(h_d, 0.5)
        functional = WideBandFunctional(0.0, 0.0, 0.0, 0.0, n_d=3)
        red_wb = propagate_reduced(sigma0, device_only, ZERO_BIAS, functional, 1e-3, 200)
        red_iso = propagate_reduced(sigma0, device_only, ZERO_BIAS, IsolatedFunctional(),
                                    1e-3, 200)
        assert np.allclose(red_wb.matrices, red_iso.matrices, atol=1e-14)

    def test_single_site_exponential_relaxation(self):
        # scalar EOM: d(sigma)/dt = -gamma (sigma - f); start empty, fill to f = 1
        system = TightBindingSystem(np.zeros((1, 1)), 0, 1, 0)
        gamma = 0.8
        functional = WideBandFunctional(gamma, 0.0, mu_l=1.0, mu_r=1.0, n_d=1)
        sigma0 = np.zeros((1, 1), dtype=complex)
        dt, n_steps = 1e-3, 3000
        traj = propagate_reduced(sigma0, system, ZERO_BIAS, functional, dt, n_steps)
        t = traj.times
        expected = 1.0 - np.exp(-gamma * t)
        got = traj.matrices[:, 0, 0].real
        assert np.max(np.abs(got - expected)) < 1e-8

    def test_wide_band_Q_fixed_point_and_psd_check(self):
        rng = np.random.default_rng(2)
        sigma_eq = np.diag([1.0, 0.3, 0.0]).astype(complex)
        gamma = np.diag([0.5, 0.0, 0.0]).astype(complex)
        assert np.max(np.abs(wide_band_Q(sigma_eq, gamma, sigma_eq))) == 0.0
        with pytest.raises(ValueError, match="semidefinite"):
            wide_band_Q(sigma_eq, -gamma, sigma_eq)

    def test_occupation_bounds_under_bias(self):
        system = build_chain_system(4, 4, 4)
        h_d = np.asarray(system.h0)[system.partition.D, system.partition.D]
        sigma0 = equilibrium_density_matrix(h_d, 0.0)
        functional = WideBandFunctional(0.5, 0.5, mu_l=0.25, mu_r=-0.25, n_d=4)
        profile = BiasProfile(0.25, -0.25, ramp_time=1.0, shape="exp-ramp")
        traj = propagate_reduced(sigma0, system, profile, functional, 1e-2, 2000)
        for m in traj.matrices:
            w = np.linalg.eigvalsh(m)
            assert w.min() > -1e-6 and w.max() < 1 + 1e-6
        tr = np.einsum("kii->k", traj.matrices).real
        assert tr.min() >= 0.0 and tr.max() <= 4.0

    def test_monotone_relaxation_to_common_equilibrium(self):
        system = build_chain_system(4, 3, 4)
        h_d = np.asarray(system.h0)[system.partition.D, system.partition.D]
        sigma_eq = equilibrium_density_matrix(h_d, 0.0)
        sigma0 = np.diag([1.0, 1.0, 0.0]).astype(complex)  # displaced start
        functional = WideBandFunctional(0.6, 0.6, 0.0, 0.0, n_d=3)
        traj = propagate_reduced(sigma0, system, ZERO_BIAS, functional, 1e-2, 800)
        dist = [np.linalg.norm(m - sigma_eq) for m in traj.matrices]
        assert dist[-1] < 0.1 * dist[0]
        assert all(b <= a + 1e-12 for a, b in zip(dist, dist[1:]))

    def test_trace_of_Q_real(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        sigma = 0.5 * (a + a.conj().T)
        gamma = np.diag([0.4, 0.0, 0.2]).astype(complex)
        q = wide_band_Q(sigma, gamma, np.eye(3) * 0.5)
        assert abs(np.trace(q).imag) < 1e-10


class TestValidation:
    def test_non_hermitian_initial_rejected(self, device_only):
        bad = np.zeros((3, 3), dtype=complex)
        bad[0, 1] = 1.0
        with pytest.raises(ValueError, match="Hermitian"):
            propagate_reduced(bad, device_only, ZERO_BIAS, IsolatedFunctional(), 1e-3, 10)

    def test_wrong_device_shape_rejected(self, small_chain):
        system, profile, _ = small_chain
        with pytest.raises(ValueError, match="sigma_d0"):
            propagate_reduced(np.eye(2, dtype=complex), system, profile,
                              IsolatedFunctional(), 1e-3, 10)

    def test_scalar_gamma_needs_dimension(self):
        with pytest.raises(ValueError, match="n_d"):
            WideBandFunctional(0.5, 0.5)
