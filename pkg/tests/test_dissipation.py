import numpy as np
import pytest

from opentb import (
    BiasProfile,
    build_chain_system,
    compute_Q,
    compute_Q_eigenbasis,
    current,
    ground_state_density_matrix,
    landauer_current,
    record_dissipation,
    transmission,
    with_bond,
)
from opentb.dissipation import BandWindowWarning, ImaginaryCurrentError, plateau_current
from opentb.model import ZERO_BIAS, Partition, apply_bias
from conftest import random_hermitian


class TestComputeQ:
    def test_decoupled_lead_gives_zero(self):
        system = build_chain_system(3, 2, 3)
        system = with_bond(system, 2, 3, 0.0)  # cut L-D bond
        sigma = ground_state_density_matrix(system, 4, fractional_filling=True)
        q = compute_Q(sigma, np.asarray(system.h0), system.partition, "L")
        assert np.max(np.abs(q)) == 0.0

    def test_equilibrium_currents_vanish_but_Q_does_not(self):
        # [h, sigma] = 0 makes sigma_D stationary and tr Q real zero, yet the
        # individual Q_alpha matrices stay finite (coherence exchange with
        # zero net trace)
        system = build_chain_system(20, 4, 20)
        h = np.asarray(system.h0)
        sigma = ground_state_density_matrix(system, 22)
        part = system.partition
        q_l = compute_Q(sigma, h, part, "L")
        q_r = compute_Q(sigma, h, part, "R")
        assert abs(np.trace(q_l)) < 1e-12
        assert abs(np.trace(q_r)) < 1e-12
        assert np.linalg.norm(q_l) > 1e-3  # genuinely nonzero at equilibrium
        # stationarity: i d(sigma_D)/dt = [h_D, sigma_D] - i(Q_L + Q_R) = 0
        h_d = part.block(h, "D", "D")
        s_d = part.block(sigma, "D", "D")
        resid = h_d @ s_d - s_d @ h_d - 1j * (q_l + q_r)
        assert np.max(np.abs(resid)) < 1e-12

    def test_Q_is_hermitian_for_hermitian_inputs(self):
        rng = np.random.default_rng(11)
        part = Partition(4, 3, 5)
        h = random_hermitian(rng, part.n)
        s = random_hermitian(rng, part.n)
        for alpha in ("L", "R"):
            q = compute_Q(s, h, part, alpha)
            assert np.max(np.abs(q - q.conj().T)) < 1e-12

    def test_block_equals_eigenbasis_form(self):
        rng = np.random.default_rng(12)
        part = Partition(5, 4, 6)
        h = random_hermitian(rng, part.n)
        s = random_hermitian(rng, part.n)
        for alpha in ("L", "R"):
            a = compute_Q(s, h, part, alpha)
            b = compute_Q_eigenbasis(s, h, part, alpha)
            assert np.max(np.abs(a - b)) < 1e-12

    def test_matches_finite_difference_of_oracle(self, small_chain):
        # Q must equal the residual i d(sigma_D)/dt - [h_D, sigma_D]
        # reconstructed from the trajectory, to O(dt^2)
        system, profile, sigma0 = small_chain
        dt = 1e-3
        run = record_dissipation(system, profile, sigma0, dt, 600)
        part = system.partition
        k = 500  # t = 0.5, mid-run
        s_dot = (run.sigma_d[k + 1] - run.sigma_d[k - 1]) / (2 * dt)
        h_d = apply_bias(system, profile, run.times[k])[part.D, part.D]
        s_d = run.sigma_d[k]
        lhs = 1j * s_dot - (h_d @ s_d - s_d @ h_d)
        rhs = -1j * (run.q_l_half[2 * k] + run.q_r_half[2 * k])
        assert np.max(np.abs(lhs - rhs)) < 10 * dt**2

    def test_dimension_mismatch_rejected(self):
        part = Partition(2, 2, 2)
        with pytest.raises(ValueError):
            compute_Q(np.eye(5), np.eye(6), part, "L")
        with pytest.raises(ValueError):
            compute_Q(np.eye(6), np.eye(6), part, "X")


class TestCurrent:
    def test_zero_matrix(self):
        assert current(np.zeros((3, 3))) == 0.0

    def test_imaginary_residue_rejected(self):
        q = np.diag([1j * 1e-6, 0.0])
        with pytest.raises(ImaginaryCurrentError):
            current(q)

    def test_sign_convention(self):
        # J = -tr Q
        assert current(np.diag([0.25, 0.25])) == pytest.approx(-0.5)

    def test_equilibrium_currents_stay_null(self):
        system = build_chain_system(8, 3, 8)
        sigma0 = ground_state_density_matrix(system, 9, fractional_filling=True)
        run = record_dissipation(system, ZERO_BIAS, sigma0, 0.01, 400)
        assert np.max(np.abs(run.j_l)) < 1e-10
        assert np.max(np.abs(run.j_r)) < 1e-10


class TestContinuity:
    def test_lead_charge_continuity(self, small_chain):
        # d/dt tr sigma_L = -J_L via 4th-order finite differences
        system, profile, sigma0 = small_chain
        dt = 1e-3
        run = record_dissipation(system, profile, sigma0, dt, 1000)
        occ = run.tr_sigma["L"]
        d_occ = (-occ[4:] + 8 * occ[3:-1] - 8 * occ[1:-3] + occ[:-4]) / (12 * dt)
        assert np.max(np.abs(d_occ + run.j_l[2:-2])) < 1e-6

    def test_device_charge_continuity(self, small_chain):
        system, profile, sigma0 = small_chain
        dt = 1e-3
        run = record_dissipation(system, profile, sigma0, dt, 1000)
        occ = run.tr_sigma["D"]
        d_occ = (-occ[4:] + 8 * occ[3:-1] - 8 * occ[1:-3] + occ[:-4]) / (12 * dt)
        assert np.max(np.abs(d_occ - (run.j_l[2:-2] + run.j_r[2:-2]))) < 1e-8


class TestLandauer:
    def test_zero_bias_zero_current(self):
        system = build_chain_system(6, 3, 6)
        assert landauer_current(system, 0.0) == 0.0

    def test_perfect_chain_unit_transmission(self):
        system = build_chain_system(6, 4, 6)
        for e in (-1.2, -0.3, 0.0, 0.7, 1.9):
            assert transmission(system, e) == pytest.approx(1.0, abs=1e-10)

    def test_ballistic_current_v_over_two_pi(self):
        system = build_chain_system(6, 4, 6)
        for v in (0.05, 0.2):
            assert landauer_current(system, v) == pytest.approx(v / (2 * np.pi), rel=1e-10)

    def test_antisymmetric_in_bias(self):
        system = build_chain_system(6, 4, 6)
        system = with_bond(system, 7, 8, -0.5)
        assert landauer_current(system, 0.3) == pytest.approx(-landauer_current(system, -0.3))

    def test_weak_link_reduces_transmission(self):
        system = build_chain_system(6, 4, 6)
        weak = with_bond(system, 7, 8, -0.5)
        assert transmission(weak, 0.0) < 0.9
        assert landauer_current(weak, 0.3) < landauer_current(system, 0.3)

    def test_window_outside_band_clipped_with_warning(self):
        system = build_chain_system(6, 4, 6)
        with pytest.warns(BandWindowWarning):
            j_clip = landauer_current(system, 6.0)
        assert j_clip == pytest.approx(4.0 / (2 * np.pi), rel=1e-9)  # full band

    def test_non_uniform_leads_rejected(self):
        system = build_chain_system(6, 4, 6)
        bad = with_bond(system, 1, 2, -0.7)  # break lead uniformity
        with pytest.raises(ValueError, match="uniform"):
            transmission(bad, 0.0)

    def test_plateau_matches_landauer_smoke(self):
        # full acceptance check runs on (30, 4, 30); this is the fast version
        system = build_chain_system(16, 4, 16)
        profile = BiasProfile(0.15, -0.15, shape="step")
        sigma0 = ground_state_density_matrix(system, 18)
        run = record_dissipation(system, profile, sigma0, 0.02, 550)
        j_plateau = plateau_current(run, 16.0)
        assert j_plateau == pytest.approx(0.3 / (2 * np.pi), rel=0.10)
