import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opentb import (
    Grid1D,
    GridWavefunction,
    PotentialField,
    check_rg_identity,
    compute_u,
    ground_state_1d,
    refinement_ladder,
)
from opentb.rg_verifier import (
    NonConfiningWarning,
    TimeDerivativeOrderError,
    crank_nicolson_steps,
    ground_state_energy_1d,
)


@pytest.fixture(scope="module")
def harmonic():
    grid = Grid1D(-8.0, 8.0, 1023)  # dx = 1/64
    x = grid.x
    v0 = 0.5 * x**2
    psi = ground_state_1d(grid, v0)
    return grid, v0, psi


class TestGroundState:
    def test_harmonic_energy(self, harmonic):
        grid, v0, _ = harmonic
        assert ground_state_energy_1d(grid, v0) == pytest.approx(0.5, abs=1e-4)

    def test_infinite_well_energy(self):
        grid = Grid1D(-2.0, 2.0, 511)
        with pytest.warns(NonConfiningWarning):
            e0 = ground_state_energy_1d(grid, np.zeros(grid.n)), ground_state_1d(
                grid, np.zeros(grid.n)
            )
        assert e0[0] == pytest.approx(np.pi**2 / 32.0, abs=1e-5)

    def test_parity_of_symmetric_ground_state(self, harmonic):
        _, _, psi = harmonic
        amp = np.abs(psi.psi)
        assert np.max(np.abs(amp - amp[::-1])) < 1e-10

    def test_normalization(self, harmonic):
        _, _, psi = harmonic
        assert abs(psi.norm() - 1.0) < 1e-12


class TestComputeU:
    def test_gaussian_quadratic_closed_form(self, harmonic):
        grid, v0, _ = harmonic
        x = grid.x
        rho0 = np.exp(-x * x) / np.sqrt(np.pi)
        eps = 0.1
        v = PotentialField(v0, {0: eps * x**2 / 2})
        v_p = PotentialField(v0, {})
        _, div_u = compute_u(rho0, v, v_p, 0, grid.dx)
        analytic = eps * (1.0 - 2.0 * x**2) * np.exp(-x * x) / np.sqrt(np.pi)
        assert np.max(np.abs(div_u - analytic)) < 1e-4  # O(dx^2)

    def test_identical_potentials_give_zero_field(self, harmonic):
        grid, v0, _ = harmonic
        v = PotentialField(v0, {})
        u, div_u = compute_u(np.exp(-grid.x**2), v, v, 0, grid.dx)
        assert np.max(np.abs(u)) == 0.0 and np.max(np.abs(div_u)) == 0.0

    def test_constant_difference_rejected(self, harmonic):
        grid, v0, _ = harmonic
        v = PotentialField(v0 + 0.3, {})
        v_p = PotentialField(v0, {})
        with pytest.raises(TimeDerivativeOrderError, match="constant"):
            compute_u(np.exp(-grid.x**2), v, v_p, 0, grid.dx)

    def test_non_minimal_k_rejected(self, harmonic):
        grid, v0, _ = harmonic
        x = grid.x
        v = PotentialField(v0, {0: 0.1 * x**2, 1: 0.2 * x})
        v_p = PotentialField(v0, {})
        with pytest.raises(TimeDerivativeOrderError, match="not minimal"):
            compute_u(np.exp(-x * x), v, v_p, 1, grid.dx)


class TestIdentity:
    def test_identical_potentials_both_sides_zero(self, harmonic):
        grid, v0, psi = harmonic
        v = PotentialField(v0, {})
        rep = check_rg_identity(psi, v, v, dt=5e-4)
        assert rep.residual_max <= 10 * rep.noise_floor
        assert rep.inconclusive  # no signal: correctly flagged

    def test_harmonic_quadratic_residual(self, harmonic):
        grid, v0, psi = harmonic
        x = grid.x
        v = PotentialField(v0, {0: 0.1 * x**2 / 2})
        v_p = PotentialField(v0, {})
        rep = check_rg_identity(psi, v, v_p, k=0, dt=5e-4, subinterval=(0.5, 1.5))
        assert rep.residual_rel < 5e-2
        assert rep.norm_error < 1e-10
        assert rep.rhs_max_abs_on_d > 0.0
        assert not rep.inconclusive

    def test_halving_shrinks_residual(self, harmonic):
        grid, v0, psi = harmonic
        lad = refinement_ladder(grid, lambda x: 0.5 * x**2, lambda x: 0.1 * x**2 / 2,
                                dt=5e-4, n_levels=2)
        assert lad.levels[0].residual_max / lad.levels[1].residual_max >= 2.0

    def test_gauge_shift_changes_nothing(self, harmonic):
        grid, v0, psi = harmonic
        x = grid.x
        pert = 0.1 * x**2 / 2
        r1 = check_rg_identity(psi, PotentialField(v0, {0: pert}), PotentialField(v0, {}),
                               dt=5e-4, subinterval=(0.5, 1.5))
        c = 3.7
        r2 = check_rg_identity(psi, PotentialField(v0 + c, {0: pert}),
                               PotentialField(v0 + c, {}), dt=5e-4, subinterval=(0.5, 1.5))
        assert abs(r1.residual_max - r2.residual_max) < 1e-12
        assert abs(r1.residual_rel - r2.residual_rel) < 1e-12
        assert abs(r1.rhs_max_abs_on_d - r2.rhs_max_abs_on_d) < 1e-12

    def test_k_equal_one_supported_behind_warning(self, harmonic):
        grid, v0, psi = harmonic
        x = grid.x
        v = PotentialField(v0, {1: 0.1 * x**2 / 2})
        v_p = PotentialField(v0, {})
        with pytest.warns(UserWarning, match="k = 1"):
            rep = check_rg_identity(psi, v, v_p, k=1, dt=5e-4)
        assert rep.residual_rel < 5e-2

    def test_k_above_one_rejected(self, harmonic):
        _, v0, psi = harmonic
        v = PotentialField(v0, {})
        with pytest.raises(ValueError, match="k = 0"):
            check_rg_identity(psi, v, v, k=2)

    def test_large_dt_rejected(self, harmonic):
        _, v0, psi = harmonic
        v = PotentialField(v0, {})
        with pytest.raises(ValueError, match="dt"):
            check_rg_identity(psi, v, v, dt=0.01)

    @given(c=st.floats(-5, 5))
    @settings(max_examples=10, deadline=None)
    def test_gauge_property_on_coarse_grid(self, c):
        grid = Grid1D(-6.0, 6.0, 255)
        x = grid.x
        v0 = 0.5 * x**2
        psi = ground_state_1d(grid, v0)
        pert = 0.05 * x**2
        r1 = check_rg_identity(psi, PotentialField(v0, {0: pert}), PotentialField(v0, {}),
                               dt=5e-4)
        r2 = check_rg_identity(psi, PotentialField(v0 + c, {0: pert}),
                               PotentialField(v0 + c, {}), dt=5e-4)
        assert abs(r1.residual_max - r2.residual_max) < 1e-12


class TestPropagatorUnitarity:
    def test_norm_conserved_many_steps(self, harmonic):
        grid, v0, psi = harmonic
        out = crank_nicolson_steps(psi.psi.copy(), lambda t: v0 - v0.mean(), grid.dx,
                                   5e-4, 200)
        norm = np.sqrt(np.sum(np.abs(out) ** 2) * grid.dx)
        assert abs(norm - 1.0) < 1e-10

    def test_backward_forward_round_trip(self, harmonic):
        grid, v0, psi = harmonic
        fwd = crank_nicolson_steps(psi.psi.copy(), lambda t: v0, grid.dx, 5e-4, 16)
        back = crank_nicolson_steps(fwd, lambda t: v0, grid.dx, -5e-4, 16)
        assert np.max(np.abs(back - psi.psi)) < 1e-12


class TestWavefunctionValidation:
    def test_unnormalized_rejected(self):
        grid = Grid1D(-1.0, 1.0, 63)
        with pytest.raises(ValueError, match="normalized"):
            GridWavefunction(grid, np.ones(grid.n, dtype=complex))

    def test_potential_shape_mismatch(self):
        grid = Grid1D(-1.0, 1.0, 63)
        with pytest.raises(ValueError):
            ground_state_1d(grid, np.zeros(10))
