import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbm.core import FieldPair, GridSpec, ModelParams, grid_for_horizon, make_heaviside_ic
from sbm.funcs import GaussianBump, HeavisideLeft, HeavisideRight
from sbm.selfdual import (
    duality_pairing,
    heat_apply_fn,
    scaling_equivalence_check,
    self_duality_check,
    self_duality_fn,
    separation_probe,
)


class TestDualityPairing:
    def setup_method(self):
        self.grid = GridSpec(-1.5, 1.5, 3)  # dx = 1, centers -1, 0, 1

    def test_zero_test_functions(self):
        mu = np.array([0.3, 0.5, 0.1])
        zero = np.zeros(3)
        val = duality_pairing(mu, mu, zero, zero, -0.5, self.grid)
        assert val == 0
        assert self_duality_fn(mu, mu, zero, zero, -0.5, self.grid) == 1.0

    def test_equal_pairs_purely_real(self):
        mu = np.array([0.2, 0.4, 0.1])
        phi = np.array([1.0, 2.0, 0.5])
        val = duality_pairing(mu, mu, phi, phi, -0.3, self.grid)
        assert val.imag == 0.0
        assert val.real == pytest.approx(
            -math.sqrt(1.3) * np.sum((2 * mu) * (2 * phi)) * self.grid.dx
        )

    def test_three_cell_hand_quadrature(self):
        # unit-mass bump at the centre cell, nu = 0, phi = psi = 1, rho = 0:
        # real part -sqrt(1) * <mu, 2> = -2, imaginary part sqrt(1) * <mu, 0> = 0
        mu = np.array([0.0, 1.0, 0.0])  # density 1/dx with dx = 1
        nu = np.zeros(3)
        ones = np.ones(3)
        val = duality_pairing(mu, nu, ones, ones, 0.0, self.grid)
        assert val == pytest.approx(-2.0 + 0.0j)

    def test_rho_boundary_rejected(self):
        ones = np.ones(3)
        with pytest.raises(ValueError):
            duality_pairing(ones, ones, ones, ones, 1.0, self.grid)

    @given(st.integers(0, 10**6))
    @settings(max_examples=40, deadline=None)
    def test_modulus_bounded_by_one(self, seed):
        gen = np.random.default_rng(seed)
        rho = gen.uniform(-0.95, 0.95)
        mu, nu, phi, psi = gen.uniform(0, 2, (4, 3))
        f = self_duality_fn(mu, nu, phi, psi, rho, self.grid)
        assert abs(f) <= 1.0 + 1e-12


def gaussian_pair_ic(grid):
    x = grid.centers()
    return FieldPair(GaussianBump(-1.0, 0.5)(x), GaussianBump(1.0, 0.5)(x))


class TestSelfDuality:
    def test_t_zero_exact_equality(self):
        grid = grid_for_horizon(0.25, 1.0, 0.1)
        params = ModelParams(-0.8, 1.0, 0.1**2 / 4, grid)
        rep = self_duality_check(make_heaviside_ic(grid), gaussian_pair_ic(grid), 0.0, params, 4, 0)
        assert rep.residual == pytest.approx(0.0, abs=1e-14)

    def test_zero_ic2_gives_one(self):
        grid = grid_for_horizon(0.25, 1.0, 0.1)
        params = ModelParams(-0.8, 1.0, 0.1**2 / 4, grid)
        ic2 = FieldPair(np.zeros(grid.n_cells), np.zeros(grid.n_cells))
        rep = self_duality_check(make_heaviside_ic(grid), ic2, 0.25, params, 16, 0)
        assert rep.lhs.value == pytest.approx(1.0 + 0.0j, abs=1e-12)
        assert rep.rhs.value == pytest.approx(1.0 + 0.0j, abs=1e-12)

    def test_rho_nonnegative_rejected(self):
        grid = grid_for_horizon(0.25, 1.0, 0.1)
        params = ModelParams(0.0, 1.0, 0.1**2 / 4, grid)
        with pytest.raises(ValueError):
            self_duality_check(make_heaviside_ic(grid), gaussian_pair_ic(grid), 0.1, params, 4, 0)

    def test_non_decaying_ic2_rejected(self):
        grid = grid_for_horizon(0.25, 1.0, 0.1)
        params = ModelParams(-0.8, 1.0, 0.1**2 / 4, grid)
        ic2 = FieldPair(np.ones(grid.n_cells), np.ones(grid.n_cells))
        with pytest.raises(ValueError, match="decay"):
            self_duality_check(make_heaviside_ic(grid), ic2, 0.1, params, 4, 0)

    def test_statistical_identity_small(self):
        grid = grid_for_horizon(0.25, 1.0, 0.1)
        params = ModelParams(-0.8, 1.0, 0.1**2 / 4, grid)
        rep = self_duality_check(
            make_heaviside_ic(grid), gaussian_pair_ic(grid), 0.25, params, 512, 11
        )
        assert rep.passed


class TestSeparationProbe:
    def test_heaviside_ceiling_is_quarter_at_origin(self):
        assert heat_apply_fn(HeavisideLeft(), 0.55, 0.0) == pytest.approx(0.5, abs=1e-9)
        grid = grid_for_horizon(0.25, 1.0, 0.1)
        params = ModelParams(-0.8, 1.0, 0.1**2 / 4, grid)
        report = separation_probe([0.2], [0.0], 0.25, params, 128, 3)
        entry = report.entry(0.2, 0.0)
        assert entry.ceiling == pytest.approx(0.25, abs=1e-9)
        assert entry.estimate.value <= entry.ceiling + 3 * entry.estimate.std_error

    def test_monotone_in_eps_same_ensemble(self):
        grid = grid_for_horizon(0.25, 1.0, 0.1)
        params = ModelParams(-0.8, 1.0, 0.1**2 / 4, grid)
        report = separation_probe([0.4, 0.2, 0.1], [0.0], 0.25, params, 256, 9)
        vals = [report.entry(e, 0.0).estimate.value for e in (0.4, 0.2, 0.1)]
        assert vals[0] >= vals[1] - 1e-9
        assert vals[1] >= vals[2] - 1e-9


class TestScaling:
    def test_gamma_zero_exact_equivalence(self):
        report = scaling_equivalence_check(4.0, 0.25, 0.0, -0.8, 2, 0, dx=0.1)
        for comp in report.comparisons:
            assert comp.difference <= max(comp.tolerance, 1e-12)
        assert report.passed

    def test_k_one_statistical(self):
        report = scaling_equivalence_check(1.0, 0.25, 1.0, -0.8, 256, 1, dx=0.1)
        assert report.passed

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            scaling_equivalence_check(0.0, 0.25, 1.0, -0.8, 4, 0)
