import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbm.core import FieldPair, GridSpec, ModelParams, grid_for_horizon, make_heaviside_ic
from sbm.interface import approx_interface, fronts, width_moment
from sbm.funcs import heat_step_solution


class TestFronts:
    def test_heaviside(self):
        grid = GridSpec(-1.0, 1.0, 20)
        R, L = fronts(make_heaviside_ic(grid), grid)
        assert R == pytest.approx(-grid.dx / 2)
        assert L == pytest.approx(grid.dx / 2)
        assert L - R == pytest.approx(grid.dx)

    def test_overlapping_steps(self):
        grid = GridSpec(-2.0, 2.0, 80)
        x = grid.centers()
        state = FieldPair(np.where(x < 1, 1.0, 0.0), np.where(x > -1, 1.0, 0.0))
        R, L = fronts(state, grid)
        assert abs(R - 1.0) <= grid.dx
        assert abs(L + 1.0) <= grid.dx

    def test_empty_support_sentinels(self):
        grid = GridSpec(-1.0, 1.0, 10)
        state = FieldPair(np.zeros(10), np.ones(10))
        R, L = fronts(state, grid)
        assert R == -math.inf
        assert L == pytest.approx(grid.centers()[0])

    def test_empty_v(self):
        grid = GridSpec(-1.0, 1.0, 10)
        state = FieldPair(np.ones(10), np.zeros(10))
        _, L = fronts(state, grid)
        assert L == math.inf


class TestApproxInterface:
    def test_heaviside_empty_overlap(self):
        grid = GridSpec(-1.0, 1.0, 40)
        stats = approx_interface(make_heaviside_ic(grid), grid, eps=0.01)
        R, L = fronts(make_heaviside_ic(grid), grid)
        assert stats.L_eps == R
        assert stats.R_eps == L
        assert stats.width == pytest.approx(L - R)
        assert stats.width <= 2 * grid.dx
        assert stats.ifc_cells.size == 0
        assert stats.ifc_hull is None

    def test_uniform_overlap_quartiles(self):
        # u = v = 1 on [0, 1]: overlap mass 1; trimming 0.25 per side leaves
        # endpoints near 0.25 and 0.75 (direct cumulative-sum oracle)
        grid = GridSpec(0.0, 1.0, 200)
        ones = np.ones(200)
        stats = approx_interface(FieldPair(ones, ones), grid, eps=0.25)
        assert stats.L_eps == pytest.approx(0.25, abs=grid.dx)
        assert stats.R_eps == pytest.approx(0.75, abs=grid.dx)
        assert stats.width == pytest.approx(0.5, abs=2 * grid.dx)

    def test_eps_exceeding_mass_clamps_to_zero_width(self):
        grid = GridSpec(0.0, 1.0, 50)
        ones = np.ones(50)
        stats = approx_interface(FieldPair(ones, ones), grid, eps=5.0)
        assert stats.width == 0.0

    def test_clamp_consistency_random_fields(self):
        gen = np.random.default_rng(0)
        grid = GridSpec(-2.0, 2.0, 64)
        for _ in range(50):
            u = np.maximum(gen.normal(0.2, 0.5, 64), 0.0)
            v = np.maximum(gen.normal(0.2, 0.5, 64), 0.0)
            state = FieldPair(u, v)
            stats = approx_interface(state, grid, eps=0.05)
            R, L = fronts(state, grid)
            assert stats.L_eps <= R
            assert stats.R_eps >= L
            assert stats.width >= 0.0
            if stats.ifc_cells.size:
                lo, hi = stats.ifc_hull
                assert lo <= hi

    @given(st.integers(0, 10**6))
    @settings(max_examples=30, deadline=None)
    def test_eps_monotonicity(self, seed):
        gen = np.random.default_rng(seed)
        grid = GridSpec(-1.0, 1.0, 32)
        u = gen.uniform(0, 1, 32)
        v = gen.uniform(0, 1, 32)
        state = FieldPair(u, v)
        eps_values = [0.01, 0.05, 0.1, 0.3]
        stats = [approx_interface(state, grid, eps=e) for e in eps_values]
        for a, b in zip(stats, stats[1:]):
            assert b.L_eps >= a.L_eps - 1e-12
            assert b.R_eps <= a.R_eps + 1e-12

    def test_grid_refinement_converges(self):
        # smooth synthetic overlap: endpoints converge at O(dx)
        def make(n):
            grid = GridSpec(-2.0, 2.0, n)
            x = grid.centers()
            u = np.exp(-((x + 0.3) ** 2))
            v = np.exp(-((x - 0.3) ** 2))
            return grid, FieldPair(u, v)

        vals = []
        for n in (50, 100, 200, 400):
            grid, state = make(n)
            stats = approx_interface(state, grid, eps=0.1)
            vals.append((stats.L_eps, stats.R_eps))
        errs = [abs(v[0] - vals[-1][0]) + abs(v[1] - vals[-1][1]) for v in vals[:-1]]
        assert errs[1] <= errs[0] + 1e-9
        assert errs[2] <= errs[1] + 1e-9


class TestWidthMoment:
    def test_t_zero_shrinks_with_dx(self):
        # empty overlap: the fallback clamps give width = L - R = dx exactly,
        # whose p-th moment vanishes as the grid refines (continuum value 0)
        for dx in (0.1, 0.05):
            grid = grid_for_horizon(0.1, 1.0, dx)
            params = ModelParams(-0.8, 1.0, dx**2 / 4, grid)
            (est,) = width_moment([0.0], 0.05, 0.5, params, 16, 0)
            assert est.value == pytest.approx(dx**0.5, abs=1e-12)
            assert est.std_error == 0.0

    def test_gamma_zero_deterministic_overlap(self):
        # the noiseless limit has a strictly positive deterministic width;
        # the quadrature oracle evaluates the same trimmed-mass endpoints on
        # the closed-form heat profiles
        grid = grid_for_horizon(1.0, 0.0, 0.05)
        params = ModelParams(0.0, 0.0, 0.05**2 / 4, grid)
        eps, p = 0.05, 0.5
        (est,) = width_moment([1.0], eps, p, params, 2, 1)
        x = grid.centers()
        u = heat_step_solution(x, 1.0)
        v = heat_step_solution(-x, 1.0)
        w = u * v * grid.dx
        cum = np.cumsum(w)
        tail = np.cumsum(w[::-1])[::-1]
        l_eps = x[np.flatnonzero(cum >= eps)[0]]
        r_eps = x[np.flatnonzero(tail >= eps)[-1]]
        oracle = max(r_eps - l_eps, 0.0) ** p
        assert oracle > 0.0
        assert est.value == pytest.approx(oracle, abs=0.05)
        assert est.std_error <= 1e-3  # deterministic dynamics

    def test_invalid_exponent(self):
        grid = grid_for_horizon(0.1, 1.0, 0.1)
        params = ModelParams(-0.8, 1.0, 0.1**2 / 4, grid)
        with pytest.raises(ValueError):
            width_moment([0.1], 0.05, 1.5, params, 4, 0)
