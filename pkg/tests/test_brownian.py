import math

import numpy as np
import pytest
from scipy import stats as sps

from sbm.core import RngStream
from sbm.brownian import (
    band_local_time_paths,
    collision_local_time_exact_samples,
    collision_tail_check,
    exp_abs_gaussian_quadrature,
    laplace_bound_check,
    levy_identity_check,
    local_time_exact_samples,
    local_time_tail_check,
    max_plus_samples,
    max_tail_probability,
    occupation_formula_check,
)

E = math.e


class TestExactSamplers:
    def test_zero_start_max_is_abs_gaussian(self):
        gen = RngStream(0, 0, 2).generator()
        sample = local_time_exact_samples(gen, 0.0, 1.0, 20000)
        res = sps.kstest(sample, lambda x: 2 * sps.norm.cdf(np.maximum(x, 0)) - 1)
        assert res.pvalue > 0.01

    def test_reflection_principle_tails(self):
        gen = RngStream(1, 0, 2).generator()
        z, t, n = 0.5, 2.0, 40000
        m = max_plus_samples(gen, -abs(z), t, n)
        for a in (0.5, 1.0, 2.0):
            emp = float(np.mean(m >= a))
            exact = max_tail_probability(a, z, t)
            se = math.sqrt(max(exact * (1 - exact), 1e-12) / n)
            assert abs(emp - exact) <= 3 * se

    def test_collision_scaling_against_band_paths(self):
        # exact representation vs eps-band estimate on the pair difference
        gen1 = RngStream(2, 0, 2).generator()
        gen2 = RngStream(3, 0, 2).generator()
        z, t = 1.0, 1.0
        exact = collision_local_time_exact_samples(gen1, z, t, 20000)
        band = band_local_time_paths(gen2, z, t, 2e-4, 0.03, 20000, diffusion=2.0)
        assert abs(exact.mean() - band.mean()) <= 0.02
        res = sps.ks_2samp(exact, band)
        assert res.statistic <= 0.05


class TestLevyIdentity:
    def test_passes_at_stated_points(self):
        rep = levy_identity_check(1.0, 1.0, 8000, 1e-4, 0.02, 5)
        assert rep.passed

    def test_zero_start(self):
        rep = levy_identity_check(0.0, 1.0, 8000, 1e-4, 0.02, 6)
        assert rep.passed

    def test_far_start_degenerate(self):
        rep = levy_identity_check(10.0, 1.0, 2000, 1e-3, 0.06, 7)
        assert rep.ks_stat == 0.0
        assert rep.passed

    def test_band_bias_shrinks_with_resolution(self):
        stats = []
        for dt, eps in ((1e-3, 0.06), (2.5e-4, 0.03), (1e-4, 0.015)):
            rep = levy_identity_check(0.0, 1.0, 8000, dt, eps, 9)
            stats.append(rep.ks_stat)
        assert stats[2] <= stats[0]
        assert max(stats) < 0.1


class TestTailBounds:
    def test_tail_bound_point_value(self):
        # alpha = 1, z = 0, t = e: bound = sqrt(2/pi)/sqrt(e) ~ 0.4839 and the
        # exact probability is P(|N| <= 1/sqrt(e)) ~ 0.4556
        rep = local_time_tail_check(0.0, 1.0, E, 40000, 11)
        assert rep.bound == pytest.approx(math.sqrt(2 / math.pi) / math.sqrt(E), abs=1e-12)
        exact = 2 * sps.norm.cdf(1.0 / math.sqrt(E)) - 1
        assert abs(rep.empirical_p - exact) <= 3 * rep.std_error + 1e-3
        assert rep.passed

    def test_alpha_to_zero(self):
        rep = local_time_tail_check(0.0, 1e-9, E, 20000, 12)
        assert rep.empirical_p == pytest.approx(0.0, abs=1e-4)

    def test_requires_t_at_least_one(self):
        with pytest.raises(ValueError):
            local_time_tail_check(0.0, 1.0, 0.5, 100, 0)

    def test_collision_bound_exact_and_band(self):
        for method, n in (("exact", 40000), ("band", 5000)):
            rep = collision_tail_check(0.0, 1.0, 1.0, E, n, 13, method=method, dt=1e-3)
            assert rep.bound == pytest.approx((2 * math.log(E) + 1.0) / math.sqrt(math.pi * E), abs=1e-12)
            assert rep.passed


class _BandConstant:
    """h constant on each band of the occupation check's level grid."""

    def __init__(self, eps):
        self.width = 2 * eps

    def __call__(self, z, s):
        levels = np.round(np.asarray(z) / self.width) * self.width
        return np.exp(-(levels**2)) * s


class _Zero:
    def __call__(self, z, s):
        return np.zeros_like(np.asarray(z, dtype=float))


class _SmoothTimes:
    def __call__(self, z, s):
        return np.exp(-np.asarray(z) ** 2) * s


class TestOccupationFormula:
    def test_zero_integrand(self):
        rep = occupation_formula_check(_Zero(), 0.5, 1e-3, 0.05, 200, 0)
        assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.rel_err == 0.0
        assert rep.passed

    def test_band_constant_is_exact(self):
        eps = 0.05
        rep = occupation_formula_check(_BandConstant(eps), 1.0, 1e-3, eps, 300, 1)
        assert rep.rel_err == pytest.approx(0.0, abs=1e-14)

    def test_smooth_integrand(self):
        rep = occupation_formula_check(_SmoothTimes(), 1.0, 1e-4, 0.02, 1500, 2)
        assert rep.rel_err <= 0.05
        assert rep.passed


class TestLaplaceBound:
    def test_quadrature_closed_form(self):
        # E[exp(-|B_1|)] = 2 e^{1/2} Phi(-1), to quadrature accuracy
        val = exp_abs_gaussian_quadrature(1.0, 1.0)
        assert val == pytest.approx(2 * math.exp(0.5) * sps.norm.cdf(-1.0), rel=1e-8)

    def test_limits(self):
        assert exp_abs_gaussian_quadrature(1e-8, 1.0) == pytest.approx(1.0, abs=1e-6)
        assert exp_abs_gaussian_quadrature(1.0, 1e-8) == pytest.approx(1.0, abs=1e-3)

    def test_full_check(self):
        rep = laplace_bound_check(1.0, [1.0, 4.0, 16.0, 64.0], 20000, 3)
        assert rep.passed
        assert rep.c_hat >= 1.0
        for case in rep.cases:
            assert abs(case.sampled - case.quadrature) <= 3 * case.sampled_se

    def test_small_s_needs_envelope_from_large_t(self):
        # at s = 0.1 the asymptotic prefactor sqrt(2/pi)/s ~ 8 exceeds the
        # t = 1 value; the envelope constant must come from the largest t
        rep = laplace_bound_check(0.1, [1.0, 16.0, 256.0], 20000, 4)
        assert rep.passed
        assert rep.c_hat > 1.0
