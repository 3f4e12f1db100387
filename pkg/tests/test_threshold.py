"""Net-benefit objective and cutoff search on analytically known curves."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

from rdmc.data import TargetOutcome, Thresholds
from rdmc.errors import DomainError
from rdmc.estimators import NAIVE, Curve
from rdmc.threshold import CostSpec, net_benefit, optimize_threshold

TH = Thresholds(2.0, 6.0)


def analytic_curve(j, fn, grid):
    vals = fn(grid)
    return Curve(
        grid=grid,
        values=vals,
        slopes=np.gradient(vals, grid),
        target=TargetOutcome(j),
        method=NAIVE,
        bandwidth=1.0,
        kernel="epanechnikov",
    )


def linear_pair(grid):
    c0 = analytic_curve(0, lambda x: 10.0 + x, grid)
    c1 = analytic_curve(1, lambda x: 20.0 + 2.0 * x, grid)
    return c0, c1


def flat_density(x):
    return np.full(np.atleast_1d(np.asarray(x, dtype=float)).shape, 0.125)


class TestNetBenefit:
    def test_matches_quadrature_for_linear_curves(self):
        # Linear curves and a flat density make the piecewise-linear
        # integrand exact, so the only tolerance is quadrature's.  tau(x)
        # is (20 + 2x) - (10 + x) = 10 + x here.
        grid = np.linspace(1.5, 6.5, 11)
        c0, c1 = linear_pair(grid)
        cost = CostSpec(constant=5.0)
        for c in (2.0, 3.3, 4.8, 6.0):
            want = (
                quad(lambda x: (10.0 + x) * 0.125, 2.0, 6.0)[0]
                - quad(lambda x: (10.0 + x - 5.0) * 0.125, c, 6.0)[0]
            )
            got = net_benefit(c, c0, c1, cost, flat_density, TH)
            assert_allclose(got, want, rtol=1e-12)

    def test_boundary_candidates_hit_the_anchored_limits(self):
        # At c = c1 the tail integral vanishes and only the anchored g0
        # mass remains; at c = c0 the full cost-adjusted effect is removed.
        grid = np.linspace(2.0, 6.0, 9)
        c0, c1 = linear_pair(grid)
        cost = CostSpec(constant=5.0)
        anchor = quad(lambda x: (10.0 + x) * 0.125, 2.0, 6.0)[0]
        at_upper = net_benefit(6.0, c0, c1, cost, flat_density, TH)
        assert_allclose(at_upper, anchor, rtol=1e-12)
        at_lower = net_benefit(2.0, c0, c1, cost, flat_density, TH)
        want_lower = anchor - quad(lambda x: (10.0 + x - 5.0) * 0.125, 2.0, 6.0)[0]
        assert_allclose(at_lower, want_lower, rtol=1e-12)

    def test_candidate_outside_interval_rejected(self):
        grid = np.linspace(2.0, 6.0, 9)
        c0, c1 = linear_pair(grid)
        with pytest.raises(DomainError):
            net_benefit(1.0, c0, c1, CostSpec(constant=0.0), flat_density, TH)

    def test_missing_curve_values_between_cutoffs_rejected(self):
        grid = np.linspace(2.0, 6.0, 9)
        c0, c1 = linear_pair(grid)
        vals = c1.values.copy()
        vals[4] = np.nan
        import dataclasses

        holed = dataclasses.replace(c1, values=vals)
        with pytest.raises(DomainError):
            net_benefit(4.0, c0, holed, CostSpec(constant=0.0), flat_density, TH)


class TestOptimize:
    def test_prohibitive_cost_puts_the_optimum_at_the_lower_cutoff_exactly(self):
        grid = np.linspace(2.0, 6.0, 401)
        c0, c1 = linear_pair(grid)  # tau(x) = 10 + x <= 16 on [2, 6]
        res = optimize_threshold(c0, c1, CostSpec(constant=50.0), flat_density, TH)
        assert res.c_opt == TH.c0
        assert res.boundary == "at_c0"

    def test_negligible_cost_puts_the_optimum_at_the_upper_cutoff(self):
        grid = np.linspace(2.0, 6.0, 401)
        c0, c1 = linear_pair(grid)  # tau(x) >= 12 > 0 on [2, 6]
        res = optimize_threshold(c0, c1, CostSpec(constant=0.0), flat_density, TH)
        assert res.c_opt == TH.c1
        assert res.boundary == "at_c1"

    def test_interior_optimum_sits_where_the_effect_crosses_the_cost(self):
        # tau(x) = 16 - 2x falls through mc = 8 at x = 4; the benefit rises
        # while tau > mc and falls afterwards.
        grid = np.linspace(2.0, 6.0, 2001)
        c0 = analytic_curve(0, lambda x: 1.0 + 0.5 * x, grid)
        c1 = analytic_curve(1, lambda x: 17.0 - 1.5 * x, grid)
        res = optimize_threshold(c0, c1, CostSpec(constant=8.0), flat_density, TH, resolution=1001)
        cell = (TH.c1 - TH.c0) / 1000
        assert res.boundary == "interior"
        assert abs(res.c_opt - 4.0) <= cell + 1e-12

    def test_matches_a_brute_force_candidate_scan(self):
        grid = np.linspace(2.0, 6.0, 2001)
        c0 = analytic_curve(0, lambda x: 1.0 + 0.5 * x, grid)
        c1 = analytic_curve(1, lambda x: 17.0 - 1.5 * x, grid)
        cost = CostSpec(constant=8.0)
        res = optimize_threshold(c0, c1, cost, flat_density, TH, resolution=501)
        brute_c = np.linspace(2.0, 6.0, 20_001)
        brute_v = np.array([net_benefit(c, c0, c1, cost, flat_density, TH) for c in brute_c])
        c_star = brute_c[int(np.argmax(brute_v))]
        assert abs(res.c_opt - c_star) <= (TH.c1 - TH.c0) / 500 + 1e-12

    def test_profile_increments_carry_the_sign_of_effect_minus_cost(self):
        # Forward differences of the candidate profile match the sign of
        # (tau - mc) f at the left candidate wherever tau - mc does not
        # change sign inside the step.
        grid = np.linspace(2.0, 6.0, 401)
        c0, c1 = linear_pair(grid)  # tau = 10 + x, increasing
        mc = 14.0
        res = optimize_threshold(c0, c1, CostSpec(constant=mc), flat_density, TH, resolution=201)
        diffs = np.diff(res.values)
        tau_left = 10.0 + res.candidates[:-1]
        tau_right = 10.0 + res.candidates[1:]
        same_side = (tau_left - mc) * (tau_right - mc) > 0.0
        expected = np.sign(tau_left - mc)
        assert np.all(np.sign(diffs[same_side]) == expected[same_side])

    def test_exact_ties_go_to_the_smaller_candidate(self):
        grid = np.linspace(2.0, 6.0, 101)
        zero0 = analytic_curve(0, lambda x: np.zeros_like(x), grid)
        zero1 = analytic_curve(1, lambda x: np.zeros_like(x), grid)
        res = optimize_threshold(zero0, zero1, CostSpec(constant=0.0), flat_density, TH)
        assert np.all(res.values == 0.0)
        assert res.c_opt == TH.c0

    def test_profile_is_reported_over_the_full_interval(self):
        grid = np.linspace(2.0, 6.0, 101)
        c0, c1 = linear_pair(grid)
        res = optimize_threshold(c0, c1, CostSpec(constant=5.0), flat_density, TH, resolution=41)
        assert res.candidates.shape == res.values.shape == (41,)
        assert res.candidates[0] == TH.c0 and res.candidates[-1] == TH.c1
        assert_allclose(
            res.value, net_benefit(res.c_opt, c0, c1, CostSpec(constant=5.0), flat_density, TH)
        )


class TestCostSpec:
    def test_flat_table_equals_the_constant(self):
        grid = np.linspace(2.0, 6.0, 51)
        c0, c1 = linear_pair(grid)
        const = CostSpec(constant=5.0)
        table = CostSpec(table_x=np.array([1.0, 7.0]), table_mc=np.array([5.0, 5.0]))
        for c in (2.5, 4.0, 5.5):
            assert_allclose(
                net_benefit(c, c0, c1, table, flat_density, TH),
                net_benefit(c, c0, c1, const, flat_density, TH),
                rtol=1e-14,
            )

    def test_table_interpolates_linearly(self):
        cost = CostSpec(table_x=np.array([0.0, 10.0]), table_mc=np.array([0.0, 20.0]))
        assert_allclose(cost(np.array([2.5])), [5.0])

    def test_table_must_cover_the_queried_range(self):
        cost = CostSpec(table_x=np.array([3.0, 5.0]), table_mc=np.array([1.0, 1.0]))
        with pytest.raises(DomainError):
            cost(np.array([2.0]))

    def test_constant_and_table_are_mutually_exclusive(self):
        with pytest.raises(DomainError):
            CostSpec(constant=1.0, table_x=np.array([0.0, 1.0]), table_mc=np.array([0.0, 1.0]))
        with pytest.raises(DomainError):
            CostSpec()

    def test_table_x_must_increase(self):
        with pytest.raises(DomainError):
            CostSpec(table_x=np.array([1.0, 1.0]), table_mc=np.array([0.0, 1.0]))
