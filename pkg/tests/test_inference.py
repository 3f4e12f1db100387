"""Density estimate, plug-in variance, confidence bands, effect curve."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

from rdmc import SimConfig, TargetOutcome, generate
from rdmc.data import Thresholds
from rdmc.errors import AlignmentError, DegenerateSampleError, DensityFloorError, DomainError
from rdmc.estimators import DR, NAIVE, build_fit_sample, estimate_curve, local_linear_solve
from rdmc.inference import (
    DensityEstimate,
    confidence_band,
    dr_variance,
    effect_curve,
    kde_fit,
)
from rdmc.kernels import kernel_constants, kernel_value
from rdmc.nuisance import fit_outcome, fit_propensity, predict_outcome, predict_propensity

TH = Thresholds(2.0, 6.0)


class TestDensity:
    def test_kde_integrates_to_one(self):
        rng = np.random.default_rng(1)
        dens = kde_fit(rng.normal(4.0, 1.7, 400))
        total, _ = quad(dens, -20.0, 30.0, limit=200)
        assert_allclose(total, 1.0, atol=1e-6)

    def test_kde_tracks_a_normal_density(self):
        rng = np.random.default_rng(2)
        dens = kde_fit(rng.normal(0.0, 1.0, 20_000))
        pts = np.linspace(-1.5, 1.5, 7)
        truth = np.exp(-0.5 * pts * pts) / math.sqrt(2.0 * math.pi)
        assert np.max(np.abs(dens(pts) - truth)) < 0.02

    def test_silverman_bandwidth_formula(self):
        rng = np.random.default_rng(3)
        x = rng.normal(0.0, 2.0, 500)
        dens = kde_fit(x)
        sd = np.std(x, ddof=1)
        iqr = np.subtract(*np.percentile(x, [75, 25]))
        want = 0.9 * min(sd, iqr / 1.34) * 500 ** (-0.2)
        assert_allclose(dens.bandwidth, want, rtol=1e-12)

    def test_constant_sample_is_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            kde_fit(np.full(10, 3.0))
        with pytest.raises(DegenerateSampleError):
            kde_fit(np.array([1.0]))


def variance_oracle(ds, target, curve, pfit, ofit):
    """Transcribe the plug-in formula with plain loops."""
    h = curve.bandwidth
    const = kernel_constants(curve.kernel)
    mask = (ds.x < TH.c1) if target.j == 0 else (ds.x > TH.c0)
    idx = np.flatnonzero(mask)
    fs = build_fit_sample(ds, target, DR, pfit, ofit)
    dens = kde_fit(ds.x)
    out = []
    for x0 in curve.grid:
        num = den = 0.0
        for i in idx:
            xi, wi = float(ds.x[i]), ds.w[i]
            ghat, _ = local_linear_solve(zip(fs.x, fs.resp), xi, h, curve.kernel)
            pi = predict_propensity(pfit, xi, wi)
            p = pi if ds.d[i] == 1 else 1.0 - pi
            r = 1.0 if ds.z[i] == target.j else 0.0
            delta = predict_outcome(ofit, xi, wi)
            psi = (r / p) * (ds.y[i] - ghat) - (r / p - 1.0) * (delta - ghat)
            k = kernel_value(curve.kernel, (xi - x0) / h) / h
            num += k * psi * psi
            den += k
        m2 = num / den
        out.append((const.r / dens(x0)) * m2 / (idx.size * h))
    return np.array(out)


class TestPlugInVariance:
    def test_matches_a_loop_transcription_of_the_formula(self):
        ds = generate(SimConfig(n=250), 17)
        target = TargetOutcome(0)
        pfit = fit_propensity(ds)
        ofit = fit_outcome(ds, target)
        grid = np.array([3.0, 4.0, 5.0])
        curve = estimate_curve(ds, target, DR, 1.0, grid, pfit, ofit)
        got = dr_variance(ds, target, curve, pfit, ofit, kde_fit(ds.x))
        want = variance_oracle(ds, target, curve, pfit, ofit)
        assert_allclose(got, want, rtol=1e-9)

    def test_shrinks_like_one_over_n(self):
        target = TargetOutcome(0)
        grid = np.array([4.0])
        out = {}
        for n in (500, 8_000):
            ds = generate(SimConfig(n=n), 23)
            pfit = fit_propensity(ds)
            ofit = fit_outcome(ds, target)
            curve = estimate_curve(ds, target, DR, 1.0, grid, pfit, ofit)
            out[n] = float(dr_variance(ds, target, curve, pfit, ofit, kde_fit(ds.x))[0])
        ratio = out[500] / out[8_000]
        assert 8.0 < ratio < 32.0  # nominal 16, generous noise allowance

    def test_rejects_non_dr_curves(self):
        ds = generate(SimConfig(n=250), 17)
        target = TargetOutcome(0)
        curve = estimate_curve(ds, target, NAIVE, 1.0, np.array([4.0]))
        with pytest.raises(DomainError):
            dr_variance(ds, target, curve, None, None, kde_fit(ds.x))

    def test_vanishing_density_raises_floor_error(self):
        ds = generate(SimConfig(n=250), 17)
        target = TargetOutcome(0)
        pfit = fit_propensity(ds)
        ofit = fit_outcome(ds, target)
        curve = estimate_curve(ds, target, DR, 1.0, np.array([4.0]), pfit, ofit)
        tight = DensityEstimate(sample=np.array([-200.0, -199.0]), bandwidth=0.1)
        with pytest.raises(DensityFloorError):
            dr_variance(ds, target, curve, pfit, ofit, tight)


class TestBandsAndEffect:
    @staticmethod
    def fitted_pair(n=3_000, seed=29, level=None):
        ds = generate(SimConfig(n=n), seed)
        pfit = fit_propensity(ds)
        grid = np.linspace(2.1, 5.9, 20)
        curves = []
        for j in (0, 1):
            target = TargetOutcome(j)
            ofit = fit_outcome(ds, target)
            c = estimate_curve(ds, target, DR, 1.0, grid, pfit, ofit)
            v = dr_variance(ds, target, c, pfit, ofit, kde_fit(ds.x))
            curves.append(c.with_variance(v))
        return ds, curves[0], curves[1]

    def test_confidence_band_uses_the_normal_quantile(self):
        _, c0, _ = self.fitted_pair()
        band = confidence_band(c0, 0.95)
        half = band.upper - band.center
        assert_allclose(half, 1.959963984540054 * np.sqrt(c0.variance), rtol=1e-12)

    def test_band_requires_a_variance(self):
        ds, c0, _ = self.fitted_pair()
        bare = estimate_curve(
            ds, TargetOutcome(0), NAIVE, 1.0, np.array([4.0])
        )
        with pytest.raises(DomainError):
            confidence_band(bare)

    def test_effect_curve_difference_and_variance_sum(self):
        _, c0, c1 = self.fitted_pair()
        eff = effect_curve(c0, c1, TH, level=0.9)
        assert_allclose(eff.tau, c1.values - c0.values, rtol=0, atol=0)
        assert_allclose(eff.variance, c0.variance + c1.variance, rtol=0, atol=0)
        z = 1.6448536269514722
        assert_allclose(eff.upper, eff.tau + z * np.sqrt(eff.variance), rtol=1e-12)

    def test_effect_curve_rejects_mismatched_grids(self):
        _, c0, c1 = self.fitted_pair()
        ds2, d0, d1 = self.fitted_pair(seed=31)
        import dataclasses

        shifted = dataclasses.replace(c1, grid=c1.grid + 1e-9)
        with pytest.raises(AlignmentError):
            effect_curve(c0, shifted, TH)

    def test_effect_curve_requires_strict_interior_grid(self):
        ds = generate(SimConfig(n=3_000), 29)
        pfit = fit_propensity(ds)
        grid = np.linspace(2.0, 6.0, 9)  # touches both cutoffs
        cs = []
        for j in (0, 1):
            target = TargetOutcome(j)
            ofit = fit_outcome(ds, target)
            cs.append(estimate_curve(ds, target, DR, 1.0, grid, pfit, ofit))
        with pytest.raises(AlignmentError):
            effect_curve(cs[0], cs[1], TH)

    def test_effect_curve_rejects_swapped_targets(self):
        _, c0, c1 = self.fitted_pair()
        with pytest.raises(DomainError):
            effect_curve(c1, c0, TH)
