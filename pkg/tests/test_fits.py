"""Tail fits, cut-off selection, Vuong test, polynomial and slope fits."""
import math

import mpmath
import numpy as np
import pytest

from auctionlab import fits
from auctionlab.errors import (
    MismatchedSupport,
    NonPositiveValue,
    SingularDesign,
    TooFewPoints,
)


def pareto(rng, n, alpha=2.5, xmin=1.0):
    return xmin * rng.uniform(size=n) ** (-1.0 / (alpha - 1.0))


class TestGammaUpper:
    def test_against_mpmath(self):
        rng = np.random.default_rng(0)
        for _ in range(60):
            a = float(rng.uniform(-4.5, 3.5))
            x = float(10.0 ** rng.uniform(-6, 1.5))
            want = float(mpmath.gammainc(a, x, mpmath.inf))
            got = fits.gamma_upper(a, x)
            assert got == pytest.approx(want, rel=1e-9), (a, x)

    def test_integer_a_path(self):
        for a in (-3.0, -2.0, -1.0, 0.0, 1.0):
            x = 0.7
            want = float(mpmath.gammainc(a, x, mpmath.inf))
            assert fits.gamma_upper(a, x) == pytest.approx(want, rel=1e-10)


class TestSelectXmin:
    def test_pure_pareto_recovers_low_cutoff(self):
        # On a sample that is power law everywhere the KS landscape is flat in
        # the cut-off, so the bracket below is frozen for this seed; the
        # sweep that follows checks the distributional behavior.
        rng = np.random.default_rng(0)
        x = pareto(rng, 10_000)
        xmin = fits.select_xmin(x)
        assert 1.0 <= xmin <= np.quantile(x, 0.05)

    def test_pure_pareto_cutoff_stays_low_and_alpha_correct(self):
        quantiles = []
        for seed in range(12):
            rng = np.random.default_rng(seed)
            x = pareto(rng, 10_000)
            xmin = fits.select_xmin(x)
            quantiles.append((x < xmin).mean())
            alpha = fits.fit_tail(x, "powerlaw", xmin).params[0]
            assert alpha == pytest.approx(2.5, abs=0.12)
        assert np.median(quantiles) <= 0.5

    def test_spliced_body_recovers_the_splice(self):
        # lognormal body below a Pareto tail spliced at 100: the cut-off
        # search must land at the splice.  Above it the sample is scale-free,
        # so a minority of seeds drift high; the body side is sharp.
        found = []
        for seed in range(25):
            rng = np.random.default_rng(seed)
            body = np.exp(rng.normal(3.0, 0.6, 6000))
            body = body[body < 100][:2800]
            tail = pareto(rng, 1400, alpha=2.5, xmin=100.0)
            found.append(fits.select_xmin(np.concatenate([body, tail])))
        found = np.asarray(found)
        assert (found >= 70.0).all()
        assert ((found >= 70.0) & (found <= 140.0)).sum() >= 20
        assert 90.0 <= np.median(found) <= 120.0

    def test_constant_sample_degenerate(self):
        with pytest.raises(TooFewPoints):
            fits.select_xmin(np.full(100, 7.0))

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            fits.select_xmin(np.arange(1, 20, dtype=float))

    def test_nonpositive_rejected(self):
        with pytest.raises(NonPositiveValue):
            fits.select_xmin(np.concatenate([np.full(60, -1.0), np.arange(1, 60.0)]))


class TestFitTail:
    def test_pareto_alpha_recovery(self):
        rng = np.random.default_rng(2)
        x = pareto(rng, 10_000, alpha=2.5)
        fit = fits.fit_tail(x, "powerlaw", xmin=1.0)
        # MLE standard error is (alpha-1)/sqrt(n) = 0.015
        assert fit.params[0] == pytest.approx(2.5, abs=0.05)
        assert fit.n_tail == 10_000
        assert fit.pointwise_loglik.shape[0] == fit.n_tail
        assert fit.aic == pytest.approx(2.0 - 2.0 * fit.loglik)

    def test_exponential_closed_form(self):
        rng = np.random.default_rng(3)
        x = 5.0 + rng.exponential(2.0, 2000)
        fit = fits.fit_tail(x, "exponential", xmin=5.0)
        assert fit.params[0] == pytest.approx(1.0 / (x.mean() - 5.0))

    def test_truncated_limit_reproduces_pure_powerlaw(self):
        rng = np.random.default_rng(4)
        x = pareto(rng, 2000, alpha=2.5)
        pl = fits.fit_tail(x, "powerlaw", xmin=1.0)
        ll_tpl = fits.pointwise_loglik(x, "truncated_powerlaw", 1.0,
                                       (pl.params[0], 1e-12))
        assert abs(float(ll_tpl.sum()) - pl.loglik) < 1e-6

    def test_lognormal_recovers_parameters(self):
        rng = np.random.default_rng(5)
        x = np.exp(rng.normal(1.0, 0.7, 5000))
        fit = fits.fit_tail(x, "lognormal", xmin=float(x.min()))
        assert fit.params[0] == pytest.approx(1.0, abs=0.05)
        assert fit.params[1] == pytest.approx(0.7, abs=0.05)

    def test_rescaling_invariance(self):
        rng = np.random.default_rng(6)
        x = pareto(rng, 1000, alpha=2.2)
        a1 = fits.fit_tail(x, "powerlaw", xmin=1.0).params[0]
        a2 = fits.fit_tail(250.0 * x, "powerlaw", xmin=250.0).params[0]
        assert a1 == pytest.approx(a2, rel=1e-12)

    def test_too_few_tail_points(self):
        with pytest.raises(TooFewPoints):
            fits.fit_tail(np.arange(1.0, 100.0), "powerlaw", xmin=95.0)


class TestVuong:
    def test_identical_fits_are_a_wash(self):
        rng = np.random.default_rng(7)
        x = pareto(rng, 500)
        fit = fits.fit_tail(x, "powerlaw", xmin=1.0)
        res = fits.vuong_test(fit, fit)
        assert res.statistic == 0.0
        assert res.p_value_one_sided == pytest.approx(0.5)

    def test_antisymmetry(self):
        rng = np.random.default_rng(8)
        x = pareto(rng, 2000)
        a = fits.fit_tail(x, "powerlaw", xmin=1.0)
        b = fits.fit_tail(x, "exponential", xmin=1.0)
        ab = fits.vuong_test(a, b)
        ba = fits.vuong_test(b, a)
        assert ab.statistic == pytest.approx(-ba.statistic)

    def test_power_on_pareto_sample(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = pareto(rng, 10_000, alpha=2.5)
            a = fits.fit_tail(x, "powerlaw", xmin=1.0)
            b = fits.fit_tail(x, "exponential", xmin=1.0)
            if fits.vuong_test(a, b).p_value_one_sided < 0.01:
                hits += 1
        assert hits == 20

    def test_reverse_direction_on_exponential_sample(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            x = 1.0 + rng.exponential(1.0, 10_000)
            a = fits.fit_tail(x, "powerlaw", xmin=1.0)
            b = fits.fit_tail(x, "exponential", xmin=1.0)
            if fits.vuong_test(a, b).p_value_one_sided > 0.99:
                hits += 1
        assert hits >= 19

    def test_mismatched_support(self):
        rng = np.random.default_rng(9)
        x = pareto(rng, 500)
        a = fits.fit_tail(x, "powerlaw", xmin=1.0)
        b = fits.fit_tail(x, "exponential", xmin=1.5)
        with pytest.raises(MismatchedSupport):
            fits.vuong_test(a, b)

    def test_nested_pair_flagged(self):
        rng = np.random.default_rng(10)
        x = pareto(rng, 500)
        a = fits.fit_tail(x, "powerlaw", xmin=1.0)
        b = fits.fit_tail(x, "truncated_powerlaw", xmin=1.0)
        assert fits.vuong_test(a, b).nested

    def test_aic_never_prefers_clearly_worse_nested_family(self):
        # strongly truncated sample: the truncated family must win on AIC
        rng = np.random.default_rng(11)
        x = pareto(rng, 4000, alpha=1.8)
        x = x[x < 20.0]
        pl = fits.fit_tail(x, "powerlaw", xmin=1.0)
        tpl = fits.fit_tail(x, "truncated_powerlaw", xmin=1.0)
        assert tpl.loglik > pl.loglik + 1.0
        assert tpl.aic < pl.aic


class TestPolynomial:
    def test_exact_line(self):
        x = np.linspace(0, 10, 50)
        fit = fits.fit_polynomial(x, 2.0 * x + 1.0, degree=1)
        assert fit.params == pytest.approx((1.0, 2.0), abs=1e-9)

    def test_exact_parabola(self):
        x = np.linspace(-3, 3, 60)
        fit = fits.fit_polynomial(x, 0.5 - x + 0.25 * x * x, degree=2)
        assert fit.params == pytest.approx((0.5, -1.0, 0.25), abs=1e-9)

    def test_noisy_line_prefers_degree_one_aic(self):
        wins = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            x = np.linspace(0, 1, 600)
            y = 3.0 * x + rng.normal(0, 0.01, 600)
            a1 = fits.fit_polynomial(x, y, 1).aic
            a2 = fits.fit_polynomial(x, y, 2).aic
            wins += a1 < a2
        assert wins >= 40

    def test_singular_design(self):
        with pytest.raises(SingularDesign):
            fits.fit_polynomial(np.ones(10), np.arange(10.0), 1)

    def test_too_few(self):
        with pytest.raises(TooFewPoints):
            fits.fit_polynomial([0.0, 1.0], [0.0, 1.0], 1)


class TestLogLogSlope:
    def test_exact_power_law_opening_scale(self):
        taus = np.arange(1.0, 40.0)
        fit = fits.fit_loglog_slope(taus, taus ** 0.9)
        assert fit.hurst == pytest.approx(0.45, abs=1e-9)
        assert fit.p_value < 1e-12
        assert fit.n_used == taus.shape[0] - 1

    def test_exact_power_law_closing_scale(self):
        taus = np.arange(1.0, 40.0)
        fit = fits.fit_loglog_slope(taus, 2.0 * taus ** 0.46)
        assert fit.hurst == pytest.approx(0.23, abs=1e-9)
        assert fit.amplitude == pytest.approx(2.0, rel=1e-9)

    def test_constant_values(self):
        fit = fits.fit_loglog_slope(np.arange(1.0, 10.0), np.full(9, 3.0))
        assert fit.hurst == 0.0
        assert fit.p_value == pytest.approx(1.0)

    def test_noisy_constant_high_p(self):
        rng = np.random.default_rng(12)
        taus = np.arange(1.0, 30.0)
        vals = np.exp(rng.normal(0, 0.05, taus.shape[0]))
        fit = fits.fit_loglog_slope(taus, vals)
        assert fit.p_value > 0.05
        assert abs(fit.hurst) < 0.1

    def test_max_tau_point_removed_first(self):
        taus = np.array([1.0, 2.0, 3.0, 4.0, 100.0])
        vals = np.array([1.0, 2.0, 3.0, 4.0, 1e9])
        fit = fits.fit_loglog_slope(taus, vals)
        assert fit.slope == pytest.approx(1.0, abs=1e-9)

    def test_nonpositive_rejected(self):
        with pytest.raises(NonPositiveValue):
            fits.fit_loglog_slope([1, 2, 3, 4, 5], [1, 1, -1, 1, 1])
        with pytest.raises(NonPositiveValue):
            fits.fit_loglog_slope([0, 2, 3, 4, 5], [1, 1, 1, 1, 1])
