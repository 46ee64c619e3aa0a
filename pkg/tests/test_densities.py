import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate
from scipy import stats

from scorelab.densities import (
    DensityModel,
    Logistic,
    Mixture,
    Normal,
    TwoPieceGamma,
    class_p_diagnostics,
    from_dict,
    log_derivatives,
    logderivs_from_ratios,
    mixture,
    pdf,
    ratios_from_logderivs,
    sample,
)
from scorelab.errors import DensityZeroAtPoint, InvalidWeights, SpecificationError
from scorelab.grammar import format_density, parse_density

from .conftest import PROPER_DENSITIES

ALL_DENSITIES = PROPER_DENSITIES + [
    TwoPieceGamma(0.3),
    mixture([0.4, 0.6], [TwoPieceGamma(0.5), Normal(1.0, 2.0)]),
    mixture([1.0], [Normal(2.0, 0.5)]),
]


class CauchyStub(DensityModel):
    """Heavy-tailed test density with tails ~ x**-2."""

    def logpdf(self, x):
        return -np.log(np.pi) - np.log1p(np.asarray(x, dtype=float) ** 2)

    def _slopes(self, x):
        u = 1.0 + x * x
        return np.stack([-2 * x / u, (2 * x * x - 2) / u**2, 4 * x * (3 - x * x) / u**3, 12 * (x**4 - 6 * x * x + 1) / u**4])

    def cdf(self, x):
        return 0.5 + np.arctan(x) / np.pi

    mean = 0.0
    variance = 1.0

    def support(self):
        return (-1e6, 1e6)

    def _draw(self, rng, n):
        return np.tan(np.pi * (rng.random(n) - 0.5))

    def to_dict(self):
        return {"kind": "cauchy"}


class TestPdf:
    def test_standard_normal_at_zero(self):
        assert pdf(Normal(0, 1), 0.0) == pytest.approx(0.3989422804, abs=1e-10)

    def test_mixture_of_identical_components(self):
        assert pdf(mixture([0.5, 0.5], [Normal(0, 1), Normal(0, 1)]), 0.0) == pytest.approx(0.3989422804, abs=1e-10)

    def test_two_piece_gamma_vanishes_at_origin(self):
        assert pdf(TwoPieceGamma(0.3), 0.0) == 0.0

    @pytest.mark.parametrize("p", [Normal(1.0, 2.0), Logistic(-1.0, 0.5), TwoPieceGamma(0.3)])
    def test_matches_scipy(self, p):
        x = np.linspace(-8, 8, 41)
        if isinstance(p, Normal):
            ref = stats.norm(p.mu, p.sigma).pdf(x)
        elif isinstance(p, Logistic):
            ref = stats.logistic(p.location, p.scale).pdf(x)
        else:
            g = stats.gamma(6).pdf
            ref = np.where(x >= 0, p.alpha * g(x), (1 - p.alpha) * g(-x))
        assert np.allclose(pdf(p, x), ref, rtol=1e-12, atol=1e-300)

    @pytest.mark.parametrize("p", ALL_DENSITIES, ids=format_density)
    def test_normalized(self, p):
        # QUADPACK is independent of the package's own integrator.
        lo, hi = p.support()
        total, _ = sp_integrate.quad(lambda x: float(p.pdf(x)), lo, hi, points=p.breakpoints(), limit=500, epsabs=1e-12)
        assert total == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("p", ALL_DENSITIES, ids=format_density)
    def test_cdf_is_integral_of_pdf(self, p):
        lo, _ = p.support()
        for x in (-1.3, 0.7, 2.0):
            ref, _ = sp_integrate.quad(lambda t: float(p.pdf(t)), lo, x, points=[b for b in p.breakpoints() if lo < b < x], limit=500)
            assert float(p.cdf(x)) == pytest.approx(ref, abs=1e-9)

    def test_moments(self):
        for p in ALL_DENSITIES:
            lo, hi = p.support()
            pts = p.breakpoints()
            m, _ = sp_integrate.quad(lambda x: x * float(p.pdf(x)), lo, hi, points=pts, limit=500)
            v, _ = sp_integrate.quad(lambda x: (x - m) ** 2 * float(p.pdf(x)), lo, hi, points=pts, limit=500)
            assert p.mean == pytest.approx(m, abs=1e-8)
            assert p.variance == pytest.approx(v, rel=1e-8)


class TestLogDerivatives:
    def test_normal(self):
        z = log_derivatives(Normal(0, 1), 2.0, order=2)
        assert z[1] == -2.0
        assert z[2] == -1.0

    def test_logistic_mode(self):
        assert log_derivatives(Logistic(0, 1), 0.0, order=1)[1] == 0.0

    def test_symmetric_mixture(self):
        z = log_derivatives(mixture([0.5, 0.5], [Normal(-1, 1), Normal(1, 1)]), 0.0, order=1)
        assert z[1] == pytest.approx(0.0, abs=1e-15)

    def test_zero_density_raises(self):
        with pytest.raises(DensityZeroAtPoint):
            log_derivatives(TwoPieceGamma(0.3), 0.0)

    def test_two_piece_gamma_away_from_zero(self):
        z = log_derivatives(TwoPieceGamma(0.3), 2.0)
        assert z[1] == pytest.approx(5 / 2 - 1)
        assert z[0] == pytest.approx(math.log(0.3 * 32 * math.exp(-2) / 120))

    @pytest.mark.parametrize("p", PROPER_DENSITIES, ids=format_density)
    def test_chain_matches_central_differences(self, p):
        x = np.linspace(-5, 5, 101)
        h = 1e-5
        z = p.logderivs(x)
        zp = p.logderivs(x + h)
        zm = p.logderivs(x - h)
        for j in range(4):
            fd = (zp[j] - zm[j]) / (2 * h)
            assert np.allclose(fd, z[j + 1], rtol=1e-4, atol=1e-6), j

    def test_mixture_far_tail_is_finite(self):
        # Components differ by exp(-2000) out here; naive p'/p would be 0/0.
        p = mixture([0.5, 0.5], [Normal(0, 3), Normal(0, 0.5)])
        z = p.logderivs(np.array([36.0, -50.0]))
        assert np.all(np.isfinite(z))
        assert z[1][0] == pytest.approx(-36.0 / 9.0)

    def test_bell_polynomials_roundtrip(self, rng):
        z = rng.normal(size=(4, 50))
        assert np.allclose(logderivs_from_ratios(ratios_from_logderivs(z)), z, atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(
        a=st.floats(0.01, 0.99),
        m1=st.floats(-3, 3),
        s1=st.floats(0.3, 3),
        m2=st.floats(-3, 3),
        s2=st.floats(0.3, 3),
    )
    def test_convex_combination_bound(self, a, m1, s1, m2, s2):
        # |(ln r)'| <= max(|p'|/p, |q'|/q) for any two-component mixture.
        p, q = Normal(m1, s1), Logistic(m2, s2)
        r = mixture([a, 1 - a], [p, q])
        x = np.linspace(-10, 10, 201)
        lhs = np.abs(r.logderivs(x, 1)[1])
        rhs = np.maximum(np.abs(p.logderivs(x, 1)[1]), np.abs(q.logderivs(x, 1)[1]))
        assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-12)


class TestMixture:
    def test_degenerate_mixture_equals_component(self):
        x = np.linspace(-6, 6, 25)
        assert np.allclose(mixture([1.0], [Normal(0, 1)]).pdf(x), Normal(0, 1).pdf(x), rtol=1e-15)

    def test_normalization_with_own_integrator(self):
        from scorelab.numerics import integrate

        p = mixture([0.3, 0.7], [Normal(0, 1), Normal(3, 2)])
        lo, hi = p.support()
        assert integrate(p.pdf, lo, hi, tol=1e-10, breakpoints=p.breakpoints()) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("weights", [[0.5, 0.6], [-0.1, 1.1], [1.0 + 1e-10, 0.0], [0.5]])
    def test_invalid_weights(self, weights):
        with pytest.raises(InvalidWeights):
            mixture(weights, [Normal(0, 1), Normal(1, 1)])

    def test_weight_tolerance(self):
        mixture([0.3, 0.7 + 5e-13], [Normal(0, 1), Normal(1, 1)])

    def test_zero_weight_component_is_ignored(self):
        p = mixture([1.0, 0.0], [Normal(0, 1), Normal(100, 1)])
        assert np.allclose(p.logderivs(np.array([0.5, 3.0])), Normal(0, 1).logderivs(np.array([0.5, 3.0])))
        assert p.support() == Normal(0, 1).support()

    def test_immutable(self):
        p = mixture([0.5, 0.5], [Normal(0, 1), Normal(1, 1)])
        with pytest.raises(AttributeError):
            p.weights = (1.0, 0.0)


class TestSample:
    def test_mean_converges(self):
        x = sample(Normal(0, 1), 10**5, seed=1)
        assert abs(x.mean()) < 3 / math.sqrt(10**5)

    def test_deterministic(self):
        p = mixture([0.2, 0.8], [Logistic(0, 1), Normal(2, 0.5)])
        a = sample(p, 1000, seed=7)
        b = sample(p, 1000, seed=7)
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, sample(p, 1000, seed=8))

    def test_mixture_proportions(self):
        x = sample(mixture([0.5, 0.5], [Normal(-5, 1), Normal(5, 1)]), 10**5, seed=3)
        assert abs(np.mean(x < 0) - 0.5) < 0.01

    @pytest.mark.parametrize("p", ALL_DENSITIES, ids=format_density)
    def test_distribution_matches_cdf(self, p):
        x = sample(p, 20000, seed=11)
        assert stats.kstest(x, lambda t: p.cdf(t)).pvalue > 1e-3
        assert x.mean() == pytest.approx(p.mean, abs=5 * p.std / math.sqrt(x.size))

    def test_rejects_empty(self):
        with pytest.raises(SpecificationError):
            sample(Normal(0, 1), 0, seed=1)


class TestClassDiagnostics:
    probes = [-40, -30, -20, -15, -10, -1, 0, 1, 10, 15, 20, 30, 40]

    @pytest.mark.parametrize("p", PROPER_DENSITIES, ids=format_density)
    def test_members_pass(self, p):
        report = class_p_diagnostics(p, self.probes)
        assert report.passed, report.failures
        assert report.heuristic

    def test_two_piece_gamma_fails_positivity(self):
        report = class_p_diagnostics(TwoPieceGamma(0.5), self.probes)
        assert not report.positivity
        assert report.decay and report.ratio_growth
        assert not TwoPieceGamma(0.5).in_class_p

    def test_heavy_tails_fail_decay(self):
        report = class_p_diagnostics(CauchyStub(), self.probes)
        assert report.positivity
        assert not report.decay

    def test_needs_far_probes(self):
        with pytest.raises(SpecificationError):
            class_p_diagnostics(Normal(0, 1), [-1, 0, 1])

    def test_report_serializes(self):
        d = class_p_diagnostics(Normal(0, 1), self.probes).to_dict()
        assert d["passed"] and d["ratio_exponent"] == 6.0 and d["heuristic"]


class TestGrammar:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("normal:0:1", Normal(0, 1)),
            ("logistic:1:2", Logistic(1, 2)),
            ("huber:0.3", TwoPieceGamma(0.3)),
            ("mix:0.5:normal:-1:1:0.5:normal:1:1", mixture([0.5, 0.5], [Normal(-1, 1), Normal(1, 1)])),
            ('{"kind":"normal","mu":0,"sigma":1}', Normal(0, 1)),
        ],
    )
    def test_parse(self, text, expected):
        assert parse_density(text) == expected

    @pytest.mark.parametrize("text", ["normal:0", "gauss:0:1", "normal:a:1", "mix:0.5:normal:0:1:0.5", "normal:0:-1", "mix:0.5:normal:0:1:0.6:normal:1:1"])
    def test_parse_errors(self, text):
        with pytest.raises(SpecificationError):
            parse_density(text)

    @pytest.mark.parametrize("p", ALL_DENSITIES, ids=format_density)
    def test_roundtrip(self, p):
        assert parse_density(format_density(p)) == p
        assert from_dict(p.to_dict()) == p

    def test_nested_mixture_uses_json(self):
        inner = mixture([0.5, 0.5], [Normal(0, 1), Normal(2, 1)])
        outer = Mixture((0.4, 0.6), (inner, Logistic(0, 1)))
        assert format_density(outer).startswith("{")
        assert parse_density(format_density(outer)) == outer
