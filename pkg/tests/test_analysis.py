import math

import numpy as np
import pytest

from scorelab.analysis import (
    c_p_spread,
    divergence,
    euler_residual,
    expected_score,
    fisher_divergence,
    kl_divergence,
    propriety_scan,
    standard_family,
)
from scorelab.densities import Normal, TwoPieceGamma, mixture
from scorelab.errors import MissingPartials
from scorelab.scores import LocalScore, get_score, hyvarinen, log_cosh, logarithmic, power_score

PROPER = ["ls", "hs", "lcs", "power:4:-1", "qs", "sphs"]

# Only the y1^2 half of the Hyvarinen score: improper.
BROKEN = LocalScore(
    lambda x, y0, y1, y2: y1 * y1,
    "broken",
    d0=lambda *a: 0.0,
    d1=lambda x, y0, y1, y2: 2.0 * y1,
    d2=lambda *a: 0.0,
)
NEGATED_TAIL = LocalScore(
    lambda x, y0, y1, y2: -y1 * y1 - 2.0 * y2,
    "negated-hs",
    d0=lambda *a: 0.0,
    d1=lambda x, y0, y1, y2: -2.0 * y1,
    d2=lambda *a: -2.0,
)


def kl_normal(s, t):
    r = s * s / (t * t)
    return 0.5 * (r - 1 - math.log(r))


def fi_normal(s, t):
    return (1 - s * s / (t * t)) ** 2 / (s * s)


class TestExpectedScore:
    def test_log_score_entropy(self):
        assert expected_score(logarithmic(), Normal(0, 1), Normal(0, 1)) == pytest.approx(0.5 * math.log(2 * math.pi * math.e), abs=1e-9)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    def test_hyvarinen_fisher_information(self, sigma):
        p = Normal(0, sigma)
        assert expected_score(hyvarinen(), p, p) == pytest.approx(-1 / sigma**2, abs=1e-9)

    def test_two_piece_gamma_family_is_indistinguishable(self):
        # (ln p)' = 5/x - sign(x) whatever alpha is.
        for a in (0.3, 0.7):
            p = TwoPieceGamma(a)
            assert fisher_divergence(p, TwoPieceGamma(0.5)) == pytest.approx(0.0, abs=1e-10)


class TestDivergence:
    @pytest.mark.parametrize("s, t", [(2, 1), (1, 2), (0.5, 3)])
    def test_normal_closed_forms(self, s, t):
        p, q = Normal(0, s), Normal(0, t)
        assert kl_divergence(p, q) == pytest.approx(kl_normal(s, t), abs=1e-6)
        assert fisher_divergence(p, q) == pytest.approx(fi_normal(s, t), abs=1e-6)
        assert divergence(logarithmic(), p, q) == pytest.approx(kl_normal(s, t), abs=1e-6)
        assert divergence(hyvarinen(), p, q) == pytest.approx(fi_normal(s, t), abs=1e-6)

    def test_examples(self):
        assert divergence(logarithmic(), Normal(0, 2), Normal(0, 1)) == pytest.approx(0.80685, abs=1e-5)
        assert divergence(hyvarinen(), Normal(0, 2), Normal(0, 1)) == pytest.approx(2.25, abs=1e-6)

    def test_self_divergence(self):
        p = standard_family()[-1]
        assert divergence(hyvarinen(), p, p) == pytest.approx(0.0, abs=1e-9)
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-12)

    def test_score_divergence_identities(self, family):
        for p in family:
            for q in family:
                assert divergence(hyvarinen(), p, q) == pytest.approx(fisher_divergence(p, q), abs=1e-7)
                assert divergence(logarithmic(), p, q) == pytest.approx(kl_divergence(p, q), abs=1e-7)

    @pytest.mark.parametrize("name", PROPER)
    def test_nonnegative(self, name, family):
        s = get_score(name)
        for p in family:
            for q in family:
                assert divergence(s, p, q) >= -1e-7

    def test_two_piece_gamma_counterexample(self):
        p, q = TwoPieceGamma(0.3), TwoPieceGamma(0.7)
        assert fisher_divergence(p, q) <= 1e-8
        assert kl_divergence(p, q) == pytest.approx(0.4 * math.log(7 / 3), abs=1e-9)


class TestProprietyScan:
    @pytest.mark.parametrize("name", ["ls", "hs", "lcs", "power:4:-1"])
    def test_strictly_proper_on_family(self, name, family):
        r = propriety_scan(get_score(name), family)
        assert r.min_margin >= -1e-7
        assert r.strictly_proper
        assert len(r.pairs) == len(family) ** 2

    def test_hyvarinen_small_family(self):
        fam = [Normal(0, 1), Normal(1, 1), Normal(0, 2), mixture([0.5, 0.5], [Normal(-1, 1), Normal(1, 1)])]
        r = propriety_scan(hyvarinen(), fam)
        assert r.min_margin >= -1e-7 and not r.strict_violations

    @pytest.mark.parametrize("s", [BROKEN, NEGATED_TAIL], ids=lambda s: s.label)
    def test_improper_scores(self, s, family):
        r = propriety_scan(s, family)
        assert r.min_margin < 0
        assert not r.proper

    def test_negated_tail_margin_is_minus_fisher(self, family):
        r = propriety_scan(NEGATED_TAIL, family[:3])
        for e, (p, q) in zip(r.pairs, [(p, q) for p in family[:3] for q in family[:3]]):
            assert e["margin"] == pytest.approx(0.0 if p is q else -fisher_divergence(p, q), abs=1e-7)

    def test_single_density(self):
        r = propriety_scan(hyvarinen(), [Normal(0, 1)])
        assert len(r.pairs) == 1 and r.min_margin == 0.0 and r.strictly_proper

    def test_min_margin_is_minimum(self, family):
        r = propriety_scan(log_cosh(), family)
        assert r.min_margin == min(e["margin"] for e in r.pairs)

    def test_threads_are_bit_stable(self, family):
        a = propriety_scan(log_cosh(), family, threads=1).to_dict()
        b = propriety_scan(log_cosh(), family, threads=4).to_dict()
        assert a == b

    def test_empty_family(self):
        with pytest.raises(ValueError):
            propriety_scan(hyvarinen(), [])

    def test_nonlocal_scores(self, family):
        for name in ("qs", "sphs"):
            assert propriety_scan(get_score(name), family).strictly_proper


class TestEuler:
    def test_hyvarinen_is_zero(self, family):
        for p in family:
            r = euler_residual(hyvarinen(), p)
            assert r.c_p_estimate == pytest.approx(0.0, abs=1e-9)
            assert np.max(np.abs(r.values)) <= 1e-4

    def test_log_score_is_minus_one(self, family):
        for p in family:
            r = euler_residual(logarithmic(), p)
            assert np.allclose(r.values, -1.0, atol=1e-6)
            assert r.c_p_estimate == pytest.approx(-1.0, abs=1e-9)

    @pytest.mark.parametrize("s", [log_cosh(), power_score(4, -1.0), power_score(6, -0.5)], ids=lambda s: s.label)
    def test_constant_for_proper_scores(self, s, family):
        for p in family:
            assert euler_residual(s, p).max_abs_deviation <= 1e-4

    def test_broken_score_not_constant(self):
        r = euler_residual(BROKEN, Normal(0, 1))
        assert r.max_abs_deviation > 0.1
        # -(1/p)(2 p z1)' = -2 (z2 + z1^2) = 2 - 2 x^2 for a standard normal.
        assert np.allclose(r.values, 2.0 - 2.0 * r.x**2, atol=1e-5)

    @pytest.mark.parametrize("s", [hyvarinen(), logarithmic(), log_cosh(), power_score(4, -1.0)], ids=lambda s: s.label)
    def test_c_independent_of_density(self, s, family):
        assert c_p_spread(s, family) <= 1e-5

    def test_requires_partials(self):
        with pytest.raises(MissingPartials):
            euler_residual(LocalScore(lambda *a: 0.0, "bare"), Normal(0, 1))

    def test_custom_grid(self):
        r = euler_residual(hyvarinen(), Normal(0, 1), x_grid=[-1.0, 0.0, 1.0])
        assert r.values.shape == (3,)
        assert r.to_dict()["step"] == 2e-3
