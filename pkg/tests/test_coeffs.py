import itertools
import math

import numpy as np
import pytest

from gvx.coeffs import (ModelParams, build_beta, build_moments, diff_weights,
                        get_table, lambda_star, scaled_moments,
                        sqrt_n_mixture_weights, u2_moments)
from gvx.errors import DomainError
from gvx.specfun import log_gamma


def beta_brute(alpha, n, k):
    """Composition-sum enumeration, the independent oracle for build_beta."""
    tot = 0.0
    for comp in itertools.product(range(k + 1), repeat=n):
        if sum(comp) == k:
            p = 1.0
            for ki in comp:
                p *= math.gamma((alpha + ki) / 2) / math.factorial(ki)
            tot += p
    return tot / (2.0 * math.gamma(alpha)) ** n


class TestModelParams:
    def test_validation(self):
        with pytest.raises(DomainError):
            ModelParams(alpha=0.0, n=3)
        with pytest.raises(DomainError):
            ModelParams(alpha=1.0, n=0)
        with pytest.raises(DomainError):
            ModelParams(alpha=1.0, n=1).require_variance()


class TestBeta:
    @pytest.mark.parametrize("alpha,n", [(1.0, 2), (0.5, 3), (2.0, 2),
                                         (1.0, 1), (3.0, 3)])
    def test_vs_brute_force(self, alpha, n):
        lb = build_beta(ModelParams(alpha=alpha, n=n), 6)
        for k in range(7):
            assert math.exp(lb[k]) == pytest.approx(
                beta_brute(alpha, n, k), rel=1e-12)

    def test_k0_closed_form(self):
        alpha, n = 1.7, 4
        lb = build_beta(ModelParams(alpha=alpha, n=n), 0)
        expected = n * (log_gamma(alpha / 2)
                        - math.log(2.0) - log_gamma(alpha))
        assert lb[0] == pytest.approx(expected, abs=1e-12)

    def test_n1_no_convolution(self):
        alpha = 2.3
        lb = build_beta(ModelParams(alpha=alpha, n=1), 10)
        for k in range(11):
            expected = (log_gamma((alpha + k) / 2) - math.log(2.0)
                        - log_gamma(alpha) - log_gamma(k + 1.0))
            assert lb[k] == pytest.approx(expected, abs=1e-12)


class TestMoments:
    def test_mu_closed_forms(self):
        t = build_moments(ModelParams(alpha=1.0, n=2), 10)
        assert t.mu(0) == pytest.approx(math.pi / 2, abs=1e-14)
        # tan Phi uniform on (0,1) for the exponential pair:
        # mu_2 = 4 int (1+t^2)^-2 = 1 + pi/2
        assert t.mu(2) == pytest.approx(1.0 + math.pi / 2, rel=1e-13)

    def test_n1_degenerate(self):
        t = build_moments(ModelParams(alpha=2.3, n=1), 60)
        assert np.max(np.abs(t.log_mu)) < 1e-11

    @pytest.mark.parametrize("alpha,n", [(0.5, 2), (1.0, 5), (2.0, 12),
                                         (4.0, 3), (3.0, 8)])
    def test_invariants(self, alpha, n):
        t = build_moments(ModelParams(alpha=alpha, n=n), 400)
        assert np.all(np.diff(t.log_mu) >= -1e-11)        # mu nondecreasing
        assert t.log_mu[0] >= -1e-11                      # mu >= 1
        assert np.all(np.diff(t.log_gamma_m) <= 1e-11)    # gamma nonincreasing
        assert t.log_gamma_m[0] <= 1e-11                  # gamma <= 1
        assert np.all(t.beta_sign == np.where(
            np.arange(401) % 2 == 0, 1, -1))

    @pytest.mark.parametrize("alpha,n", [(0.5, 3), (1.0, 5), (2.0, 8),
                                         (3.0, 12)])
    def test_decay_law(self, alpha, n):
        # least-squares slope of ln gamma_k against ln(an+k) ~ -(n-1)/2;
        # the asymptotic window scales with alpha n and n
        K = int(max(400, 60 * alpha * n + 150 * (n - 1)))
        t = build_moments(ModelParams(alpha=alpha, n=n), K)
        k = np.arange(K + 1)
        sel = k >= K // 2
        slope = np.polyfit(np.log(alpha * n + k[sel]),
                           t.log_gamma_m[sel], 1)[0]
        assert abs(slope + 0.5 * (n - 1)) < 0.15

    def test_mc_agreement(self, rng):
        alpha, n = 1.5, 4
        t = build_moments(ModelParams(alpha=alpha, n=n), 20)
        x = rng.gamma(alpha, size=(1_000_000, n))
        cos_phi = x.sum(axis=1) / np.sqrt(n * (x * x).sum(axis=1))
        for k in range(0, 13, 3):
            vals = cos_phi ** (alpha * n + k)
            se = vals.std(ddof=1) / math.sqrt(vals.size)
            assert abs(vals.mean() - t.gamma_m(k)) < 4 * se


class TestScaledMoments:
    def test_identity_at_one(self):
        t = build_moments(ModelParams(alpha=1.3, n=3), 20)
        assert np.allclose(scaled_moments(t, 1.0), t.log_mu)

    def test_moment_lambda_normalizes(self):
        p = ModelParams(alpha=1.3, n=3)
        t = build_moments(p, 20)
        lam = lambda_star(p)
        assert scaled_moments(t, lam)[0] == pytest.approx(0.0, abs=1e-12)

    def test_sqrt_n_gives_gamma(self):
        p = ModelParams(alpha=2.0, n=5)
        t = build_moments(p, 20)
        assert np.allclose(scaled_moments(t, math.sqrt(5)), t.log_gamma_m,
                           atol=1e-12)


class TestLambdaStar:
    def test_exponential_pair(self):
        assert lambda_star(ModelParams(alpha=1.0, n=2)) == pytest.approx(
            math.sqrt(math.pi / 2), rel=1e-14)

    def test_n1(self):
        assert lambda_star(ModelParams(alpha=0.7, n=1)) == pytest.approx(
            1.0, abs=1e-13)

    def test_self_consistency(self):
        p = ModelParams(alpha=1.0, n=10)
        t = build_moments(p, 4)
        assert lambda_star(p) == pytest.approx(
            math.exp(t.log_mu[0] / 10.0), rel=1e-13)


class TestDiffWeights:
    def test_first_weight_is_mu0(self):
        t = build_moments(ModelParams(alpha=1.0, n=2), 12)
        sm = scaled_moments(t, math.sqrt(2))
        dw = diff_weights(sm, 8)
        assert dw.values[0] == pytest.approx(math.pi / 4, abs=1e-14)

    def test_closed_form_delta1(self):
        # gamma_0 - gamma_1 = pi/4 - 1/sqrt(2) for the exponential pair
        t = build_moments(ModelParams(alpha=1.0, n=2), 12)
        dw = diff_weights(scaled_moments(t, math.sqrt(2)), 8)
        assert dw.values[1] == pytest.approx(
            math.pi / 4 - 1 / math.sqrt(2), abs=1e-14)

    def test_mc_delta1(self, rng):
        x = rng.gamma(1.0, size=(2_000_000, 2))
        cos_phi = x.sum(axis=1) / np.sqrt(2 * (x * x).sum(axis=1))
        vals = cos_phi ** 2 * (1 - cos_phi)
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        t = build_moments(ModelParams(alpha=1.0, n=2), 12)
        dw = diff_weights(scaled_moments(t, math.sqrt(2)), 4)
        assert abs(vals.mean() - dw.values[1]) < 4 * se

    @pytest.mark.parametrize("alpha,n", [(1.0, 3), (2.0, 5), (0.5, 2)])
    def test_nonnegative_at_sqrt_n(self, alpha, n):
        t = build_moments(ModelParams(alpha=alpha, n=n), 40)
        ddm = t.dd_moments(30)
        dw = diff_weights(scaled_moments(t, math.sqrt(n)), 30,
                          dd_values=(ddm.gamma_hi, ddm.gamma_lo))
        assert np.all(dw.values >= -1e-20)


class TestMixtureNormalization:
    @pytest.mark.parametrize("alpha,n", [(1.0, 3), (0.5, 5), (2.0, 4),
                                         (1.0, 10), (3.0, 10)])
    def test_weights_reach_one(self, alpha, n):
        t = get_table(alpha, n, 280)
        mw = sqrt_n_mixture_weights(t, abs_target=1e-9)
        assert np.all(mw.weights >= 0.0)
        assert mw.deficit + mw.abs_err < 1e-9
        partial = np.cumsum(mw.weights)
        assert np.all(np.diff(partial) >= -1e-18)
        assert partial[-1] <= 1.0 + 1e-12

    def test_partial_sums_monotone_n2(self):
        # n = 2: monotone increase to 1 (deficit target still reachable)
        t = get_table(1.0, 2, 280)
        mw = sqrt_n_mixture_weights(t, abs_target=1e-9)
        assert mw.deficit < 1e-9


class TestU2Moments:
    def test_k0(self):
        assert u2_moments(ModelParams(alpha=1.7, n=3), 0)[0] == pytest.approx(
            1.0, abs=1e-13)

    def test_exponential_pair_k1(self):
        # E U^2 = E (1+T^2)/2 with T uniform: 2/3
        v = u2_moments(ModelParams(alpha=1.0, n=2), 3)
        assert v[1] == pytest.approx(2.0 / 3.0, rel=1e-13)

    def test_n1_degenerate(self):
        v = u2_moments(ModelParams(alpha=0.7, n=1), 5)
        assert np.max(np.abs(v - 1.0)) < 1e-12

    def test_mc(self, rng):
        alpha, n = 2.0, 3
        x = rng.gamma(alpha, size=(1_000_000, n))
        u2 = (x * x).sum(axis=1) / x.sum(axis=1) ** 2
        v = u2_moments(ModelParams(alpha=alpha, n=n), 3)
        for k in [1, 2, 3]:
            vals = u2 ** k
            se = vals.std(ddof=1) / math.sqrt(vals.size)
            assert abs(vals.mean() - v[k]) < 4 * se
