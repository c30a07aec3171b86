import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate, special
from scipy import stats as sps

from vaxsignal.errors import ConstantInput, LengthMismatch, RankDeficient, TooFewRows
from vaxsignal.stats import betainc, ols, pearson_r, t_isf, t_sf, with_intercept


def t_tail_by_quadrature(t, df):
    """Two-sided tail of Student's t by integrating its density."""
    logc = special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * math.log(df * math.pi)
    dens = lambda u: math.exp(logc - (df + 1) / 2 * math.log1p(u * u / df))
    body, _ = integrate.quad(dens, 0.0, abs(t), epsabs=1e-14, epsrel=1e-13, limit=200)
    return 1.0 - 2.0 * body


def normal_equations(X, y):
    n, k = X.shape
    XtX = X.T @ X
    beta = np.linalg.solve(XtX, X.T @ y)
    resid = y - X @ beta
    s2 = resid @ resid / (n - k)
    se = np.sqrt(np.diag(s2 * np.linalg.inv(XtX)))
    p = 2 * sps.t.sf(np.abs(beta / se), n - k)
    return beta, se, p


class TestTDistribution:
    def test_center_and_infinity(self):
        for df in (1, 2, 7.5, 100):
            assert t_sf(0.0, df) == 1.0
            assert t_sf(math.inf, df) == 0.0
        assert t_sf(1e8, 3) < 1e-20

    def test_reference_value(self):
        assert t_sf(2.0, 10) == pytest.approx(t_tail_by_quadrature(2.0, 10), abs=1e-12)
        assert round(t_sf(2.0, 10), 4) == 0.0734

    @pytest.mark.parametrize("df", [1, 2, 3, 5, 10, 30, 120])
    @pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 2.0, 3.5, 7.0, 10.0])
    def test_against_quadrature(self, t, df):
        assert t_sf(t, df) == pytest.approx(t_tail_by_quadrature(t, df), abs=1e-10)

    def test_cauchy_closed_form(self):
        for t in (0.3, 1.0, 4.0):
            assert t_sf(t, 1) == pytest.approx(1 - 2 * math.atan(t) / math.pi, abs=1e-14)

    def test_symmetric(self):
        assert t_sf(-2.3, 9) == t_sf(2.3, 9)

    @given(st.floats(1e-6, 1.0), st.integers(1, 200))
    def test_isf_inverts(self, p, df):
        assert t_sf(t_isf(p, df), df) == pytest.approx(p, rel=1e-9, abs=1e-14)

    def test_betainc_matches_scipy(self):
        for a, b, x in [(0.5, 0.5, 0.3), (5, 0.5, 0.9), (60, 0.5, 0.99), (2, 3, 0.0), (2, 3, 1.0)]:
            assert betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-13)


class TestPearson:
    def test_perfect(self):
        assert pearson_r([1, 2, 3], [2, 4, 6]).r == pytest.approx(1.0)
        assert pearson_r([1, 2, 3], [3, 2, 1]).r == pytest.approx(-1.0)
        assert pearson_r([1, 2, 3], [2, 4, 6]).p_value == 0.0

    def test_hand_value(self):
        # sums of squares 5 and 5, cross product 4
        res = pearson_r([1, 2, 3, 4], [1, 3, 2, 4])
        assert res.r == pytest.approx(0.8, abs=1e-15)
        assert res.p_value == pytest.approx(0.2, abs=1e-12)

    def test_matches_scipy(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(5, 60))
            x, y = rng.standard_normal(n), rng.standard_normal(n)
            ref = sps.pearsonr(x, y)
            res = pearson_r(x, y)
            assert res.r == pytest.approx(ref.statistic, abs=1e-12)
            assert res.p_value == pytest.approx(ref.pvalue, abs=1e-10)

    def test_df_offset_and_one_sided(self):
        x = np.arange(12.0)
        y = np.sin(x)
        two = pearson_r(x, y)
        one = pearson_r(x, y, one_sided=True)
        assert one.p_value == pytest.approx(two.p_value / 2)
        n1 = pearson_r(x, y, df_offset=1)
        t = n1.r * math.sqrt(11 / (1 - n1.r ** 2))
        assert n1.p_value == pytest.approx(t_sf(t, 11), abs=1e-14)

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            pearson_r([1, 2, 3], [1, 2])
        with pytest.raises(TooFewRows):
            pearson_r([1, 2], [1, 2])
        with pytest.raises(ConstantInput):
            pearson_r([1, 1, 1], [1, 2, 3])

    @settings(max_examples=80)
    @given(st.integers(0, 10_000), st.floats(0.1, 100), st.floats(-50, 50), st.floats(0.1, 100))
    def test_symmetry_and_affine(self, seed, a, b, c):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal(15), rng.standard_normal(15)
        r = pearson_r(x, y)
        assert 0.0 <= r.p_value <= 1.0 and abs(r.r) <= 1.0
        assert pearson_r(y, x).r == pytest.approx(r.r, abs=1e-12)
        assert pearson_r(a * x + b, c * y - b).r == pytest.approx(r.r, abs=1e-9)
        assert pearson_r(-a * x, y).r == pytest.approx(-r.r, abs=1e-9)


class TestOls:
    def test_exact_fit(self):
        x = np.array([0.0, 1, 2, 3])
        fit = ols(with_intercept(x), 2 * x + 1)
        assert fit.coefficients == pytest.approx([1, 2], abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0)

    def test_constant_response(self):
        fit = ols(with_intercept(np.arange(6.0)), np.full(6, 4.0))
        assert fit.coefficients[1] == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == 0.0

    def test_random_instance_against_normal_equations(self):
        rng = np.random.default_rng(20)
        X = with_intercept(rng.standard_normal(20), rng.standard_normal(20))
        y = X @ [1.0, -2.0, 0.5] + 0.3 * rng.standard_normal(20)
        fit = ols(X, y)
        beta, se, p = normal_equations(X, y)
        assert np.allclose(fit.coefficients, beta, atol=1e-10)
        assert np.allclose(fit.std_errors, se, atol=1e-10)
        assert np.allclose(fit.p_values, p, atol=1e-10)

    def test_errors(self):
        x = np.arange(5.0)
        with pytest.raises(RankDeficient):
            ols(np.column_stack([np.ones(5), x, 2 * x]), x)
        with pytest.raises(TooFewRows):
            ols(np.ones((2, 2)), np.ones(2))
        with pytest.raises(LengthMismatch):
            ols(np.ones((5, 1)), np.ones(4))

    @settings(max_examples=60)
    @given(st.integers(0, 10_000), st.integers(5, 40), st.integers(1, 4))
    def test_residuals_orthogonal(self, seed, n, k):
        assume(n > k + 1)
        rng = np.random.default_rng(seed)
        X = with_intercept(*rng.standard_normal((k, n)) * 10.0)
        y = rng.standard_normal(n) * 100.0
        fit = ols(X, y)
        scale = np.linalg.norm(X, axis=0) * np.linalg.norm(y)
        assert np.all(np.abs(X.T @ fit.residuals) < 1e-8 * scale)
        assert 0.0 <= fit.r_squared <= 1.0

    @settings(max_examples=60)
    @given(st.integers(0, 10_000), st.integers(4, 50))
    def test_single_regressor_matches_pearson(self, seed, n):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(n)
        y = 0.4 * x + rng.standard_normal(n)
        fit = ols(with_intercept(x - x.mean()), y)
        r = pearson_r(x, y)
        assert fit.p_values[1] == pytest.approx(r.p_value, abs=1e-9)
        assert fit.r_squared == pytest.approx(r.r ** 2, abs=1e-9)
