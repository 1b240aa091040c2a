import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from fabcorr.corr_stats import (
    DataMatrix,
    fisher_transform,
    index_to_pair,
    n_pairs,
    pair_arrays,
    pair_to_index,
    pearson_correlation_matrix,
    standard_normal_cdf,
    t_statistic,
    umpu_p_value,
    z_statistics,
)
from fabcorr.exceptions import DegenerateInputError


def test_four_point_correlation():
    x = np.array([[1, 2], [2, 3], [3, 5], [4, 4]], dtype=float)
    corr = pearson_correlation_matrix(DataMatrix(x))
    assert corr[0, 1] == pytest.approx(0.8, abs=1e-14)


def test_duplicate_and_orthogonal_columns():
    a = np.array([1.0, -1.0, 1.0, -1.0])
    b = np.array([1.0, 1.0, -1.0, -1.0])
    corr = pearson_correlation_matrix(DataMatrix(np.column_stack([a, a, b])))
    assert corr[0, 1] == 1.0
    assert corr[0, 2] == 0.0


def test_correlation_matrix_shape_properties(rng):
    x = rng.standard_normal((30, 7))
    corr = pearson_correlation_matrix(DataMatrix(x))
    assert np.array_equal(corr, corr.T)
    assert np.all(np.diag(corr) == 1.0)
    assert np.all(np.abs(corr) <= 1.0)
    assert np.allclose(corr, np.corrcoef(x, rowvar=False), atol=1e-13)


def test_zero_variance_column_is_named():
    x = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
    with pytest.raises(DegenerateInputError, match="V1"):
        DataMatrix(x)
    with pytest.raises(DegenerateInputError, match="flat"):
        DataMatrix(x, ("a", "flat"))


@pytest.mark.parametrize("values", [np.ones((3, 2)), np.array([[1.0, np.nan]] * 5)])
def test_data_matrix_rejects_degenerate(values):
    with pytest.raises(DegenerateInputError):
        DataMatrix(values)


def test_fisher_examples():
    assert fisher_transform(0.0) == 0.0
    assert fisher_transform(0.5) == pytest.approx(0.549306, abs=5e-7)
    assert fisher_transform(0.3) == pytest.approx(0.309520, abs=5e-7)
    assert fisher_transform(-0.3) == pytest.approx(-0.309520, abs=5e-7)
    assert fisher_transform(0.5) == pytest.approx(0.5 * math.log(3.0), rel=1e-15)


def test_fisher_clamps_and_rejects():
    assert math.isfinite(fisher_transform(1.0))
    assert fisher_transform(-1.0) == -fisher_transform(1.0)
    with pytest.raises(ValueError):
        fisher_transform(float("nan"))
    with pytest.raises(ValueError):
        fisher_transform(1.5)


@given(st.floats(-0.999, 0.999), st.floats(-0.999, 0.999))
def test_fisher_odd_and_increasing(a, b):
    assert fisher_transform(-a) == -fisher_transform(a)
    if a < b:
        assert fisher_transform(a) < fisher_transform(b)


def test_t_statistic():
    assert t_statistic(0.0, 10) == 0.0
    assert t_statistic(0.5, 11) == pytest.approx(1.732051, abs=5e-7)
    assert t_statistic(0.2, 20) > 0 > t_statistic(-0.2, 20)
    with pytest.raises(DegenerateInputError):
        t_statistic(1.0, 10)


def test_normal_cdf_against_mpmath():
    xs = np.concatenate([np.linspace(-38, 8, 400), [1.959964, 2.3, -2.3, 0.0]])
    ref = np.array([float(mpmath.ncdf(mpmath.mpf(float(x)))) for x in xs])
    assert np.max(np.abs(standard_normal_cdf(xs) - ref)) <= 1e-12
    assert standard_normal_cdf(0.0) == 0.5
    assert standard_normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)
    assert standard_normal_cdf(2.3) + standard_normal_cdf(-2.3) == pytest.approx(1.0, abs=1e-15)
    assert np.all(np.diff(standard_normal_cdf(np.linspace(-10, 10, 2001))) >= 0)


def test_umpu_examples():
    assert umpu_p_value(0.0, 50) == 1.0
    n = 103
    assert umpu_p_value(1.959964 / 10.0, n) == pytest.approx(0.05, abs=1e-6)
    z = 0.7 / 10.0
    assert umpu_p_value(z, n) == umpu_p_value(-z, n)


def test_umpu_matches_definition(rng):
    z = rng.normal(scale=0.2, size=200)
    s = z * np.sqrt(47.0)
    direct = 1 - np.abs(standard_normal_cdf(s) - standard_normal_cdf(-s))
    assert np.allclose(umpu_p_value(z, 50), direct, atol=1e-14)


@given(st.integers(2, 60).flatmap(lambda q: st.tuples(st.just(q), st.integers(0, n_pairs(q) - 1))))
def test_pair_index_bijection(qj):
    q, j = qj
    pair = index_to_pair(j, q)
    assert pair.w < pair.v
    assert pair_to_index(pair.w, pair.v, q) == j
    assert pair_to_index(pair.v, pair.w, q) == j


def test_pair_order_matches_triu():
    q = 9
    w, v = pair_arrays(q)
    assert [pair_to_index(a, b, q) for a, b in zip(w, v)] == list(range(n_pairs(q)))


def test_z_statistics_layout(rng):
    data = DataMatrix(rng.standard_normal((40, 6)))
    zs = z_statistics(data)
    assert zs.p == 15 and zs.n_eff == 40
    corr = np.corrcoef(data.values, rowvar=False)
    for pair in zs.pairs():
        assert zs.z_hat[pair.j] == pytest.approx(np.arctanh(corr[pair.w, pair.v]), abs=1e-12)


@pytest.mark.parametrize("n", [30, 100])
@pytest.mark.parametrize("rho", [0.0, 0.5])
def test_fisher_variance_is_one_over_n_minus_3(n, rho):
    rng = np.random.default_rng(n * 10 + int(rho * 10))
    cov = np.array([[1.0, rho], [rho, 1.0]])
    x = rng.multivariate_normal([0, 0], cov, size=(2000, n))
    xc = x - x.mean(axis=1, keepdims=True)
    r = (xc[..., 0] * xc[..., 1]).sum(1) / np.sqrt((xc[..., 0] ** 2).sum(1) * (xc[..., 1] ** 2).sum(1))
    sd = np.std(fisher_transform(r), ddof=1)
    assert sd == pytest.approx(1 / np.sqrt(n - 3), rel=0.15)
