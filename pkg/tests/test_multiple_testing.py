import numpy as np
import pytest
from hypothesis import given, strategies as st
from statsmodels.stats.multitest import multipletests

from fabcorr.exceptions import ConfigError
from fabcorr.multiple_testing import DecisionSet, evaluate, reject_bh, reject_fixed

p_lists = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60)


def test_fixed_examples():
    assert list(reject_fixed([0.01, 0.2], 0.05).rejected) == [True, False]
    assert not reject_fixed(np.ones(5), 0.05).rejected.any()
    assert list(reject_fixed([0.049999, 0.05], 0.05).rejected) == [True, False]
    with pytest.raises(ConfigError):
        reject_fixed([0.1], 1.0)


def test_bh_examples():
    dec = reject_bh([0.01, 0.02, 0.04, 0.5], 0.05)
    assert list(dec.rejected) == [True, True, False, False]
    assert dec.threshold_used == pytest.approx(0.025)
    assert dec.procedure == "bh"
    assert reject_bh(np.zeros(4), 0.05).rejected.all()
    assert not reject_bh(np.ones(4), 0.05).rejected.any()
    assert reject_bh(np.ones(4), 0.05).threshold_used == 0.0


@given(p_lists, st.sampled_from([0.01, 0.05, 0.1, 0.2]))
def test_bh_matches_statsmodels(p, q):
    ours = reject_bh(p, q).rejected
    ref = multipletests(p, alpha=q, method="fdr_bh")[0]
    assert np.array_equal(ours, ref)


@given(p_lists, st.floats(0.001, 0.5))
def test_bh_is_a_down_set(p, q):
    p = np.array(p)
    rejected = reject_bh(p, q).rejected
    if rejected.any():
        assert np.all(rejected[p <= p[rejected].max()])


@given(p_lists, st.randoms(use_true_random=False))
def test_bh_permutation_equivariant(p, random):
    p = np.array(p)
    perm = np.array(random.sample(range(p.size), p.size))
    assert np.array_equal(reject_bh(p, 0.1).rejected[perm], reject_bh(p[perm], 0.1).rejected)


@given(p_lists)
def test_bh_nested_in_level(p):
    small = reject_bh(p, 0.05).rejected
    large = reject_bh(p, 0.2).rejected
    assert np.all(large[small])


def test_evaluate_definitions():
    truth = np.array([True, True, False, False])
    perfect = evaluate(DecisionSet(truth.copy(), "fixed_alpha", 0.05, 0.05), truth)
    assert (perfect.power, perfect.type1, perfect.observed_fdr) == (1.0, 0.0, 0.0)
    nothing = evaluate(DecisionSet(np.zeros(4, bool), "fixed_alpha", 0.05, 0.05), truth)
    assert (nothing.power, nothing.type1, nothing.observed_fdr) == (0.0, 0.0, 0.0)

    truth = np.array([True] * 8 + [False] * 4)
    rejected = np.array([True] * 8 + [True, True, False, False])
    report = evaluate(DecisionSet(rejected, "bh", 0.1, 0.1), truth)
    assert report.observed_fdr == pytest.approx(0.2)
    for row in report.confusion.values():
        assert row["reject"] + row["not_reject"] == pytest.approx(1.0, abs=1e-12)


def test_evaluate_without_alternatives():
    report = evaluate(DecisionSet(np.array([True, False]), "fixed_alpha", 0.05, 0.05),
                      np.array([False, False]))
    assert report.power is None
    assert report.type1 == 0.5
    assert report.confusion["alternative"]["reject"] is None
