import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pubmto import analysis as A

from oracles import auc_pairs, chi2_by_hand, welch_t


def test_cosine_examples():
    assert A.cosine([1, 0], [1, 0]) == 1.0
    assert A.cosine([1, 0], [0, 1]) == 0.0
    assert A.cosine([1, 1], [1, 0]) == pytest.approx(0.70711, abs=1e-5)
    assert A.cosine([0, 0], [1, 0]) == 0.0
    with pytest.raises(ValueError):
        A.cosine([1, 0], [1, 0, 0])


def test_diff_examples():
    assert A.diff_metric(0.130, 0.116) == pytest.approx(0.11382, abs=1e-5)
    assert A.diff_metric(0.138, 0.106) == pytest.approx(0.26230, abs=1e-5)
    assert A.diff_metric(0.4, 0.4) == 0.0
    assert A.diff_metric(0.3, -0.3) == math.inf


@settings(max_examples=50)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_diff_symmetric(a, b):
    assert A.diff_metric(a, b) == A.diff_metric(b, a)


def _s(method, auc, diff, ds="d", model="m"):
    return A.ExperimentSummary(ds, model, method, 0, auc, 0.0, 0.0, diff)


def test_pairwise_examples():
    pairs, dropped = A.pairwise_indicators([_s("A", 0.80, 0.1), _s("B", 0.79, 0.2)])
    assert sorted(pairs) == [(0, 1), (1, 0)] and dropped == 0
    pairs, dropped = A.pairwise_indicators([_s("A", 0.8, 0.1), _s("B", 0.8, 0.1)])
    assert pairs == [] and dropped == 2
    pairs, _ = A.pairwise_indicators([_s("A", 0.8, 0.1), _s("B", 0.7, 0.3), _s("C", 0.6, 0.2)])
    assert len(pairs) == 6


def test_pairwise_groups_and_antisymmetry():
    rng = np.random.default_rng(0)
    summ = [_s(m, rng.random(), rng.random(), ds=f"d{k % 2}") for k, m in enumerate("ABCDEF")]
    summ.append(_s("A", 0.5, 0.5, ds="other"))
    pairs, dropped = A.pairwise_indicators(summ)
    assert len(pairs) == 2 * (3 * 2) and dropped == 0
    # ordered pairs come in mirrored couples
    assert sorted(pairs) == sorted((1 - x, 1 - y) for x, y in pairs)


def test_confusion_and_chi2():
    assert A.confusion_matrix([(1, 1), (1, 0), (0, 0), (1, 1)]).tolist() == [[1, 0], [1, 2]]
    chi2, bucket = A.chi_square_2x2([[20, 10], [10, 20]])
    assert chi2 == pytest.approx(6.6667, abs=1e-4) and bucket == "<0.01"
    assert A.chi_square_2x2([[10, 10], [10, 10]]) == (0.0, ">=0.05")
    chi2, bucket = A.chi_square_2x2([[30, 0], [0, 30]])
    assert chi2 == pytest.approx(60.0) and bucket == "<0.001"
    with pytest.raises(A.UndefinedError):
        A.chi_square_2x2([[0, 0], [3, 4]])


@settings(max_examples=50)
@given(st.lists(st.integers(1, 50), min_size=4, max_size=4))
def test_chi2_matches_hand_formula_and_transpose(c):
    t = [[c[0], c[1]], [c[2], c[3]]]
    chi2, _ = A.chi_square_2x2(t)
    assert chi2 == pytest.approx(chi2_by_hand(t), rel=1e-9)
    assert chi2 == pytest.approx(A.chi_square_2x2([t[1], t[0]])[0], rel=1e-12)


def test_t_test_examples():
    t, _ = A.t_test_independent([1, 2, 3], [2, 3, 4])
    assert t == pytest.approx(-1.22474, abs=1e-5)
    assert A.t_test_independent([1, 2, 3], [1, 2, 3])[0] == 0.0
    jitter = np.array([0, 1e-9, -1e-9, 0])
    t, bucket = A.t_test_independent(np.zeros(4) + jitter, np.ones(4) - jitter)
    assert abs(t) > 1e6 and bucket == "<0.001"
    assert A.t_test_independent([2, 2], [2, 2]) == (0.0, ">=0.05")
    with pytest.raises(ValueError):
        A.t_test_independent([1], [1, 2])


def test_t_test_bucket_against_scipy():
    from scipy import stats

    rng = np.random.default_rng(5)
    for _ in range(20):
        a, b = rng.normal(size=6), rng.normal(0.8, 1.5, size=9)
        t, bucket = A.t_test_independent(a, b)
        ref = stats.ttest_ind(a, b, equal_var=False)
        assert t == pytest.approx(ref.statistic, rel=1e-10)
        assert t == pytest.approx(welch_t(list(a), list(b)), rel=1e-10)
        p = ref.pvalue
        expected = "<0.001" if p < 0.001 else "<0.01" if p < 0.01 else "<0.05" if p < 0.05 else ">=0.05"
        assert bucket == expected


@settings(max_examples=30)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=8), st.lists(st.floats(-3, 3), min_size=3, max_size=8))
def test_t_swap_flips_sign(a, b):
    try:
        t1, b1 = A.t_test_independent(a, b)
    except ZeroDivisionError:
        return
    t2, b2 = A.t_test_independent(b, a)
    assert t1 == -t2 and b1 == b2


def test_auc_examples():
    assert A.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert A.auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert A.auc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    with pytest.raises(A.UndefinedError):
        A.auc([0.1, 0.2], [1, 1])
    with pytest.raises(A.UndefinedError):
        A.auc([0.1, 0.2], [0, 2])


def test_auc_matches_pair_oracle_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(300):
        k = int(rng.integers(2, 40))
        s = rng.integers(0, 5, size=k).astype(float)
        y = rng.integers(0, 2, size=k)
        if y.min() == y.max():
            continue
        assert A.auc(s, y) == auc_pairs(s, y)


def test_delta_m_examples():
    assert A.delta_m([39.29, 65.33], [38.31, 63.76], [False, False]) == pytest.approx(-2.5102, abs=1e-3)
    assert A.delta_m([1.0, 2.0], [1.0, 2.0], [True, False]) == 0.0
    assert A.delta_m([0.9], [1.0], [True]) == pytest.approx(-10.0)
    with pytest.raises(A.UndefinedError):
        A.delta_m([1.0], [0.0], [True])


def test_delta_m_groups_average_tasks():
    got = A.delta_m([0.9, 1.1, 2.0], [1.0, 1.0, 2.0], [True, True, False], groups=[[0, 1], [2]])
    assert got == pytest.approx(0.0)
    got = A.delta_m([0.9, 2.2], [1.0, 2.0], [True, False], groups=[[0], [1]])
    assert got == pytest.approx(100 * (-0.1 - 0.1) / 2)


def test_trace_record_round_trip():
    r = A.TraceRecord(3, [0.5, 0.2], [1.0, 2.0], 0.3, -0.1, [1.0, 2.0], 0.05)
    assert A.TraceRecord.from_dict(r.to_dict()) == r
    assert A.similarity_summary([r, r]) == (0.3, -0.1)
    assert A.similarity_summary([]) == (0.0, 0.0)
