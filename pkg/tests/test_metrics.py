import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffshape.metrics import (JointHistogram, cosine_similarity, entropy, mutual_information,
                               symbol_error_rate, total_variation)


def test_mi_perfect_channel():
    s = np.repeat(np.arange(16), 100)
    assert mutual_information(s, s, 16) == pytest.approx(4.0, abs=1e-12)


def test_mi_hand_evaluated_joint():
    tx = np.array([0] * 40 + [0] * 10 + [1] * 10 + [1] * 40)
    rx = np.array([0] * 40 + [1] * 10 + [0] * 10 + [1] * 40)
    expected = 1 + 0.8 * np.log2(0.8) + 0.2 * np.log2(0.2)
    assert expected == pytest.approx(0.278, abs=1e-3)
    assert mutual_information(tx, rx, 2) == pytest.approx(expected, abs=1e-12)


def test_mi_independent_streams_small():
    rng = np.random.default_rng(0)
    n, M = 100_000, 16
    bias = (M - 1) ** 2 / (2 * n * np.log(2))
    mi = mutual_information(rng.integers(0, M, n), rng.integers(0, M, n), M)
    assert mi < 0.02
    assert mi < 3 * bias


def test_mi_errors():
    with pytest.raises(ValueError):
        mutual_information([], [], 4)
    with pytest.raises(ValueError):
        mutual_information([0, 1], [0], 4)
    with pytest.raises(ValueError):
        mutual_information([0, 4], [0, 1], 4)


def test_joint_histogram():
    h = JointHistogram.from_indices([0, 0, 1], [1, 1, 1], 2)
    np.testing.assert_array_equal(h.counts, [[0, 2], [0, 1]])
    assert h.total == 3


streams = st.integers(1, 200).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 7), min_size=n, max_size=n),
                        st.lists(st.integers(0, 7), min_size=n, max_size=n)))


@settings(max_examples=100)
@given(streams)
def test_mi_properties(pair):
    a, b = map(np.array, pair)
    mi = mutual_information(a, b, 8)
    ha = entropy(np.bincount(a, minlength=8) / a.size)
    hb = entropy(np.bincount(b, minlength=8) / b.size)
    assert mi >= 0
    assert mi <= min(ha, hb) + 1e-9
    assert mi == pytest.approx(mutual_information(b, a, 8), abs=1e-12)


@settings(max_examples=50)
@given(streams)
def test_coarser_discretisation_never_increases_mi(pair):
    a, b = map(np.array, pair)
    assert mutual_information(a, b // 2, 8) <= mutual_information(a, b, 8) + 1e-9


def test_cosine_similarity_values():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(100, 2))
    assert cosine_similarity(x, x) == pytest.approx(1.0)
    assert cosine_similarity(x, -x) == pytest.approx(-1.0)
    a = np.array([[1.0, 0.0], [0.0, 1.0]])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert cosine_similarity(a, b) == 0.0


def test_cosine_similarity_averages_components():
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    b = np.array([[1.0, 1.0], [1.0, -1.0]])
    # I cosine 1, Q cosine 0
    assert cosine_similarity(a, b) == pytest.approx(0.5)


@given(st.floats(1e-3, 1e3))
def test_cosine_similarity_scale_invariant(c):
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(20, 2)), rng.normal(size=(20, 2))
    assert cosine_similarity(c * a, c * b) == pytest.approx(cosine_similarity(a, b), abs=1e-12)


def test_cosine_similarity_zero_norm():
    with pytest.raises(ValueError):
        cosine_similarity(np.zeros((3, 2)), np.ones((3, 2)))


def test_ser():
    assert symbol_error_rate([1, 2, 3], [1, 2, 3]) == 0
    assert symbol_error_rate([1, 2, 3], [0, 0, 0]) == 1
    assert symbol_error_rate(np.arange(10), np.r_[np.arange(9), 0]) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        symbol_error_rate([], [])


def test_entropy_and_tv():
    assert entropy(np.full(16, 1 / 16)) == pytest.approx(4.0)
    assert entropy(np.eye(4)[2]) == 0.0
    assert entropy([0.5, 0.5, 0, 0]) == pytest.approx(1.0)
    assert total_variation([1, 0], [0, 1]) == 1.0
    assert total_variation([0.5, 0.5], [0.5, 0.5]) == 0.0
