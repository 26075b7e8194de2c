import numpy as np
import pytest

from structseq.core import (
    ConfigError,
    DimensionError,
    InvalidLabelError,
    PairingError,
    PhonemeAlphabet,
    Utterance,
    as_labels,
    one_hot,
    tensor_product,
)


def test_one_hot_definition():
    assert one_hot(0, 3).tolist() == [1, 0, 0]
    assert one_hot(2, 3).tolist() == [0, 0, 1]
    v = one_hot(1, 48)
    assert v[1] == 1 and v.sum() == 1 and len(v) == 48


def test_one_hot_out_of_range():
    with pytest.raises(InvalidLabelError):
        one_hot(3, 3)
    with pytest.raises(InvalidLabelError):
        one_hot(-1, 3)


def test_tensor_product_examples():
    assert tensor_product([1, 0], [0, 1, 0]).tolist() == [0, 0, 1, 0, 0, 0]
    assert tensor_product([2, 3], [1, 1]).tolist() == [2, 3, 2, 3]
    assert tensor_product([1], [5]).tolist() == [5]


def test_tensor_product_matches_nested_loop(rng):
    a, b = rng.normal(size=4), rng.normal(size=3)
    expected = np.zeros(12)
    for j in range(3):
        for i in range(4):
            expected[i + j * 4] = a[i] * b[j]
    assert np.array_equal(tensor_product(a, b), expected)


def test_tensor_product_empty():
    with pytest.raises(DimensionError):
        tensor_product([], [1.0])


def test_alphabet_rules():
    assert PhonemeAlphabet.of_size(6).size == 6
    with pytest.raises(ConfigError):
        PhonemeAlphabet(("a",))
    with pytest.raises(ConfigError):
        PhonemeAlphabet(("a", "a"))
    with pytest.raises(ConfigError):
        PhonemeAlphabet(("a", ""))
    alpha = PhonemeAlphabet(("sil", "aa", "b"))
    assert alpha.index("b") == 2
    with pytest.raises(InvalidLabelError):
        alpha.validate([0, 3])


def test_as_labels_rejects_bad_input():
    with pytest.raises(InvalidLabelError):
        as_labels([0.5, 1])
    with pytest.raises(InvalidLabelError):
        as_labels([[0, 1]])
    assert as_labels([1.0, 2.0]).dtype == np.int64


def test_utterance_pairing():
    with pytest.raises(PairingError):
        Utterance(np.zeros((3, 2)), [0, 1])
    with pytest.raises(DimensionError):
        Utterance(np.full((2, 2), np.nan), [0, 1])
    u = Utterance(np.zeros((3, 2)), [0, 1, 1])
    assert (u.M, u.D) == (3, 2)
