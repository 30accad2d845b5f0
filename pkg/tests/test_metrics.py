import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cafokit.metrics import LengthMismatchError, macro_f1, per_class_f1


def test_all_correct():
    labels = [0, 1, 2, 3, 4]
    assert np.array_equal(per_class_f1(labels, labels, 5), np.ones(5))
    assert macro_f1(labels, labels, 5) == 1.0


def test_collapsed_predictor_on_balanced_pair():
    # 2 of each class, everything predicted class 0:
    # class 0 has tp=2, fp=2 -> F1 = 4/6; class 1 has tp=0 -> F1 = 0
    labels = [0, 0, 1, 1]
    preds = [0, 0, 0, 0]
    f1 = per_class_f1(labels, preds, 2)
    assert abs(f1[0] - 2 / 3) < 1e-12
    assert f1[1] == 0.0
    assert abs(macro_f1(labels, preds, 2) - 1 / 3) < 1e-12


def test_absent_class_excluded_from_macro():
    labels = [0, 0, 1]
    preds = [0, 0, 1]
    # class 2..4 never appear in the labels and must not drag the mean down
    assert macro_f1(labels, preds, 5) == 1.0


def test_absent_class_with_false_positives_still_excluded():
    labels = [0, 0]
    preds = [0, 1]
    assert macro_f1(labels, preds, 2) == per_class_f1(labels, preds, 2)[0]


def test_undefined_class_scores_zero():
    f1 = per_class_f1([0], [0], 3)
    assert f1[0] == 1.0 and f1[1] == 0.0 and f1[2] == 0.0


def test_length_mismatch():
    with pytest.raises(LengthMismatchError):
        per_class_f1([0, 1], [0], 2)


def test_empty_inputs():
    assert macro_f1([], [], 3) == 0.0


@given(st.lists(st.integers(0, 3), min_size=1, max_size=30))
def test_bounds_and_perfect_prediction(labels):
    f1 = per_class_f1(labels, labels, 4)
    present = set(labels)
    for c in range(4):
        assert f1[c] == (1.0 if c in present else 0.0)
    assert 0.0 <= macro_f1(labels, labels, 4) <= 1.0


@given(st.lists(st.integers(0, 3), min_size=1, max_size=30),
       st.lists(st.integers(0, 3), min_size=1, max_size=30))
def test_macro_in_unit_interval(labels, preds):
    n = min(len(labels), len(preds))
    assert 0.0 <= macro_f1(labels[:n], preds[:n], 4) <= 1.0
