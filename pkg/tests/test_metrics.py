"""Coefficient of determination: hand examples and invariance properties."""

import numpy as np
import pytest

from stressinv.metrics import r2


def test_perfect_prediction_is_one():
    y = np.array([1.0, 2.0, 3.0])
    assert r2(y, y) == 1.0


def test_mean_prediction_is_zero():
    y = np.array([1.0, 2.0, 3.0])
    assert r2(y, np.full(3, y.mean())) == 0.0


def test_hand_example_half():
    assert r2([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) == pytest.approx(0.5)


def test_requires_two_points_and_variance():
    with pytest.raises(ValueError):
        r2([1.0], [1.0])
    with pytest.raises(ValueError):
        r2([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


def test_length_mismatch():
    with pytest.raises(ValueError):
        r2([1.0, 2.0], [1.0, 2.0, 3.0])


def test_joint_affine_invariance():
    rng = np.random.default_rng(0)
    for _ in range(100):
        y = rng.normal(size=20)
        yhat = y + rng.normal(0, 0.3, size=20)
        a = float(rng.uniform(0.1, 5.0)) * (1 if rng.random() < 0.5 else -1)
        b = float(rng.normal())
        assert abs(r2(y, yhat) - r2(a * y + b, a * yhat + b)) < 1e-9


def test_mean_predictor_near_zero_on_large_sample():
    rng = np.random.default_rng(1)
    y = rng.normal(size=200)
    train_mean = float(rng.normal(size=200).mean())  # independent estimate
    score = r2(y, np.full(200, train_mean))
    assert -0.05 < score < 0.05


def test_never_exceeds_one():
    rng = np.random.default_rng(2)
    for _ in range(50):
        y = rng.normal(size=10)
        yhat = rng.normal(size=10)
        assert r2(y, yhat) <= 1.0
