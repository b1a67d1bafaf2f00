"""
Tests for the AdamW optimizer.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.optimizer import AdamW
from utils.exceptions import ConfigurationError


def test_first_step_moves_by_learning_rate():
    w = np.array([1.0, -2.0, 3.0])
    optimizer = AdamW({"w": w}, lr=0.1, weight_decay=0.0)
    optimizer.step({"w": np.array([0.5, -4.0, 0.0])})
    # bias-corrected first step is lr * sign(g) (zero gradient leaves the entry alone)
    assert_allclose(w, [0.9, -1.9, 3.0], atol=1e-6)


def test_decoupled_weight_decay():
    w = np.array([2.0])
    optimizer = AdamW({"w": w}, lr=0.1, weight_decay=0.5)
    optimizer.step({"w": np.array([0.0])})
    assert_allclose(w, [2.0 - 0.1 * 0.5 * 2.0])


def test_minimizes_a_quadratic():
    target = np.array([1.0, -3.0])
    w = np.zeros(2)
    optimizer = AdamW({"w": w}, lr=0.05, weight_decay=0.0)
    for _ in range(2000):
        optimizer.step({"w": 2.0 * (w - target)})
    assert_allclose(w, target, atol=1e-2)
    assert optimizer.step_count == 2000


def test_rejects_bad_hyperparameters():
    with pytest.raises(ConfigurationError):
        AdamW({"w": np.zeros(1)}, lr=-1.0)
    with pytest.raises(ConfigurationError):
        AdamW({"w": np.zeros(1)}, beta1=1.0)


def test_rejects_mismatched_gradients():
    optimizer = AdamW({"w": np.zeros(2)})
    with pytest.raises(ConfigurationError):
        optimizer.step({"w": np.zeros(3)})
    with pytest.raises(ConfigurationError):
        optimizer.step({})
