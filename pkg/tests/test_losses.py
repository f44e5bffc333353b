import itertools
import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from ptmatch.training import classification_loss, contrastive_loss, contrastive_loss_t, total_loss

import _gradcheck


def test_classification_uniform_prediction():
    expected = -math.log(1 / 3) - 2 * math.log(2 / 3)
    assert abs(classification_loss([1 / 3] * 3, [1, 0, 0]) - 1.9095) <= 1e-4
    assert classification_loss([1 / 3] * 3, [1, 0, 0]) == pytest.approx(expected, rel=1e-12)


def test_classification_perfect_prediction():
    # three clamped components each contribute -ln(1 - 1e-7)
    value = classification_loss([1, 0, 0], [1, 0, 0])
    assert value == pytest.approx(-3 * math.log1p(-1e-7), rel=1e-9)
    assert value == pytest.approx(3e-7, rel=1e-6)


def test_classification_is_full_bce_not_categorical():
    y_hat = np.array([0.6, 0.3, 0.1])
    categorical = -math.log(0.6)
    assert classification_loss(y_hat, [1, 0, 0]) == pytest.approx(categorical - math.log(0.7) - math.log(0.9))


_simplex = st.lists(st.floats(0.01, 1.0), min_size=3, max_size=3).map(lambda v: np.array(v) / sum(v))


@given(_simplex, st.integers(0, 2), st.permutations([0, 1, 2]))
def test_classification_permutation_equivariance(y_hat, cls, perm):
    y = np.eye(3)[cls]
    assert classification_loss(y_hat[perm], y[perm]) == pytest.approx(classification_loss(y_hat, y), rel=1e-12)


@pytest.mark.parametrize("y", [[1, 1, 0], [0.5, 0.5, 0], [0, 0, 0]])
def test_classification_rejects_non_one_hot(y):
    with pytest.raises(ValueError, match="one-hot"):
        classification_loss([1 / 3] * 3, y)


def test_contrastive_examples():
    assert abs(contrastive_loss([0.5], [0.51], 0.01) - 0.25) <= 1e-9
    assert contrastive_loss([1.0, 0.2], [0.9, 0.99], 0.01) == 0.0
    assert contrastive_loss([], [0.0, 0.01, -0.5], 0.01) == 0.0
    assert contrastive_loss([], [], 0.01) == 1.0
    assert contrastive_loss([0.5], [0.51], 0.01, form="sum_log") == pytest.approx(1.0)


def test_contrastive_range_error():
    with pytest.raises(ValueError):
        contrastive_loss([1.1], [])
    assert contrastive_loss([1 + 5e-7], []) == 0.0


def test_contrastive_gradient_closed_form():
    # d/ds_a of the product equals minus the product of the other factors
    rng = np.random.default_rng(3)
    inc = rng.uniform(-0.9, 0.9, 4)
    exc = rng.uniform(0.2, 0.9, 3)
    eps, h = 0.01, 1e-6
    rest_exc = np.prod(exc - eps)
    for a in range(len(inc)):
        closed = -np.prod(np.delete(1 - inc, a)) * rest_exc
        up, down = inc.copy(), inc.copy()
        up[a] += h
        down[a] -= h
        numeric = (contrastive_loss(up, exc, eps) - contrastive_loss(down, exc, eps)) / (2 * h)
        assert numeric == pytest.approx(closed, rel=1e-6)
        sims = torch.tensor(np.concatenate([inc, exc]), requires_grad=True)
        mask = torch.tensor([True] * 4 + [False] * 3)
        contrastive_loss_t(sims, mask, eps, "product_paper").backward()
        assert sims.grad[a].item() == pytest.approx(closed, rel=1e-9)


def test_torch_and_numpy_contrastive_agree():
    sims = [0.3, -0.2, 0.7, 0.05]
    mask = torch.tensor([True, True, False, False])
    for form in ("product_paper", "sum_log"):
        t = contrastive_loss_t(torch.tensor(sims, dtype=torch.float64), mask, 0.01, form).item()
        assert t == pytest.approx(contrastive_loss(sims[:2], sims[2:], 0.01, form))


def test_total_loss():
    assert total_loss(2.0, 1.0, 0.5) == 1.5
    assert total_loss(2.3, 7.9, 1.0) == 2.3
    assert total_loss(2.3, 7.9, 0.0) == 7.9
    with pytest.raises(ValueError):
        total_loss(1.0, 1.0, 1.5)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 5), st.floats(1e-3, 1 - 1e-3))
def test_total_loss_monotone(cla, con, delta, alpha):
    assert total_loss(cla + delta, con, alpha) >= total_loss(cla, con, alpha)
    assert total_loss(cla, con + delta, alpha) >= total_loss(cla, con, alpha)


@pytest.mark.parametrize("form", ["product_paper", "sum_log"])
def test_gradient_matches_finite_differences(form):
    assert _gradcheck.n_params() <= 2000
    for seed in range(3):
        assert _gradcheck.relative_gradient_error(seed, form) < 1e-3
