import numpy as np
import pytest

from edge_sentinel.autodiff import functional as F
from edge_sentinel.autodiff.checkpoint import load_checkpoint, save_checkpoint
from edge_sentinel.autodiff.gradcheck import grad_check
from edge_sentinel.autodiff.nn import BatchNorm, MultiHeadAttention
from edge_sentinel.autodiff.optim import Adam, CosineAnnealingWarmRestarts
from edge_sentinel.autodiff.tensor import (Tensor, backward, concat, relu, sigmoid, softmax, square,
                                           take_rows, tanh)
from edge_sentinel.errors import DatasetError, DimensionError


def test_activation_values():
    x = Tensor([-1.0, 1.0])
    assert relu(x).data.tolist() == [0.0, 1.0]
    assert sigmoid(Tensor([0.0])).item() == pytest.approx(0.5)
    np.testing.assert_allclose(softmax(Tensor(np.full(5, 3.0))).data, np.full(5, 0.2))


def test_square_gradient():
    x = Tensor([3.0], requires_grad=True)
    square(x).sum().backward()
    assert x.grad[0] == pytest.approx(6.0)


def test_relu_sum_gradient():
    x = Tensor([-1.0, 2.0], requires_grad=True)
    relu(x).sum().backward()
    assert x.grad.tolist() == [0.0, 1.0]


def test_shared_subexpression_accumulates():
    x = Tensor([2.0], requires_grad=True)
    y = x * x + x
    backward(y.sum())
    assert x.grad[0] == pytest.approx(5.0)


def test_backward_needs_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(DimensionError):
        (x * 2.0).backward()


def test_add_rejects_mismatched_shapes():
    with pytest.raises(DimensionError):
        Tensor(np.ones(2)) + Tensor(np.ones(3))


def test_linear_gradcheck_is_exact():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(3, 4)))
    w = Tensor(rng.normal(size=(4, 2)))
    b = Tensor(rng.normal(size=(2,)))
    report = grad_check(lambda x, w, b: F.linear(x, w, b).sum(), [x, w, b], tol=1e-10)
    assert report.passed, report.errors


@pytest.mark.parametrize('fn', [
    lambda x: tanh(x).sum(),
    lambda x: sigmoid(x * 2.0).sum(),
    lambda x: (softmax(x, axis=-1) * Tensor(np.arange(12.0).reshape(3, 4))).sum(),
    lambda x: concat([x, square(x)], axis=0).mean(),
    lambda x: take_rows(x, [2, 0, 2]).sum(),
])
def test_primitive_gradcheck(fn):
    x = Tensor(np.random.default_rng(1).normal(size=(3, 4)))
    report = grad_check(fn, x, eps=1e-6)
    assert report.passed, report.errors


def test_attention_block_gradcheck():
    rng = np.random.default_rng(2)
    attention = MultiHeadAttention(4, 2, rng)
    x = Tensor(rng.normal(size=(3, 5, 4)))
    weights = Tensor(rng.normal(size=(3, 5, 4)))
    mask = F.causal_mask(5)
    report = grad_check(lambda x: (attention(x, x, x, mask=mask)[0] * weights).sum(), x, eps=1e-6)
    assert report.passed, report.errors


def test_batch_norm_train_mode_gradcheck():
    rng = np.random.default_rng(3)
    norm = BatchNorm(3)
    x = Tensor(rng.normal(size=(4, 3)))
    weights = Tensor(rng.normal(size=(4, 3)))
    report = grad_check(lambda x: (norm(x) * weights).sum(), x, eps=1e-6)
    assert report.passed, report.errors


def test_causal_mask_blocks_future_steps():
    rng = np.random.default_rng(4)
    q = Tensor(rng.normal(size=(4, 2)))
    v = Tensor(rng.normal(size=(4, 2)))
    _, weights = F.scaled_dot_product(q, q, v, F.causal_mask(4))
    assert np.allclose(np.triu(weights.data, k=1), 0.0)
    np.testing.assert_allclose(weights.data.sum(axis=-1), np.ones(4))


def test_adam_minimises_quadratic():
    x = Tensor(np.array([4.0, -3.0]), requires_grad=True)
    optimizer = Adam([x], lr=0.1)
    for _ in range(500):
        optimizer.zero_grad()
        square(x).sum().backward()
        optimizer.step()
    np.testing.assert_allclose(x.data, 0.0, atol=0.1)


def test_cosine_annealing_restarts():
    optimizer = Adam([Tensor(np.zeros(1), requires_grad=True)], lr=1.0)
    schedule = CosineAnnealingWarmRestarts(optimizer, period=4)
    rates = [schedule.step() for _ in range(8)]
    assert rates[1] == pytest.approx(0.5)
    assert rates[3] == pytest.approx(1.0)
    assert rates[4:] == pytest.approx(rates[:4])
    assert schedule.restarts == 2


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    tensors = {'a': np.random.default_rng(5).normal(size=(3, 2)), 'b': np.array([1.5, -2.0])}
    stem = str(tmp_path / 'model')
    save_checkpoint(stem, tensors)
    loaded = load_checkpoint(stem)
    assert list(loaded) == ['a', 'b']
    assert np.array_equal(loaded['a'], tensors['a'])
    assert loaded['b'].tolist() == [1.5, -2.0]


def test_truncated_checkpoint_is_reported(tmp_path):
    stem = str(tmp_path / 'model')
    save_checkpoint(stem, {'a': np.ones(10)})
    with open(stem + '.bin', 'r+b') as handle:
        handle.truncate(16)
    with pytest.raises(DatasetError):
        load_checkpoint(stem)
