"""Autodiff primitives: forward values against hand oracles, gradients
against central finite differences."""

import numpy as np
import pytest

from stressinv.nnet import Tensor, no_grad
from stressinv.nnet import tensor as T

from conftest import central_difference, max_rel_err

N_CASES = 20
FD_TOL = 1e-4


def check_op(f_tensor, f_array, x0, tol=FD_TOL, h=1e-5):
    x = Tensor(x0, requires_grad=True)
    loss = f_tensor(x)
    loss.backward()
    num = central_difference(f_array, x0, h=h)
    assert max_rel_err(x.grad, num) < tol


# ---------------------------------------------------------------------------
# Forward-value oracles


def test_add_sub_mul_div_forward():
    a = Tensor([1.0, 2.0])
    b = Tensor([3.0, 5.0])
    assert np.array_equal((a + b).data, [4.0, 7.0])
    assert np.array_equal((a - b).data, [-2.0, -3.0])
    assert np.array_equal((a * b).data, [3.0, 10.0])
    assert np.array_equal((b / a).data, [3.0, 2.5])


def test_matmul_forward_hand():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal((a @ b).data, [[19.0, 22.0], [43.0, 50.0]])


def test_leaky_relu_values():
    out = T.leaky_relu(Tensor([-1.0, 3.0, 0.0]), 0.01)
    assert np.allclose(out.data, [-0.01, 3.0, 0.0])


def test_elu_values():
    assert T.elu(Tensor(0.0), 1.0).item() == 0.0
    # deep-negative asymptote: approaches -alpha
    assert abs(T.elu(Tensor(-20.0), 1.0).item() + 1.0) < 1e-8
    assert T.elu(Tensor(2.0), 1.0).item() == 2.0


def test_mse_loss_values(rng):
    assert T.mse_loss(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])).item() == 0.0
    assert T.mse_loss(Tensor([0.0, 0.0]), Tensor([1.0, 1.0])).item() == 1.0
    p = rng.normal(size=(3, 2))
    t = rng.normal(size=(3, 2))
    hand = ((p - t) ** 2).sum() / 6.0
    assert abs(T.mse_loss(Tensor(p), Tensor(t)).item() - hand) < 1e-12


def test_mse_loss_shape_mismatch():
    with pytest.raises(ValueError):
        T.mse_loss(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))


def test_hand_gradient_linear_system():
    # loss = mse(W*x, y) with W=2, x=3, y=5 -> dL/dW = 2*(6-5)*3 = 6
    w = Tensor([[2.0]], requires_grad=True)
    x = Tensor([[3.0]])
    y = Tensor([[5.0]])
    T.mse_loss(x @ w, y).backward()
    assert abs(w.grad[0, 0] - 6.0) < 1e-12


def test_unused_parameter_gets_no_gradient():
    used = Tensor([2.0], requires_grad=True)
    unused = Tensor([7.0], requires_grad=True)
    (used * used).sum().backward()
    assert np.array_equal(used.grad, [4.0])
    assert unused.grad is None


def test_backward_requires_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        (x * x).backward()


def test_tape_consumed_twice_raises():
    x = Tensor([1.0], requires_grad=True)
    loss = (x * x).sum()
    loss.backward()
    with pytest.raises(RuntimeError):
        loss.backward()


def test_no_grad_blocks_recording():
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        y = (x * x).sum()
    assert y._backward is None and y._parents == ()


def test_no_grad_is_thread_local():
    # one thread sitting inside no_grad must not disable recording elsewhere
    import threading

    from stressinv.nnet.tensor import grad_enabled

    entered, release = threading.Event(), threading.Event()

    def hold():
        with no_grad():
            entered.set()
            release.wait(5)

    worker = threading.Thread(target=hold)
    worker.start()
    assert entered.wait(5)
    x = Tensor([2.0], requires_grad=True)
    (x * x).sum().backward()
    assert np.array_equal(x.grad, [4.0])
    release.set()
    worker.join()
    assert grad_enabled()


def test_broadcast_gradient_reduces_correctly():
    # row-vector bias broadcast over a batch: grad sums over the batch axis
    b = Tensor([1.0, 2.0], requires_grad=True)
    x = Tensor(np.ones((3, 2)))
    (x + b).sum().backward()
    assert np.array_equal(b.grad, [3.0, 3.0])


def test_residual_accumulation_sums_branches():
    x = Tensor([2.0], requires_grad=True)
    (x * 3.0 + x * 4.0).sum().backward()
    assert np.array_equal(x.grad, [7.0])


# ---------------------------------------------------------------------------
# Finite-difference gradient sweeps (>= 20 seeded cases per op)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_arithmetic_chain(seed):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=(3, 4)) + 2.5  # keep away from div-by-small
    c = rng.normal(size=(3, 4)) + 2.5
    check_op(lambda x: ((x * Tensor(c) + x) / Tensor(c) - x).sum().sum(),
             lambda a: ((a * c + a) / c - a).sum(), x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_matmul(seed):
    rng = np.random.default_rng(100 + seed)
    x0 = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 2))
    check_op(lambda x: ((x @ Tensor(w)) * (x @ Tensor(w))).mean(),
             lambda a: ((a @ w) ** 2).mean(), x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_exp_log_sqrt(seed):
    rng = np.random.default_rng(200 + seed)
    x0 = rng.uniform(0.5, 2.0, size=(2, 3))
    check_op(lambda x: (T.exp(x) + T.log(x) + T.sqrt(x)).sum().sum(),
             lambda a: (np.exp(a) + np.log(a) + np.sqrt(a)).sum(), x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_tanh_sigmoid(seed):
    rng = np.random.default_rng(300 + seed)
    x0 = rng.normal(size=(2, 5))
    check_op(lambda x: (T.tanh(x) * T.sigmoid(x)).sum().sum(),
             lambda a: (np.tanh(a) / (1 + np.exp(-a))).sum(), x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_leaky_relu(seed):
    rng = np.random.default_rng(400 + seed)
    x0 = rng.normal(size=(3, 3))
    x0 += np.sign(x0) * 1e-3  # keep clear of the kink at 0
    check_op(lambda x: (T.leaky_relu(x, 0.01) ** 2.0).sum().sum(),
             lambda a: (np.where(a >= 0, a, 0.01 * a) ** 2).sum(), x0)


def test_grad_leaky_relu_negative_point():
    x = Tensor([-2.0], requires_grad=True)
    T.leaky_relu(x, 0.01).sum().backward()
    assert abs(x.grad[0] - 0.01) < 1e-12


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_elu(seed):
    rng = np.random.default_rng(500 + seed)
    x0 = rng.normal(size=(3, 3))
    x0 += np.sign(x0) * 1e-3
    check_op(lambda x: (T.elu(x, 1.0) * T.elu(x, 1.0)).sum().sum(),
             lambda a: (np.where(a >= 0, a, np.expm1(a)) ** 2).sum(), x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_pow(seed):
    rng = np.random.default_rng(600 + seed)
    x0 = rng.uniform(0.5, 2.0, size=(2, 4))
    check_op(lambda x: (x ** 3.0).mean(), lambda a: (a ** 3).mean(), x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_sum_mean_axes(seed):
    rng = np.random.default_rng(700 + seed)
    x0 = rng.normal(size=(3, 4))
    check_op(lambda x: (x.sum(axis=0) * x.mean(axis=0)).sum(),
             lambda a: (a.sum(axis=0) * a.mean(axis=0)).sum(), x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_getitem(seed):
    rng = np.random.default_rng(800 + seed)
    x0 = rng.normal(size=(4, 5))
    check_op(lambda x: (x[:, 1:3] * x[:, 1:3]).sum().sum(),
             lambda a: (a[:, 1:3] ** 2).sum(), x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_reshape_concat(seed):
    rng = np.random.default_rng(900 + seed)
    x0 = rng.normal(size=(2, 6))
    check_op(lambda x: (T.concat([x, x.reshape((2, 6))], axis=1) ** 2.0).mean(),
             lambda a: (np.concatenate([a, a], axis=1) ** 2).mean(), x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_conv1d(seed):
    rng = np.random.default_rng(1000 + seed)
    x0 = rng.normal(size=(2, 2, 8))
    w = rng.normal(size=(3, 2, 3))
    b = rng.normal(size=3)

    def ref(a):
        cols = np.lib.stride_tricks.sliding_window_view(a, 3, axis=2)
        out = np.einsum("nclk,ock->nol", cols, w) + b[None, :, None]
        return (out ** 2).mean()

    check_op(lambda x: (T.conv1d(x, Tensor(w), Tensor(b)) ** 2.0).mean(), ref, x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_conv1d_weights(seed):
    rng = np.random.default_rng(1100 + seed)
    x = rng.normal(size=(2, 2, 8))
    w0 = rng.normal(size=(3, 2, 3))
    b0 = rng.normal(size=3)

    w = Tensor(w0, requires_grad=True)
    b = Tensor(b0, requires_grad=True)
    (T.conv1d(Tensor(x), w, b) ** 2.0).mean().backward()

    def ref_w(a):
        cols = np.lib.stride_tricks.sliding_window_view(x, 3, axis=2)
        out = np.einsum("nclk,ock->nol", cols, a) + b0[None, :, None]
        return (out ** 2).mean()

    def ref_b(a):
        cols = np.lib.stride_tricks.sliding_window_view(x, 3, axis=2)
        out = np.einsum("nclk,ock->nol", cols, w0) + a[None, :, None]
        return (out ** 2).mean()

    assert max_rel_err(w.grad, central_difference(ref_w, w0)) < FD_TOL
    assert max_rel_err(b.grad, central_difference(ref_b, b0)) < FD_TOL


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_maxpool1d(seed):
    rng = np.random.default_rng(1200 + seed)
    x0 = rng.normal(size=(2, 3, 8))
    # separate entries so the argmax is stable under the FD perturbation
    x0 += np.linspace(0, 1e-2, x0.size).reshape(x0.shape)

    def ref(a):
        window = a[:, :, :8].reshape(2, 3, 4, 2)
        return (window.max(axis=3) ** 2).mean()

    check_op(lambda x: (T.maxpool1d(x, 2) ** 2.0).mean(), ref, x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_mse(seed):
    rng = np.random.default_rng(1300 + seed)
    x0 = rng.normal(size=(4, 3))
    t = rng.normal(size=(4, 3))
    check_op(lambda x: T.mse_loss(x, Tensor(t)),
             lambda a: ((a - t) ** 2).mean(), x0)


@pytest.mark.parametrize("seed", range(N_CASES))
def test_grad_dropout_fixed_mask(seed):
    # the same rng seed regenerates the same keep mask on every rebuild
    rng = np.random.default_rng(1400 + seed)
    x0 = rng.normal(size=(3, 4))
    keep = (np.random.default_rng(seed).random(x0.shape) >= 0.3) / 0.7
    check_op(lambda x: (T.dropout(x, 0.3, np.random.default_rng(seed), True) ** 2.0).sum().sum(),
             lambda a: ((a * keep) ** 2).sum(), x0)


# ---------------------------------------------------------------------------
# Dropout statistics


def test_dropout_montecarlo_rate_and_expectation():
    rng = np.random.default_rng(42)
    x = Tensor(np.ones((100, 1000)))
    out = T.dropout(x, 0.2, rng, training=True)
    drop_rate = float(np.mean(out.data == 0.0))
    assert 0.195 <= drop_rate <= 0.205
    # inverted dropout preserves expectation within 1 %
    assert abs(float(out.data.mean()) - 1.0) < 0.01


def test_dropout_eval_and_p0_identity(rng):
    x = Tensor(rng.normal(size=(3, 4)))
    assert T.dropout(x, 0.5, rng, training=False) is x
    assert T.dropout(x, 0.0, rng, training=True) is x
