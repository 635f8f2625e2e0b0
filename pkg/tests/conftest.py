import numpy as np
import pytest

from stressinv.nnet import Tensor


def central_difference(f, x0, h=1e-5):
    """Independent finite-difference gradient of a scalar function of an array."""
    x0 = np.asarray(x0, dtype=np.float64)
    num = np.zeros_like(x0)
    it = np.nditer(x0, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x0.copy()
        xp[i] += h
        xm = x0.copy()
        xm[i] -= h
        num[i] = (f(xp) - f(xm)) / (2.0 * h)
    return num


def analytic_input_grad(f, x0):
    """Gradient of a scalar tensor function wrt its input array."""
    x = Tensor(x0, requires_grad=True)
    loss = f(x)
    loss.backward()
    return x.grad.copy()


def max_rel_err(a, b):
    """Elementwise relative error, floored at 1 % of the gradient's overall
    scale so near-cancelling entries do not amplify FD rounding noise."""
    a = np.asarray(a)
    b = np.asarray(b)
    scale = float(np.abs(a).max() + np.abs(b).max())
    floor = max(1e-8, 1e-2 * scale)
    return float(np.max(np.abs(a - b) / np.maximum(floor, np.abs(a) + np.abs(b))))


def grad_matches_fd(f_tensor, f_array, x0, tol=1e-4, h=1e-5):
    g = analytic_input_grad(f_tensor, x0)
    num = central_difference(f_array, x0, h=h)
    return max_rel_err(g, num) < tol


def away_from_kinks(rng, shape, margin=1e-3):
    """Random inputs kept clear of activation kinks so FD checks are clean."""
    x = rng.normal(size=shape)
    return x + np.sign(x) * margin


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
