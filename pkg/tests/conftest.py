import numpy as np
import pytest

from mgkd import numcore


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_model(input_dim=6, hidden=(8, 8), dropout=0.0, seed=7):
    return numcore.init_mlp(input_dim, list(hidden), dropout,
                            np.random.default_rng(seed))


def loss_fn_over_model(x, loss_from_cache):
    """Adapt a LossValue-producing function to the grad_check interface.

    `loss_from_cache(cache)` returns a LossValue; gradients are pushed
    through the model analytically via backward().
    """
    def fn(model):
        cache = numcore.forward(model, x, "eval")
        lv = loss_from_cache(cache)
        grad_logit = lv.grad_logit if lv.grad_logit is not None \
            else np.zeros_like(cache.z)
        grad_repr = lv.grad_repr if lv.grad_repr is not None \
            else np.zeros_like(cache.h)
        return lv.value, numcore.backward(model, cache, grad_logit, grad_repr)
    return fn
