import numpy as np
import pytest
import torch

from bope.gp import GpHyperparams, GpSurrogate, _SingleGp, _chol_with_jitter, _kernel_and_grads
from scipy.linalg import cho_solve

torch.set_num_threads(1)


def make_fixed_gp(X, Y, bounds, lengthscales, signal_variance, noise_variance):
    """GpSurrogate with hand-picked hyperparameters (no MLE), for tests
    that need a fully controlled posterior."""
    X, Y = np.atleast_2d(np.asarray(X, float)), np.atleast_2d(np.asarray(Y, float))
    bounds = np.asarray(bounds, float)
    low, high = bounds[:, 0], bounds[:, 1]
    Xn = (X - low) / (high - low)
    models = []
    for j in range(Y.shape[1]):
        y = Y[:, j]
        y_mean = float(np.mean(y))
        y_scale = float(np.std(y))
        if y_scale < 1e-12:
            y_scale = 1.0
        ys = (y - y_mean) / y_scale
        params = GpHyperparams(
            lengthscales=np.asarray(lengthscales, float),
            signal_variance=float(signal_variance),
            noise_variance=float(noise_variance),
        )
        Kf, _ = _kernel_and_grads(Xn, params)
        K = Kf + params.noise_variance * np.eye(len(ys))
        L, jitter = _chol_with_jitter(K, "test")
        models.append(
            _SingleGp(
                params=params,
                Xn=Xn,
                ys=ys,
                L=L,
                alpha=cho_solve((L, True), ys),
                y_mean=y_mean,
                y_scale=y_scale,
                jitter=jitter,
            )
        )
    return GpSurrogate(bounds=bounds, models=models)


class RandomLinearUtility:
    """Deterministic stand-in for a trained utility model: each member is
    a random positive linear map, so beliefs are cheap and controllable."""

    def __init__(self, n_members, k, seed, scale=1.0):
        rng = np.random.default_rng(seed)
        self.W = rng.uniform(0.1, 1.0, size=(n_members, k)) * scale
        self.b = rng.normal(size=n_members)

    @property
    def size(self):
        return self.W.shape[0]

    def member_scores(self, Y):
        Y = np.atleast_2d(np.asarray(Y, float))
        return self.W @ Y.T + self.b[:, None]

    def belief_batch(self, Y):
        scores = self.member_scores(Y)
        return scores.mean(axis=0), scores.var(axis=0)


class ConstantUtility:
    """All members emit the same constant for every input."""

    def __init__(self, value=0.0, n_members=3):
        self.value = value
        self.n_members = n_members

    @property
    def size(self):
        return self.n_members

    def member_scores(self, Y):
        Y = np.atleast_2d(np.asarray(Y, float))
        return np.full((self.n_members, Y.shape[0]), self.value)

    def belief_batch(self, Y):
        scores = self.member_scores(Y)
        return scores.mean(axis=0), scores.var(axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
