import numpy as np
import pytest

from advswarm import classifier as clf
from advswarm import data as dat
from advswarm.data import Image


def finite_diff_jacobian(model, x, coords=None, h=1e-5):
    """Central finite differences of log P(y | x + t e_j): the gradient oracle."""
    x = np.asarray(x, dtype=np.float64)
    coords = np.arange(x.size) if coords is None else np.asarray(coords)
    k = model.num_classes
    jac = np.zeros((k, coords.size))
    for col, j in enumerate(coords):
        step = np.zeros_like(x)
        step[j] = h
        for y in range(k):
            jac[y, col] = (
                clf.log_prob(model, x + step, y) - clf.log_prob(model, x - step, y)
            ) / (2.0 * h)
    return jac


def dense_pinv_influence(jac, probs, grad, rcond=1e-10):
    """Oracle for the influence quadratic form: assemble G and use numpy's pinv."""
    g_mat = jac.T @ (probs[:, None] * jac)
    return float(grad @ np.linalg.pinv(g_mat, rcond=rcond, hermitian=True) @ grad)


def random_model_image(rng, p=None, k=None, hidden=None):
    p = p or int(rng.integers(4, 12))
    k = k or int(rng.choice([2, 3, 5]))
    hidden = hidden if hidden is not None else (int(rng.integers(4, 10)),)
    model = clf.make_mlp(p, k, hidden, seed=int(rng.integers(2**31)))
    image = Image(rng.random(p), width=p, height=1, channels=1,
                  label=int(rng.integers(k)))
    return model, image


@pytest.fixture(scope="session")
def blobs():
    return dat.synth_blobs(seed=0)


@pytest.fixture(scope="session")
def blobs_split(blobs):
    return dat.split(blobs, 0.2, seed=0)


@pytest.fixture(scope="session")
def blobs_model(blobs_split):
    train_split, val_split = blobs_split
    return clf.train(train_split, hyper=clf.TrainConfig(seed=0), val=val_split)
