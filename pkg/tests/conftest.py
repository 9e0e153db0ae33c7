import itertools

import numpy as np
import pytest

from skewfree.moments import SymTensor3


def random_orthogonal(rng, dim):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


def random_tensor(rng, dim, scale=1.0):
    return SymTensor3.from_dense(scale * rng.normal(size=(dim, dim, dim)), symmetrize=True)


def naive_third_moment(points):
    points = np.asarray(points, dtype=float)
    n_points, dim = points.shape
    out = np.zeros((dim, dim, dim))
    for i, j, k in itertools.product(range(dim), repeat=3):
        out[i, j, k] = sum(p[i] * p[j] * p[k] for p in points) / n_points
    return out


def naive_rotate(dense, matrix):
    dim = dense.shape[0]
    out = np.zeros_like(dense)
    idx = list(itertools.product(range(dim), repeat=3))
    for m, n, l in idx:
        out[m, n, l] = sum(matrix[m, a] * matrix[n, b] * matrix[l, c] * dense[a, b, c]
                           for a, b, c in idx)
    return out


def triangle(rng, n_points):
    uv = rng.uniform(size=(n_points, 2))
    fold = uv.sum(axis=1) > 1
    uv[fold] = 1 - uv[fold]
    return uv


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
