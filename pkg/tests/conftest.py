import numpy as np
import pytest

from dbalign import ProductForm, new_joint

BSC = [[0.45, 0.05], [0.05, 0.45]]


@pytest.fixture
def q():
    return new_joint(BSC)


@pytest.fixture
def model(q):
    return lambda reps=1: ProductForm(q, reps)


def random_joint(rng, size_a, size_b, sparsity=0.0):
    m = rng.random((size_a, size_b)) ** 3
    if sparsity:
        m[rng.random((size_a, size_b)) < sparsity] = 0.0
        if m.sum() == 0:
            m[0, 0] = 1.0
    return new_joint(m / m.sum())
