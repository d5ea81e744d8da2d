import numpy as np
import pytest

from sparsealign import EmpiricalMeasure


def make_measure(x, v, w=None):
    """Measure from plain lists; x, v may be flat (d = 1) or (N, d)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if v.ndim == 1:
        v = v[:, None]
    if w is None:
        w = np.full(x.shape[0], 1.0 / x.shape[0])
    return EmpiricalMeasure(x, v, np.asarray(w, dtype=float))


def random_measure(rng, n, d=1, x_span=(0.0, 1.0), v_span=(0.0, 1.0), weighted=False):
    x = rng.uniform(*x_span, size=(n, d))
    v = rng.uniform(*v_span, size=(n, d))
    if weighted:
        w = rng.uniform(0.1, 1.0, size=n)
        w = w / w.sum()
    else:
        w = np.full(n, 1.0 / n)
    return EmpiricalMeasure(x, v, w)


@pytest.fixture
def eight_atoms():
    """The reference instance used across the synthesis tests: eight
    equal-weight atoms at x = 0.1, ..., 0.8."""
    x = np.arange(1, 9) / 10.0
    v = np.linspace(0.2, 0.9, 8)
    return make_measure(x, v)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
