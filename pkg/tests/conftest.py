import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from perturba.problem import ProblemSpec, problem_from_dict  # noqa: E402


def poly_problem(A, D, f=None, h=None, T=1.0, eps=(), name="test"):
    """Problem from polynomial coefficient lists; f and h default to zero."""
    n = len(A)
    doc = {
        "n": n,
        "T": T,
        "A": A,
        "D": D,
        "f": f if f is not None else [[[0]] for _ in range(n)],
        "h": h if h is not None else [[0] for _ in range(n)],
        "epsilons": list(eps),
        "name": name,
    }
    return problem_from_dict(doc)


def callable_problem(n, A, D, f=None, h=None, T=1.0, name="test"):
    """Problem from vectorised callables returning constant-shape arrays."""

    def _f(x, t):
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        return np.zeros(x.shape + (n,)) if f is None else f(x, t)

    def _h(x):
        x = np.asarray(x, float)
        return np.zeros(x.shape + (n,)) if h is None else h(x)

    return ProblemSpec(n, A, D, _f, _h, T, (), name)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
