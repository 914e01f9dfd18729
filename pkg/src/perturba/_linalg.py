"""Eigen-decomposition continuation along a 1-D parameter grid."""

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegeneracyError


def inner(u, v):
    """Hermitian inner product ``(u, v) = sum u_k conj(v_k)`` over the last axis."""
    return np.sum(u * np.conj(v), axis=-1)


def _normalize_columns(vecs):
    return vecs / np.linalg.norm(vecs, axis=-2, keepdims=True)


def _initial_phase(vecs):
    # Largest-magnitude component of every column made real positive.
    idx = np.argmax(np.abs(vecs), axis=0)
    lead = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(lead) / lead)


def track_eigensystem(mats, coords, degeneracy_tol=1e-8, what="matrix", coord="s"):
    """Continued eigenpairs of a matrix family sampled on ``coords``.

    Eigenpairs at each sample are matched to the previous sample by maximal
    eigenvector overlap. The first sample is ordered by (real, imag) part of
    the eigenvalues with the largest-magnitude component of each unit
    eigenvector made real positive; afterwards the phase of every vector is
    chosen so that its overlap with its predecessor is real positive.

    Returns ``(values, vectors)`` of shapes ``(m, n)`` and ``(m, n, n)``; column
    ``i`` of ``vectors[k]`` belongs to ``values[k, i]``.
    """
    mats = np.asarray(mats, dtype=complex)
    m, n, _ = mats.shape
    w, v = np.linalg.eig(mats)
    v = _normalize_columns(v)

    values = np.empty((m, n), dtype=complex)
    vectors = np.empty((m, n, n), dtype=complex)
    order = np.lexsort((w[0].imag, w[0].real))
    values[0] = w[0, order]
    vectors[0] = _initial_phase(v[0][:, order])
    for k in range(1, m):
        overlap = np.abs(vectors[k - 1].conj().T @ v[k])
        _, cols = linear_sum_assignment(-overlap)
        vals_k = w[k, cols]
        vecs_k = v[k][:, cols]
        phase = np.einsum("ji,ji->i", vectors[k - 1].conj(), vecs_k)
        vecs_k = vecs_k * (np.abs(phase) / phase)
        values[k] = vals_k
        vectors[k] = vecs_k

    if n > 1:
        gaps = np.abs(values[:, :, None] - values[:, None, :])
        gaps[:, np.arange(n), np.arange(n)] = np.inf
        worst = np.unravel_index(np.argmin(gaps), gaps.shape)
        if gaps[worst] < degeneracy_tol:
            raise DegeneracyError(
                f"eigenvalues {worst[1]} and {worst[2]} of the {what} collide "
                f"(gap {gaps[worst]:.3e}) at {coord} = {float(coords[worst[0]]):.6g}"
            )
    return values, vectors


def adjoint_system(mats, values, vectors):
    """Adjoint eigenvectors rescaled so that ``(b_i, b*_j) = delta_ij``.

    ``b*_i`` is an eigenvector of the conjugate transpose belonging to
    ``conj(lambda_i)``; pairing is by nearest conjugate eigenvalue.
    """
    mats = np.asarray(mats, dtype=complex)
    m, n, _ = mats.shape
    wa, va = np.linalg.eig(np.conj(np.swapaxes(mats, -1, -2)))
    out = np.empty_like(vectors)
    for k in range(m):
        dist = np.abs(np.conj(values[k])[:, None] - wa[k][None, :])
        _, cols = linear_sum_assignment(dist)
        bs = va[k][:, cols]
        scale = np.einsum("ji,ji->i", bs.conj(), vectors[k])  # b*_i^H b_i
        out[k] = bs / np.conj(scale)
    return out
