import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import callable_problem, poly_problem
from perturba.errors import DegeneracyError
from perturba.problem import preset, preset_names
from perturba.spectral import (
    coupling_gamma,
    decompose,
    decompose_spatial,
    decompose_temporal,
    spectral_residuals,
)


def _const(mat):
    mat = np.asarray(mat)
    return lambda s: np.broadcast_to(mat, np.shape(s) + mat.shape).copy()


def test_diagonal_matrix_gives_standard_basis():
    spec = poly_problem([[[2], [0]], [[0], [3]]], [[[-1], [0]], [[0], [-2]]])
    sp = decompose_spatial(spec, np.linspace(0, 1, 9))
    np.testing.assert_allclose(sp.lam, np.tile([2.0, 3.0], (9, 1)), atol=1e-14)
    np.testing.assert_allclose(sp.b, np.tile(np.eye(2), (9, 1, 1)), atol=1e-14)


def test_eigenvalues_match_characteristic_roots():
    spec = poly_problem([[[0], [1]], [[-2], [3]]], [[[-1], [0]], [[0], [-2]]])
    sp = decompose_spatial(spec, np.linspace(0, 1, 5))
    roots = np.sort(np.roots([1.0, -3.0, 2.0]).real)
    for row in sp.lam:
        np.testing.assert_allclose(np.sort(row.real), roots, atol=1e-12)


def test_collision_raises_degeneracy():
    spec = poly_problem([[[2, 1], [0]], [[0], [3]]], [[[-1], [0]], [[0], [-2]]])
    with pytest.raises(DegeneracyError, match="x = 1"):
        decompose_spatial(spec, np.linspace(0, 1, 11))


def test_constant_D_has_zero_alpha():
    spec = poly_problem([[[1]], ], [[[-1]]])
    tp = decompose_temporal(spec, np.linspace(0, 1, 11))
    np.testing.assert_allclose(tp.alpha, 0.0, atol=1e-14)
    np.testing.assert_allclose(tp.psi, 1.0, atol=1e-14)


def test_scalar_time_dependent_D():
    spec = poly_problem([[[1]]], [[[-1, -1]]])
    t = np.linspace(0, 1, 11)
    tp = decompose_temporal(spec, t)
    np.testing.assert_allclose(tp.beta[:, 0], -1 - t, atol=1e-14)
    np.testing.assert_allclose(tp.psi[:, 0, 0], 1.0, atol=1e-14)
    np.testing.assert_allclose(tp.alpha, 0.0, atol=1e-13)


def _sheared_problem(T=0.9):
    # D = R diag(-1, -2) R^{-1} with R = [[1, t], [0, 1]]
    def D(t):
        t = np.asarray(t, float)
        out = np.zeros(t.shape + (2, 2))
        out[..., 0, 0] = -1.0
        out[..., 0, 1] = -t
        out[..., 1, 1] = -2.0
        return out

    return callable_problem(2, _const([[1.0, 0.0], [0.0, 2.0]]), D, T=T)


def _analytic_alpha(t):
    # columns psi_1 = e1, psi_2 = (t, 1)/sqrt(1+t^2), normalised as the decomposition does
    r = np.sqrt(1 + t * t)
    alpha = np.zeros(t.shape + (2, 2))
    for k, tk in enumerate(t):
        Psi = np.array([[1.0, tk / r[k]], [0.0, 1.0 / r[k]]])
        dPsi = np.array([[0.0, 1.0 / r[k] ** 3], [0.0, -tk / r[k] ** 3]])
        Psi_star = np.linalg.inv(Psi).conj().T
        alpha[k] = (Psi_star.conj().T @ dPsi).T  # alpha[i, r] = (psi_i', psi*_r)
    return alpha


def test_alpha_matches_analytic_at_second_order():
    spec = _sheared_problem()
    errs = []
    for m in (21, 41, 81):
        t = np.linspace(0, 0.9, m)
        tp = decompose_temporal(spec, t)
        # analytic columns are ordered (beta = -1, beta = -2)
        perm = [int(np.argmin(np.abs(tp.beta[0] - b))) for b in (-1.0, -2.0)]
        r = np.sqrt(1 + t * t)
        np.testing.assert_allclose(np.abs(tp.psi[:, 1, perm[1]]), 1 / r, atol=1e-13)
        alpha = tp.alpha[:, perm][:, :, perm]
        errs.append(np.abs(alpha - _analytic_alpha(t)).max())
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.0), (errs, ratios)


def test_gamma_identity_for_scalar_multiple_of_identity():
    # D = cI has a repeated eigenvalue, so the temporal table comes from a
    # nondegenerate companion; gamma only reads D itself and the t samples
    A = [[[1, 1], [1]], [[0], [3]]]
    spec = poly_problem(A, [[[-1.5], [0]], [[0], [-1.5]]])
    companion = poly_problem(A, [[[-1], [0]], [[0], [-2]]])
    t = np.linspace(0, 1, 9)
    data = coupling_gamma(decompose_spatial(spec, np.linspace(0, 1, 17)), decompose_temporal(companion, t), spec)
    np.testing.assert_allclose(data.gamma, np.broadcast_to(-1.5 * np.eye(2), data.gamma.shape), atol=1e-13)


def test_gamma_scalar_is_beta():
    spec = preset("scalar-var-lambda")
    t = np.linspace(0, 1, 9)
    data = decompose(spec, np.linspace(0, 1, 17), t)
    np.testing.assert_allclose(data.gamma[..., 0, 0], np.broadcast_to(-1 - t * t, (17, 9)), atol=1e-13)


@pytest.mark.parametrize("name", ["coupled-2x2", "complex-2x2"])
def test_gamma_matches_similarity_transform(name, rng):
    spec = preset(name)
    x, t = np.linspace(0, 1, 65), np.linspace(0, 1, 33)
    data = decompose(spec, x, t)
    for _ in range(10):
        i, j = rng.integers(0, x.size), rng.integers(0, t.size)
        B = data.spatial.b[i]
        direct = np.linalg.inv(B) @ spec.D(t[j : j + 1])[0] @ B  # gamma[i, r] = (B^-1 D B)[r, i]
        np.testing.assert_allclose(data.gamma[i, j], direct.T, atol=1e-12)


@pytest.mark.parametrize("name", preset_names())
def test_spectral_contracts_on_presets(name):
    spec = preset(name)
    data = decompose(spec, np.linspace(0, 1, 257), np.linspace(0, spec.T, 257))
    res = spectral_residuals(spec, data)
    assert max(res.values()) <= 1e-10, res


@pytest.mark.parametrize("name", ["coupled-2x2", "complex-2x2"])
def test_eigenvector_jumps_halve_under_refinement(name):
    spec = preset(name)
    jumps = []
    for m in (65, 129, 257):
        sp = decompose_spatial(spec, np.linspace(0, 1, m))
        jumps.append(np.linalg.norm(np.diff(sp.b, axis=0), axis=1).max())
    ratios = np.array(jumps[:-1]) / np.array(jumps[1:])
    np.testing.assert_allclose(ratios, 2.0, rtol=0.1)


def test_spectral_resolution_reproduces_matrix():
    spec = preset("complex-2x2")
    x = np.linspace(0, 1, 33)
    sp = decompose_spatial(spec, x)
    recon = np.einsum("xmi,xi,xni->xmn", sp.b, sp.lam, sp.b_star.conj())
    np.testing.assert_allclose(recon, spec.A(x), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2),
    l1=st.floats(0.5, 2.0), gap=st.floats(0.2, 2.0),
)
def test_biorthonormality_property(a, b, c, l1, gap):
    # A(x) = S diag(l1, l1+gap) S^{-1} with S = [[1, a + b x], [c, 1 + c (a + b x)]], det S = 1
    def A(x):
        x = np.asarray(x, float)
        s = a + b * x
        S = np.zeros(x.shape + (2, 2))
        S[..., 0, 0] = 1.0
        S[..., 0, 1] = s
        S[..., 1, 0] = c
        S[..., 1, 1] = 1.0 + c * s
        Si = np.linalg.inv(S)
        return S @ np.diag([l1, l1 + gap]) @ Si

    spec = callable_problem(2, A, _const(-np.eye(2) * [1.0, 2.0]))
    sp = decompose_spatial(spec, np.linspace(0, 1, 33))
    gram = np.einsum("xmi,xmj->xij", sp.b_star.conj(), sp.b)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(2), gram.shape), atol=1e-10)
    res = np.linalg.norm(spec.A(sp.x) @ sp.b - sp.b * sp.lam[:, None, :], axis=1)
    assert res.max() <= 1e-10 * max(1.0, np.abs(spec.A(sp.x)).max() * 4)
