import numpy as np
import pytest

from conftest import poly_problem
from perturba.errors import SpecificationError
from perturba.iteration import build_expansion
from perturba.layers import erfc_profile
from perturba.problem import preset
from perturba.series import (
    GridField,
    boundary_residuals,
    default_t_nodes,
    default_x_nodes,
    evaluate_partial_sum,
)


def test_zero_data_gives_zero_field():
    spec = poly_problem([[[1]]], [[[-1]]])
    fld = evaluate_partial_sum(build_expansion(spec, order=0), 0, 0.1)
    assert np.abs(fld.values).max() == 0.0
    assert boundary_residuals(fld, spec) == (0.0, 0.0, 0.0)


def test_zero_field_reports_initial_data():
    spec = preset("scalar-const")
    x = default_x_nodes()
    fld = GridField(x, default_t_nodes(0.1, 1.0), np.zeros((x.size, 129, 1)))
    init, left, right = boundary_residuals(fld, spec)
    assert init == pytest.approx(np.abs(spec.h(x)).max(), abs=0)
    assert left == right == 0.0


def test_vector_part_only_is_epsilon_independent():
    # f = x(1-x), beta = -1: v0 = x(1-x) equals h, so no exponential part and no layers
    spec = poly_problem([[[1]]], [[[-1]]], f=[[[0], [1], [-1]]], h=[[0, 1, -1]])
    exp = build_expansion(spec, order=0)
    assert not exp.terms[0].has_layers
    x, t = np.linspace(0, 1, 11), np.linspace(0, 1, 11)
    a = evaluate_partial_sum(exp, 0, 1 / 16, x, t).values
    b = evaluate_partial_sum(exp, 0, 1 / 200, x, t).values
    np.testing.assert_allclose(a, b, atol=1e-14)
    np.testing.assert_allclose(a[..., 0], np.broadcast_to((x * (1 - x))[:, None], (11, 11)), atol=1e-12)


def test_hand_evaluation_at_midpoint_final_time():
    spec = preset("scalar-forced")
    exp = build_expansion(spec, order=0)
    term, ctx = exp.terms[0], exp.ctx
    eps, T = 1 / 32, spec.T
    ix = int(np.argmin(np.abs(ctx.grid.x - 0.5)))
    assert ctx.grid.x[ix] == pytest.approx(0.5, abs=1e-15)
    em = ((T + eps) / eps) ** ctx.beta0[0]
    tau = np.log((T + eps) / eps) / eps
    hand = term.V.values[-1, ix, 0] + term.C_hat(np.array([T]))[0, ix, 0, 0] * em
    for wall in (0, 1):
        amp = term.d[wall].values[-1, 0] + term.omega[wall].values[-1, 0, 0] * em
        hand += amp * erfc_profile(0.5 / eps**1.5, tau)
    fld = evaluate_partial_sum(exp, 0, eps, [0.5], [T])
    assert abs(fld.values[0, 0, 0] - hand) < 1e-10


def test_evaluation_is_deterministic():
    exp = build_expansion(preset("complex-2x2"), order=2)
    a = evaluate_partial_sum(exp, 2, 1 / 64)
    b = evaluate_partial_sum(exp, 2, 1 / 64)
    assert np.array_equal(a.values, b.values)
    assert a.to_csv() == b.to_csv()


def test_partial_sum_order_checked():
    exp = build_expansion(preset("scalar-const"), order=1)
    with pytest.raises(SpecificationError):
        evaluate_partial_sum(exp, 2, 0.1)
    with pytest.raises(SpecificationError):
        evaluate_partial_sum(exp, 0, 1.5)


def test_grid_field_round_trip(tmp_path):
    exp = build_expansion(preset("complex-2x2"), order=0)
    fld = evaluate_partial_sum(exp, 0, 1 / 16, np.linspace(0, 1, 5), np.linspace(0, 1, 4))
    fld.save(tmp_path / "u")
    back = GridField.load(tmp_path / "u")
    assert np.array_equal(back.values, fld.values)
    assert np.array_equal(back.x_nodes, fld.x_nodes)
    assert back.meta == fld.meta
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "x,t,re_u0,im_u0,re_u1,im_u1"


def test_grid_field_validation():
    with pytest.raises(SpecificationError):
        GridField([0, 1], [0, 1], np.zeros((2, 3, 1)))
    with pytest.raises(SpecificationError):
        GridField([0, 0.5, 0.4], [0, 1], np.zeros((3, 2, 1)))
    with pytest.raises(SpecificationError):
        GridField([0, 1], [0, 1], np.full((2, 2, 1), np.nan))


def test_boundary_residuals_need_boundary_nodes():
    fld = GridField([0.1, 1.0], [0.0, 1.0], np.zeros((2, 2, 1)))
    with pytest.raises(SpecificationError):
        boundary_residuals(fld, preset("scalar-const"))


def _operator_residual(exp, n, eps):
    """Max of |f - L_eps u_n| by central differences on an interior patch."""
    spec = exp.spec
    x = np.linspace(0.2, 0.8, 7)
    t = np.linspace(0.2, 0.9, 8)
    dt, dx = 1e-4, 1e-3

    def u(xs, ts):
        return evaluate_partial_sum(exp, n, eps, xs, ts).values

    u0 = u(x, t)
    ut = (u(x, t + dt) - u(x, t - dt)) / (2 * dt)
    uxx = (u(x + dx, t) - 2 * u0 + u(x - dx, t)) / dx**2
    A = spec.A(x)[:, None]
    D = spec.D(t)[None]
    X, Tt = np.meshgrid(x, t, indexing="ij")
    Lu = (eps + t)[None, :, None] * ut - eps**2 * np.einsum("xtab,xtb->xta", A, uxx) \
        - np.einsum("xtab,xtb->xta", D, u0)
    return np.abs(spec.f(X, Tt) - Lu).max()


@pytest.mark.parametrize("name", ["scalar-const", "coupled-2x2"])
@pytest.mark.parametrize("n", [0, 2])
def test_restriction_identity_residual_shrinks(name, n):
    exp = build_expansion(preset(name), order=n)
    eps = [1 / 16, 1 / 32, 1 / 64, 1 / 128]
    res = [_operator_residual(exp, n, e) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(res), 1)[0]
    assert slope >= (n + 1) / 2 - 0.3, (res, slope)
