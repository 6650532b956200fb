import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mala_scaling import ModelSpec, PsiContext, eval_H, eval_psi, eval_U
from mala_scaling.model import eval_bundle

from oracles import central_difference, model_H, model_U


def test_unknown_family_rejected():
    with pytest.raises(ValueError, match="family"):
        ModelSpec(family="cauchy")


def test_nonpositive_tail_weight_rejected():
    with pytest.raises(ValueError, match="tail weight"):
        ModelSpec(family="strict_hp", a=0.0)


def test_invalid_order_rejected(strict_hp):
    for bad in (-1, 5, 2.5):
        with pytest.raises(ValueError, match="order"):
            eval_H(strict_hp, 0.3, bad)
        with pytest.raises(ValueError, match="order"):
            eval_U(strict_hp, 0.3, bad)
        with pytest.raises(ValueError, match="order"):
            eval_psi(strict_hp, PsiContext(0.1), 0.3, bad)


def test_hp_flag(all_models):
    assert all_models["strict_hp"].hp_satisfied
    assert all_models["iid_gauss"].hp_satisfied
    assert not all_models["gauss_prior"].hp_satisfied


def test_H_known_values():
    m = ModelSpec(family="strict_hp", beta=1.0)
    assert eval_H(m, 0.0, 0) == 0.0
    assert eval_H(m, 0.0, 1) == 1.0


def test_H_second_derivative_matches_finite_difference(strict_hp):
    # central difference of order-1 values, step 1e-4
    fd = central_difference(lambda x: np.asarray(eval_H(strict_hp, x, 1)), np.asarray(0.7), 1e-4)
    exact = eval_H(strict_hp, 0.7, 2)
    assert abs(fd - exact) / abs(exact) < 1e-6


def test_U_known_values():
    m = ModelSpec(family="strict_hp", y=0.0, a=1.0)
    assert eval_U(m, 0.0, 0) == -1.0
    assert eval_U(m, 0.0, 1) == 0.0
    assert eval_U(ModelSpec(family="iid_gauss"), 2.0, 2) == -1.0


def test_psi_reduces_to_U_when_m_zero(all_models, rng):
    ctx = PsiContext(0.0)
    xs = rng.uniform(-4, 4, size=50)
    for model in all_models.values():
        for order in range(5):
            np.testing.assert_array_equal(
                np.asarray(eval_psi(model, ctx, xs, order)),
                np.asarray(eval_U(model, xs, order)),
            )


def test_psi_known_value():
    m = ModelSpec(family="strict_hp", y=0.0)
    assert eval_psi(m, PsiContext(0.3), 0.0, 1) == pytest.approx(-0.3, abs=1e-15)


def test_psi_third_derivative_iid_gauss(iid_gauss):
    assert eval_psi(iid_gauss, PsiContext(0.7), 1.0, 3) == 0.0


@given(m=st.floats(-2, 2), x=st.floats(-10, 10), order=st.integers(0, 4))
@settings(max_examples=200, deadline=None)
def test_psi_is_U_minus_m_H_by_construction(m, x, order):
    model = ModelSpec(family="strict_hp")
    expected = eval_U(model, x, order) - m * eval_H(model, x, order)
    assert eval_psi(model, PsiContext(m), x, order) == expected


@pytest.mark.parametrize("family", ["strict_hp", "gauss_prior", "iid_gauss"])
@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_derivative_consistency_on_grid(all_models, family, order):
    model = all_models[family]
    xs = np.linspace(-5, 5, 200)
    step = 1e-4
    for fn in (eval_H, eval_U):
        fd = central_difference(lambda v: np.asarray(fn(model, v, order - 1)), xs, step)
        exact = np.asarray(fn(model, xs, order))
        scale = np.maximum(np.abs(exact), 1e-3)
        assert np.max(np.abs(fd - exact) / scale) < 1e-5


def test_even_odd_symmetry_at_y_zero(rng):
    model = ModelSpec(family="strict_hp", y=0.0)
    xs = rng.uniform(-8, 8, size=100)
    np.testing.assert_array_equal(
        np.asarray(eval_U(model, xs, 0)), np.asarray(eval_U(model, -xs, 0))
    )
    np.testing.assert_array_equal(
        np.asarray(eval_H(model, xs, 0)), -np.asarray(eval_H(model, -xs, 0))
    )


def test_iid_gauss_H_identically_zero(iid_gauss, rng):
    xs = rng.uniform(-30, 30, size=64)
    for order in range(5):
        vals = np.asarray(eval_H(iid_gauss, xs, order))
        assert np.all(vals == 0.0)
        assert eval_H(iid_gauss, float(xs[0]), order) == 0.0


def test_H_bounded_by_beta(all_models):
    xs = np.linspace(-50, 50, 2001)
    for name in ("strict_hp", "gauss_prior"):
        model = all_models[name]
        assert np.max(np.abs(eval_H(model, xs, 0))) <= abs(model.beta) + 1e-12


def test_derivatives_bounded_on_wide_grid(all_models):
    xs = np.linspace(-50, 50, 4001)
    for model in all_models.values():
        for order in range(1, 5):
            assert np.isfinite(eval_H(model, xs, order)).all()
            assert np.isfinite(eval_U(model, xs, order)).all()


def test_U_decays_at_infinity(all_models):
    for model in all_models.values():
        assert eval_U(model, 50.0, 0) < eval_U(model, 0.0, 0) - 10
        assert eval_U(model, -50.0, 0) < eval_U(model, 0.0, 0) - 10


def test_matches_independent_oracle(all_models, rng):
    xs = rng.uniform(-6, 6, size=40)
    for model in all_models.values():
        np.testing.assert_allclose(
            np.asarray(eval_H(model, xs, 0)),
            model_H(model.family, model.y, model.beta, model.a, xs),
            rtol=0,
            atol=1e-14,
        )
        np.testing.assert_allclose(
            np.asarray(eval_U(model, xs, 0)),
            model_U(model.family, model.y, model.beta, model.a, xs),
            rtol=0,
            atol=1e-14,
        )


def test_bundle_agrees_with_single_order_evaluators(all_models, rng):
    xs = rng.uniform(-6, 6, size=128)
    for model in all_models.values():
        b = eval_bundle(model, xs)
        np.testing.assert_allclose(b.h, np.asarray(eval_H(model, xs, 0)), atol=1e-15)
        np.testing.assert_allclose(b.u, np.asarray(eval_U(model, xs, 0)), atol=1e-15)
        np.testing.assert_allclose(b.h1, np.asarray(eval_H(model, xs, 1)), atol=1e-15)
        np.testing.assert_allclose(b.u1, np.asarray(eval_U(model, xs, 1)), atol=1e-15)


def test_scalar_in_scalar_out(strict_hp):
    assert isinstance(eval_H(strict_hp, 0.5, 0), float)
    assert isinstance(eval_U(strict_hp, 0.5, 3), float)
    out = eval_H(strict_hp, np.array([0.1, 0.2]), 0)
    assert isinstance(out, np.ndarray) and out.shape == (2,)
