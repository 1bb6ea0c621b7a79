import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracmix.mesh import CoefficientSpec
from fracmix.spectral import (
    Gamma0ProjectionWarning,
    a_gradient_energy,
    apply_power,
    check_exponent,
    fractional_norm,
    gradient_energy,
    h_s,
    k_s,
    l2_norm,
    verify_operator_suite,
)

from conftest import make_problem


@pytest.fixture(scope="module")
def small():
    return make_problem(1, 40)


@pytest.fixture(scope="module")
def square():
    return make_problem(2, 8, "left,bottom", CoefficientSpec("diagonal", (lambda p: 1 + p[:, 0], 2.0)))


def test_dirichlet_dirichlet_oracle():
    _, _, dec = make_problem(1, 200, "left,right")
    k = np.arange(1, 6)
    np.testing.assert_allclose(dec.eigenvalues[:5], (k * np.pi) ** 2, rtol=1e-2)
    assert dec.lambda1 == pytest.approx(9.8696, rel=1e-2)


def test_mixed_oracle():
    _, _, dec = make_problem(1, 200, "left")
    k = np.arange(1, 6)
    np.testing.assert_allclose(dec.eigenvalues[:5], ((k - 0.5) * np.pi) ** 2, rtol=1e-2)


def test_constant_coefficient_scales_eigenvalues():
    _, _, d1 = make_problem(1, 30)
    _, _, d4 = make_problem(1, 30, coeff=CoefficientSpec("diagonal", (4.0,)))
    np.testing.assert_allclose(d4.eigenvalues, 4 * d1.eigenvalues, rtol=1e-13)


@pytest.mark.parametrize("mass_mode", ["lumped", "consistent"])
def test_m_orthonormal_basis(mass_mode):
    _, ops, dec = make_problem(2, 6, "left", mass_mode=mass_mode)
    Phi = dec.eigenvectors
    np.testing.assert_allclose(Phi.T @ (ops.M @ Phi), np.eye(dec.n_modes), atol=1e-10)
    assert np.all(Phi[ops.domain.gamma0_nodes] == 0.0)
    assert np.all(np.diff(dec.eigenvalues) >= 0)


def test_power_zero_is_identity(small):
    dom, _, dec = small
    v = np.random.default_rng(0).standard_normal(dom.n_nodes)
    v[dom.gamma0_nodes] = 0.0
    np.testing.assert_allclose(apply_power(dec, 0.0, v), v, atol=1e-12)


def test_single_mode_scaling(small):
    _, _, dec = small
    phi = dec.eigenvectors[:, 0]
    out = apply_power(dec, -0.5, phi)
    np.testing.assert_allclose(out, dec.lambda1 ** -0.5 * phi, atol=1e-12)


def test_second_mode_under_k_half():
    _, _, dec = make_problem(1, 200)
    phi2 = dec.eigenvectors[:, 1]
    lam2 = dec.eigenvalues[1]
    assert lam2 == pytest.approx((1.5 * np.pi) ** 2, rel=1e-3)
    np.testing.assert_allclose(k_s(dec, 0.5, phi2), lam2 ** -0.5 * phi2, atol=1e-12)
    assert lam2 ** -0.5 == pytest.approx(0.21222, abs=1e-4)


def test_round_trip(small):
    dom, ops, dec = small
    v = np.random.default_rng(1).standard_normal(dom.n_nodes)
    v[dom.gamma0_nodes] = 0.0
    back = apply_power(dec, 0.7, apply_power(dec, -0.7, v))
    assert l2_norm(ops, back - v) <= 1e-10 * l2_norm(ops, v)


def test_half_power_squared_is_k(small):
    dom, ops, dec = small
    v = np.random.default_rng(2).standard_normal(dom.n_nodes)
    v[dom.gamma0_nodes] = 0.0
    a, b = h_s(dec, 0.4, h_s(dec, 0.4, v)), k_s(dec, 0.4, v)
    assert l2_norm(ops, a - b) <= 1e-10 * l2_norm(ops, b)


def test_zero_field_maps_to_zero(small):
    dom, _, dec = small
    assert not np.any(k_s(dec, 0.3, np.zeros(dom.n_nodes)))


def test_dirichlet_projection_warns(small):
    dom, _, dec = small
    v = np.ones(dom.n_nodes)
    with pytest.warns(Gamma0ProjectionWarning):
        out = apply_power(dec, 0.5, v)
    assert np.all(out[dom.gamma0_nodes] == 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        v[dom.gamma0_nodes] = 0.0
        apply_power(dec, 0.5, v)


def test_norm_variants(small):
    dom, ops, dec = small
    phi = dec.eigenvectors[:, 2]
    assert fractional_norm(dec, 0.3, phi) == pytest.approx(dec.eigenvalues[2] ** 0.3, rel=1e-12)
    v = np.random.default_rng(3).standard_normal(dom.n_nodes)
    v[dom.gamma0_nodes] = 0.0
    assert fractional_norm(dec, 0.0, v) == pytest.approx(l2_norm(ops, v), rel=1e-12)
    full = fractional_norm(dec, 0.3, v, "full")
    assert full ** 2 == pytest.approx(l2_norm(ops, v) ** 2 + fractional_norm(dec, 0.3, v) ** 2, rel=1e-12)
    with pytest.raises(ValueError):
        fractional_norm(dec, 0.3, v, "sobolev")


def test_poincare_equality_on_first_mode(small):
    _, ops, dec = small
    phi = dec.eigenvectors[:, 0]
    for s in (0.1, 0.5, 0.9):
        assert l2_norm(ops, phi) == pytest.approx(dec.lambda1 ** -s * fractional_norm(dec, s, phi), rel=1e-12)


def test_semigroup_quarter_plus_quarter(small):
    dom, ops, dec = small
    v = np.random.default_rng(4).standard_normal(dom.n_nodes)
    v[dom.gamma0_nodes] = 0.0
    a = apply_power(dec, 0.25, apply_power(dec, 0.25, v))
    b = apply_power(dec, 0.5, v)
    assert np.max(np.abs(a - b)) < 1e-10 * np.max(np.abs(b))


def test_energy_identity_half(square):
    dom, ops, dec = square
    v = np.random.default_rng(6).standard_normal(dom.n_nodes)
    v[dom.gamma0_nodes] = 0.0
    assert a_gradient_energy(ops, v) == pytest.approx(fractional_norm(dec, 0.5, v) ** 2, rel=1e-10)
    c = np.full(dom.n_nodes, 2.0)
    assert abs(gradient_energy(ops, c)) < 1e-12


@pytest.mark.parametrize("s", [0.0, 1.0, -0.2, 1.5])
def test_exponent_range(s):
    with pytest.raises(ValueError, match=r"s must lie in \(0,1\)"):
        check_exponent(s)


@pytest.mark.parametrize("problem", ["small", "square"])
def test_operator_suite_passes(problem, request):
    _, ops, dec = request.getfixturevalue(problem)
    report = verify_operator_suite(dec, ops, trials=10)
    failed = [k for k, v in report.items() if not v["passed"]]
    assert not failed, {k: report[k] for k in failed}
    for law in ("self_adjoint", "inverse_round_trip", "semigroup", "kS_energy_identity"):
        assert report[law]["max_violation"] < 1e-10


# ---------------------------------------------------------------------------
# property-based checks over random fields and exponents

_fields = st.integers(min_value=0, max_value=2 ** 31)
_exps = st.floats(min_value=0.05, max_value=0.95)


@settings(max_examples=40, deadline=None)
@given(seed=_fields, s=_exps)
def test_k_energy_identity_property(small, seed, s):
    dom, ops, dec = small
    v = np.random.default_rng(seed).standard_normal(dom.n_nodes)
    v[dom.gamma0_nodes] = 0.0
    left = k_s(dec, s, v) @ (ops.K_A @ v)
    right = fractional_norm(dec, 0.5 * (1 - s), v) ** 2
    assert left == pytest.approx(right, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=_fields, s=_exps)
def test_self_adjoint_property(square, seed, s):
    dom, ops, dec = square
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, dom.n_nodes))
    u[dom.gamma0_nodes] = v[dom.gamma0_nodes] = 0.0
    a = apply_power(dec, s, u) @ (ops.M @ v)
    b = u @ (ops.M @ apply_power(dec, s, v))
    assert abs(a - b) <= 1e-10 * l2_norm(ops, apply_power(dec, s, u)) * l2_norm(ops, v)


@settings(max_examples=40, deadline=None)
@given(seed=_fields, s1=_exps, s2=_exps)
def test_monotone_embedding_property(small, seed, s1, s2):
    dom, _, dec = small
    lo, hi = sorted((s1, s2))
    v = np.random.default_rng(seed).standard_normal(dom.n_nodes)
    v[dom.gamma0_nodes] = 0.0
    bound = max(1.0, dec.lambda1 ** (lo - hi)) * fractional_norm(dec, hi, v)
    assert fractional_norm(dec, lo, v) <= bound * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=_fields, s=_exps)
def test_gradient_bounds_property(square, seed, s):
    dom, ops, dec = square
    v = np.random.default_rng(seed).standard_normal(dom.n_nodes)
    v[dom.gamma0_nodes] = 0.0
    L1, L2 = ops.coeff.lambda1, ops.coeff.lambda2
    g = gradient_energy(ops, v)
    assert gradient_energy(ops, k_s(dec, s, v)) <= L2 / L1 * dec.lambda1 ** (-2 * s) * g * (1 + 1e-10)
    assert gradient_energy(ops, h_s(dec, s, v)) <= L2 / L1 * dec.lambda1 ** (-s) * g * (1 + 1e-10)
