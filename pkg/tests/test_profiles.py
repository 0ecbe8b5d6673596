import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from linni import profiles as P


def radial_laplacian(f, r, n, h):
    """Second-order finite-difference radial Laplacian."""
    return (f(r + h) - 2 * f(r) + f(r - h)) / h**2 + (n - 1) / r * (f(r + h) - f(r - h)) / (2 * h)


def test_c_n_matches_fundamental_solution_constant():
    assert P.c_n(4) == pytest.approx(4 * math.pi**2, rel=1e-15)
    assert P.c_n(6) == pytest.approx(4 * math.pi**3, rel=1e-15)


@pytest.mark.parametrize("n", [3, 4, 6])
def test_bubble_solves_critical_equation(n):
    b = P.Bubble(n, 0.7)
    u = lambda r: P.eval_bubble(b, np.stack([r] + [np.zeros_like(r)] * (n - 1), axis=-1))  # noqa: E731
    r = np.linspace(0.1, 3.0, 30)
    lap = radial_laplacian(u, r, n, 1e-4)
    rhs = n * (n - 2) * u(r) ** ((n + 2) / (n - 2))
    np.testing.assert_allclose(-lap, rhs, rtol=1e-6)


@given(lam=st.floats(0.05, 20.0), x=st.lists(st.floats(-5, 5), min_size=4, max_size=4))
def test_bubble_scaling(lam, x):
    # U_lam(x) = lam^{-m} U_1(x / lam)
    x = np.array(x)
    lhs = P.eval_bubble(P.Bubble(4, lam), x)
    rhs = lam**-1 * P.eval_bubble(P.Bubble(4, 1.0), x / lam)
    assert lhs == pytest.approx(rhs, rel=1e-12)


@given(lam=st.floats(0.1, 10.0), x=st.lists(st.floats(-3, 3), min_size=6, max_size=6))
@settings(max_examples=50)
def test_bubble_derivatives_match_finite_differences(lam, x):
    x = np.array(x)
    c = np.array([0.1, -0.2, 0.0, 0.3, 0.0, 0.05])
    b = P.Bubble(6, lam, tuple(c))
    d_lam, d_q = P.eval_bubble_derivs(b, x)
    h = 1e-6 * lam
    fd = (P.eval_bubble(P.Bubble(6, lam + h, tuple(c)), x) - P.eval_bubble(P.Bubble(6, lam - h, tuple(c)), x)) / (2 * h)
    scale = P.eval_bubble(b, x) / lam
    assert abs(d_lam - fd) <= 1e-6 * scale
    e = np.eye(6)[1] * 1e-6
    fd_q = (P.eval_bubble(P.Bubble(6, lam, tuple(c + e)), x) - P.eval_bubble(P.Bubble(6, lam, tuple(c - e)), x)) / 2e-6
    assert abs(d_q[1] - fd_q) <= 1e-6 * scale


@pytest.mark.parametrize("bad", [dict(n=2, lam=1.0), dict(n=4, lam=0.0), dict(n=4, lam=float("inf")),
                                 dict(n=4, lam=1.0, center=(0.0, 0.0))])
def test_bubble_rejects_invalid_input(bad):
    with pytest.raises(ValueError):
        P.Bubble(**bad)


@pytest.mark.parametrize("n, dpsi, source", [
    (4, P.dpsi_bar_exact, lambda s: 1 / (1 + s * s)),
    (6, P.dpsi6_exact, lambda s: 1 / (1 + s * s) ** 2),
])
def test_profiles_solve_their_equations(n, dpsi, source):
    # Delta psi + g = 0 in flux form: r^{n-1} psi'(r) = -int_0^r s^{n-1} g(s) ds
    for r in (1e-2, 0.5, 3.0, 40.0, 1e3):
        flux, _ = integrate.quad(lambda s: s ** (n - 1) * source(s), 0, r, epsrel=1e-13, limit=200)
        assert r ** (n - 1) * dpsi(np.array([r]))[0] == pytest.approx(-flux, rel=1e-10)


def test_profile_normalizations():
    assert P.psi_bar_exact(np.array([0.0]))[0] == pytest.approx(1.0, abs=1e-14)
    # n=6: leading decay 1/(4 r^2) with a (ln r)/r^4 correction
    big = np.array([1e3, 1e4])
    np.testing.assert_allclose(4 * big**2 * P.psi6_exact(big), 1.0, atol=2e-5)


def test_profile_derivatives_match_closed_forms():
    r = np.geomspace(1e-2, 1e3, 25)
    h = 1e-6 * r
    for f, df in ((P.psi_bar_exact, P.dpsi_bar_exact), (P.psi6_exact, P.dpsi6_exact)):
        np.testing.assert_allclose(df(r), (f(r + h) - f(r - h)) / (2 * h), rtol=1e-5, atol=1e-12)
    np.testing.assert_allclose(P.dpsi_bar_over_r(r), P.dpsi_bar_exact(r) / r, rtol=1e-10)
    np.testing.assert_allclose(P.dpsi6_over_r(r), P.dpsi6_exact(r) / r, rtol=1e-10)


def test_quadrature_profiles_agree_with_closed_forms():
    pb, p6 = P.solve_psi_bar(), P.solve_psi6()
    r = np.geomspace(1e-3, 5e3, 30)
    np.testing.assert_allclose(pb(r), P.psi_bar_exact(r), atol=1e-9)
    np.testing.assert_allclose(p6(r), P.psi6_exact(r), rtol=1e-7, atol=1e-12)


def test_log_constant_matches_profile_limit():
    r = 1e4
    assert float(P.psi_bar_exact(np.array([r]))[0] + 0.5 * math.log(r)) == pytest.approx(
        P.log_constant_reference(), abs=1e-7)


@pytest.mark.parametrize("n", [4, 6])
def test_bubble_integrals_match_beta_functions(n):
    quad, beta = P.bubble_integrals(n), P.beta_oracles(n)
    for key in beta:
        assert quad[key] == pytest.approx(beta[key], rel=1e-10), key


@pytest.mark.parametrize("n", [4, 6])
def test_pohozaev_identity(n):
    # |grad U|^2 = n(n-2) U^{2n/(n-2)} after integration
    b = P.bubble_integrals(n)
    assert b["grad_U^2"] == pytest.approx(n * (n - 2) * b["U^crit"], rel=1e-10)


def test_critical_bubble_integrals_closed_forms():
    # int_{R^6} U^3 = pi^3 B(3,3)/2 = pi^3/60
    assert P.bubble_integrals(6)["U^crit"] == pytest.approx(math.pi**3 / 60, rel=1e-12)
    assert P.bubble_integrals(4)["U^crit"] == pytest.approx(math.pi**2 / 6, rel=1e-12)


@pytest.mark.parametrize("n", [4, 6])
def test_gram_constants_two_routes(n):
    np.testing.assert_allclose(P.gram_constants(n), P.gram_identity(n), rtol=1e-9)


def test_gram_cross_term_vanishes():
    assert abs(P.gram_cross_term(4)) < 1e-10


@given(lam=st.floats(0.2, 5.0))
@settings(max_examples=10, deadline=None)
def test_scaled_bubble_cube_integral(lam):
    val = P.radial_integral(lambda s: (lam / (lam**2 + s * s)) ** 3, 4)
    assert val == pytest.approx(P.c_n(4) * lam / 8, rel=1e-9)
