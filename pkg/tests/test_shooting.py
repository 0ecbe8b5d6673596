import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from linni import shooting
from linni.shooting import (MATCH_LOG_U0, ShootingProblem, bracket_family, dichotomy_scan, find_nonconstant,
                            inner_corrector, matched_root_oracle, scan, shoot, terminal_slopes)


def plain_ivp_slope(problem, u0):
    """u'(R) by direct integration in r from a two-term series start; an oracle for moderate u0."""
    n = problem.n
    r0 = 1e-6
    u_start = u0 + problem.f(u0) * r0**2 / (2 * n)
    du_start = problem.f(u0) * r0 / n
    sol = integrate.solve_ivp(lambda r, y: [y[1], problem.f(y[0]) - (n - 1) / r * y[1]], (r0, problem.R),
                              [u_start, du_start], method="DOP853", rtol=1e-13, atol=1e-15)
    return sol.y[1, -1]


def test_problem_validation():
    for bad in (dict(n=2, mu=1.0), dict(n=4, mu=0.0), dict(n=4, mu=1.0, R=-1.0)):
        with pytest.raises(ValueError):
            ShootingProblem(**bad)
    with pytest.raises(ValueError):
        shoot(ShootingProblem(4, 1.0), -1.0)


def test_constant_solution_has_zero_slope():
    for n in (3, 4, 5, 6, 7):
        p = ShootingProblem(n, 0.5)
        assert abs(shoot(p, p.constant)) < 1e-12


def test_regression_slopes_normalized_n4():
    p = ShootingProblem(4, 1.0, normalized=True)
    assert shoot(p, 2 * p.constant) == pytest.approx(-0.2427621401864302, rel=1e-9)
    assert shoot(p, 0.5 * p.constant) == pytest.approx(0.03368941886137457, rel=1e-9)


@pytest.mark.parametrize("n, ratio", [(4, 2.0), (4, 0.5), (5, 3.0), (6, 10.0), (3, 0.2)])
def test_shoot_matches_an_independent_integration(n, ratio):
    p = ShootingProblem(n, 0.7, normalized=True)
    u0 = ratio * p.constant
    assert shoot(p, u0) == pytest.approx(plain_ivp_slope(p, u0), rel=1e-8, abs=1e-12)


@given(n=st.sampled_from([3, 5, 6]), ratio=st.floats(0.1, 50.0))
@settings(max_examples=15, deadline=None)
def test_normalized_and_plain_forms_share_slopes(n, ratio):
    norm = ShootingProblem(n, 0.3, normalized=True)
    plain = ShootingProblem(n, 0.3)
    lu = math.log(ratio * norm.constant)
    s_norm = terminal_slopes(norm, [lu])[0]
    s_plain = terminal_slopes(plain, [lu + math.log(norm.to_plain)])[0]
    assert s_norm == pytest.approx(s_plain, rel=1e-8, abs=1e-12)


def test_direct_and_matched_paths_agree_at_the_switch():
    p = ShootingProblem(4, 0.1)
    s = terminal_slopes(p, [MATCH_LOG_U0 - 1e-9, MATCH_LOG_U0])
    assert s[0] == pytest.approx(s[1], rel=1e-7)


def test_inner_corrector_constant():
    _, c_inf = inner_corrector()
    assert c_inf == pytest.approx(-10.158883083, abs=1e-8)


@pytest.mark.parametrize("mu, expected", [(0.1, 1549.8627), (0.05, 6296.53)])
def test_matched_oracle_values(mu, expected):
    assert matched_root_oracle(mu) == pytest.approx(expected, abs=1e-2)


def test_n4_root_agrees_with_the_matching_oracle():
    o = matched_root_oracle(0.1)
    res = find_nonconstant(ShootingProblem(4, 0.1), (o - 1, o + 1))
    assert res.classification == "nonconstant-found"
    assert res.path == "matched"
    assert res.log_u0 == pytest.approx(o, rel=1e-8)
    assert res.weak_residual < 1e-9


def test_n5_nonconstant_solution():
    out = scan(ShootingProblem(5, 0.1))
    assert len(out["found"]) >= 1
    res = out["found"][0]
    assert abs(res.slope) < 1e-9
    assert res.weak_residual < 1e-8
    assert np.all(res.profile > 0)
    assert res.profile[-1] == pytest.approx(1.0)
    assert res.log_max_min > 10


def test_root_is_stable_under_tolerance_halving():
    p = ShootingProblem(6, 0.1)
    out = scan(p)
    a = out["found"][0].log_u0
    grid = out["grid"]
    i = int(np.searchsorted(grid, a))
    b = find_nonconstant(p, (grid[i - 1], grid[i]), rtol=5e-13).log_u0
    assert b == pytest.approx(a, rel=1e-9)


@pytest.mark.parametrize("n", [3, 7])
def test_no_nonconstant_solution_outside_dimensions_4_to_6(n):
    assert scan(ShootingProblem(n, 0.1))["found"] == []


def test_bracket_family_widening():
    p = ShootingProblem(5, 0.1)
    base, wide = bracket_family(p), bracket_family(p, widen=2.0)
    assert np.all(np.diff(base) > 0)
    assert wide[0] == pytest.approx(base[0] - math.log(2))
    assert wide[-1] == pytest.approx(base[-1] + math.log(2))
    n4 = bracket_family(ShootingProblem(4, 0.1))
    assert n4[-1] == pytest.approx(64 / 0.1**2)
    assert np.all(np.diff(n4) > 0)


def test_blowup_sentinel(monkeypatch):
    # from u0 far below the constant, u overshoots the constant; a 1.2x cap turns that into a blow-up
    monkeypatch.setattr(shooting, "BLOWUP_FACTOR", 1.2)
    p = ShootingProblem(4, 1.0, R=20.0)
    assert shoot(p, 1e-3) == np.inf
    assert terminal_slopes(p, [math.log(1e-3)])[0] == np.inf
    assert np.isfinite(shoot(p, 0.5))


class _Oscillating(ShootingProblem):
    """A negative mu makes u behave like a Bessel J0 and cross zero; validation is skipped on purpose."""

    def __post_init__(self):
        pass

    @property
    def constant(self):
        return 1.0


def test_crossing_sentinel():
    p = _Oscillating(4, -50.0)
    assert shoot(p, 0.1) == -np.inf
    assert terminal_slopes(p, [math.log(0.1)])[0] == -np.inf
    # sqrt(1) R stays below the first zero of J0, so no crossing
    assert np.isfinite(shoot(_Oscillating(4, -1.0), 0.1))


def test_dichotomy_rows_and_worker_count(monkeypatch):
    serial = dichotomy_scan([3, 5], [0.1])
    monkeypatch.setenv("LINNI_JOBS", "2")
    parallel = dichotomy_scan([3, 5], [0.1])
    assert [r["classification"] for r in serial] == ["none-found", "nonconstant-found"]
    assert [r["classification"] for r in parallel] == [r["classification"] for r in serial]
    assert parallel[1]["log_u0"] == pytest.approx(serial[1]["log_u0"], rel=1e-12)
