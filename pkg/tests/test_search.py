import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from linni.green import ball, box, f_landscape
from linni.profiles import c_n
from linni.search import (BoundaryHitError, SearchBox4, SearchBox6, boundary_rejection4, find_max4,
                          find_saddle6, minmax_certificate, q_lattice, robin_at, stationarity_oracle4)


@pytest.mark.parametrize("domain", [ball(4), box(6)])
def test_lattice_keeps_its_margin(domain):
    pts = q_lattice(domain, 0.2)
    assert np.allclose(pts[0], domain.center)
    assert np.all(domain.distance_to_boundary(pts) >= 0.2 - 1e-12)


def test_lattice_rejects_an_empty_interior():
    with pytest.raises(ValueError):
        q_lattice(ball(4), 1.2)


def test_search_box_validation():
    with pytest.raises(ValueError):
        SearchBox4(0.01, beta=0.4)
    with pytest.raises(ValueError):
        SearchBox4(1.5)
    lo, hi = SearchBox4(0.01).lam_range
    assert lo * hi == pytest.approx(math.exp(-1))


@given(eps=st.floats(1e-12, 0.1), H=st.floats(-0.1, 0.1))
def test_stationarity_oracle_zeroes_the_lambda_derivative(eps, H):
    from linni.energy import k_eps4

    vol = ball(4).volume
    c1 = 2 * c_n(4) / vol
    lam = stationarity_oracle4(eps, H, c1, vol)
    h = 1e-6
    d = (k_eps4(lam * math.exp(h), H, eps, c1, vol) - k_eps4(lam * math.exp(-h), H, eps, c1, vol)) / (2 * h)
    scale = c_n(4) ** 2 * lam**2 / vol
    assert abs(d) <= 1e-7 * scale


@pytest.mark.parametrize("eps", [1e-2, 1e-3, 1e-4])
def test_f_only_maximizer_is_e_to_minus_half(eps):
    assert find_max4(ball(4), SearchBox4(eps), robin_term=False)["lam"] == pytest.approx(math.exp(-0.5), rel=1e-8)


def test_full_maximizer_on_the_unit_ball_hits_the_upper_face():
    # The Robin drift ln Lambda + 1/2 = H |Omega| (c1 (-ln eps))^{1/2} exceeds beta (-ln eps) unless eps < e^{-16}.
    with pytest.raises(BoundaryHitError) as info:
        find_max4(ball(4), SearchBox4(1e-3))
    point = info.value.point
    assert point["lam"] == pytest.approx(SearchBox4(1e-3).lam_range[1], rel=0.02)
    assert point["oracle_lam"] > SearchBox4(1e-3).lam_range[1]


def test_full_maximizer_is_interior_once_the_box_outgrows_the_drift():
    # the drift grows like (-ln eps)^{1/2} while the box half-width grows like -ln eps
    pt = find_max4(ball(4), SearchBox4(1e-12))
    assert np.linalg.norm(pt["Q"]) < 1e-3
    assert pt["robin"] == pytest.approx(robin_at(ball(4), np.zeros(4)), rel=1e-9)
    assert pt["lam"] == pytest.approx(pt["oracle_lam"], rel=1e-6)


def test_boundary_rejection_inequalities():
    out = boundary_rejection4(ball(4), SearchBox4(1e-12))
    assert out["passed"]
    assert out["interior_beats_Q_edge"]["margin"] > 0
    assert out["small_lambda_beats_lower_face"]["margin"] > 0


def test_default_round_constants_break_the_gap_condition():
    box6 = SearchBox6.for_domain(ball(6), C3=0.01, C4=0.05, C5=0.07)
    assert not box6.valid
    assert box6.violations == ["C0 - C1 > (C6 + C7) |Omega|"]


def test_validated_constants():
    box6 = SearchBox6.for_domain(ball(6))
    assert box6.valid
    assert box6.C0 == pytest.approx(f_landscape(ball(6), np.zeros(6)))
    assert box6.C0 - box6.C1 > (box6.C6 + box6.C7_bound) * box6.vol


@pytest.mark.parametrize("kw, message", [(dict(C1=1.0), "C2 < C1 < C0"), (dict(C4=1e-6), "0 < C3 < C4 < eta6"),
                                         (dict(C5=1e-5), "0 < C3 < C5 < Lambda6")])
def test_constant_violations_are_named(kw, message):
    assert message in SearchBox6.for_domain(ball(6), **kw).violations


@pytest.mark.parametrize("eps", [0.05, 0.025])
def test_saddle_at_the_ball_center(eps):
    s = find_saddle6(ball(6), eps)
    assert s["a"] == 0 and s["b"] == 0
    assert np.linalg.norm(s["Q"]) < 1e-6
    assert s["gradient_norm"] < 1e-8


def test_truncated_certificate_holds():
    cert = minmax_certificate(ball(6), 0.05, mesh=5, perturbations=2)
    assert cert["passed"], cert["inequalities"]
    assert cert["level_radii"]["C1"] < cert["level_radii"]["C2"]


def test_displayed_model_certificate_is_diagnostic():
    cert = minmax_certificate(ball(6), 0.05, mesh=5, perturbations=1, model="displayed")
    assert cert["model"] == "displayed"
    assert set(cert["inequalities"]) == {"lower_bound_c", "B0_below_c", "B0_bound_holds", "N_C2_below_c",
                                         "tangent_on_a_faces", "tangent_on_b_faces"}


def test_certificate_rejects_boxes():
    with pytest.raises(NotImplementedError):
        minmax_certificate(box(6), 0.05)


def test_dimension_checks():
    with pytest.raises(ValueError):
        find_max4(ball(6), SearchBox4(0.01))
    with pytest.raises(ValueError):
        find_saddle6(ball(4), 0.05)
