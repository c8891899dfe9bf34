import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from magtransmon.fields import (FilmParams, GapClosedError, JunctionFieldParams, SquidParams, barrier_height,
                                critical_field_at_angle, effective_perp_critical_field,
                                ej_inplane, ej_inplane_jacobian, ej_perp_suppression, ej_squid,
                                ej_squid_slope, gl_gap, thin_film_bcrit, vortex_scales, upper_critical_field)
from magtransmon.units import PHI0, bcs_gap_ghz

SINGLE = JunctionFieldParams(24.7, 1.03, 0.83, 231e-9)
JJ1 = JunctionFieldParams(23.5, 1.03, 0.90, 206e-9)
JJ2 = JunctionFieldParams(6.0, 1.03, 1.65, 122e-9)

# 40-digit evaluation of the closed form for JJ1 at 0.5 T
EJ_JJ1_HALF_TESLA = 11.592800953274961702
# bisection of the angle condition to 1e-15 T
ANGLE_ROOT_10MRAD = 0.8817644581124255


def test_inplane_examples():
    assert ej_inplane(SINGLE, 0.0) == 24.7
    assert ej_inplane(SINGLE, 0.83) == pytest.approx(0.0, abs=1e-12)
    assert ej_inplane(JJ1, 0.5) == pytest.approx(EJ_JJ1_HALF_TESLA, rel=1e-14)


def test_inplane_against_live_mpmath():
    mp.mp.dps = 30
    for b in (0.1, 0.37, 0.71, 0.95):
        x = mp.mpf(b) / mp.mpf("0.90")
        ref = mp.mpf("23.5") * mp.sqrt(1 - (mp.mpf(b) / mp.mpf("1.03")) ** 2) * abs(mp.sin(mp.pi * x) / (mp.pi * x))
        assert ej_inplane(JJ1, b) == pytest.approx(float(ref), rel=1e-13)


@given(st.floats(0.0, 1.02))
def test_inplane_even_and_nonnegative(b):
    v = ej_inplane(SINGLE, b)
    assert v >= 0
    assert v == ej_inplane(SINGLE, -b)


def test_gap_closed_errors():
    with pytest.raises(GapClosedError):
        ej_inplane(SINGLE, 1.03)
    with pytest.raises(GapClosedError):
        gl_gap(44.0, 1.2, 1.03)
    with pytest.raises(GapClosedError):
        ej_perp_suppression(24.7, 0.04, 0.033)


def test_gl_gap_values_and_limit():
    assert gl_gap(44.0, 0.0, 1.03) == 44.0
    d0 = float(bcs_gap_ghz(1.2))
    r = gl_gap(d0, 0.88, 1.03) / d0
    assert r == pytest.approx(math.sqrt(1 - (0.88 / 1.03) ** 2), rel=1e-14)
    near = [gl_gap(1.0, 1.03 * (1 - 10.0 ** -n), 1.03) for n in range(2, 9)]
    assert all(a > b for a, b in zip(near, near[1:])) and near[-1] < 1e-3


def test_inplane_vanishes_continuously_at_critical_field():
    assert ej_inplane(JJ2, 1.03 * (1 - 1e-12)) < 1e-4


def test_inplane_jacobian_matches_finite_differences():
    b = np.array([0.0, 0.2, 0.5, 0.85, 1.0])  # away from the |sinc| kink at b_phi0
    J = ej_inplane_jacobian(JJ1, b)
    for i, field in enumerate(("ej0", "b_phi0", "b_crit_par")):
        h = 1e-6 * getattr(JJ1, field)
        hi = JunctionFieldParams(**{**JJ1.__dict__, field: getattr(JJ1, field) + h})
        lo = JunctionFieldParams(**{**JJ1.__dict__, field: getattr(JJ1, field) - h})
        fd = (ej_inplane(hi, b) - ej_inplane(lo, b)) / (2 * h)
        assert np.allclose(J[:, i], fd, rtol=1e-6, atol=1e-7)


def test_angle_critical_field():
    assert critical_field_at_angle(0.033, 1.03, math.pi / 2) == pytest.approx(0.033, rel=1e-10)
    assert critical_field_at_angle(0.033, 1.03, 0.0) == pytest.approx(1.03, rel=1e-10)
    assert critical_field_at_angle(0.033, 1.03, 0.01) == pytest.approx(ANGLE_ROOT_10MRAD, rel=1e-10)


@given(st.floats(0.0, math.pi / 2), st.sampled_from(["linear", "square"]))
def test_angle_critical_field_bounded(theta, law):
    b = critical_field_at_angle(0.033, 1.03, theta, law)
    assert 0.033 * (1 - 1e-12) <= b <= 1.03 * (1 + 1e-12)


def test_square_law_differs_by_at_most_a_quarter():
    # effective perpendicular critical fields of the two laws over the in-plane range
    b = np.linspace(0, 0.75, 40)
    lin = effective_perp_critical_field(0.033, 1.03, b, "linear")
    sq = effective_perp_critical_field(0.033, 1.03, b, "square")
    assert np.all(sq >= lin)


def test_effective_perp_field_consistent_with_angle_root():
    b_par = 0.58
    bp = effective_perp_critical_field(0.033, 1.03, b_par)
    theta = math.atan2(bp, b_par)
    assert math.hypot(bp, b_par) == pytest.approx(critical_field_at_angle(0.033, 1.03, theta), rel=1e-9)
    assert bp < effective_perp_critical_field(0.033, 1.03, 0.0)


def test_perp_suppression_examples():
    assert ej_perp_suppression(24.7, 0.0, 0.033) == 24.7
    assert ej_perp_suppression(24.7, 0.0165, 0.033) == pytest.approx(24.7 * math.sqrt(0.75), rel=1e-14)


def test_squid_examples():
    sq = SquidParams(29.5, (23.5 - 6.0) / 29.5, 0.43e-3)
    assert ej_squid(sq, 0.0) == pytest.approx(29.5, rel=1e-14)
    assert ej_squid(sq, 0.5 * 0.43e-3) == pytest.approx(17.5, rel=1e-12)
    assert SquidParams.from_junctions(23.5, 6.0, 0.43e-3).ej_large == pytest.approx(23.5)


@given(st.floats(0.01, 0.99), st.floats(-1e-3, 1e-3))
def test_squid_periodic_and_bounded(alpha, b):
    sq = SquidParams(10.0, alpha, 0.43e-3, 0.1e-3)
    v = ej_squid(sq, b)
    assert v == pytest.approx(ej_squid(sq, b + 0.43e-3), rel=1e-9)
    assert alpha * 10.0 * (1 - 1e-12) <= v <= 10.0 * (1 + 1e-12)


def test_squid_slope_matches_finite_differences():
    sq = SquidParams(29.5, 0.59, 0.43e-3, 0.02e-3)
    b = np.linspace(-0.4e-3, 0.4e-3, 17)
    h = 1e-10
    fd = (ej_squid(sq, b + h) - ej_squid(sq, b - h)) / (2 * h)
    assert np.allclose(ej_squid_slope(sq, b), fd, rtol=1e-6, atol=1e-2)


def test_thin_film_critical_fields():
    vals = []
    for d in (10e-9, 15e-9, 30e-9):
        vals.append(thin_film_bcrit(FilmParams(d, 10e-3, 16e-9, 1600e-9, d)))
    assert vals[0] == pytest.approx(1.0, rel=0.05)
    assert vals[1] == pytest.approx(0.5, rel=0.10)
    assert vals[2] == pytest.approx(0.2, rel=0.10)


def test_vortex_scales():
    film = FilmParams(10e-9, 10e-3, 16e-9, 1600e-9, 10e-9)
    xi, bv, _ = vortex_scales(film, 410e-9)
    assert xi == pytest.approx(108e-9, rel=0.02)
    assert 10e-3 <= bv <= 13e-3
    assert upper_critical_field(120e-9) == pytest.approx(23e-3, rel=0.02)


def test_barrier_heights_near_ten_nanometres():
    h = np.array([p.barrier_height for p in (SINGLE, JJ1, JJ2)])
    assert np.all(np.abs(h / 10e-9 - 1) < 0.2)
    assert h.max() / h.min() - 1 < 0.1
    assert barrier_height(0.83, 231e-9) == pytest.approx(PHI0 / (0.83 * 231e-9))


def test_film_gap_consistency_check():
    FilmParams(1e-8, 1e-2, 1.6e-8, 1.6e-6, 1e-8, delta0=float(bcs_gap_ghz(1.2)), t_crit=1.2)
    with pytest.raises(ValueError):
        FilmParams(1e-8, 1e-2, 1.6e-8, 1.6e-6, 1e-8, delta0=40.0, t_crit=1.2)


def test_invalid_junction_parameters():
    with pytest.raises(ValueError):
        JunctionFieldParams(-1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        JunctionFieldParams(1.0, 1.0, 0.83, finger_width_l2=1e-3)  # 2.5e-3 nm barrier
    with pytest.raises(ValueError):
        SquidParams(10.0, 1.5, 1e-3)
