import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from magtransmon.coherence import (CoherenceEnvironment, QuasiparticleParams, ShotNoiseParams, VortexParams,
                                   cavity_linewidth, coherence_budget, creep_function, df01_dej,
                                   dielectric_background_t1, photon_shotnoise_rate,
                                   photon_shotnoise_rate_small_chi, pure_dephasing, purcell_t1,
                                   quasiparticle_rate, sensitivity, sensitivity_regression, vortex_rate,
                                   vortex_slope, vortex_threshold_field)
from magtransmon.cpb import transmon_transitions
from magtransmon.fields import SquidParams, ej_squid
from magtransmon.fits import DEFAULT_RELATION, ej_from_f01
from magtransmon.units import bcs_gap_ghz, bose_einstein, kelvin_to_ghz

# (1.9 / 0.12)^2 / (2 pi 8.107 / 5800) ns, evaluated with 40 digits
PURCELL_T1_US = 28.545171854725207814
# 1 / (exp(h 8.107 GHz / k_B 76 mK) - 1), 40 digits
N_THERMAL = 0.0060155616179593889788

SQUID = SquidParams(29.5, 17.5 / 29.5, 0.43e-3, 0.0)


def test_purcell_value_and_edge_cases():
    kappa = cavity_linewidth(8.107, 5800)
    assert purcell_t1(1.9, 0.12, kappa) == pytest.approx(PURCELL_T1_US, rel=1e-14)
    assert purcell_t1(1.9, 0.0, kappa) == math.inf
    with pytest.raises(ValueError):
        purcell_t1(0.0, 0.12, kappa)


@given(st.floats(0.2, 5.0), st.floats(0.01, 0.3))
def test_purcell_grows_with_detuning(delta, g):
    kappa = cavity_linewidth(8.107, 5800)
    assert purcell_t1(delta * 1.1, g, kappa) > purcell_t1(delta, g, kappa)
    assert purcell_t1(-delta, g, kappa) == purcell_t1(delta, g, kappa)


def test_dielectric_limit():
    assert dielectric_background_t1(6.0, 3.5e6) == pytest.approx(3.5e6 / (2 * math.pi * 6.0) * 1e-3)


def test_thermal_occupation():
    mp.mp.dps = 30
    assert bose_einstein(8.107, 0.076) == pytest.approx(N_THERMAL, rel=1e-13)
    assert 5.5e-3 <= bose_einstein(8.107, 0.076) <= 6.5e-3
    assert bose_einstein(8.107, 0.0) == 0.0


def test_gap_from_critical_temperature():
    assert float(bcs_gap_ghz(1.2)) == pytest.approx(1.764 * kelvin_to_ghz(1.2), rel=1e-12)
    assert float(bcs_gap_ghz(1.2)) == pytest.approx(44.106955360259806, rel=1e-12)


def _qp_bound(t):
    ej = float(ej_from_f01([1.8], DEFAULT_RELATION)[0])
    ec = float(DEFAULT_RELATION(ej))
    gap = 0.52 * float(bcs_gap_ghz(1.2))
    return 1.0 / quasiparticle_rate(ej, ec, 1.8, QuasiparticleParams(t, gap))


def test_quasiparticle_bound_and_monotonicity():
    assert _qp_bound(0.090) >= 2.4
    t = np.linspace(0.04, 0.2, 12)
    lims = [_qp_bound(x) for x in t]
    assert all(a > b for a, b in zip(lims, lims[1:]))


def test_shot_noise_zero_cases_and_small_chi_limit():
    kappa = cavity_linewidth(8.107, 5800)
    assert photon_shotnoise_rate(ShotNoiseParams(0.0, kappa, 0.076, 8.107)) == 0.0
    assert photon_shotnoise_rate(ShotNoiseParams(-1e-3, kappa, 0.0, 8.107)) == 0.0
    for ratio in (1e-4, 1e-3, 9e-3):
        sp = ShotNoiseParams(-ratio * kappa, kappa, 0.076, 8.107)
        full, small = photon_shotnoise_rate(sp), photon_shotnoise_rate_small_chi(sp)
        assert full == pytest.approx(small, rel=0.01)


@given(st.floats(1e-4, 1.0), st.floats(0.02, 0.2))
def test_shot_noise_nonnegative_and_bounded(ratio, t):
    kappa = cavity_linewidth(8.107, 5800)
    sp = ShotNoiseParams(ratio * kappa, kappa, t, 8.107)
    rate = photon_shotnoise_rate(sp)
    assert rate >= 0
    assert rate <= photon_shotnoise_rate_small_chi(sp) * (1 + 1e-9)


def test_vortex_threshold_and_rate():
    vp = VortexParams(5.0, 1.3)
    assert vortex_threshold_field(vp) == pytest.approx(0.26e-3, rel=0.02)
    assert vortex_rate(0.0, 0.0, vp, 6.0, 6.0, 1.03) == 0.0
    # asymptotically linear with slope p0 per mT at zero in-plane field
    big = vortex_rate(50e-3, 0.0, vp, 6.0, 6.0, 1.03)
    assert big == pytest.approx(5.0 * 50 - 1.3, rel=1e-4)
    assert vortex_slope(0.0, vp, 6.0, 6.0, 1.03) == 5.0


@given(st.floats(-2e-3, 2e-3), st.floats(0.0, 0.9))
def test_vortex_rate_even_about_offset(b, b_par):
    vp = VortexParams(5.0, 1.3, b0_offset=-0.4e-3)
    a = vortex_rate(-0.4e-3 + b, b_par, vp, 5.0, 6.0, 1.03)
    c = vortex_rate(-0.4e-3 - b, b_par, vp, 5.0, 6.0, 1.03)
    assert a >= 0 and a == pytest.approx(c, rel=1e-12, abs=1e-15)


def test_creep_function_limits():
    assert creep_function(0.0, 0.15) == pytest.approx(0.15)
    assert creep_function(1e6, 0.15) == pytest.approx(1.0, rel=1e-9)


def test_pure_dephasing_flags_negative():
    d = pure_dephasing(10.0, 2.0)
    assert d.rate == pytest.approx(0.1 - 0.25) and d.below_zero
    assert not pure_dephasing(1.0, 10.0).below_zero
    with pytest.raises(ValueError):
        pure_dephasing(0.0, 1.0)


def test_sensitivity_zero_at_sweetspots():
    top = sensitivity(SQUID, DEFAULT_RELATION, 0.0)
    bottom = sensitivity(SQUID, DEFAULT_RELATION, 0.5 * SQUID.b_phi0_squid)
    assert abs(top) * 1e-3 < 1e-6 and abs(bottom) * 1e-3 < 1e-6


def test_sensitivity_matches_end_to_end_finite_differences():
    b = np.linspace(0.02e-3, 0.2e-3, 7)
    h = 1e-8  # 1e-5 mT

    def f01(x):
        ej = ej_squid(SQUID, x)
        return transmon_transitions(ej, DEFAULT_RELATION(ej))[0]

    fd = np.abs((f01(b + h) - f01(b - h)) / (2 * h))
    assert np.allclose(sensitivity(SQUID, DEFAULT_RELATION, b), fd, rtol=1e-3)


def test_df01_dej_matches_finite_difference():
    for ej in (5.0, 15.0, 30.0):
        h = 1e-5 * ej
        fd = (transmon_transitions(ej + h, DEFAULT_RELATION(ej + h))[0]
              - transmon_transitions(ej - h, DEFAULT_RELATION(ej - h))[0]) / (2 * h)
        assert df01_dej(ej, DEFAULT_RELATION)[0] == pytest.approx(fd, rel=1e-6)


@given(st.floats(0.001, 0.5), st.floats(0.0, 2.0))
def test_regression_exact_on_noiseless_line(a, b):
    x = np.linspace(0.0, 20.0, 9)
    tr = sensitivity_regression(np.column_stack([x, a * x + b]))
    assert tr.a == pytest.approx(a, rel=1e-9, abs=1e-12)
    assert tr.b == pytest.approx(b, rel=1e-9, abs=1e-10)


def test_regression_rejects_degenerate_input():
    with pytest.raises(ValueError):
        sensitivity_regression([[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]])


def _budget_at(f01_target, b_perp=0.0, env=None):
    env = env or CoherenceEnvironment()
    ej = float(ej_from_f01([f01_target], DEFAULT_RELATION)[0])
    ec = float(DEFAULT_RELATION(ej))
    f01, f2h = transmon_transitions(ej, ec)
    return coherence_budget(env, ej=ej, ec=ec, f01=f01, anharmonicity=2 * (f2h - f01), b_par=0.17,
                            b_perp=b_perp, f01_zero=7.5)


def test_budget_totals_and_channel_switches():
    bud = _budget_at(7.2, b_perp=0.3e-3)
    assert bud.gamma1 == pytest.approx(sum(bud.relaxation.values()))
    assert bud.t2_echo <= 2 * bud.t1 * (1 + 1e-12)
    only = _budget_at(7.2, b_perp=0.3e-3)
    only.enabled = frozenset({"purcell"})
    assert only.gamma1 == pytest.approx(bud.relaxation["purcell"])


def test_purcell_larger_closer_to_cavity():
    assert _budget_at(7.2).relaxation["purcell"] > _budget_at(5.2).relaxation["purcell"]


def test_purcell_quadratic_in_detuning():
    kappa = cavity_linewidth(8.107, 5800)
    assert purcell_t1(3.8, 0.12, kappa) == pytest.approx(4 * purcell_t1(1.9, 0.12, kappa), rel=1e-14)


def test_dielectric_scaling_rules():
    t = dielectric_background_t1(5.57, 3.5e6)
    assert t == pytest.approx(100.0, rel=0.002)
    assert dielectric_background_t1(11.14, 3.5e6) == pytest.approx(t / 2, rel=1e-14)
    assert dielectric_background_t1(5.57, 7.0e6) == pytest.approx(2 * t, rel=1e-14)


def test_quasiparticle_rate_vanishes_at_cold_bath():
    gap = float(bcs_gap_ghz(1.2))
    assert quasiparticle_rate(20.0, 0.24, 6.0, QuasiparticleParams(1e-3, gap)) == 0.0
    assert quasiparticle_rate(20.0, 0.24, 6.0, QuasiparticleParams(0.1, gap)) > 0.0


def test_vortex_rate_zero_at_offset_and_asymptote():
    vp = VortexParams(5.0, 1.3, b0_offset=0.3e-3)
    assert vortex_rate(0.3e-3, 0.0, vp, 6.0, 6.0, 1.03) == 0.0
    # p |B~| = 21 q
    bt = 21 * 1.3 / 5.0 * 1e-3
    for s in (1, -1):
        r = vortex_rate(0.3e-3 + s * bt, 0.0, vp, 6.0, 6.0, 1.03)
        assert abs(r - (5.0 * abs(bt) * 1e3 - 1.3)) / r < 0.01


@given(st.floats(0.0, 20.0), st.floats(0.0, 20.0), st.floats(0.0, 0.99))
def test_creep_function_monotone(x1, x2, eps):
    lo, hi = sorted((x1, x2))
    assert creep_function(lo, eps) <= creep_function(hi, eps) + 1e-15


def test_pure_dephasing_arithmetic():
    assert pure_dephasing(3.0, 10.0).rate == pytest.approx(1 / 3 - 1 / 20, rel=1e-14)
    assert pure_dephasing(4.0, 2.0).rate == 0.0
    assert pure_dephasing(1.0, math.inf).rate == 1.0


@given(st.floats(0.01e-3, 0.2e-3))
def test_sensitivity_symmetric_about_sweetspot(b):
    s = sensitivity(SQUID, DEFAULT_RELATION, np.array([b, -b]))
    assert s[0] == pytest.approx(s[1], rel=1e-9)


def test_regression_exact_line_noisy_line_and_constant():
    x = np.linspace(0.0, 30.0, 15)
    tr = sensitivity_regression(np.column_stack([x, 0.02 * x + 0.1]))
    assert abs(tr.a - 0.02) < 1e-12 and abs(tr.b - 0.1) < 1e-12
    rng = np.random.default_rng(11)
    noisy = sensitivity_regression(np.column_stack([x, 0.02 * x + 0.1 + rng.normal(0, 0.01, x.size)]))
    assert abs(noisy.a - 0.02) < 3 * noisy.a_err
    flat = sensitivity_regression(np.column_stack([x, np.full_like(x, 0.4)]))
    assert abs(flat.a) < 1e-14


def _shot_noise_mp(chi, kappa, n):
    mp.mp.dps = 40
    x = mp.mpf(chi) / mp.mpf(kappa)
    root = mp.sqrt((1 + 2j * x) ** 2 + 8j * x * mp.mpf(n))
    return float(mp.pi * mp.mpf(kappa) * (mp.re(root) - 1) * 1e3)


@pytest.mark.parametrize("ratio", [1e-6, 2e-3, 0.3, 5.0])
def test_shot_noise_accurate_at_small_ratio(ratio):
    kappa = cavity_linewidth(8.107, 5800)
    sp = ShotNoiseParams(ratio * kappa, kappa, 0.0234375, 8.107)
    n = bose_einstein(8.107, 0.0234375)
    assert photon_shotnoise_rate(sp) == pytest.approx(_shot_noise_mp(sp.chi, kappa, n), rel=1e-9)
