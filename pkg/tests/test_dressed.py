import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magtransmon.cpb import transmon_transitions
from magtransmon.dressed import (CavityParams, LabelingError, QutritLevels, bare_from_dressed,
                                 build_and_solve_jc, dispersive_chi, dress_with_law, dressed_energies,
                                 ej_dressing_correction, excitation_blocks, jc_hamiltonian)
from magtransmon.fits import DEFAULT_RELATION, ej_from_f01

# mpmath, 40 digits
CHI_FULL = -0.0010048761849736708064
CHI_RWA = -0.0010264332703138153404


def test_chi_frozen_values():
    assert dispersive_chi(6.2, -0.3, 0.12, 8.107) == pytest.approx(CHI_FULL, rel=1e-13)
    assert dispersive_chi(6.2, -0.3, 0.12, 8.107, rotating_wave_only=True) == pytest.approx(CHI_RWA, rel=1e-13)
    assert dispersive_chi(6.2, 0.0, 0.12, 8.107) == 0.0
    with pytest.raises(ValueError):
        dispersive_chi(8.107, -0.3, 0.1, 8.107)
    with pytest.raises(ValueError):
        dispersive_chi(8.407, -0.3, 0.1, 8.107)


@settings(max_examples=25)
@given(st.floats(3.0, 6.5), st.floats(0.15, 0.35), st.floats(0.02, 0.08))
def test_model_cavity_pull_matches_rwa_chi_when_far_detuned(f01, alpha, g):
    delta = abs(f01 - 8.107)
    if delta / g <= 15:
        return
    q1 = QutritLevels(f01, f01 - alpha / 2)
    cav = CavityParams(8.107, 5800, g, 0.0)
    tr = build_and_solve_jc(q1, QutritLevels(2.0, 1.9), cav, check_truncation=False)
    chi = dispersive_chi(f01, -alpha, g, 8.107, rotating_wave_only=True)
    assert tr.chi1 == pytest.approx(chi, rel=0.02)


def test_blocks_reproduce_dense_spectrum():
    q1, q2 = QutritLevels(6.1, 5.95), QutritLevels(4.3, 4.18)
    cav = CavityParams(8.107, 5800, 0.12, 0.1, photon_truncation=4)
    H, states = jc_hamiltonian(q1, q2, cav)
    assert np.allclose(H, H.T)
    dense = np.sort(np.linalg.eigvalsh(H))
    blocks = np.sort(np.concatenate([np.linalg.eigvalsh(b) for b, _ in excitation_blocks(q1, q2, cav).values()]))
    assert np.allclose(dense, blocks, atol=1e-12)
    assert len(states) == 9 * 5


def test_uncoupled_levels_are_bare():
    q1, q2 = QutritLevels(6.1, 5.95), QutritLevels(4.3, 4.18)
    tr = build_and_solve_jc(q1, q2, CavityParams(8.107, 5800))
    assert tr.f_cavity_dressed == pytest.approx(8.107, abs=1e-12)
    assert tr.q1 == q1 and tr.q2.f01 == pytest.approx(4.3)
    assert tr.chi1 == 0.0


def test_degenerate_labels_raise():
    cav = CavityParams(8.107, 5800, 0.1, 0.0)
    with pytest.raises(LabelingError):
        dressed_energies(QutritLevels(8.107, 7.95), QutritLevels(4.3, 4.2), cav)


def test_truncation_check_detects_drift():
    bad = CavityParams(8.0, 5800, 1.5, 1.5, photon_truncation=2)
    with pytest.raises((ValueError, LabelingError)):
        build_and_solve_jc(QutritLevels(6.0, 5.85), QutritLevels(5.0, 4.85), bad)
    build_and_solve_jc(QutritLevels(6.0, 5.85), QutritLevels(4.0, 3.85), CavityParams(8.107, 5800, 0.12, 0.1))


def test_bare_from_dressed_roundtrip():
    rng = np.random.default_rng(3)
    truth = []
    measured = []
    for _ in range(5):
        b1 = QutritLevels(rng.uniform(5.5, 6.8), 0)
        b1 = QutritLevels(b1.f01, b1.f01 - rng.uniform(0.1, 0.15))
        b2 = QutritLevels(rng.uniform(3.5, 4.5), 0)
        b2 = QutritLevels(b2.f01, b2.f01 - rng.uniform(0.1, 0.15))
        truth.append((b1, b2))
        measured.append(dress_with_law(b1, b2, 8.107, 0.057, 0.01))
    est = bare_from_dressed(measured, 8.107)
    assert est.intercept == pytest.approx(0.057, rel=1e-5)
    assert est.slope == pytest.approx(0.01, rel=1e-4)
    for (t1, t2), (e1, e2) in zip(truth, est.bare):
        assert e1.f01 == pytest.approx(t1.f01, abs=1e-8)
        assert e2.f02_half == pytest.approx(t2.f02_half, abs=1e-8)


def _correction(f01):
    ej = float(ej_from_f01([f01], DEFAULT_RELATION)[0])
    return ej_dressing_correction(ej, float(DEFAULT_RELATION(ej)))


def test_dressing_correction_small_near_seven_ghz_and_monotone():
    assert 0 < _correction(7.0) <= 0.03
    f = [5.0, 5.5, 6.0, 6.5, 7.0, 7.3]
    c = [_correction(x) for x in f]
    assert all(a < b for a, b in zip(c, c[1:]))


def test_dressed_levels_consistent_with_cpb():
    f1, f2 = transmon_transitions(20.0, 0.2)
    tr = dress_with_law(QutritLevels(f1, f2), QutritLevels(2.0, 1.9), 8.107, 0.057, 0.01)
    # qubit below the cavity is pushed down
    assert tr.q1.f01 < f1
    assert tr.f_cavity_dressed > 8.107


def test_cavity_pull_vs_chi_at_moderate_detuning():
    f01 = 8.107 - 1.5
    q1 = QutritLevels(f01, f01 - 0.15)
    tr = build_and_solve_jc(q1, QutritLevels(2.0, 1.9), CavityParams(8.107, 5800, 0.12, 0.0))
    chi = dispersive_chi(f01, -0.3, 0.12, 8.107, rotating_wave_only=True)
    assert tr.chi1 == pytest.approx(chi, rel=0.05)
    assert dispersive_chi(f01, -0.3, 0.0, 8.107) == 0.0


def test_zero_coupling_records_invert_to_themselves():
    meas = [dress_with_law(QutritLevels(f, f - 0.12), QutritLevels(f - 2.0, f - 2.13), 8.107, 0.0, 0.0)
            for f in (5.6, 5.9, 6.3, 6.7)]
    est = bare_from_dressed(meas, 8.107)
    # levels only see g^2, so g itself is pinned far less tightly than the levels
    assert abs(est.intercept + est.slope * 6.0) < 1e-4
    for t, (b1, b2) in zip(meas, est.bare):
        assert (b1.f01, b1.f02_half) == pytest.approx((t.q1.f01, t.q1.f02_half), abs=1e-9)
        assert (b2.f01, b2.f02_half) == pytest.approx((t.q2.f01, t.q2.f02_half), abs=1e-9)
