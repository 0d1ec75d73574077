import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hasgld.sa import OmegaSchedule, SaState, omega, sa_matrix_update, sa_product_update, validate_schedule
from oracles import contraction_slope, rng_for


def test_omega_regression_schedule_value():
    # 5 * 10 ** -0.9
    assert omega(0, OmegaSchedule(5, 10, 0.9)) == pytest.approx(0.6294627058970835, rel=1e-12)


def test_omega_harmonic():
    assert omega(4, OmegaSchedule(1, 0, 1)) == 0.25


def test_omega_monotone_decreasing():
    sched = OmegaSchedule(5, 10, 0.9)
    w = np.array([sched(k) for k in range(1, 1001)])
    assert np.all(w > 0) and np.all(np.diff(w) < 0)


def test_validate_schedule_accepts_regression_choice():
    assert validate_schedule(OmegaSchedule(5, 10, 0.9)) == []
    assert validate_schedule(OmegaSchedule(1, 0, 1.0)) == []


@pytest.mark.parametrize("sched,needle", [
    (OmegaSchedule(1, 1, 0.4), "omega^2 diverges"),
    (OmegaSchedule(1, 1, 0.5), "omega^2 diverges"),
    (OmegaSchedule(1, 1, 1.2), "sum of omega converges"),
    (OmegaSchedule(0, 1, 0.9), "c1"),
    (OmegaSchedule(1, -1, 0.9), "c2"),
])
def test_validate_schedule_reports(sched, needle):
    problems = validate_schedule(sched)
    assert any(needle in p for p in problems)


def test_sa_matrix_update_endpoints_and_midpoint():
    A, B = np.eye(2), 3 * np.eye(2)
    np.testing.assert_array_equal(sa_matrix_update(A, B, 1.0), B)
    np.testing.assert_array_equal(sa_matrix_update(A, B, 0.0), A)
    np.testing.assert_array_equal(sa_matrix_update(A, B, 0.5), 2 * np.eye(2))


def test_sa_matrix_update_dimension_mismatch():
    with pytest.raises(ValueError):
        sa_matrix_update(np.eye(2), np.eye(3), 0.5)


def test_sa_product_update():
    fresh = np.array([0.0, 2.0])
    out = sa_product_update(None, fresh, 0.3)
    np.testing.assert_array_equal(out, fresh)
    assert out is not fresh
    np.testing.assert_array_equal(sa_product_update(np.array([5.0, 5.0]), fresh, 1.0), fresh)
    np.testing.assert_allclose(sa_product_update(np.array([2.0, 0.0]), fresh, 0.25), [1.5, 0.5])
    with pytest.raises(ValueError):
        sa_product_update(np.ones(3), fresh, 0.5)


def _spd(rng, d, lo, hi):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (Q * rng.uniform(lo, hi, d)) @ Q.T


@given(st.integers(1, 8), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_convex_combination_spectrum_within_hull(d, w, seed):
    rng = rng_for(seed)
    A, B = _spd(rng, d, 0.1, 5), _spd(rng, d, 0.1, 5)
    ev = np.linalg.eigvalsh(sa_matrix_update(A, B, w))
    ea, eb = np.linalg.eigvalsh(A), np.linalg.eigvalsh(B)
    lo, hi = min(ea.min(), eb.min()), max(ea.max(), eb.max())
    tol = 1e-12 * hi
    assert ev.min() >= lo - tol and ev.max() <= hi + tol


def test_dense_state_stays_pd():
    rng = rng_for(11)
    st_ = SaState("dense", 4)
    sched = OmegaSchedule(1, 1, 0.9)
    for k in range(1, 300):
        st_.update_dense(_spd(rng, 4, 0.01, 10), _spd(rng, 4, 0.01, 10), min(1.0, sched(k)))
        np.linalg.cholesky(st_.G)
    assert st_.k == 299


def test_vector_state_first_step_and_finite():
    st_ = SaState("vector", 3)
    Gg, Sz = st_.update_vector(np.ones(3), 2 * np.ones(3), 0.1)
    np.testing.assert_array_equal(Gg, np.ones(3))
    Gg, Sz = st_.update_vector(np.zeros(3), np.zeros(3), 0.5)
    np.testing.assert_array_equal(Gg, 0.5 * np.ones(3))
    np.testing.assert_array_equal(Sz, np.ones(3))


def test_unknown_mode():
    with pytest.raises(ValueError):
        SaState("sparse", 2)


def test_sa_contraction_slope_short():
    # quick version; the 10-seed, 1e5-step run is acceptance criterion 8
    assert contraction_slope(sa_matrix_update, 0, k_lo=200, k_hi=10_000) >= 0.8
