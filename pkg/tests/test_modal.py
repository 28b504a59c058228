import mpmath
import numpy as np
import pytest

from hierfrf.modal import (
    FrequencyGrid,
    FrfEvaluationError,
    ModalParameterSet,
    Mode,
    frf_complex,
    frf_imag,
    frf_real,
    frf_real_gradient,
    hz_to_rad,
    rad_to_hz,
    real_part_and_partials,
)


def _mp_frf(wn, zeta, amp, w):
    mpmath.mp.dps = 40
    total = mpmath.mpc(0)
    for n, z, a in zip(wn, zeta, amp):
        n, z, a, x = (mpmath.mpf(float(v)) for v in (n, z, a, w))
        total += -x**2 * a / (n**2 - x**2 + 2j * z * x * n)
    return complex(total)


def test_zero_frequency_gives_zero():
    p = ModalParameterSet.from_arrays([10.0, 30.0], [0.05, 0.02], [1.0, -2.0])
    assert frf_complex(p, [0.0])[0] == 0
    assert frf_real(p, [0.0])[0] == 0
    assert frf_imag(p, [0.0])[0] == 0


def test_value_at_resonance():
    p = ModalParameterSet.from_arrays(40.0, 0.01, 1.0)
    h = frf_complex(p, [40.0])[0]
    assert h.real == pytest.approx(0.0, abs=1e-12)
    # -w^2 A / (2 j zeta wn^2) = +j A / (2 zeta)
    assert h.imag == pytest.approx(50.0, rel=1e-14)
    assert frf_real(p, [40.0])[0] == pytest.approx(0.0, abs=1e-12)
    assert frf_imag(p, [40.0])[0] == pytest.approx(50.0, rel=1e-14)


def test_two_mode_value_against_extended_precision():
    wn, zeta, amp = [190.0, 335.0], [0.006, 0.006], [-0.004, -0.004]
    p = ModalParameterSet.from_arrays(wn, zeta, amp)
    expected = _mp_frf(wn, zeta, amp, 250.0)
    got = frf_complex(p, [250.0])[0]
    assert abs(got - expected) <= 1e-13 * abs(expected)


def test_real_and_imag_match_complex_on_random_points():
    rng = np.random.default_rng(4)
    for _ in range(50):
        m = rng.integers(1, 4)
        wn = np.sort(rng.uniform(5, 500, m))
        if np.any(np.diff(wn) <= 0):
            continue
        p = ModalParameterSet.from_arrays(wn, rng.uniform(0.001, 0.3, m), rng.normal(0, 1, m))
        w = np.sort(rng.uniform(0, 600, 20))
        h = frf_complex(p, w)
        np.testing.assert_allclose(frf_real(p, w), h.real, rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(frf_imag(p, w), h.imag, rtol=1e-12, atol=1e-300)


def test_gradient_matches_central_differences():
    wn, zeta, amp = np.array([50.0, 90.0]), np.array([0.02, 0.05]), np.array([0.3, -0.7])
    w = np.linspace(1.0, 150.0, 60)
    grad = frf_real_gradient((wn, zeta, amp), w)
    theta = np.concatenate([wn, zeta, amp])
    for j in range(theta.size):
        h = 1e-6 * max(abs(theta[j]), 1e-3)
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        fd = (frf_real((up[:2], up[2:4], up[4:]), w) - frf_real((dn[:2], dn[2:4], dn[4:]), w)) / (2 * h)
        scale = np.max(np.abs(fd)) + 1e-12
        assert np.max(np.abs(fd - grad[:, j])) / scale < 1e-5


def test_gradient_wrt_residue_is_unit_residue_curve():
    wn, zeta = np.array([20.0, 70.0]), np.array([0.03, 0.01])
    w = np.linspace(0.0, 100.0, 41)
    grad = frf_real_gradient((wn, zeta, np.array([2.0, -3.0])), w)
    for m in range(2):
        unit = frf_real((wn[m:m + 1], zeta[m:m + 1], [1.0]), w)
        np.testing.assert_allclose(grad[:, 4 + m], unit, rtol=1e-12, atol=1e-15)
    assert np.all(grad[0] == 0)


def test_per_point_kernel_agrees_with_grid_evaluation():
    wn, zeta, amp = np.array([30.0, 60.0]), np.array([0.02, 0.04]), np.array([1.0, 0.5])
    w = np.linspace(5, 80, 30)
    tile = lambda v: np.tile(v, (w.size, 1))  # noqa: E731
    f, d_wn, d_zeta, d_amp = real_part_and_partials(tile(wn), tile(zeta), tile(amp), w)
    np.testing.assert_allclose(f, frf_real((wn, zeta, amp), w), rtol=1e-12)
    g = frf_real_gradient((wn, zeta, amp), w)
    np.testing.assert_allclose(np.hstack([d_wn, d_zeta, d_amp]), g, rtol=1e-10, atol=1e-14)


def test_invalid_modes_rejected():
    with pytest.raises(ValueError):
        Mode(-1.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        Mode(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ModalParameterSet.from_arrays([20.0, 10.0], 0.1, 1.0)
    with pytest.raises(ValueError):
        FrequencyGrid([1.0, 1.0])
    with pytest.raises(ValueError):
        FrequencyGrid([-1.0, 1.0])


def test_non_finite_frf_is_reported():
    with pytest.raises(FrfEvaluationError):
        frf_real(([10.0], [0.0], [1.0]), [10.0])


def test_unit_conversions_round_trip():
    g = FrequencyGrid.from_hz([1.0, 2.5])
    np.testing.assert_allclose(g.rad_per_s, 2 * np.pi * np.array([1.0, 2.5]))
    np.testing.assert_allclose(g.to_rad_per_s().hz, [1.0, 2.5])
    assert rad_to_hz(hz_to_rad(3.0)) == pytest.approx(3.0)
    np.testing.assert_allclose(frf_real(ModalParameterSet.from_arrays(10.0, 0.1, 1.0), g),
                               frf_real(ModalParameterSet.from_arrays(10.0, 0.1, 1.0), g.rad_per_s))
