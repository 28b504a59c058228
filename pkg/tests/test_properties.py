"""Randomised invariants checked with hypothesis."""

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hierfrf.analysis import extrapolate_temperature, kde, nmse
from hierfrf.model import build_model
from hierfrf.model.distributions import PriorSpec
from hierfrf.modal import ModalParameterSet, frf_complex, frf_imag, frf_real
from hierfrf.signal import FrfObservations, decimate_spectral_lines

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
SETTINGS = settings(max_examples=60, deadline=None)


@SETTINGS
@given(arrays(float, st.integers(2, 40), elements=finite),
       st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3), st.data())
def test_nmse_is_invariant_to_joint_scaling(y, c, data):
    assume(np.var(y) > 1e-6 * max(1.0, np.max(np.abs(y))) ** 2)
    yp = data.draw(arrays(float, y.size, elements=finite))
    assert nmse(c * y, c * yp) == pytest.approx(nmse(y, yp), rel=1e-9, abs=1e-9)
    assert nmse(y, np.full(y.size, y.mean())) == pytest.approx(100.0, rel=1e-9)
    assert nmse(y, yp) >= 0


@st.composite
def modal_sets(draw):
    m = draw(st.integers(1, 3))
    wn = np.sort(draw(arrays(float, m, elements=st.floats(1.0, 500.0), unique=True)))
    assume(np.all(np.diff(wn) > 1e-6))
    zeta = draw(arrays(float, m, elements=st.floats(1e-3, 0.5)))
    amp = draw(arrays(float, m, elements=st.floats(-5.0, 5.0)))
    return ModalParameterSet.from_arrays(wn, zeta, amp)


@SETTINGS
@given(modal_sets(), arrays(float, st.integers(1, 30), elements=st.floats(0.0, 800.0)))
def test_real_and_imaginary_parts_match_complex_frf(params, w):
    h = frf_complex(params, w)
    np.testing.assert_allclose(frf_real(params, w), h.real, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(frf_imag(params, w), h.imag, rtol=1e-10, atol=1e-12)


@SETTINGS
@given(modal_sets(), st.floats(-3.0, 3.0), arrays(float, 10, elements=st.floats(0.0, 800.0)))
def test_frf_is_linear_in_residues(params, scale, w):
    scaled = ModalParameterSet.from_arrays(params.natural_frequencies, params.damping_ratios,
                                           scale * params.residues)
    np.testing.assert_allclose(frf_real(scaled, w), scale * frf_real(params, w),
                               rtol=1e-10, atol=1e-12)


@pytest.fixture(scope="module")
def case1_model(case1_data):
    return build_model(case1_data)


@SETTINGS
@given(st.integers(0, 2**32 - 1))
def test_layout_round_trip(case1_model, seed):
    u = np.random.default_rng(seed).normal(0, 2, case1_model.dim)
    back = case1_model.unconstrain(case1_model.constrain(u))
    np.testing.assert_allclose(back, u, rtol=1e-8, atol=1e-8)
    wn = case1_model.constrain(u)["omega_nat"]
    assert np.all(np.diff(wn, axis=-1) > 0)


@SETTINGS
@given(st.sampled_from(["normal", "truncated_normal"]),
       arrays(float, st.integers(1, 3), elements=st.floats(-10, 10)),
       st.floats(1e-3, 1e2))
def test_prior_spec_round_trip(kind, loc, var):
    spec = PriorSpec.normal(loc, var) if kind == "normal" else \
        PriorSpec.truncated_normal(loc, var)
    back = PriorSpec.from_dict(spec.to_dict())
    np.testing.assert_array_equal(back.loc, spec.loc)
    assert back.kind == spec.kind


@SETTINGS
@given(st.integers(1, 200), st.integers(0, 10**6))
def test_decimation_is_a_pure_subset(n_keep, seed):
    w = np.linspace(1.0, 50.0, 200)
    obs = FrfObservations(w, np.cos(w))
    a = decimate_spectral_lines(obs, n_keep, seed=seed)
    b = decimate_spectral_lines(obs, n_keep, seed=seed)
    np.testing.assert_array_equal(a.frequency, b.frequency)
    assert len(a) == n_keep and np.isin(a.frequency, w).all()
    np.testing.assert_array_equal(a.value, np.cos(a.frequency))


@SETTINGS
@given(arrays(float, st.integers(2, 300), elements=st.floats(-100, 100)))
def test_kde_is_a_density(x):
    assume(np.ptp(x) > 1e-6)
    curve = kde(x, grid_points=256)
    assert np.all(curve.density >= 0)
    assert np.trapezoid(curve.density, curve.grid) == pytest.approx(1.0, abs=1e-3)


@SETTINGS
@given(st.floats(100, 1000), st.floats(-5, 5), st.floats(-0.1, 0.1), st.floats(0.5, 10))
def test_extrapolated_frequencies_have_constant_second_differences(mu, a1, a2, step):
    law = {"mu_omega": mu, "a1": a1, "a2": a2, "mu_zeta": 0.01, "b": 0.0}
    temps = -20 + step * np.arange(8)
    assume(np.all(mu + a1 * temps + a2 * temps**2 > 0))
    wn = np.array([p.modes.natural_frequencies[0] for p in extrapolate_temperature(law, temps)])
    np.testing.assert_allclose(np.diff(wn, 2), 2 * a2 * step**2, atol=1e-9 * mu)
