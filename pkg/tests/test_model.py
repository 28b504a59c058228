import math

import numpy as np
import pytest
from scipy import stats

from conftest import central_difference
from hierfrf.modal import frf_real
from hierfrf.model import (
    FrfDataset,
    HierarchySpec,
    ModelSpecError,
    NoPoolingModel,
    PoolingMode,
    PriorSpec,
    TemperatureSpec,
    beta_logpdf,
    build_model,
    normal_logpdf,
    truncated_normal_logpdf,
)
from hierfrf.model.layout import ParameterLayout
from hierfrf.signal import FrfObservations


# -- distributions -------------------------------------------------------------

def test_normal_logpdf_matches_scipy():
    x = np.linspace(-3, 5, 11)
    lp = normal_logpdf(x, 1.0, 4.0)[0]
    np.testing.assert_allclose(lp, stats.norm(1.0, 2.0).logpdf(x), rtol=1e-12)


def test_truncated_normal_matches_scipy_and_normaliser():
    x = np.linspace(0.1, 5, 9)
    lp = truncated_normal_logpdf(x, 1.0, 4.0)[0]
    ref = stats.truncnorm(-0.5, np.inf, loc=1.0, scale=2.0).logpdf(x)
    np.testing.assert_allclose(lp, ref, rtol=1e-12)
    # far from the bound the truncation constant vanishes
    far = truncated_normal_logpdf(np.array([190.0]), 190.0, 25.0)[0]
    np.testing.assert_allclose(far, normal_logpdf(190.0, 190.0, 25.0)[0], rtol=1e-14)
    assert truncated_normal_logpdf(np.array([-0.1]), 1.0, 1.0)[0][0] == -np.inf


def test_beta_logpdf_at_mode():
    a, b = 6.0, 1000.0
    mode = (a - 1) / (a + b - 2)
    lp, dx, _, _ = beta_logpdf(np.array([mode]), a, b)
    assert lp[0] == pytest.approx(stats.beta(a, b).logpdf(mode), rel=1e-12)
    assert dx[0] == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("fn,args", [
    (normal_logpdf, (0.7, 1.3, 0.4)),
    (truncated_normal_logpdf, (0.7, 0.2, 0.4)),
    (beta_logpdf, (0.3, 2.5, 4.0)),
])
def test_distribution_partials(fn, args):
    args = np.array(args)
    _, *grads = fn(*args)
    for i in range(3):
        fd = central_difference(lambda v: fn(*np.where(np.arange(3) == i, v[0], args))[0], args[i:i + 1])
        assert grads[i] == pytest.approx(fd[0], rel=1e-6, abs=1e-8)


def test_prior_spec_round_trip_and_validation():
    p = PriorSpec.truncated_normal([1.0, 2.0], [0.5, 0.5])
    q = PriorSpec.from_dict(p.to_dict())
    np.testing.assert_array_equal(q.loc, p.loc)
    assert q.kind == "truncated_normal"
    b = PriorSpec.from_dict({"kind": "beta", "alpha": 6, "beta": 1000})
    assert b.mean()[0] == pytest.approx(6 / 1006)
    with pytest.raises(ValueError):
        PriorSpec.normal(0.0, -1.0)
    with pytest.raises(ValueError):
        PriorSpec("gamma", 1.0, 1.0)


# -- layouts -------------------------------------------------------------------

def test_case1_layout_has_33_coordinates(case1_data):
    m = build_model(case1_data)
    assert m.dim == 33
    assert len(m.names) == 33
    assert m.names[:2] == ["mu_omega[1]", "mu_omega[2]"]
    assert "omega_nat[4,2]" in m.names and m.names[-1] == "sigma2_H"


def test_case2_layout_sizes(case2_data):
    assert build_model(case2_data, TemperatureSpec()).dim == 9
    m = build_model(case2_data, TemperatureSpec(sample_residue_hyper=False))
    assert m.dim == 7
    assert sorted(m.names) == sorted(["mu_omega", "mu_zeta", "a1", "a2", "b", "A", "sigma2_H"])


def test_no_pooling_single_domain_matches_partial(case1_data):
    one = case1_data.subset([2])
    a = build_model(one, pooling="no_pooling")
    b = build_model(one, pooling="partial_pooling")
    assert a.names == b.names


def test_no_pooling_model_splits_domains(case1_data):
    m = build_model(case1_data, pooling="none")
    assert isinstance(m, NoPoolingModel)
    assert m.dim == 4 * 21
    u = m.initial_point(np.random.default_rng(0))
    lp, g = m.log_density_and_gradient(u)
    parts = [s.log_density(x) for s, x in zip(m.submodels, m.split(u))]
    assert lp == pytest.approx(sum(parts), rel=1e-12)


def test_complete_pooling_merges(case1_data):
    m = build_model(case1_data, pooling=PoolingMode.COMPLETE_POOLING)
    assert m.n_domains == 1 and m.dim == 21
    assert m.data.n_points == case1_data.n_points


def test_temperature_model_needs_temperatures(case1_data):
    with pytest.raises((ModelSpecError, ValueError)):
        build_model(case1_data, TemperatureSpec())
    with pytest.raises(ModelSpecError):
        build_model(case1_data, TemperatureSpec(), pooling="none")


def test_layout_round_trip_and_ordering():
    lay = ParameterLayout()
    lay.add("w", (2, 3), "ordered")
    lay.add("z", (3,), "unit")
    lay.add("s", (), "positive")
    lay.add("r", (2,), "real")
    rng = np.random.default_rng(0)
    u = rng.normal(size=lay.dim)
    vals = lay.constrain(u)
    assert np.all(np.diff(vals["w"], axis=1) > 0)
    assert np.all((vals["z"] > 0) & (vals["z"] < 1))
    np.testing.assert_allclose(lay.unconstrain(vals), u, rtol=1e-12, atol=1e-12)
    assert lay.coordinate_names()[:2] == ["w[1,1]", "w[1,2]"]
    with pytest.raises(ValueError):
        lay.add("s", (), "real")


def test_log_jacobian_derivative_of_log_transform_is_one():
    lay = ParameterLayout()
    lay.add("sigma2_H", (), "positive")
    lj = lambda u: lay.constrain_with_log_jacobian(u)[1]  # noqa: E731
    assert central_difference(lj, np.array([0.3]))[0] == pytest.approx(1.0, rel=1e-8)
    g = lay.pullback(np.array([0.3]), lay.constrain(np.array([0.3])), {"sigma2_H": 0.0})
    assert g[0] == 1.0


# -- densities -----------------------------------------------------------------

def _exact_dataset(model_values, n=40):
    wn, zeta, amp = model_values
    w = np.linspace(20.0, 60.0, n)
    return FrfDataset([FrfObservations(w, frf_real((wn, zeta, amp), w))])


def test_zero_residual_likelihood():
    wn, zeta, amp = np.array([30.0, 50.0]), np.array([0.02, 0.03]), np.array([0.5, -0.2])
    data = _exact_dataset((wn, zeta, amp))
    spec = HierarchySpec(mu_omega=PriorSpec.truncated_normal([30.0, 50.0], [4.0, 4.0]))
    m = build_model(data, spec)
    v = m.initial_values()
    v.update(omega_nat=wn[None], zeta=zeta[None], A=amp, sigma2_H=1.0)
    assert m.log_likelihood(v) == pytest.approx(-0.5 * len(data[0].frequency) * math.log(2 * math.pi))


def test_single_observation_likelihood():
    data = FrfDataset([FrfObservations([25.0], [0.3])])
    spec = HierarchySpec(mu_omega=PriorSpec.truncated_normal([30.0], [4.0]),
                         sigma2_omega=PriorSpec.truncated_normal([5.0], [25.0]),
                         alpha_zeta=PriorSpec.truncated_normal([6.0], [0.25]),
                         beta_zeta=PriorSpec.truncated_normal([1000.0], [100.0]),
                         mu_A=PriorSpec.normal([-0.004], [1e-5]),
                         sigma2_A=PriorSpec.truncated_normal([0.003], [1e-5]))
    m = build_model(data, spec)
    v = m.initial_values()
    v.update(sigma2_H=0.7)
    r = 0.3 - frf_real((v["omega_nat"][0], v["zeta"][0], v["A"]), [25.0])[0]
    assert m.log_likelihood(v) == pytest.approx(-0.5 * (math.log(2 * math.pi * 0.7) + r * r / 0.7))


def test_likelihood_matches_naive_summation(case1_data):
    data = case1_data.subset([0, 3])
    m = build_model(data)
    v = m.constrain(m.initial_point(np.random.default_rng(2)))
    total = 0.0
    for k, obs in enumerate(data):
        for w, y in zip(obs.frequency, obs.real):
            f = 0.0
            for j in range(2):
                wn, z, a = v["omega_nat"][k, j], v["zeta"][k, j], v["A"][j]
                f += -w * w * a * (wn * wn - w * w) / ((wn * wn - w * w) ** 2 + (2 * z * w * wn) ** 2)
            s2 = float(v["sigma2_H"])
            total += -0.5 * (math.log(2 * math.pi * s2) + (y - f) ** 2 / s2)
    assert m.log_likelihood(v) == pytest.approx(total, rel=1e-10)


def test_prior_at_modes_matches_independent_densities():
    data = FrfDataset([FrfObservations([25.0, 30.0], [0.1, 0.2])])
    m = build_model(data)
    v = m.initial_values()
    spec = m.spec
    expected = 0.0
    for name in ("mu_omega", "sigma2_omega", "alpha_zeta", "beta_zeta", "sigma2_A"):
        p = spec.prior(name)
        sd = np.sqrt(p.scale)
        expected += np.sum(stats.truncnorm(-p.loc / sd, np.inf, loc=p.loc, scale=sd).logpdf(v[name]))
    expected += np.sum(stats.norm(spec.mu_A.loc, np.sqrt(spec.mu_A.scale)).logpdf(v["mu_A"]))
    for name in ("mu_noise", "sigma2_noise"):
        p = spec.prior(name)
        sd = np.sqrt(p.scale[0])
        a = (p.lower - p.loc[0]) / sd
        expected += stats.truncnorm(a, np.inf, loc=p.loc[0], scale=sd).logpdf(v[name])
    sd = np.sqrt(v["sigma2_omega"])
    expected += np.sum(stats.truncnorm(-v["mu_omega"] / sd, np.inf, loc=v["mu_omega"],
                                       scale=sd).logpdf(v["omega_nat"]))
    expected += np.sum(stats.beta(v["alpha_zeta"], v["beta_zeta"]).logpdf(v["zeta"]))
    expected += np.sum(stats.norm(v["mu_A"], np.sqrt(v["sigma2_A"])).logpdf(v["A"]))
    sd = np.sqrt(v["sigma2_noise"])
    expected += stats.truncnorm(-v["mu_noise"] / sd, np.inf, loc=v["mu_noise"],
                                scale=sd).logpdf(v["sigma2_H"])
    assert m.log_prior(v) == pytest.approx(float(expected), rel=1e-10)


def test_shifting_residue_hyper_changes_prior_only(case1_data):
    m = build_model(case1_data)
    u = m.initial_point(np.random.default_rng(5))
    i = m.names.index("mu_A[1]")
    v0 = m.constrain(u)
    u2 = u.copy()
    u2[i] += 1e-3
    v1 = m.constrain(u2)
    assert m.log_likelihood(v0) == m.log_likelihood(v1)
    d_density = m.log_density(u2) - m.log_density(u)
    assert d_density == pytest.approx(m.log_prior(v1) - m.log_prior(v0), rel=1e-9)


@pytest.mark.parametrize("pooling", ["partial_pooling", "complete_pooling"])
def test_case1_gradient_matches_finite_differences(case1_data, pooling):
    m = build_model(case1_data, pooling=pooling)
    rng = np.random.default_rng(11)
    for _ in range(5):
        u = m.initial_point(rng, 0.1)
        lp, g = m.log_density_and_gradient(u)
        fd = central_difference(m.log_density, u)
        assert np.max(np.abs(g - fd)) <= 1e-5 * np.max(np.abs(fd))


@pytest.mark.parametrize("hyper", [True, False])
def test_case2_gradient_matches_finite_differences(case2_data, hyper):
    m = build_model(case2_data, TemperatureSpec(sample_residue_hyper=hyper))
    rng = np.random.default_rng(3)
    for _ in range(5):
        u = m.initial_point(rng, 0.1)
        _, g = m.log_density_and_gradient(u)
        fd = central_difference(m.log_density, u)
        assert np.max(np.abs(g - fd)) <= 1e-5 * np.max(np.abs(fd))


def test_compiled_density_matches_reference(case1_data, case2_data):
    rng = np.random.default_rng(0)
    for m in (build_model(case1_data), build_model(case2_data, TemperatureSpec()),
              build_model(case1_data, pooling="complete")):
        assert m.use_compiled
        for _ in range(3):
            u = m.initial_point(rng, 0.2)
            lp, g = m.log_density_and_gradient(u)
            lp_ref, g_ref = m.reference_log_density_and_gradient(u)
            assert lp == pytest.approx(lp_ref, rel=1e-12)
            np.testing.assert_allclose(g, g_ref, rtol=1e-10, atol=1e-10 * np.max(np.abs(g_ref)))


def test_unshared_noise_uses_reference_path(case1_data):
    m = build_model(case1_data, HierarchySpec(shared_noise=False, shared_residues=False))
    assert not m.use_compiled
    assert m.dim == 33 - 2 - 1 + 8 + 4
    u = m.initial_point(np.random.default_rng(1))
    _, g = m.log_density_and_gradient(u)
    fd = central_difference(m.log_density, u)
    assert np.max(np.abs(g - fd)) <= 1e-5 * np.max(np.abs(fd))


def test_non_finite_state_has_minus_infinity(case1_data):
    m = build_model(case1_data)
    u = np.full(m.dim, np.nan)
    lp, g = m.log_density_and_gradient(u)
    assert lp == -np.inf and np.all(g == 0)


def test_overrides_and_spec_errors():
    spec = HierarchySpec().with_overrides({"mu_omega": {"kind": "truncated_normal",
                                                        "loc": [100, 200], "var": [9, 9]}})
    assert spec.mu_omega.loc[1] == 200
    with pytest.raises(KeyError):
        HierarchySpec().with_overrides({"nonsense": 1})
    with pytest.raises(ValueError):
        HierarchySpec(mu_omega=PriorSpec.truncated_normal([1.0], [1.0]))
