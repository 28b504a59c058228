import json

import numpy as np
import pytest

from hierfrf.analysis import mcse_mean, rhat_ess
from hierfrf.model import build_model
from hierfrf.sampler import (
    DualAveraging,
    SamplerConfig,
    SamplerError,
    WindowSchedule,
    adapt_and_sample,
    energy,
    leapfrog,
    nuts_draw,
)
from hierfrf.targets import ConjugateHierarchicalGaussian, GaussianTarget, StudentTTarget


class Flat:
    dim = 3

    def log_density_and_gradient(self, u):
        return 0.0, np.zeros(3)


class PinnedPoint:
    """Finite density at a single point only."""

    dim = 2

    def log_density_and_gradient(self, u):
        if np.all(u == 0.0):
            return 0.0, np.zeros(2)
        return -np.inf, np.zeros(2)

    def initial_point(self, rng, jitter=None):
        return np.zeros(2)


STD_NORMAL = GaussianTarget(np.zeros(1), np.eye(1))


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        SamplerConfig(target_accept=1.0)
    with pytest.raises(ValueError):
        SamplerConfig(max_tree_depth=0)
    with pytest.raises(ValueError):
        SamplerConfig(sampling_draws=0)
    with pytest.raises(KeyError):
        SamplerConfig.from_dict({"chain": 3})
    cfg = SamplerConfig(chains=2, seed=9)
    assert SamplerConfig.from_dict(cfg.to_dict()) == cfg
    assert (cfg.warmup_draws, cfg.sampling_draws, cfg.target_accept) == (5000, 10000, 0.99)


def test_leapfrog_flat_region_keeps_position():
    q, p = leapfrog(np.array([1.0, 2.0, 3.0]), np.zeros(3), 0.5, Flat())
    np.testing.assert_array_equal(q, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(p, np.zeros(3))
    with pytest.raises(ValueError):
        leapfrog(np.array([np.nan, 0, 0]), np.zeros(3), 0.1, Flat())


def _trajectory_energy_error(eps, length=1.0):
    q, p = np.array([1.0]), np.array([0.5])
    h0 = energy(q, p, STD_NORMAL)
    for _ in range(int(round(length / eps))):
        q, p = leapfrog(q, p, eps, STD_NORMAL)
    return abs(energy(q, p, STD_NORMAL) - h0)


def test_leapfrog_energy_error_is_second_order():
    ratio = _trajectory_energy_error(0.1) / _trajectory_energy_error(0.05)
    assert 3.5 < ratio < 4.5


def test_leapfrog_is_reversible():
    target = GaussianTarget.correlated_2d(0.9)
    q0, p0 = np.array([0.3, -1.2]), np.array([0.8, 0.1])
    q, p = q0, p0
    for _ in range(25):
        q, p = leapfrog(q, p, 0.07, target)
    p = -p
    for _ in range(25):
        q, p = leapfrog(q, p, 0.07, target)
    np.testing.assert_allclose(q, q0, atol=1e-10)
    np.testing.assert_allclose(-p, p0, atol=1e-10)


def test_zero_depth_is_metropolis_adjusted_leapfrog():
    target = STD_NORMAL
    rng = np.random.default_rng(0)
    moved, expected = 0, 0.0
    q = np.array([0.4])
    for _ in range(4000):
        q_next, st = nuts_draw(q, 1.2, None, target, rng, max_tree_depth=0)
        assert st.n_leapfrog == 1 and st.tree_depth <= 1
        assert st.accept_stat <= 1.0
        moved += not np.array_equal(q_next, q)
        expected += st.accept_stat
        q = q_next
    # a single leaf's acceptance statistic is min(1, exp(-dH)), the Metropolis probability
    assert moved / 4000 == pytest.approx(expected / 4000, abs=0.03)


def test_zero_depth_proposal_is_one_leapfrog_step():
    target = GaussianTarget.correlated_2d(0.5)
    q = np.array([0.2, 0.1])
    for seed in range(20):
        rng = np.random.default_rng(seed)
        p = rng.standard_normal(2)
        q_next, _ = nuts_draw(q, 0.3, None, target, np.random.default_rng(seed), max_tree_depth=0)
        fwd, _ = leapfrog(q, p, 0.3, target)
        bck, _ = leapfrog(q, p, -0.3, target)
        assert any(np.allclose(q_next, c, atol=1e-14) for c in (q, fwd, bck))


def test_divergences_do_not_increase_as_step_size_shrinks():
    target = GaussianTarget(np.zeros(2), np.diag([1.0, 1e-4]))
    counts = []
    for eps in (0.05, 0.03, 0.01):
        rng = np.random.default_rng(1)
        q, n_div = np.array([0.5, 0.0]), 0
        for _ in range(300):
            q, st = nuts_draw(q, eps, None, target, rng, max_tree_depth=6)
            n_div += st.divergent
        counts.append(n_div)
    assert counts[0] > 0
    assert counts[0] >= counts[1] >= counts[2]


def test_dual_averaging_moves_step_size_towards_target():
    da = DualAveraging(0.8)
    da.restart(1.0)
    for _ in range(50):
        eps = da.update(0.2)
    assert eps < 1.0
    da.restart(1.0)
    for _ in range(50):
        eps = da.update(1.0)
    assert eps > 1.0


def test_window_schedule_tiles_middle_of_warmup():
    w = WindowSchedule(1000).windows()
    assert w[0][0] == 150 and w[-1][1] == 900
    assert all(a[1] == b[0] for a, b in zip(w, w[1:]))
    sizes = [e - s for s, e in w]
    assert sizes[:3] == [25, 50, 100]
    assert WindowSchedule(10).windows() == []


def _quick(model, **kw):
    base = dict(chains=2, warmup_draws=300, sampling_draws=400, target_accept=0.8, seed=3)
    base.update(kw)
    return adapt_and_sample(model, SamplerConfig(**base))


def test_trace_shapes_exclude_warmup():
    tr = _quick(GaussianTarget.correlated_2d(0.5))
    assert tr.draws.shape == (2, 400, 2)
    assert tr.constrained.shape == (2, 400, 2)
    assert tr.warmup["draws"].shape == (2, 300, 2)
    assert tr.divergent.shape == tr.tree_depth.shape == tr.energy.shape == (2, 400)
    assert tr.step_size.shape == (2,) and tr.inv_mass.shape == (2, 2)


def test_fixed_seed_is_bit_identical():
    a = _quick(StudentTTarget(5.0, 2))
    b = _quick(StudentTTarget(5.0, 2))
    np.testing.assert_array_equal(a.draws, b.draws)
    np.testing.assert_array_equal(a.energy, b.energy)
    np.testing.assert_array_equal(a.step_size, b.step_size)
    assert not np.array_equal(a.draws, _quick(StudentTTarget(5.0, 2), seed=4).draws)


def test_chain_streams_do_not_depend_on_chain_count_or_scheduling():
    target = GaussianTarget.correlated_2d(0.3)
    two = _quick(target)
    three = _quick(target, chains=3)
    np.testing.assert_array_equal(two.draws, three.draws[:2])
    parallel = _quick(target, n_jobs=2)
    np.testing.assert_array_equal(two.draws, parallel.draws)


def test_moments_of_analytic_targets():
    for target in (GaussianTarget(np.zeros(2), np.eye(2)), ConjugateHierarchicalGaussian(),
                   StudentTTarget(5.0, 1)):
        tr = adapt_and_sample(target, SamplerConfig(chains=4, warmup_draws=500,
                                                    sampling_draws=1500, target_accept=0.8,
                                                    seed=2))
        for i in range(target.dim):
            x = tr.draws[:, :, i]
            assert abs(x.mean() - target.mean[i]) <= 3 * mcse_mean(x)
            assert abs(np.mean((x - target.mean[i]) ** 2) - target.variance[i]) <= \
                3 * mcse_mean((x - target.mean[i]) ** 2)
            assert rhat_ess(x)[0] < 1.01


def test_high_target_acceptance_is_realised():
    tr = adapt_and_sample(GaussianTarget.correlated_2d(0.9),
                          SamplerConfig(chains=2, warmup_draws=1000, sampling_draws=1000, seed=1))
    assert 0.95 <= tr.accept_stat.mean() <= 1.0


def test_all_divergent_warmup_aborts_with_report():
    with pytest.raises(SamplerError) as err:
        adapt_and_sample(PinnedPoint(), SamplerConfig(chains=1, warmup_draws=50,
                                                      sampling_draws=10, seed=0))
    assert isinstance(err.value.report, dict)


def test_compiled_transition_matches_python(case1_data):
    model = build_model(case1_data)
    q = model.initial_point(np.random.default_rng(4))
    inv_mass = np.full(model.dim, 0.01)
    for seed in range(3):
        q_py, st_py = nuts_draw(q, 0.05, inv_mass, model, np.random.default_rng(seed))
        q_nb, st_nb = nuts_draw(q, 0.05, inv_mass, model, np.random.default_rng(seed),
                                compiled=True)
        np.testing.assert_allclose(q_nb, q_py, rtol=1e-9, atol=1e-12)
        assert st_nb.tree_depth == st_py.tree_depth
        assert st_nb.n_leapfrog == st_py.n_leapfrog
        assert st_nb.accept_stat == pytest.approx(st_py.accept_stat, rel=1e-9)
        q = q_py


def test_trace_files(tmp_path):
    tr = _quick(GaussianTarget.correlated_2d(0.5), sampling_draws=20)
    tr.write_csv(tmp_path / "trace.csv")
    tr.write_adaptation_json(tmp_path / "adapt.json")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "chain,draw,divergent,energy,x[1],x[2]"
    assert len(lines) == 1 + 2 * 20
    adapt = json.loads((tmp_path / "adapt.json").read_text())
    assert len(adapt["step_size"]) == 2 and adapt["config"]["seed"] == 3
