import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pomdp
from open_ns import estimators as est
from open_ns.envs import EpisodeHistory
from open_ns.policies import TabularPolicy


def history(idx, obs, acts, rews, probs):
    return EpisodeHistory(idx, np.array(obs), np.array(acts), np.array(rews, dtype=float), np.array(probs, dtype=float))


def series(G, rho, j_hat=None):
    G, rho = np.asarray(G, dtype=float), np.asarray(rho, dtype=float)
    return est.PerformanceSeries(G, rho, G if j_hat is None else j_hat, est.prefix_normalized(G, rho))


PI_08 = TabularPolicy(np.array([[0.2, 0.8]]))


def test_pdis_single_step():
    h = history(0, [0], [1], [10.0], [0.4])
    assert est.pdis_estimate(h, PI_08) == pytest.approx(20.0)


def test_pdis_on_policy_equals_return():
    for h in pomdp.simulate(50, pomdp.PI, seed=3):
        assert est.pdis_estimate(h, pomdp.PI) == h.ret
        assert est.trajectory_ratio(h, pomdp.PI) == 1.0


def test_pdis_weights_each_reward_by_its_prefix():
    pi = TabularPolicy(np.array([[0.5, 0.5], [0.9, 0.1]]))
    h = history(0, [0, 1], [1, 0], [3.0, 5.0], [0.25, 0.45])
    assert est.pdis_estimate(h, pi) == pytest.approx(2 * 3 + 2 * 2 * 5)


def test_trajectory_ratio_two_steps():
    pi = TabularPolicy(np.array([[0.5, 0.5], [0.25, 0.75]]))
    h = history(0, [0, 1], [0, 0], [0.0, 0.0], [0.25, 0.5])
    assert est.trajectory_ratio(h, pi) == pytest.approx(1.0)


def test_zero_behaviour_probability_is_an_error():
    with pytest.raises(est.SupportError):
        est.pdis_estimate(history(0, [0], [1], [1.0], [0.0]), PI_08)


def test_pdis_unbiased_on_enumerated_pomdp():
    hs = pomdp.simulate(20_000, seed=8)
    j = np.array([est.pdis_estimate(h, pomdp.PI) for h in hs])
    assert abs(j.mean() - pomdp.exact_value()) < 3 * j.std(ddof=1) / np.sqrt(len(j))


def test_enumeration_oracle_matches_on_policy_monte_carlo():
    g = np.array([h.ret for h in pomdp.simulate(50_000, pomdp.PI, seed=2)])
    assert abs(g.mean() - pomdp.exact_value()) < 3 * g.std(ddof=1) / np.sqrt(len(g))


def test_wis_examples():
    assert est.wis_estimate(series([2.0, 6.0], [1.0, 3.0])) == pytest.approx(5.0)
    assert est.wis_estimate(series([7.5], [0.3])) == pytest.approx(7.5)
    g = np.array([1.0, 4.0, 2.0])
    assert est.wis_estimate(series(g, np.ones(3))) == pytest.approx(g.mean())
    with pytest.raises(est.IneffectiveSampleError):
        est.wis_estimate(series([1.0, 2.0], [0.0, 0.0]))


def test_swis_examples():
    rng = np.random.default_rng(0)
    G, rho = rng.normal(size=20), rng.uniform(0.1, 2, size=20)
    s = series(G, rho)
    assert est.swis_estimate(s, 20) == pytest.approx(est.wis_estimate(s))
    assert est.swis_estimate(s, 1) == pytest.approx(G[-1])
    G2 = np.concatenate([rng.normal(size=100), np.full(400, 3.25)])
    rho2 = np.concatenate([rng.uniform(0, 3, 100), np.ones(400)])
    assert est.swis_estimate(series(G2, rho2), 400) == pytest.approx(3.25)
    for bad in (0, 21):
        with pytest.raises(est.EstimatorError):
            est.swis_estimate(s, bad)


def test_j_tilde_examples():
    s = series([4.0, 6.0], [1.0, 1.0])
    assert s.j_tilde.tolist() == [2.0, 3.0]
    g = np.arange(1.0, 6.0)
    assert np.allclose(series(g, np.ones(5)).j_tilde, g / 5)
    assert s.z.shape == (2, 2)


def test_on_policy_collapse_of_series():
    hs = pomdp.simulate(30, pomdp.PI, seed=4)
    s = est.build_performance_series(hs, pomdp.PI)
    assert np.array_equal(s.rho, np.ones(30))
    assert np.array_equal(s.j_hat, s.G)
    assert est.wis_estimate(s) == pytest.approx(s.G.mean())
    prob = est.build_regression_targets(s, 1)
    assert np.allclose(prob.weights_stage1, 1 / 29) and np.allclose(prob.weights_stage2, 1 / 28)


def test_stage1_weights_from_ratio_example():
    s = series([1.0, 1.0, 1.0], [1.0, 2.0, 1.0])
    prob = est.build_regression_targets(s, 1)
    assert np.allclose(prob.weights_stage1, [2 / 3, 1 / 3])
    assert np.allclose(prob.weights_stage2, [1.0])


def test_regression_rows_and_indices():
    n, p = 12, 3
    rng = np.random.default_rng(1)
    s = series(rng.normal(size=n), rng.uniform(0.2, 2.0, n))
    prob = est.build_regression_targets(s, p)
    assert prob.instruments.shape == (n - p, 2 * p)
    assert prob.stage1_index.tolist() == list(range(p + 1, n + 1))
    assert prob.stage2_index.tolist() == list(range(2 * p, n))
    # first instrument block of stage-1 row i is Z_{i-1}
    i = prob.stage1_index[0]
    assert np.array_equal(prob.instruments[0, :2], s.z[i - 2])
    assert np.array_equal(prob.targets_stage1, s.G[p:])
    # stage-2 row i uses denoised lags i, i-1, ..., i-p+1 and targets G_{i+1}
    for r, i in enumerate(prob.stage2_index):
        assert prob.stage1_index[prob.stage2_lags[r]].tolist() == list(range(i, i - p, -1))
        assert prob.targets_stage2[r] == s.G[i]
    w2 = s.rho[prob.stage2_index - 1] * s.rho[prob.stage2_index]
    assert np.allclose(prob.weights_stage2, w2 / w2.sum())


def test_regression_needs_enough_episodes():
    with pytest.raises(est.EstimatorError):
        est.build_regression_targets(series(np.ones(6), np.ones(6)), 3)


def test_ineffective_stage2_sample():
    rho = np.array([1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
    with pytest.raises(est.IneffectiveSampleError):
        est.build_regression_targets(series(np.ones(6), rho), 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 40), st.integers(0, 2**32 - 1))
def test_weights_are_normalised(n, seed):
    rng = np.random.default_rng(seed)
    rho = rng.exponential(size=n) * (rng.random(n) < 0.8) + 1e-3
    prob = est.build_regression_targets(series(rng.normal(size=n), rho), 2)
    for w in (prob.weights_stage1, prob.weights_stage2):
        assert abs(w.sum() - 1.0) < 1e-12
        assert np.all((w >= 0) & (w <= 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 30), st.integers(0, 2**32 - 1), st.data())
def test_prefix_causality(n, seed, data):
    rng = np.random.default_rng(seed)
    G, rho = rng.normal(size=n), rng.uniform(0.1, 3.0, n)
    i = data.draw(st.integers(0, n - 2))
    G2, rho2 = G.copy(), rho.copy()
    G2[i + 1:] = rng.normal(size=n - i - 1)
    rho2[i + 1:] = rng.uniform(0.1, 3.0, n - i - 1)
    a, b = series(G, rho), series(G2, rho2)
    assert np.array_equal(a.z[:i + 1], b.z[:i + 1])


def test_naive_fit_recovers_noiseless_slope():
    j = 10.0 * 0.9 ** np.arange(60)
    model = est.naive_ar_fit(series(j, np.ones(60)), 1, intercept=False)
    assert model.theta[0] == pytest.approx(0.9, abs=1e-6)


def test_naive_fit_constant_series_is_flagged():
    model = est.naive_ar_fit(series(np.full(40, 3.0), np.ones(40)), 1)
    assert model.finite
    assert "degenerate" in model.diagnostics["flags"]


def test_naive_fit_is_attenuated():
    from open_ns import synthetic

    sample = synthetic.generate(4000, seed=5)
    slope = est.naive_ar_fit(sample.series(), 1).theta[0]
    assert slope == pytest.approx(synthetic.naive_asymptote(sample), abs=0.05)
    assert slope < 0.6


def test_dataset_csv_round_trip(tmp_path):
    ds = est.Dataset(pomdp.simulate(25, seed=1))
    ds.to_csv(tmp_path / "d.csv")
    back = est.Dataset.from_csv(tmp_path / "d.csv")
    assert len(back) == 25 and all(a == b for a, b in zip(ds, back))


def test_dataset_order_enforced():
    hs = pomdp.simulate(3, seed=1)
    with pytest.raises(est.EstimatorError):
        est.Dataset((hs[1], hs[0]))


def test_series_csv_export(tmp_path):
    s = series([4.0, 6.0], [1.0, 1.0])
    s.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "i,G,rho,j_hat,j_tilde"
    assert lines[1].split(",") == ["1", "4.0", "1.0", "4.0", "2.0"]
