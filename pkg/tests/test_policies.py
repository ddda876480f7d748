import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from open_ns.envs import DomainId, EnvConfig, default_policies, make_policy
from open_ns.policies import (
    MixturePolicy,
    PolicyError,
    TabularPolicy,
    epsilon_mixture,
    load_csv,
    save_csv,
    support_ratio_bound,
    uniform,
)


def run_heavy_q(q):
    return TabularPolicy(np.array([[1 - q, q]]))


def test_uniform_two_actions():
    u = uniform(3, 2)
    assert all(u.prob(o, a) == 0.5 for o in range(3) for a in range(2))


def test_behaviour_mixture_arithmetic():
    beta = epsilon_mixture(run_heavy_q(0.9), 0.5)
    assert beta.prob(0, 1) == pytest.approx(0.7, abs=1e-15)
    assert sum(beta.prob(0, a) for a in range(2)) == pytest.approx(1.0, abs=1e-12)


def test_degenerate_row_always_samples_that_action():
    table = np.zeros((1, 5))
    table[0, 3] = 1.0
    pol = TabularPolicy(table)
    rng = np.random.default_rng(0)
    assert {pol.sample(0, rng) for _ in range(500)} == {3}


def test_sampling_frequencies_within_binomial_bounds():
    pol = TabularPolicy(np.array([[0.1, 0.25, 0.65]]))
    rng = np.random.default_rng(11)
    n = 100_000
    counts = np.bincount([pol.sample(0, rng) for _ in range(n)], minlength=3)
    p = pol.table[0]
    assert np.all(np.abs(counts - n * p) <= 4 * np.sqrt(n * p * (1 - p)))


def test_same_rng_state_same_action():
    pol = TabularPolicy(np.array([[0.3, 0.3, 0.4]]))
    a = [pol.sample(0, np.random.default_rng(5)) for _ in range(3)]
    assert len(set(a)) == 1


def test_support_ratio_examples():
    pi = run_heavy_q(0.9)
    assert support_ratio_bound(pi, pi) == 1.0
    assert support_ratio_bound(pi, epsilon_mixture(pi, 0.5)) == pytest.approx(9 / 7, rel=1e-14)
    assert support_ratio_bound(pi, TabularPolicy(np.array([[1.0, 0.0]]))) == math.inf


def test_out_of_range_queries_rejected():
    pol = uniform(2, 2)
    with pytest.raises(PolicyError):
        pol.prob(2, 0)
    with pytest.raises(PolicyError):
        pol.prob(0, -1)


def test_invalid_tables_rejected():
    with pytest.raises(PolicyError):
        TabularPolicy(np.array([[0.5, 0.6]]))
    with pytest.raises(PolicyError):
        TabularPolicy(np.array([[1.5, -0.5]]))
    with pytest.raises(PolicyError):
        MixturePolicy((uniform(1, 2), uniform(1, 3)), (0.5, 0.5))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.floats(0.0, 1.0))
def test_mixture_is_exact_convex_combination(raw, w):
    row = np.array(raw) / np.sum(raw)
    pi = TabularPolicy(row[None, :])
    mix = epsilon_mixture(pi, w)
    k = len(row)
    for a in range(k):
        assert abs(mix.prob(0, a) - (w * row[a] + (1 - w) / k)) <= 1e-12
    assert abs(mix.table.sum() - 1.0) <= 1e-12


def test_csv_round_trip(tmp_path):
    pol = TabularPolicy(np.array([[0.2, 0.8], [0.6, 0.4]]))
    save_csv(pol, tmp_path / "p.csv")
    back = load_csv(tmp_path / "p.csv")
    assert np.array_equal(back.table, pol.table)


def test_csv_missing_entry_rejected(tmp_path):
    (tmp_path / "p.csv").write_text("observation_id,action_id,probability\n0,0,1.0\n1,1,1.0\n")
    with pytest.raises(PolicyError):
        load_csv(tmp_path / "p.csv")


@pytest.mark.parametrize("domain", [d.value for d in DomainId])
def test_shipped_presets_have_bounded_ratio(domain):
    env = EnvConfig(domain)
    pi_id, beta_id = default_policies(env)
    pi, beta = make_policy(pi_id, env), make_policy(beta_id, env)
    assert support_ratio_bound(pi, beta) <= 2.0
