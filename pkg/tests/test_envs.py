import numpy as np
import pytest

from open_ns.envs import (
    DomainId,
    EnvConfig,
    EnvError,
    SnapshotError,
    describe,
    env_create,
    make_policy,
    restore,
    run_episode,
    snapshot,
)
from open_ns.envs.base import EnvState

DOMAINS = [d.value for d in DomainId]
AGGRESSIVE = {"RoboToyActive": "robotoy_always_run", "NsMountainCar": "mountaincar_full_throttle",
              "Medevac": "medevac_always_dispatch"}
GENTLE = {"RoboToyActive": "robotoy_always_walk", "NsMountainCar": "mountaincar_coast",
          "Medevac": "medevac_never_dispatch"}


def wear(state):
    """Active multiplier: the single latent, or Medevac's weakest service rate."""
    lat = state.latent
    return lat[1:].min() if len(lat) > 1 else lat[0]


def play(state, policy, n, seed=0):
    out = []
    for child in np.random.SeedSequence(seed).spawn(n):
        h, state = run_episode(state, policy, child)
        out.append(h)
    return out, state


def test_robotoy_nominal_latent():
    s0 = env_create(EnvConfig("RoboToyActive", speed=0, seed=1))
    s2 = env_create(EnvConfig("RoboToyActive", speed=2.5, seed=1))
    assert s0.latent.tolist() == [1.0] == s2.latent.tolist()
    assert s0.episode_index == 0


def test_create_is_deterministic():
    a = env_create(EnvConfig("Medevac", speed=2, seed=7))
    b = env_create(EnvConfig("Medevac", speed=2, seed=7))
    assert snapshot(a) == snapshot(b)


def test_bad_configs_rejected():
    with pytest.raises(EnvError):
        EnvConfig("Atari")
    with pytest.raises(EnvError):
        EnvConfig("RoboToyActive", speed=-1)
    with pytest.raises(EnvError):
        EnvConfig("RoboToyActive", horizon_cap=0)
    with pytest.raises(EnvError):
        env_create(EnvConfig("RoboToyActive", params={"alpha9": 1.0}))


def test_walking_causes_no_wear_and_running_does():
    cfg = EnvConfig("RoboToyActive", speed=2.0, seed=3)
    s = env_create(cfg)
    _, after_walk = run_episode(s, make_policy("robotoy_always_walk", cfg), 1)
    _, after_run = run_episode(s, make_policy("robotoy_always_run", cfg), 1)
    assert after_walk.latent[0] == 1.0
    assert after_run.latent[0] < 1.0


def test_robotoy_decay_law():
    cfg = EnvConfig("RoboToyActive", speed=2.0, seed=3)
    dom = describe(cfg)
    _, s = play(env_create(cfg), make_policy("robotoy_always_run", cfg), 10)
    alpha = 2.0 * dom.params.alpha0
    assert s.latent[0] == pytest.approx((1 - alpha) ** 10, rel=1e-12)


@pytest.mark.parametrize("domain", DOMAINS)
def test_speed_zero_latent_fixed(domain):
    cfg = EnvConfig(domain, speed=0.0, seed=4)
    pi = make_policy(describe(cfg).default_policies()[1], cfg)
    s = env_create(cfg)
    for child in np.random.SeedSequence(1).spawn(5):
        _, nxt = run_episode(s, pi, child)
        assert np.array_equal(nxt.latent, s.latent)
        s = nxt


@pytest.mark.parametrize("domain", DOMAINS)
def test_rewards_bounded_and_horizon_respected(domain):
    cfg = EnvConfig(domain, speed=3.0, seed=5)
    dom = describe(cfg)
    pi = make_policy(dom.default_policies()[1], cfg)
    hs, _ = play(env_create(cfg), pi, 30)
    for h in hs:
        assert 1 <= len(h) <= dom.horizon
        assert np.all(np.abs(h.rewards) <= dom.r_max)


@pytest.mark.parametrize("domain", DOMAINS)
def test_snapshot_round_trip_and_replay(domain):
    cfg = EnvConfig(domain, speed=1.5, seed=9)
    pi = make_policy(describe(cfg).default_policies()[0], cfg)
    _, s = play(env_create(cfg), pi, 7)
    clone = restore(snapshot(s))
    assert clone == s
    h1, _ = run_episode(s, pi, 42)
    h2, _ = run_episode(clone, pi, 42)
    assert h1 == h2


def test_unseeded_episodes_follow_state_generator():
    cfg = EnvConfig("Medevac", speed=1.0, seed=9)
    pi = make_policy("medevac_triage", cfg)
    s = env_create(cfg)
    a, sa = run_episode(s, pi)
    b, sb = run_episode(restore(snapshot(s)), pi)
    assert a == b and sa == sb
    c, _ = run_episode(sa, pi)
    assert not np.array_equal(a.actions, c.actions) or not np.array_equal(a.rewards, c.rewards)


def test_clones_give_independent_futures():
    cfg = EnvConfig("RoboToyActive", speed=2.0, seed=1)
    pi = make_policy("robotoy_run_heavy", cfg)
    blob = snapshot(env_create(cfg))
    rets = [run_episode(restore(blob), pi, s)[0].ret for s in np.random.SeedSequence(0).spawn(30)]
    assert len(set(rets)) == 30


def test_malformed_snapshots_rejected():
    blob = snapshot(env_create(EnvConfig("RoboToyActive")))
    for bad in (b"", b"XXXX" + blob[4:], blob[:-3], blob[:12]):
        with pytest.raises(SnapshotError):
            restore(bad)


def test_policy_shape_mismatch_rejected():
    cfg = EnvConfig("NsMountainCar")
    with pytest.raises(EnvError):
        run_episode(env_create(cfg), make_policy("uniform", EnvConfig("RoboToyActive")), 0)


@pytest.mark.parametrize("domain", sorted(AGGRESSIVE))
def test_aggressive_use_wears_more_than_gentle(domain):
    cfg = EnvConfig(domain, speed=2.0, seed=2)
    hard, soft = make_policy(AGGRESSIVE[domain], cfg), make_policy(GENTLE[domain], cfg)
    sh = ss = env_create(cfg)
    for k, child in enumerate(np.random.SeedSequence(3).spawn(6)):
        _, sh = run_episode(sh, hard, child)
        _, ss = run_episode(ss, soft, child)
        assert wear(sh) < wear(ss), (domain, k)


@pytest.mark.parametrize("domain", ["RoboToyPassive", "Medevac"])
def test_passive_channel_ignores_actions(domain):
    cfg = EnvConfig(domain, speed=3.0, seed=2)
    names = list(describe(cfg).presets())
    p1, p2 = make_policy(names[0], cfg), make_policy(names[-1], cfg)
    s1 = s2 = env_create(cfg)
    for child in np.random.SeedSequence(8).spawn(25):
        _, s1 = run_episode(s1, p1, child)
        _, s2 = run_episode(s2, p2, child)
        assert s1.latent[0] == s2.latent[0]


@pytest.mark.parametrize("domain", DOMAINS)
def test_speed_zero_stationary_blocks(domain):
    cfg = EnvConfig(domain, speed=0.0, seed=12)
    pi = make_policy(describe(cfg).default_policies()[0], cfg)
    hs, _ = play(env_create(cfg), pi, 2000, seed=4)
    g = np.array([h.ret for h in hs])
    a, b = g[:500], g[1500:]
    se = np.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    assert abs(a.mean() - b.mean()) < 3 * se


def test_meta_transition_is_time_invariant():
    cfg = EnvConfig("RoboToyActive", speed=2.0, seed=1)
    dom = describe(cfg)
    lat = np.array([0.7])
    assert np.array_equal(dom.meta_transition(lat, 3, {"runs": 1}), dom.meta_transition(lat, 900, {"runs": 1}))


def test_state_equality_sees_rng_state():
    s = env_create(EnvConfig("RoboToyActive"))
    other = EnvState(s.config, s.episode_index, s.latent, {**s.rng_state, "state": {"state": 1, "inc": 3}})
    assert s != other
