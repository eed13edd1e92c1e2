from __future__ import annotations

import io
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import softmax

from abcrl import _kernels_py
from abcrl.costs import ConfigurationError, HorizontalAction, format_trace, parse_trace
from abcrl.env import CollectorEnv, EnvConfig
from abcrl.harness import cost_report
from abcrl.learner import (CostConfig, LearnerConfig, PolicyParams, Trajectory, adjust_reward,
                           baseline_config, collect_episode, discounted_sum, returns_to_go,
                           run_training, select_action, surrogate_and_grad, update)
from abcrl.schedulers import SchedulerConfig

from oracles import softmax_probs

# largest learning rate at which bandit monotonicity is asserted (the default)
MONOTONE_LR_BOUND = 4.0

TINY_ENV = EnvConfig(grid_size=8, episode_steps=60, yellow_count=5, blue_count=5, refill_interval=20)


def bandit_batch(params: PolicyParams, rewards: np.ndarray, rng, n: int) -> list[Trajectory]:
    """``n`` one-step episodes of a single-state bandit under ``params``."""
    p = softmax(params.weights[0])
    acts = rng.choice(9, size=n, p=p)
    batch = []
    for a in acts:
        r = np.array([rewards[a]])
        batch.append(Trajectory(np.ones((1, 1)), np.array([a]), np.log(p[[a]]), r, np.zeros(1),
                                r.copy(), np.zeros(1), np.zeros(1, dtype=np.int64), 0.0, params.gamma))
    return batch


def random_policy(rng, feature_dim=TINY_ENV.feature_dim, scale=0.5) -> PolicyParams:
    return PolicyParams(rng.normal(0, scale, (feature_dim, 9)))


# -- configuration -------------------------------------------------------------

def test_configs_validated():
    for bad in (dict(learning_rate=0), dict(clip_epsilon=0), dict(gamma=0), dict(gamma=1.5),
                dict(batch_episodes=0), dict(epochs=0)):
        with pytest.raises(ConfigurationError):
            LearnerConfig(**bad)
    for bad in (dict(w=1), dict(alpha=-1), dict(step_angle=50)):
        with pytest.raises(ConfigurationError):
            CostConfig(**bad)


def test_inconsistent_step_angle_rejected():
    with pytest.raises(ConfigurationError):
        run_training(TINY_ENV, baseline_config(), LearnerConfig(), 1, 0, CostConfig(step_angle=90))


# -- action selection ----------------------------------------------------------

def test_zero_weights_give_uniform_policy():
    params = PolicyParams.zeros(4)
    obs = [0.3, 0.0, 1.0, 1.0]
    assert np.allclose(params.probabilities(obs), 1 / 9, rtol=0, atol=1e-15)
    _, logp = select_action(params, obs, np.random.default_rng(0))
    assert logp == pytest.approx(-math.log(9), rel=1e-14)


def test_saturated_logit_always_chosen():
    params = PolicyParams.zeros(2)
    params.weights[1, 6] = 1000.0
    rng = np.random.default_rng(1)
    for _ in range(200):
        action, logp = select_action(params, [0.0, 1.0], rng)
        assert action.index == 6
        assert logp == pytest.approx(0.0, abs=1e-300)


def test_non_finite_logits_abort():
    params = PolicyParams.zeros(2)
    params.weights[0, 0] = math.inf
    with pytest.raises(FloatingPointError):
        select_action(params, [1.0, 1.0], np.random.default_rng(0))


def test_sampler_frequencies_within_three_sigma():
    x = [1.0, 0.5]
    W = np.random.default_rng(4).normal(0, 1, (2, 9))
    expected = softmax_probs(list(np.asarray(x) @ W))
    n = 10**6
    us = np.random.default_rng(5).random(n).tolist()
    rows = W.tolist()
    counts = np.bincount([_kernels_py.sample_softmax(x, rows, u)[0] for u in us], minlength=9)
    sigma = np.sqrt(n * expected * (1 - expected))
    assert np.all(np.abs(counts - n * expected) <= 3 * sigma)


def test_select_action_matches_softmax():
    params = random_policy(np.random.default_rng(9), feature_dim=3, scale=1.0)
    obs = [0.2, 0.9, 1.0]
    expected = softmax_probs(list(np.asarray(obs) @ params.weights))
    rng = np.random.default_rng(10)
    n = 50_000
    counts = np.zeros(9)
    for _ in range(n):
        a, logp = select_action(params, obs, rng)
        counts[a.index] += 1
        assert logp == pytest.approx(math.log(expected[a.index]), rel=1e-12, abs=1e-12)
    sigma = np.sqrt(n * expected * (1 - expected))
    assert np.all(np.abs(counts - n * expected) <= 3 * sigma)


# -- rewards -------------------------------------------------------------------

def test_adjust_reward_examples():
    assert adjust_reward(1.0, 0.0, 123.0) == 1.0
    assert adjust_reward(1.0, 1.0, 3 / 7) == pytest.approx(4 / 7, rel=1e-15)
    assert adjust_reward(0.0, 0.5, 11 / 7) == pytest.approx(-11 / 14, rel=1e-15)
    assert Fraction(1) - 1 * Fraction(3, 7) == Fraction(4, 7)


def test_returns_to_go():
    r = np.array([1.0, 0.0, -1.0, 2.0])
    expected = [sum(0.9 ** (k - t) * r[k] for k in range(t, 4)) for t in range(4)]
    assert returns_to_go(r, 0.9) == pytest.approx(expected, rel=1e-12)
    assert discounted_sum(r, 0.9) == pytest.approx(expected[0], rel=1e-12)


# -- update ----------------------------------------------------------------------

def test_zero_advantages_leave_params_unchanged():
    params = random_policy(np.random.default_rng(0), feature_dim=1)
    batch = bandit_batch(params, np.full(9, 0.25), np.random.default_rng(1), 32)
    new, loss = update(params, batch)
    assert np.array_equal(new.weights, params.weights)
    assert loss == 0.0


def test_rewarding_arm_gains_probability():
    rewards = np.zeros(9)
    rewards[4] = 1.0
    params = PolicyParams.zeros(1)
    rng = np.random.default_rng(2)
    batch = bandit_batch(params, rewards, rng, 64)
    assert any(tr.actions[0] == 4 for tr in batch)
    new, _ = update(params, batch)
    assert softmax(new.weights[0])[4] > softmax(params.weights[0])[4]


@pytest.mark.parametrize("lr", [0.1, 1.0, MONOTONE_LR_BOUND])
@pytest.mark.parametrize("graded", [False, True], ids=["one_arm", "graded"])
def test_bandit_expected_return_non_decreasing(lr, graded):
    rewards = np.linspace(0, 1, 9) if graded else np.eye(9)[0]
    for seed in range(5):
        params = PolicyParams.zeros(1, LearnerConfig(learning_rate=lr))
        rng = np.random.default_rng(seed)
        value = softmax(params.weights[0]) @ rewards
        for _ in range(100):
            params, _ = update(params, bandit_batch(params, rewards, rng, 64))
            new_value = softmax(params.weights[0]) @ rewards
            assert new_value >= value
            value = new_value


def test_clipped_samples_contribute_no_gradient():
    eps = 0.2
    rng = np.random.default_rng(3)
    W = rng.normal(0, 1, (3, 9))
    X = rng.random((6, 3))
    actions = rng.integers(0, 9, 6)
    logp = np.log(softmax(X @ W, axis=1)[np.arange(6), actions])
    old_logp = logp - math.log(1 + 2 * eps)  # ratio = 1 + 2 eps
    adv = np.abs(rng.normal(size=6)) + 0.1
    surr, grad = surrogate_and_grad(W, X, actions, old_logp, adv, eps)
    assert np.array_equal(grad, np.zeros_like(grad))
    assert surr == pytest.approx(float(np.mean((1 + eps) * adv)))
    # the same sample with a negative advantage stays on the unclipped branch
    _, grad_neg = surrogate_and_grad(W, X, actions, old_logp, -adv, eps)
    assert np.abs(grad_neg).max() > 0


def test_finite_difference_gradient():
    rng = np.random.default_rng(12)
    for _ in range(10):
        n, f = int(rng.integers(2, 12)), int(rng.integers(1, 5))
        W = rng.normal(0, 1, (f, 9))
        X = rng.random((n, f))
        actions = rng.integers(0, 9, n)
        old_logp = np.log(softmax(X @ W, axis=1)[np.arange(n), actions]) + rng.normal(0, 0.1, n)
        adv = rng.normal(size=n)
        _, grad = surrogate_and_grad(W, X, actions, old_logp, adv, None)
        fd = np.zeros_like(W)
        h = 1e-6
        for idx in np.ndindex(W.shape):
            Wp, Wm = W.copy(), W.copy()
            Wp[idx] += h
            Wm[idx] -= h
            fp = surrogate_and_grad(Wp, X, actions, old_logp, adv, None)[0]
            fm = surrogate_and_grad(Wm, X, actions, old_logp, adv, None)[0]
            fd[idx] = (fp - fm) / (2 * h)
        rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel <= 1e-4


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        update(PolicyParams.zeros(2), [])


def test_nan_gradient_aborts():
    params = PolicyParams.zeros(1)
    batch = bandit_batch(params, np.eye(9)[0], np.random.default_rng(0), 16)
    batch[0].features[0, 0] = math.nan
    with pytest.raises(FloatingPointError):
        update(params, batch)


# -- episodes --------------------------------------------------------------------

def collect(seed=0, weight=0.7, cost=CostConfig()) -> Trajectory:
    rng = np.random.default_rng(seed)
    env = CollectorEnv(TINY_ENV, np.random.default_rng([seed, 99]))
    params = random_policy(rng, scale=1.5)
    return collect_episode(env, params, rng.random(TINY_ENV.episode_steps), weight, cost)


def test_transitions_obey_reward_adjustment():
    traj = collect(weight=0.7)
    for tr in traj.transitions:
        assert tr.adjusted_reward == tr.raw_reward - 0.7 * tr.cost


def test_raw_return_recomputable_from_transitions():
    traj = collect(seed=3)
    total = 0.0
    for t, tr in enumerate(traj.transitions):
        total += traj.gamma ** t * tr.raw_reward
    assert traj.raw_return == pytest.approx(total, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("shake_moves", [False, True])
def test_episode_stats_match_cost_module(shake_moves):
    cost = CostConfig(w=6, alpha=0.5, shake_moves=shake_moves)
    traj = collect(seed=4, cost=cost)
    trace = parse_trace(io.StringIO(format_trace(traj.to_trace().moves, traj.to_trace().rotations)))
    signals = cost_report(trace, cost.w, cost.alpha, cost.step_angle, shake_moves)
    assert [float(s.shaking) for s in signals] == traj.shaking.tolist()
    assert [s.spinning for s in signals] == traj.spins.tolist()
    assert [s.combined for s in signals] == traj.costs.tolist()
    assert traj.spin_total == sum(s.spinning for s in signals)


def test_exported_trace_uses_rotation_channel():
    traj = collect(seed=5)
    trace = traj.to_trace()
    assert len(trace) == len(traj)
    assert [int(r) for r in trace.rotations] == (traj.actions % 3).tolist()
    assert all(isinstance(r, HorizontalAction) for r in trace.rotations)


def test_zero_cost_batches_learn_like_baseline():
    batch = [collect(seed=s, weight=0.0) for s in range(4)]
    params = random_policy(np.random.default_rng(0))
    ref, _ = update(params, batch)
    for tr in batch:
        tr.costs[:] = 0.0
        tr.weight = 1.0
        tr.adjusted_rewards = np.array([adjust_reward(r, 1.0, 0.0) for r in tr.raw_rewards])
    const, _ = update(params, batch)
    assert np.array_equal(ref.weights, const.weights)


# -- training loop -------------------------------------------------------------

def test_training_is_deterministic():
    sched = SchedulerConfig(kind="ab_cpo", stability_loss_threshold=1.0)
    a = run_training(TINY_ENV, sched, LearnerConfig(), 16, rng_seed=7)
    b = run_training(TINY_ENV, sched, LearnerConfig(), 16, rng_seed=7)
    assert a.rows == b.rows
    assert a.scheduler_rows == b.scheduler_rows
    assert np.array_equal(a.params.weights, b.params.weights)


def test_seeds_change_the_run():
    a = run_training(TINY_ENV, baseline_config(), LearnerConfig(), 8, rng_seed=1)
    b = run_training(TINY_ENV, baseline_config(), LearnerConfig(), 8, rng_seed=2)
    assert a.rows != b.rows


def test_unreachable_threshold_reduces_to_baseline():
    sig = SchedulerConfig(kind="abc_sigmoid", v_th_mode="fixed", v_th=math.inf)
    a = run_training(TINY_ENV, sig, LearnerConfig(), 24, rng_seed=3)
    b = run_training(TINY_ENV, baseline_config(), LearnerConfig(), 24, rng_seed=3)
    assert all(r["weight"] == 0.0 for r in a.rows)
    assert a.rows == b.rows
    assert np.array_equal(a.params.weights, b.params.weights)


def test_runlog_rows():
    log = run_training(TINY_ENV, SchedulerConfig(kind="const"), LearnerConfig(), 5, rng_seed=0)
    assert [r["episode"] for r in log.rows] == list(range(5))
    assert all(r["weight"] == 1.0 for r in log.rows)
    for r in log.rows:
        assert r["adjusted_return"] <= r["raw_return"]
    assert log.column("raw_return").shape == (5,)


def test_scheduler_sees_raw_returns():
    sched = SchedulerConfig(kind="abc_sigmoid", v_th_mode="fixed", v_th=0.0, k=1)
    log = run_training(TINY_ENV, sched, LearnerConfig(), 6, rng_seed=4)
    for r in log.rows:
        assert r["v_avg"] == r["raw_return"]
