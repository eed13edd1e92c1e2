"""Linear softmax policy trained with a clipped-ratio policy gradient on
cost-adjusted rewards.

One training run alternates: pick the episode's behavioral weight from the
scheduler, roll the episode out (costs come from the streaming detectors),
subtract ``weight * cost`` from every reward, and every ``batch_episodes``
episodes take ``epochs`` clipped gradient steps.  The scheduler only ever
sees raw returns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.signal import lfilter
from scipy.special import log_softmax, softmax

from . import kernels
from ._kernels_py import sample_softmax
from .costs import ActionTrace, ConfigurationError, HorizontalAction, MoveAction
from .env import N_ACTIONS, CollectorEnv, EnvConfig, JointAction
from .schedulers import SchedulerConfig, SchedulerKind, SchedulerState, begin_episode, end_episode


@dataclass(frozen=True)
class LearnerConfig:
    learning_rate: float = 4.0
    clip_epsilon: float = 0.2
    gamma: float = 0.99
    batch_episodes: int = 4
    epochs: int = 4
    normalize_advantages: bool = True

    def __post_init__(self) -> None:
        errors = []
        if not self.learning_rate > 0:
            errors.append("learning_rate must be > 0")
        if not self.clip_epsilon > 0:
            errors.append("clip_epsilon must be > 0")
        if not 0 < self.gamma <= 1:
            errors.append("gamma must lie in (0, 1]")
        if self.batch_episodes < 1 or self.epochs < 1:
            errors.append("batch_episodes and epochs must be >= 1")
        if errors:
            raise ConfigurationError("; ".join(errors))


@dataclass(frozen=True)
class CostConfig:
    w: int = 8
    alpha: float = 1.0
    step_angle: int = 72
    shake_moves: bool = False  # second shake channel over forward/backward

    def __post_init__(self) -> None:
        errors = []
        if self.w < 2:
            errors.append("w must be >= 2")
        if self.alpha < 0:
            errors.append("alpha must be >= 0")
        if self.step_angle <= 0 or 360 % self.step_angle:
            errors.append("step_angle must divide 360")
        if errors:
            raise ConfigurationError("; ".join(errors))


@dataclass
class PolicyParams:
    weights: np.ndarray
    config: LearnerConfig = field(default_factory=LearnerConfig)

    @classmethod
    def zeros(cls, feature_dim: int, config: LearnerConfig | None = None) -> "PolicyParams":
        return cls(np.zeros((feature_dim, N_ACTIONS)), config or LearnerConfig())

    @property
    def learning_rate(self) -> float:
        return self.config.learning_rate

    @property
    def clip_epsilon(self) -> float:
        return self.config.clip_epsilon

    @property
    def gamma(self) -> float:
        return self.config.gamma

    def probabilities(self, obs) -> np.ndarray:
        return softmax(np.asarray(obs) @ self.weights, axis=-1)


def select_action(params: PolicyParams, obs, rng: np.random.Generator) -> tuple[JointAction, float]:
    a, logp = sample_softmax(list(map(float, obs)), params.weights.tolist(), float(rng.random()))
    return JointAction.from_index(a), logp


def adjust_reward(raw: float, weight: float, cost: float) -> float:
    return raw - weight * cost


@dataclass(frozen=True)
class Transition:
    features: np.ndarray
    action: int
    raw_reward: float
    cost: float
    adjusted_reward: float
    action_log_prob_at_collection: float


@dataclass
class Trajectory:
    """One episode, stored column-wise."""

    features: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    raw_rewards: np.ndarray
    costs: np.ndarray
    adjusted_rewards: np.ndarray
    shaking: np.ndarray
    spins: np.ndarray
    weight: float
    gamma: float

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def transitions(self) -> Iterator[Transition]:
        for t in range(len(self)):
            yield Transition(self.features[t], int(self.actions[t]), float(self.raw_rewards[t]),
                             float(self.costs[t]), float(self.adjusted_rewards[t]), float(self.logp[t]))

    @property
    def raw_return(self) -> float:
        return discounted_sum(self.raw_rewards, self.gamma)

    @property
    def adjusted_return(self) -> float:
        return discounted_sum(self.adjusted_rewards, self.gamma)

    @property
    def shaking_mean(self) -> float:
        return float(self.shaking.mean()) if len(self) else 0.0

    @property
    def spin_total(self) -> int:
        return int(self.spins.sum())

    def to_trace(self) -> ActionTrace:
        """The episode's actions in the trace-file representation."""
        acts = self.actions.tolist()
        return ActionTrace([MoveAction(a // 3) for a in acts], [HorizontalAction(a % 3) for a in acts])


def discounted_sum(rewards: np.ndarray, gamma: float) -> float:
    total = 0.0
    for r in reversed(rewards.tolist()):
        total = r + gamma * total
    return total


def returns_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    return lfilter([1.0], [1.0, -gamma], rewards[::-1])[::-1]


def episode_costs(rollout: dict[str, np.ndarray], cost: CostConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-step (shaking, combined cost) from a rollout's detector counts."""
    shake_num = rollout["shake"].astype(np.float64)
    if cost.shake_moves:
        moves = (rollout["actions"] // 3).astype(np.int8)
        shake_num = shake_num + kernels.shake_counts(moves, cost.w)
    shaking = shake_num / (cost.w - 1)
    return shaking, shaking + cost.alpha * rollout["spins"]


def collect_episode(env: CollectorEnv, params: PolicyParams, uniforms: np.ndarray,
                    weight: float, cost: CostConfig) -> Trajectory:
    state, _ = env.reset()
    out = kernels.rollout_episode(env.config, state, params.weights, uniforms, cost.w, cost.step_angle)
    shaking, costs = episode_costs(out, cost)
    adjusted = out["rewards"] - weight * costs
    return Trajectory(out["features"], out["actions"].astype(np.int64), out["logp"], out["rewards"],
                      costs, adjusted, shaking, out["spins"], weight, params.gamma)


def surrogate_and_grad(weights: np.ndarray, X: np.ndarray, actions: np.ndarray,
                       old_logp: np.ndarray, adv: np.ndarray,
                       clip_epsilon: float | None) -> tuple[float, np.ndarray]:
    """Mean clipped surrogate ``min(r A, clip(r) A)`` and its gradient.

    ``clip_epsilon=None`` gives the unclipped surrogate ``mean(r A)``.
    Samples sitting on the clipped branch contribute no gradient.
    """
    n = len(actions)
    logits = X @ weights
    logp_all = log_softmax(logits, axis=1)
    idx = np.arange(n)
    ratio = np.exp(logp_all[idx, actions] - old_logp)
    unclipped = ratio * adv
    if clip_epsilon is None:
        surr = unclipped
        active = np.ones(n, dtype=bool)
    else:
        clipped = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * adv
        surr = np.minimum(unclipped, clipped)
        active = unclipped <= clipped
    coef = np.where(active, unclipped, 0.0) / n
    dlogits = -np.exp(logp_all) * coef[:, None]
    dlogits[idx, actions] += coef
    return float(surr.mean()), X.T @ dlogits


def update(params: PolicyParams, batch: list[Trajectory]) -> tuple[PolicyParams, float]:
    """Clipped policy-gradient ascent on one batch of trajectories.

    Returns the new parameters and ``|mean clipped surrogate|`` of the final
    epoch, which the AB-CPO stability gate consumes.
    """
    if not batch:
        raise ValueError("update needs a non-empty batch")
    cfg = params.config
    X = np.concatenate([tr.features for tr in batch])
    actions = np.concatenate([tr.actions for tr in batch])
    old_logp = np.concatenate([tr.logp for tr in batch])
    rtg = np.concatenate([returns_to_go(tr.adjusted_rewards, cfg.gamma) for tr in batch])
    adv = rtg - rtg.mean()
    if cfg.normalize_advantages:
        std = adv.std()
        if std > 1e-12:
            adv = adv / std
    weights = params.weights.copy()
    loss = 0.0
    for _ in range(cfg.epochs):
        surr, grad = surrogate_and_grad(weights, X, actions, old_logp, adv, cfg.clip_epsilon)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(
                f"non-finite policy gradient (surrogate={surr}, max|w|={np.abs(weights).max()})")
        weights += cfg.learning_rate * grad
        loss = abs(surr)
    return PolicyParams(weights, cfg), loss


RUNLOG_COLUMNS = ["episode", "raw_return", "adjusted_return", "shaking_mean", "spin_total",
                  "weight", "lambda", "v_avg", "v_th"]
SCHEDLOG_COLUMNS = ["episode", "v_avg", "v_max", "v_th", "lambda", "weight"]


@dataclass
class RunLog:
    rows: list[dict] = field(default_factory=list)
    scheduler_rows: list[dict] = field(default_factory=list)
    params: PolicyParams | None = None
    v_max: float = -math.inf

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)


def run_training(env_config: EnvConfig, scheduler_config: SchedulerConfig,
                 learner_config: LearnerConfig, episodes: int, rng_seed: int,
                 cost_config: CostConfig | None = None) -> RunLog:
    cost = cost_config or CostConfig()
    if cost.step_angle * env_config.heading_steps != 360:
        raise ConfigurationError(
            f"cost step_angle {cost.step_angle} inconsistent with heading_steps "
            f"{env_config.heading_steps}")
    env_rng = np.random.default_rng([rng_seed, env_config.seed, 0])
    policy_rng = np.random.default_rng([rng_seed, 1])
    env = CollectorEnv(env_config, env_rng)
    params = PolicyParams.zeros(env_config.feature_dim, learner_config)
    sched = SchedulerState.initial(scheduler_config)
    log = RunLog(params=params)
    batch: list[Trajectory] = []
    last_loss = math.inf
    for ep in range(episodes):
        weight = begin_episode(sched)
        uniforms = policy_rng.random(env_config.episode_steps)
        traj = collect_episode(env, params, uniforms, weight, cost)
        batch.append(traj)
        if len(batch) == learner_config.batch_episodes:
            params, last_loss = update(params, batch)
            batch = []
        raw = traj.raw_return
        end_episode(sched, raw, last_loss)
        snap = sched.snapshot()
        log.rows.append({
            "episode": ep,
            "raw_return": raw,
            "adjusted_return": traj.adjusted_return,
            "shaking_mean": traj.shaking_mean,
            "spin_total": traj.spin_total,
            "weight": weight,
            "lambda": snap["lambda"],
            "v_avg": snap["v_avg"],
            "v_th": snap["v_th"],
        })
        log.scheduler_rows.append({"episode": ep, **{k: snap[k] for k in SCHEDLOG_COLUMNS[1:]}})
    log.params = params
    log.v_max = sched.tracker.v_max
    return log


def baseline_config() -> SchedulerConfig:
    return SchedulerConfig(kind=SchedulerKind.NONE, v_th_mode="fixed", v_th=math.inf)
