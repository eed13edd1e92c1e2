"""Per-episode behavioral weight schedules.

``Const`` always returns 1; ``AbcSigmoid`` (ABC-RL) ramps the weight up with
a sigmoid once recent performance approaches the value threshold; ``AbCpo``
uses the linearized augmented-Lagrangian weight with a multiplier that is
updated whenever the policy is judged stable.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

from .lagrangian import DEFAULT_DELTA, LagrangianParams, lambda_update, penalty_weight, sigmoid_weight


class SchedulerKind(str, enum.Enum):
    NONE = "none"
    CONST = "const"
    ABC_SIGMOID = "abc_sigmoid"
    AB_CPO = "ab_cpo"


class VthMode(str, enum.Enum):
    FIXED = "fixed"
    FRACTION_OF_MAX = "fraction_of_max"


@dataclass(frozen=True)
class SchedulerConfig:
    kind: SchedulerKind = SchedulerKind.ABC_SIGMOID
    W: float = 1.0
    h: float | None = None  # None: 0.1 * |V_th|, tracking V_th
    mu: float = 0.1
    lambda0: float = 1.0
    delta: float = DEFAULT_DELTA
    v_th_mode: VthMode = VthMode.FRACTION_OF_MAX
    v_th: float = math.inf
    fraction: float = 0.8
    k: int = 10
    stability_loss_threshold: float = 0.05

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SchedulerKind(self.kind))
        object.__setattr__(self, "v_th_mode", VthMode(self.v_th_mode))
        errors = []
        if self.W < 0:
            errors.append("W must be >= 0")
        if self.h is not None and not self.h > 0:
            errors.append("h must be > 0")
        if not self.mu > 0:
            errors.append("mu must be > 0")
        if self.lambda0 < 0:
            errors.append("lambda0 must be >= 0")
        if not self.delta > 0:
            errors.append("delta must be > 0")
        if not 0 < self.fraction <= 1:
            errors.append("fraction must lie in (0, 1]")
        if self.k < 1:
            errors.append("k must be >= 1")
        if errors:
            raise ValueError("; ".join(errors))


@dataclass
class ValueTracker:
    k: int = 10
    recent_returns: deque = field(default_factory=deque)
    v_max: float = -math.inf
    episodes_seen: int = 0

    def push(self, episode_return: float) -> None:
        self.recent_returns.append(episode_return)
        if len(self.recent_returns) > self.k:
            self.recent_returns.popleft()
        self.episodes_seen += 1
        self.v_max = max(self.v_max, self.v_avg)

    @property
    def v_avg(self) -> float:
        if not self.recent_returns:
            return math.nan
        return sum(self.recent_returns) / len(self.recent_returns)


@dataclass
class SchedulerState:
    config: SchedulerConfig
    tracker: ValueTracker
    lam: float
    v_th: float
    last_weight: float = 0.0

    @classmethod
    def initial(cls, config: SchedulerConfig) -> "SchedulerState":
        if config.v_th_mode is VthMode.FIXED:
            v_th = config.v_th
        else:
            # no history yet: the threshold is unreachable
            v_th = math.inf
        state = cls(config, ValueTracker(config.k), config.lambda0, v_th)
        state.last_weight = 1.0 if config.kind is SchedulerKind.CONST else 0.0
        return state

    @property
    def h(self) -> float:
        if self.config.h is not None:
            return self.config.h
        if math.isfinite(self.v_th) and self.v_th != 0:
            return 0.1 * abs(self.v_th)
        return 1.0

    def snapshot(self) -> dict[str, float]:
        return {
            "v_avg": self.tracker.v_avg,
            "v_max": self.tracker.v_max,
            "v_th": self.v_th,
            "lambda": self.lam,
            "weight": self.last_weight,
        }


def begin_episode(state: SchedulerState) -> float:
    """Behavioral weight for the coming episode; also stored on ``state``."""
    cfg = state.config
    has_history = state.tracker.episodes_seen > 0
    if cfg.kind is SchedulerKind.NONE:
        weight = 0.0
    elif cfg.kind is SchedulerKind.CONST:
        weight = 1.0
    elif cfg.kind is SchedulerKind.ABC_SIGMOID:
        weight = sigmoid_weight(cfg.W, state.h, state.tracker.v_avg, state.v_th) if has_history else 0.0
    else:
        v_est = state.tracker.v_avg if has_history else state.v_th
        if not math.isfinite(state.v_th):
            # unreachable threshold: the multiplier term diverges, weight -> 0
            weight = 0.0 if state.v_th > 0 else 1.0 / cfg.delta
        else:
            weight = penalty_weight(LagrangianParams(state.lam, cfg.mu, state.v_th, cfg.delta), v_est)
    state.last_weight = weight
    return weight


def end_episode(state: SchedulerState, episode_return: float,
                mean_policy_loss: float) -> SchedulerState:
    """Record the raw episode return and advance V_th and lambda."""
    cfg = state.config
    state.tracker.push(episode_return)
    if cfg.v_th_mode is VthMode.FRACTION_OF_MAX:
        state.v_th = cfg.fraction * state.tracker.v_max
    if (cfg.kind is SchedulerKind.AB_CPO and mean_policy_loss < cfg.stability_loss_threshold
            and math.isfinite(state.v_th)):
        state.lam = lambda_update(state.lam, cfg.mu, state.v_th, state.tracker.v_avg)
    return state
