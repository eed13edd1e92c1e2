"""Desk-scale grid item-collection game.

The agent lives on a ``grid_size`` x ``grid_size`` board with a discrete
heading (``heading_steps`` per revolution).  Walking onto a yellow item pays
+1, a blue item -1; consumed items respawn every ``refill_interval`` steps.

All randomness for one episode is drawn at :meth:`CollectorEnv.reset` as a
flat pool of uniforms (item placement first, then respawns), which makes the
compiled rollout kernel and this module consume identical random streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .costs import ConfigurationError, HorizontalAction, MoveAction

EMPTY, YELLOW, BLUE = 0, 1, 2

# grid direction index -> (dx, dy); 0 = +x (east), 1 = +y (north), ...
GRID_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(frozen=True)
class EnvConfig:
    grid_size: int = 12
    episode_steps: int = 500
    yellow_count: int = 10
    blue_count: int = 10
    refill_interval: int = 100
    heading_steps: int = 5
    seed: int = 0
    observation_radius: int = 4

    def __post_init__(self) -> None:
        errors = []
        if self.grid_size < 4:
            errors.append("grid_size must be >= 4")
        if self.episode_steps < 1:
            errors.append("episode_steps must be >= 1")
        if self.yellow_count < 0 or self.blue_count < 0:
            errors.append("item counts must be >= 0")
        if self.refill_interval < 1:
            errors.append("refill_interval must be >= 1")
        if self.heading_steps < 1 or 360 % self.heading_steps:
            errors.append("heading_steps must divide 360")
        if self.observation_radius < 1:
            errors.append("observation_radius must be >= 1")
        if self.yellow_count + self.blue_count > self.grid_size ** 2 - 1:
            errors.append("item count exceeds free cells")
        if errors:
            raise ConfigurationError("; ".join(errors))

    @property
    def step_angle(self) -> int:
        return 360 // self.heading_steps

    @property
    def feature_dim(self) -> int:
        return observation_dim(self.heading_steps)

    @property
    def pool_size(self) -> int:
        # at most one item is consumed per step, so respawns <= episode_steps
        return self.yellow_count + self.blue_count + self.episode_steps


def observation_dim(heading_steps: int) -> int:
    # heading one-hot, yellow/blue nearness per sector, wall ahead/behind, bias
    return 3 * heading_steps + 3


@dataclass(frozen=True)
class JointAction:
    move: MoveAction
    rotate: HorizontalAction

    @property
    def index(self) -> int:
        return int(self.move) * 3 + int(self.rotate)

    @classmethod
    def from_index(cls, i: int) -> "JointAction":
        return cls(MoveAction(i // 3), HorizontalAction(i % 3))


N_ACTIONS = 9


def move_direction(heading: int, heading_steps: int) -> int:
    """Nearest grid direction (round half up) of a discrete heading."""
    return ((8 * heading + heading_steps) // (2 * heading_steps)) % 4


class StepAfterDone(RuntimeError):
    pass


@dataclass
class EnvState:
    x: int
    y: int
    heading: int
    cells: list[int]
    step_count: int = 0
    pending_yellow: int = 0
    pending_blue: int = 0
    pool: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pool_pos: int = 0

    def items(self) -> set[tuple[tuple[int, int], int]]:
        g = int(math.isqrt(len(self.cells)))
        return {((i % g, i // g), c) for i, c in enumerate(self.cells) if c != EMPTY}

    def copy(self) -> "EnvState":
        return EnvState(self.x, self.y, self.heading, list(self.cells), self.step_count,
                        self.pending_yellow, self.pending_blue, self.pool, self.pool_pos)


class CollectorEnv:
    def __init__(self, config: EnvConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.state: EnvState | None = None

    def reset(self) -> tuple[EnvState, list[float]]:
        cfg = self.config
        pool = self.rng.random(cfg.pool_size)
        c = cfg.grid_size // 2
        self.state = EnvState(c, c, 0, [EMPTY] * cfg.grid_size ** 2, pool=pool)
        self._place(YELLOW, cfg.yellow_count)
        self._place(BLUE, cfg.blue_count)
        return self.state, self.observe()

    def _place(self, color: int, n: int) -> None:
        st = self.state
        g = self.config.grid_size
        agent = st.y * g + st.x
        for _ in range(n):
            free = sum(1 for i, v in enumerate(st.cells) if v == EMPTY and i != agent)
            u = st.pool[st.pool_pos]
            st.pool_pos += 1
            target = min(int(u * free), free - 1)
            for i, v in enumerate(st.cells):
                if v == EMPTY and i != agent:
                    if target == 0:
                        st.cells[i] = color
                        break
                    target -= 1

    @property
    def done(self) -> bool:
        return self.state.step_count >= self.config.episode_steps

    def step(self, action: JointAction | int
             ) -> tuple[EnvState, list[float], float, bool, HorizontalAction]:
        if isinstance(action, int):
            action = JointAction.from_index(action)
        st = self.state
        cfg = self.config
        if st is None or self.done:
            raise StepAfterDone("step() called on a finished episode; call reset()")
        g = cfg.grid_size
        reward = 0.0
        if action.move != MoveAction.NOMOVE:
            dx, dy = GRID_DIRS[move_direction(st.heading, cfg.heading_steps)]
            if action.move == MoveAction.BACKWARD:
                dx, dy = -dx, -dy
            nx, ny = st.x + dx, st.y + dy
            if 0 <= nx < g and 0 <= ny < g:
                st.x, st.y = nx, ny
                cell = ny * g + nx
                item = st.cells[cell]
                if item == YELLOW:
                    reward = 1.0
                    st.pending_yellow += 1
                elif item == BLUE:
                    reward = -1.0
                    st.pending_blue += 1
                st.cells[cell] = EMPTY
        if action.rotate == HorizontalAction.LEFT:
            st.heading = (st.heading + 1) % cfg.heading_steps
        elif action.rotate == HorizontalAction.RIGHT:
            st.heading = (st.heading - 1) % cfg.heading_steps
        st.step_count += 1
        if st.step_count % cfg.refill_interval == 0:
            py, pb = st.pending_yellow, st.pending_blue
            st.pending_yellow = st.pending_blue = 0
            self._place(YELLOW, py)
            self._place(BLUE, pb)
        return st, self.observe(), reward, self.done, action.rotate

    def observe(self) -> list[float]:
        return observe(self.state, self.config)


def observe(st: EnvState, cfg: EnvConfig) -> list[float]:
    """Egocentric ray-summary features, all in [0, 1].

    Layout: heading one-hot (H), then for each of the H sectors around the
    movement direction the nearness of the closest yellow and blue item
    within ``observation_radius`` (``(R + 1 - d) / R``, 0 when none), then
    free distance to the wall ahead and behind, then a constant 1.
    """
    H = cfg.heading_steps
    g = cfg.grid_size
    R = cfg.observation_radius
    feats = [0.0] * observation_dim(H)
    feats[st.heading] = 1.0
    d_idx = move_direction(st.heading, H)
    base = d_idx * 90.0
    width = 360.0 / H
    nearest = [math.inf] * (2 * H)
    x0, y0 = st.x, st.y
    for yy in range(max(0, y0 - R), min(g, y0 + R + 1)):
        row = yy * g
        for xx in range(max(0, x0 - R), min(g, x0 + R + 1)):
            item = st.cells[row + xx]
            if item == EMPTY:
                continue
            dx = xx - x0
            dy = yy - y0
            dist = math.sqrt(dx * dx + dy * dy)
            if dist > R:
                continue
            rel = math.degrees(math.atan2(dy, dx)) - base
            sector = int(math.floor(rel / width + 0.5)) % H
            slot = 2 * sector + (item - 1)
            if dist < nearest[slot]:
                nearest[slot] = dist
    for slot in range(2 * H):
        if nearest[slot] <= R:
            feats[H + slot] = (R + 1 - nearest[slot]) / R
    dx, dy = GRID_DIRS[d_idx]
    ahead = _free_run(x0, y0, dx, dy, g)
    behind = _free_run(x0, y0, -dx, -dy, g)
    feats[3 * H] = ahead / (g - 1)
    feats[3 * H + 1] = behind / (g - 1)
    feats[3 * H + 2] = 1.0
    return feats


def _free_run(x: int, y: int, dx: int, dy: int, g: int) -> int:
    if dx > 0:
        return g - 1 - x
    if dx < 0:
        return x
    if dy > 0:
        return g - 1 - y
    return y
