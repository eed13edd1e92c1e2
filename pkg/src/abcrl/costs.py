"""Shaking and spinning behavioral costs.

Both detectors consume the horizontal (rotation) channel of an action trace.
Shaking is the number of direction reversals inside a sliding window of
``w`` actions, normalized by ``w - 1``.  Spinning counts full same-direction
revolutions of the heading.
"""

from __future__ import annotations

import csv
import enum
import io
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np


class HorizontalAction(enum.IntEnum):
    NOOP = 0
    LEFT = 1
    RIGHT = 2

    def opposite(self, other: "HorizontalAction") -> bool:
        return (self, other) in ((HorizontalAction.LEFT, HorizontalAction.RIGHT),
                                 (HorizontalAction.RIGHT, HorizontalAction.LEFT))


class MoveAction(enum.IntEnum):
    NOMOVE = 0
    FORWARD = 1
    BACKWARD = 2


ROTATE_CODES = {"N": HorizontalAction.NOOP, "L": HorizontalAction.LEFT, "R": HorizontalAction.RIGHT}
MOVE_CODES = {"N": MoveAction.NOMOVE, "F": MoveAction.FORWARD, "B": MoveAction.BACKWARD}
ROTATE_LETTERS = {v: k for k, v in ROTATE_CODES.items()}
MOVE_LETTERS = {v: k for k, v in MOVE_CODES.items()}


class PreconditionError(ValueError):
    """A detector was evaluated outside its defined domain."""


class ConfigurationError(ValueError):
    pass


class TraceFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ShakeWindow:
    """Ring of the last ``capacity`` horizontal actions with a running
    reversal-pair count.

    A reversal pair is two opposite actions with only no-ops between them,
    so each pair is fixed by its two endpoints; the window keeps the start
    index of every pair still inside it and evicts them as it slides.
    """

    def __init__(self, capacity: int):
        if capacity < 2:
            raise ConfigurationError(f"shake window needs w >= 2, got {capacity}")
        self.capacity = capacity
        self.buffer: deque[HorizontalAction] = deque(maxlen=capacity)
        self._t = -1
        self._last_turn: HorizontalAction | None = None
        self._last_turn_t = -1
        self._pair_starts: deque[int] = deque()

    @property
    def full(self) -> bool:
        return len(self.buffer) == self.capacity

    def push(self, action: HorizontalAction) -> None:
        action = HorizontalAction(action)
        self._t += 1
        self.buffer.append(action)
        if action != HorizontalAction.NOOP:
            if self._last_turn is not None and self._last_turn.opposite(action):
                self._pair_starts.append(self._last_turn_t)
            self._last_turn = action
            self._last_turn_t = self._t
        oldest = self._t - self.capacity + 1
        while self._pair_starts and self._pair_starts[0] < oldest:
            self._pair_starts.popleft()

    @property
    def reversals(self) -> int:
        return len(self._pair_starts)

    def cost(self) -> Fraction:
        return shaking_cost(self)


def shaking_cost(window: ShakeWindow) -> Fraction:
    """Reversal count over ``w - 1`` for a full window."""
    if not window.full:
        raise PreconditionError(
            f"shaking cost needs a full window ({len(window.buffer)}/{window.capacity})")
    return Fraction(window.reversals, window.capacity - 1)


@dataclass
class SpinTracker:
    step_angle: int = 72
    accumulated_angle: int = 0
    current_direction: HorizontalAction = HorizontalAction.NOOP

    def __post_init__(self) -> None:
        if self.step_angle <= 0 or 360 % self.step_angle:
            raise ConfigurationError(f"step_angle must divide 360, got {self.step_angle}")


def spin_step(tracker: SpinTracker, action: HorizontalAction) -> tuple[SpinTracker, int]:
    """Advance ``tracker`` in place by one action and return it with the
    number of full revolutions completed on this step (0 or 1)."""
    action = HorizontalAction(action)
    if action == HorizontalAction.NOOP:
        return tracker, 0
    if action != tracker.current_direction:
        tracker.current_direction = action
        tracker.accumulated_angle = 0
    sign = 1 if action == HorizontalAction.LEFT else -1
    before = abs(tracker.accumulated_angle)
    tracker.accumulated_angle += sign * tracker.step_angle
    after = abs(tracker.accumulated_angle)
    return tracker, after // 360 - before // 360


def combined_cost(shaking: float | Fraction, spin_count: int, alpha: float) -> float:
    if alpha < 0:
        raise ConfigurationError(f"alpha must be non-negative, got {alpha}")
    return float(shaking) + alpha * spin_count


@dataclass(frozen=True)
class CostSignal:
    shaking: Fraction
    spinning: int
    combined: float


class CostDetector:
    """Streaming shake + spin detector emitting one :class:`CostSignal` per
    step.  Warm-up steps (window not yet full) report zero shaking."""

    def __init__(self, w: int = 8, alpha: float = 1.0, step_angle: int = 72):
        if alpha < 0:
            raise ConfigurationError(f"alpha must be non-negative, got {alpha}")
        self.alpha = alpha
        self.window = ShakeWindow(w)
        self.tracker = SpinTracker(step_angle)

    def step(self, action: HorizontalAction) -> CostSignal:
        self.window.push(action)
        shake = shaking_cost(self.window) if self.window.full else Fraction(0)
        _, spins = spin_step(self.tracker, action)
        return CostSignal(shake, spins, combined_cost(shake, spins, self.alpha))


def trace_costs(trace: Iterable[HorizontalAction], w: int = 8, alpha: float = 1.0,
                step_angle: int = 72) -> list[CostSignal]:
    detector = CostDetector(w, alpha, step_angle)
    return [detector.step(a) for a in trace]


def trace_cost_arrays(rotations: Sequence[int] | np.ndarray, w: int = 8,
                      step_angle: int = 72) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized form of :func:`trace_costs` backed by the kernel module.

    Returns per-step reversal numerators (shaking = numerator / (w - 1)) and
    per-step spin counts.
    """
    from . import kernels

    if w < 2:
        raise ConfigurationError(f"shake window needs w >= 2, got {w}")
    if step_angle <= 0 or 360 % step_angle:
        raise ConfigurationError(f"step_angle must divide 360, got {step_angle}")
    rot = np.ascontiguousarray(rotations, dtype=np.int8)
    return kernels.shake_counts(rot, w), kernels.spin_counts(rot, 360 // step_angle)


# -- trace files -------------------------------------------------------------

TRACE_HEADER = ["step", "move", "rotate"]
COST_HEADER = ["step", "shaking", "spin_count", "combined"]


@dataclass
class ActionTrace:
    moves: list[MoveAction]
    rotations: list[HorizontalAction]

    def __len__(self) -> int:
        return len(self.rotations)


def parse_trace(lines: Iterable[str]) -> ActionTrace:
    """Parse ``step,move,rotate`` records (header required)."""
    it: Iterator[str] = iter(lines)
    moves: list[MoveAction] = []
    rots: list[HorizontalAction] = []
    header_seen = False
    for lineno, raw in enumerate(it, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        if not header_seen:
            if fields != TRACE_HEADER:
                raise TraceFormatError(lineno, f"expected header {','.join(TRACE_HEADER)!r}")
            header_seen = True
            continue
        if len(fields) != 3:
            raise TraceFormatError(lineno, f"expected 3 fields, got {len(fields)}")
        step, move, rot = fields
        try:
            int(step)
        except ValueError:
            raise TraceFormatError(lineno, f"bad step index {step!r}") from None
        if move not in MOVE_CODES:
            raise TraceFormatError(lineno, f"bad move {move!r} (expected F/B/N)")
        if rot not in ROTATE_CODES:
            raise TraceFormatError(lineno, f"bad rotate {rot!r} (expected L/R/N)")
        moves.append(MOVE_CODES[move])
        rots.append(ROTATE_CODES[rot])
    if not header_seen:
        raise TraceFormatError(1, "missing header")
    return ActionTrace(moves, rots)


def read_trace(path: str | Path) -> ActionTrace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh)


def format_trace(moves: Sequence[int], rotations: Sequence[int]) -> str:
    out = io.StringIO()
    out.write(",".join(TRACE_HEADER) + "\n")
    for t, (m, r) in enumerate(zip(moves, rotations)):
        out.write(f"{t},{MOVE_LETTERS[MoveAction(m)]},{ROTATE_LETTERS[HorizontalAction(r)]}\n")
    return out.getvalue()


def write_cost_report(signals: Sequence[CostSignal], fh: io.TextIOBase) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(COST_HEADER)
    for t, s in enumerate(signals):
        writer.writerow([t, repr(float(s.shaking)), s.spinning, repr(s.combined)])


def summarize(signals: Sequence[CostSignal]) -> tuple[float, int]:
    """Mean shaking and total spins of a cost sequence."""
    if not signals:
        return 0.0, 0
    total = sum((s.shaking for s in signals), Fraction(0))
    return float(total / len(signals)), sum(s.spinning for s in signals)
