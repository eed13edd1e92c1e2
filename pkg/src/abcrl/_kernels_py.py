"""Pure-Python implementations of the hot loops.

Used when the compiled ``_kernels`` extension is unavailable (or when
``ABCRL_PURE_PYTHON=1``).  Each function is built from the public
environment and detector objects, so it doubles as the reference the
compiled kernels are tested against.
"""

from __future__ import annotations

import math

import numpy as np

from .costs import HorizontalAction, ShakeWindow, SpinTracker, spin_step
from .env import N_ACTIONS, CollectorEnv, EnvConfig, EnvState, JointAction


def shake_counts(rot: np.ndarray, w: int) -> np.ndarray:
    out = np.zeros(len(rot), dtype=np.int32)
    window = ShakeWindow(w)
    for t, a in enumerate(rot.tolist()):
        window.push(a)
        if window.full:
            out[t] = window.reversals
    return out


def spin_counts(rot: np.ndarray, steps_per_rev: int) -> np.ndarray:
    out = np.zeros(len(rot), dtype=np.int32)
    tracker = SpinTracker(360 // steps_per_rev)
    for t, a in enumerate(rot.tolist()):
        out[t] = spin_step(tracker, a)[1]
    return out


def sample_softmax(x: list[float], W: list[list[float]], u: float) -> tuple[int, float]:
    """Draw an action from ``softmax(x @ W)`` by inverse CDF at ``u``.

    Summation order is fixed (features ascending, actions ascending) so the
    compiled kernel reproduces the same floats.
    """
    logits = [0.0] * N_ACTIONS
    for f, xf in enumerate(x):
        if xf != 0.0:
            row = W[f]
            for a in range(N_ACTIONS):
                logits[a] += xf * row[a]
    if not all(map(math.isfinite, logits)):
        raise FloatingPointError(f"non-finite policy logits: {logits}")
    m = max(logits)
    exps = [math.exp(la - m) for la in logits]
    s = 0.0
    for e in exps:
        s += e
    threshold = u * s
    cum = 0.0
    choice = N_ACTIONS - 1
    for a in range(N_ACTIONS):
        cum += exps[a]
        if threshold < cum:
            choice = a
            break
    return choice, (logits[choice] - m) - math.log(s)


def rollout_episode(cfg: EnvConfig, state: EnvState, weights: np.ndarray,
                    uniforms: np.ndarray, w: int, step_angle: int) -> dict[str, np.ndarray]:
    """Play one full episode from ``state`` (mutated in place)."""
    if state.step_count != 0:
        raise ValueError("rollout_episode needs a freshly reset state")
    T = cfg.episode_steps
    F = cfg.feature_dim
    env = CollectorEnv(cfg)
    env.state = state
    W = weights.tolist()
    us = uniforms.tolist()
    feats = np.zeros((T, F))
    actions = np.zeros(T, dtype=np.int8)
    logp = np.zeros(T)
    rewards = np.zeros(T)
    rot = np.zeros(T, dtype=np.int8)
    shake = np.zeros(T, dtype=np.int32)
    spins = np.zeros(T, dtype=np.int32)
    window = ShakeWindow(w)
    tracker = SpinTracker(step_angle)
    obs = env.observe()
    for t in range(T):
        feats[t] = obs
        a, lp = sample_softmax(obs, W, us[t])
        _, obs, r, _, turn = env.step(JointAction.from_index(a))
        actions[t] = a
        logp[t] = lp
        rewards[t] = r
        rot[t] = turn
        window.push(turn)
        if window.full:
            shake[t] = window.reversals
        spins[t] = spin_step(tracker, HorizontalAction(turn))[1]
    return {"features": feats, "actions": actions, "logp": logp, "rewards": rewards,
            "rotations": rot, "shake": shake, "spins": spins}
