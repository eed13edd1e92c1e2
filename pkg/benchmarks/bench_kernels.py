"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--episodes 20] [--trace-len 200000]

Both backends are run on identical inputs; the script also checks that
their outputs agree before reporting timings.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from abcrl import _kernels_py
from abcrl.env import CollectorEnv, EnvConfig

try:
    from abcrl import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_rollouts(impl, cfg: EnvConfig, episodes: int):
    rng = np.random.default_rng(0)
    weights = rng.normal(0, 1, (cfg.feature_dim, 9))
    env = CollectorEnv(cfg, np.random.default_rng(1))
    outs = []
    for _ in range(episodes):
        state, _ = env.reset()
        outs.append(impl.rollout_episode(cfg, state, weights, rng.random(cfg.episode_steps),
                                         8, cfg.step_angle))
    return outs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=20)
    ap.add_argument("--trace-len", type=int, default=200_000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if _compiled is None:
        raise SystemExit("compiled extension not available; build with `pip install -e .`")

    cfg = EnvConfig()
    rot = np.random.default_rng(2).integers(0, 3, args.trace_len).astype(np.int8)
    cases = [
        (f"rollout_episode x{args.episodes} ({cfg.episode_steps} steps)",
         lambda impl: bench_rollouts(impl, cfg, args.episodes)),
        (f"shake_counts w=8 ({args.trace_len} steps)", lambda impl: impl.shake_counts(rot, 8)),
        (f"spin_counts ({args.trace_len} steps)", lambda impl: impl.spin_counts(rot, 5)),
    ]

    print(f"{'kernel':<44}{'python':>11}{'compiled':>11}{'speedup':>9}")
    for name, run in cases:
        slow_out, fast_out = run(_kernels_py), run(_compiled)
        if isinstance(slow_out, list):
            same = all(np.array_equal(a[k], b[k]) for a, b in zip(slow_out, fast_out) for k in a)
        else:
            same = np.array_equal(slow_out, fast_out)
        if not same:
            raise SystemExit(f"{name}: backends disagree")
        t_py = best_of(lambda: run(_kernels_py), args.repeats)
        t_c = best_of(lambda: run(_compiled), args.repeats)
        print(f"{name:<44}{t_py:>10.4f}s{t_c:>10.4f}s{t_py / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
