"""Experiment orchestration, persistence and analysis behind the CLI."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, TextIO

import numpy as np

from . import lagrangian
from .config import RunConfig
from .costs import (ActionTrace, CostSignal, HorizontalAction, ShakeWindow, combined_cost, summarize,
                    trace_costs, write_cost_report)
from .learner import RUNLOG_COLUMNS, SCHEDLOG_COLUMNS, RunLog, run_training
from .schedulers import SchedulerKind


RUNLOG_RE = re.compile(r"^runlog_(?P<agent>.+)_seed(?P<seed>-?\d+)\.csv$")


def fmt(x: float | int | str) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv_stream(fh: TextIO, columns: list[str], rows: Iterable[dict],
                     meta: dict[str, str] | None = None) -> None:
    """CSV with optional ``# key: value`` header lines before the column row."""
    for k, v in (meta or {}).items():
        fh.write(f"# {k}: {v}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row[c]) for c in columns])


def write_csv(path: Path, columns: list[str], rows: Iterable[dict], meta: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_csv_stream(fh, columns, rows, meta)


def read_csv(path: Path) -> tuple[dict[str, str], list[str], list[dict[str, str]]]:
    meta: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#") and not body:
            k, _, v = line[1:].partition(":")
            meta[k.strip()] = v.strip()
        else:
            body.append(line)
    reader = csv.reader(body)
    header = next(reader, [])
    return meta, header, [dict(zip(header, r)) for r in reader]


def write_policy(path: Path, log_: RunLog, config_hash: str) -> None:
    w = log_.params.weights
    header = {"feature_dim": int(w.shape[0]), "actions": int(w.shape[1]), "config_hash": config_hash,
              "layout": "row-major [feature][action]"}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for v in w.ravel():
            fh.write(repr(float(v)) + "\n")


def read_policy(path: Path) -> tuple[dict, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        values = np.array([float(line) for line in fh if line.strip()])
    return header, values.reshape(header["feature_dim"], header["actions"])


# -- train -------------------------------------------------------------------

def train(cfg: RunConfig, progress: Callable[[str], None] | None = None) -> list[Path]:
    """Train every (agent, seed) pair; returns the RunLog paths written."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    written = []
    # baselines first: baseline_fraction thresholds depend on them
    order = sorted(cfg.agents, key=lambda a: a.scheduler.kind is not SchedulerKind.NONE)
    for seed in cfg.seeds:
        baseline_vmax: float | None = None
        for agent in order:
            sched = agent.scheduler
            if agent.v_th.mode == "baseline_fraction":
                sched = dataclasses.replace(sched, v_th=agent.v_th.fraction * baseline_vmax)
            if progress:
                progress(f"training {agent.name} seed={seed}")
            run = run_training(cfg.env, sched, cfg.learner, cfg.episodes, seed, cfg.cost)
            if sched.kind is SchedulerKind.NONE and baseline_vmax is None:
                baseline_vmax = run.v_max
            meta = {"config_hash": chash, "agent": agent.name, "seed": str(seed),
                    "scheduler": sched.kind.value, "v_th": fmt(sched.v_th)
                    if sched.v_th_mode.value == "fixed" else f"{sched.fraction} x running V_max",
                    "episode_steps": str(cfg.env.episode_steps), "alpha": fmt(cfg.cost.alpha)}
            stem = f"{agent.name}_seed{seed}"
            path = cfg.output_dir / f"runlog_{stem}.csv"
            write_csv(path, RUNLOG_COLUMNS, run.rows, meta)
            write_csv(cfg.output_dir / f"schedlog_{stem}.csv", SCHEDLOG_COLUMNS, run.scheduler_rows, meta)
            write_policy(cfg.output_dir / f"policy_{stem}.txt", run, chash)
            written.append(path)
    return written


# -- cost --------------------------------------------------------------------

def cost_report(trace: ActionTrace, w: int, alpha: float, step_angle: int,
                shake_moves: bool = False) -> list[CostSignal]:
    signals = trace_costs(trace.rotations, w, alpha, step_angle)
    if shake_moves:
        # forward/backward reuse the left/right codes, so one window type serves both
        window = ShakeWindow(w)
        merged = []
        for sig, m in zip(signals, trace.moves):
            window.push(HorizontalAction(int(m)))
            extra = Fraction(window.reversals, w - 1) if window.full else Fraction(0)
            shake = sig.shaking + extra
            merged.append(CostSignal(shake, sig.spinning, combined_cost(shake, sig.spinning, alpha)))
        signals = merged
    return signals


SUMMARY_COLUMNS = ["trace", "steps", "mean_shaking", "total_spins", "mean_combined"]


def summary_row(name: str, signals: list[CostSignal]) -> dict:
    mean_shake, spins = summarize(signals)
    mean_comb = sum(s.combined for s in signals) / len(signals) if signals else 0.0
    return {"trace": name, "steps": len(signals), "mean_shaking": mean_shake,
            "total_spins": spins, "mean_combined": mean_comb}


# -- verify ------------------------------------------------------------------

@dataclass
class CheckResult:
    check: str
    samples: int
    max_gap: float
    passed: bool

    def as_json(self) -> str:
        return json.dumps({"check": self.check, "samples": int(self.samples),
                           "max_gap": float(self.max_gap), "pass": bool(self.passed)})


SIGMOID_SWEEP_LAMBDAS = (0.5, 1.0, 2.0)
SIGMOID_SWEEP_MUS = (0.1, 1.0)


def verify(seed: int = 0, n_prop1: int = 1000) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []

    gaps = []
    for _ in range(n_prop1):
        s = lagrangian.ObjectiveSample(float(rng.uniform(0, 10)), float(rng.uniform(-10, 10)))
        p = lagrangian.LagrangianParams(float(rng.uniform(0, 5)), float(rng.uniform(0.05, 5)),
                                        float(rng.uniform(-10, 10)))
        z_max = math.sqrt(p.lam / p.mu + abs(p.v_th - s.j_v)) + 1.0
        gaps.append(lagrangian.verify_prop1(s, p, z_max).gap)
    results.append(CheckResult("prop1_closed_form", n_prop1, max(gaps), max(gaps) <= 1e-6))

    at_zero = max(lagrangian.sigmoid_approx_error(lam, mu, 0.0)
                  for lam in SIGMOID_SWEEP_LAMBDAS for mu in SIGMOID_SWEEP_MUS)
    results.append(CheckResult("sigmoid_approx_at_zero", 6, at_zero, at_zero == 0.0))
    errs = []
    for lam in SIGMOID_SWEEP_LAMBDAS:
        for mu in SIGMOID_SWEEP_MUS:
            dmax = 0.05 * lam / mu
            for d in np.linspace(-dmax, dmax, 201):
                errs.append(lagrangian.sigmoid_approx_error(lam, mu, float(d)))
    results.append(CheckResult("sigmoid_approx_sweep", len(errs), max(errs), max(errs) <= 0.01))

    worst = math.inf
    n_seq = 200
    for _ in range(n_seq):
        lam = float(rng.uniform(0, 5))
        mu = float(rng.uniform(0.01, 2))
        for j_v in rng.normal(0, 10, size=50):
            lam = lagrangian.lambda_update(lam, mu, 0.0, float(j_v))
            worst = min(worst, lam)
    results.append(CheckResult("lambda_nonnegative", n_seq, max(0.0, -worst), worst >= 0.0))

    ok = True
    steps_over = 0.0
    for _ in range(n_seq):
        lam = float(rng.uniform(0, 5))
        mu = float(rng.uniform(0.01, 2))
        excess = float(rng.uniform(0.1, 5))
        bound = math.ceil(lam / (mu * excess)) + 1
        for k in range(bound + 1):
            if lam == 0.0:
                break
            lam = lagrangian.lambda_update(lam, mu, 0.0, excess)
        ok &= lam == 0.0
        steps_over = max(steps_over, float(k - bound))
    results.append(CheckResult("lambda_reaches_zero", n_seq, max(0.0, steps_over), ok))

    worked = lagrangian.lambda_update(0.5, 0.1, 10.0, 12.0)
    results.append(CheckResult("lambda_worked_example", 1, abs(worked - 0.3), worked == 0.3))
    return results


# -- compare -----------------------------------------------------------------

class CompareError(Exception):
    pass


@dataclass
class LoadedRun:
    agent: str
    seed: int
    config_hash: str
    episode_steps: int
    alpha: float
    columns: dict[str, np.ndarray]

    @property
    def episodes(self) -> int:
        return len(self.columns["episode"])


def load_runlogs(directory: Path) -> list[LoadedRun]:
    runs = []
    for path in sorted(directory.iterdir()):
        m = RUNLOG_RE.match(path.name)
        if not m:
            continue
        meta, header, rows = read_csv(path)
        if header != RUNLOG_COLUMNS:
            raise CompareError(f"{path.name}: RunLog columns {header} != {RUNLOG_COLUMNS}")
        for key in ("config_hash", "agent", "seed", "episode_steps", "alpha"):
            if key not in meta:
                raise CompareError(f"{path.name}: missing header field {key!r}")
        cols = {c: np.array([float(r[c]) for r in rows], dtype=float) for c in RUNLOG_COLUMNS}
        runs.append(LoadedRun(meta["agent"], int(meta["seed"]), meta["config_hash"],
                              int(meta["episode_steps"]), float(meta["alpha"]), cols))
    if not runs:
        raise CompareError(f"no runlog_*.csv files in {directory}")
    hashes = {r.config_hash for r in runs}
    if len(hashes) > 1:
        raise CompareError(f"RunLogs come from different configs (hashes {sorted(hashes)})")
    runs.sort(key=lambda r: (r.agent, r.seed))
    return runs


def terminal_slice(n: int) -> slice:
    """Last 10% of ``n`` episodes (at least one)."""
    k = max(1, n // 10) if n else 0
    return slice(n - k, n)


def combined_per_step(run: LoadedRun) -> np.ndarray:
    return run.columns["shaking_mean"] + run.alpha * run.columns["spin_total"] / run.episode_steps


def terminal_stats(run: LoadedRun) -> dict[str, float]:
    t = terminal_slice(run.episodes)

    def mean(x: np.ndarray) -> float:
        return float(x[t].mean()) if run.episodes else math.nan

    return {"raw_return": mean(run.columns["raw_return"]),
            "shaking_mean": mean(run.columns["shaking_mean"]),
            "spins_per_episode": mean(run.columns["spin_total"]),
            "combined_mean": mean(combined_per_step(run))}


STAT_COLUMNS = ["raw_return", "shaking_mean", "spins_per_episode", "combined_mean"]
CURVE_METRICS = ["raw_return", "shaking_mean", "spin_total", "combined_mean", "weight"]


def smooth(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average (shorter at the start)."""
    if len(x) == 0 or window <= 1:
        return x
    c = np.cumsum(np.insert(x, 0, 0.0))
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def compare(directory: Path, out_dir: Path | None = None, human: Path | None = None,
            smooth_window: int = 20) -> dict[str, Path]:
    runs = load_runlogs(directory)
    out_dir = out_dir or directory
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"config_hash": runs[0].config_hash}

    per_seed = [{"agent": r.agent, "seed": r.seed, "episodes": r.episodes, **terminal_stats(r)}
                for r in runs]
    agents = sorted({r.agent for r in runs})
    per_agent = []
    for a in agents:
        rows = [p for p in per_seed if p["agent"] == a]
        agg = {"agent": a, "seeds": len(rows)}
        for c in STAT_COLUMNS:
            agg[c] = float(np.mean([p[c] for p in rows]))
        per_agent.append(agg)

    human_rows = []
    if human is not None:
        _, header, rows = read_csv(human)
        missing = [c for c in SUMMARY_COLUMNS if c not in header]
        if missing:
            raise CompareError(f"{human.name}: human summary lacks columns {missing}")
        human_rows = rows
        per_agent.append({
            "agent": "human", "seeds": len(rows),
            "raw_return": math.nan,
            "shaking_mean": float(np.mean([float(r["mean_shaking"]) for r in rows])),
            "spins_per_episode": float(np.mean([float(r["total_spins"]) for r in rows])),
            "combined_mean": float(np.mean([float(r["mean_combined"]) for r in rows])),
        })

    paths = {}
    paths["per_seed"] = out_dir / "summary_per_seed.csv"
    write_csv(paths["per_seed"], ["agent", "seed", "episodes", *STAT_COLUMNS], per_seed, meta)
    paths["per_agent"] = out_dir / "summary.csv"
    write_csv(paths["per_agent"], ["agent", "seeds", *STAT_COLUMNS], per_agent, meta)

    curve_rows = []
    for r in runs:
        series = {"raw_return": r.columns["raw_return"], "shaking_mean": r.columns["shaking_mean"],
                  "spin_total": r.columns["spin_total"], "combined_mean": combined_per_step(r),
                  "weight": r.columns["weight"]}
        for metric in CURVE_METRICS:
            vals = smooth(series[metric], smooth_window)
            for ep, v in zip(r.columns["episode"].astype(int), vals):
                curve_rows.append({"agent": r.agent, "seed": r.seed, "episode": int(ep),
                                   "metric": metric, "value": float(v)})
    if human_rows:
        episodes = [int(e) for r in runs for e in r.columns["episode"]]
        first, last = (min(episodes), max(episodes)) if episodes else (0, 0)
        h = per_agent[-1]
        for metric, key in (("shaking_mean", "shaking_mean"), ("spin_total", "spins_per_episode"),
                            ("combined_mean", "combined_mean")):
            for ep in (first, last):
                curve_rows.append({"agent": "human", "seed": -1, "episode": ep, "metric": metric,
                                   "value": h[key]})
    paths["curves"] = out_dir / "curves_long.csv"
    write_csv(paths["curves"], ["agent", "seed", "episode", "metric", "value"], curve_rows, meta)
    return paths


def write_signals(signals: list[CostSignal], out: TextIO | None = None) -> str:
    buf = io.StringIO()
    write_cost_report(signals, buf)
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text
