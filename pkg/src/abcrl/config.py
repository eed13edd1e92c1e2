"""Run configuration: YAML file -> validated :class:`RunConfig`.

Schema (``config_version: 1``)::

    config_version: 1
    episodes: 2000
    seeds: [0, 1, 2]
    output_dir: runs/four_agents      # relative to the config file
    env:      {grid_size: 12, episode_steps: 500, ...}       # EnvConfig fields
    learner:  {learning_rate: 4.0, clip_epsilon: 0.2, ...}   # LearnerConfig fields
    cost:     {w: 8, alpha: 1.0, step_angle: 72}
    agents:
      baseline: {kind: none}
      const:    {kind: const}
      abc_rl:   {kind: abc_sigmoid, v_th: {mode: baseline_fraction, fraction: 0.8}}
      ab_cpo:   {kind: ab_cpo, mu: 0.01, v_th: {mode: baseline_fraction, fraction: 0.8}}

``v_th`` is one of ``{mode: fixed, value: X}``, ``{mode: fraction_of_max,
fraction: f}`` (running maximum of V_avg during the run) or ``{mode:
baseline_fraction, fraction: f}`` (``f`` times the V_max reached by the
``kind: none`` agent with the same seed; that agent is trained first).
A single ``scheduler:`` mapping may be given instead of ``agents:``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .env import EnvConfig
from .learner import CostConfig, LearnerConfig
from .schedulers import SchedulerConfig, SchedulerKind

CONFIG_VERSION = 1
SEED_OVERRIDE_ENV = "ABCRL_SEED_OVERRIDE"


class ConfigError(Exception):
    def __init__(self, message: str, line: int | None = None, path: str = ""):
        self.line = line
        self.path = path
        where = f"line {line}: " if line is not None else ""
        field_ = f"{path}: " if path else ""
        super().__init__(f"{where}{field_}{message}")


@dataclass(frozen=True)
class VthSpec:
    mode: str = "fraction_of_max"
    value: float | None = None
    fraction: float = 0.8


@dataclass(frozen=True)
class AgentSpec:
    name: str
    scheduler: SchedulerConfig
    v_th: VthSpec = VthSpec()


@dataclass
class RunConfig:
    env: EnvConfig
    learner: LearnerConfig
    cost: CostConfig
    agents: list[AgentSpec]
    episodes: int
    seeds: list[int]
    output_dir: Path
    source: dict[str, Any] = field(default_factory=dict)

    def config_hash(self) -> str:
        """Hash of everything that determines the outputs (not output_dir)."""
        payload = {k: v for k, v in self.source.items() if k != "output_dir"}
        payload["seeds"] = self.seeds
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _line_index(node: yaml.Node, prefix: str = "", out: dict[str, int] | None = None) -> dict[str, int]:
    out = {} if out is None else out
    out.setdefault(prefix, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[key] = k.start_mark.line + 1
            _line_index(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, f"{prefix}[{i}]", out)
    return out


def _build(cls, data: Any, path: str, lines: dict[str, int], **extra):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", lines.get(path), path)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown field {key!r}", lines.get(f"{path}.{key}"), f"{path}.{key}")
    try:
        return cls(**data, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), lines.get(path), path) from None


def _agent(name: str, raw: Any, lines: dict[str, int]) -> AgentSpec:
    path = f"agents.{name}"
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping", lines.get(path), path)
    raw = dict(raw)
    kind = raw.get("kind")
    valid = [k.value for k in SchedulerKind]
    if kind not in valid:
        raise ConfigError(f"unknown scheduler kind {kind!r} (expected one of {valid})",
                          lines.get(f"{path}.kind", lines.get(path)), f"{path}.kind")
    vraw = raw.pop("v_th", None)
    if kind == SchedulerKind.NONE.value:
        vth = VthSpec("fixed", math.inf)
    elif vraw is None:
        vth = VthSpec()
    else:
        vth = _build(VthSpec, vraw, f"{path}.v_th", lines)
        if vth.mode not in ("fixed", "fraction_of_max", "baseline_fraction"):
            raise ConfigError(f"unknown v_th mode {vth.mode!r}", lines.get(f"{path}.v_th.mode"),
                              f"{path}.v_th.mode")
        if vth.mode == "fixed" and vth.value is None:
            raise ConfigError("fixed v_th needs a value", lines.get(f"{path}.v_th"), f"{path}.v_th")
        if not 0 < vth.fraction <= 1:
            raise ConfigError("fraction must lie in (0, 1]", lines.get(f"{path}.v_th.fraction"),
                              f"{path}.v_th.fraction")
    if vth.mode == "fixed":
        extra = {"v_th_mode": "fixed", "v_th": float(vth.value)}
    elif vth.mode == "fraction_of_max":
        extra = {"v_th_mode": "fraction_of_max", "fraction": vth.fraction}
    else:
        # resolved per seed once the baseline has run
        extra = {"v_th_mode": "fixed", "v_th": math.inf}
    for k in ("v_th_mode", "fraction"):
        if k in raw:
            raise ConfigError(f"set {k!r} through the v_th mapping", lines.get(f"{path}.{k}"), f"{path}.{k}")
    sched = _build(SchedulerConfig, raw, path, lines, **extra)
    return AgentSpec(name, sched, vth)


def parse_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", 1)
    lines = _line_index(node)
    known = {"config_version", "episodes", "seeds", "output_dir", "env", "learner", "cost",
             "agents", "scheduler"}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown field {key!r}", lines.get(key), key)
    if data.get("config_version") != CONFIG_VERSION:
        raise ConfigError(f"config_version must be {CONFIG_VERSION}", lines.get("config_version", 1),
                          "config_version")
    episodes = data.get("episodes", 2000)
    if not isinstance(episodes, int) or isinstance(episodes, bool) or episodes < 0:
        raise ConfigError("episodes must be a non-negative integer", lines.get("episodes"), "episodes")
    seeds = data.get("seeds", [0, 1, 2])
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds)):
        raise ConfigError("seeds must be a non-empty list of integers", lines.get("seeds"), "seeds")
    override = os.environ.get(SEED_OVERRIDE_ENV, "").strip()
    if override:
        try:
            seeds = [int(s) for s in override.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"{SEED_OVERRIDE_ENV} must be comma-separated integers") from None
        if not seeds:
            raise ConfigError(f"{SEED_OVERRIDE_ENV} is empty")
    env = _build(EnvConfig, data.get("env"), "env", lines)
    learner = _build(LearnerConfig, data.get("learner"), "learner", lines)
    cost = _build(CostConfig, data.get("cost"), "cost", lines)
    if cost.step_angle * env.heading_steps != 360:
        raise ConfigError(f"step_angle {cost.step_angle} x heading_steps {env.heading_steps} != 360",
                          lines.get("cost.step_angle", lines.get("cost")), "cost.step_angle")
    if "agents" in data and "scheduler" in data:
        raise ConfigError("give either agents or scheduler, not both", lines.get("scheduler"), "scheduler")
    if "scheduler" in data:
        raw = data["scheduler"]
        name = raw.get("kind", "agent") if isinstance(raw, dict) else "agent"
        lines.update({f"agents.{name}" + k[len("scheduler"):]: v
                      for k, v in lines.items() if k.startswith("scheduler")})
        agents_raw = {name: raw}
    else:
        agents_raw = data.get("agents")
    if not isinstance(agents_raw, dict) or not agents_raw:
        raise ConfigError("agents must be a non-empty mapping", lines.get("agents"), "agents")
    agents = [_agent(str(name), raw, lines) for name, raw in agents_raw.items()]
    if any(a.v_th.mode == "baseline_fraction" for a in agents) and not any(
            a.scheduler.kind is SchedulerKind.NONE for a in agents):
        raise ConfigError("baseline_fraction v_th needs an agent with kind: none",
                          lines.get("agents"), "agents")
    out = data.get("output_dir", "runs")
    if not isinstance(out, str):
        raise ConfigError("output_dir must be a string", lines.get("output_dir"), "output_dir")
    output_dir = Path(out)
    if not output_dir.is_absolute():
        output_dir = Path(base_dir) / output_dir
    return RunConfig(env, learner, cost, agents, episodes, seeds, output_dir, data)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path.parent)
