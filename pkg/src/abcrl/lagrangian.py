"""Augmented-Lagrangian machinery for "minimize cost subject to value >= V_th".

The constraint ``J_v >= V_th`` is written as an equality with a slack
variable, ``V_th - J_v + z**2 = 0``.  Everything here is a pure function of
doubles; the verification helpers are test oracles and never run inside
training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

DEFAULT_DELTA = 1e-3


@dataclass(frozen=True)
class LagrangianParams:
    lam: float = 1.0
    mu: float = 0.1
    v_th: float = 0.0
    delta: float = DEFAULT_DELTA

    def __post_init__(self) -> None:
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")


@dataclass(frozen=True)
class ObjectiveSample:
    j_c: float
    j_v: float

    def __post_init__(self) -> None:
        if not self.j_c >= 0:
            raise ValueError(f"expected cost must be >= 0, got {self.j_c}")


def augmented_lagrangian(s: ObjectiveSample, z: float, p: LagrangianParams) -> float:
    g = p.v_th - s.j_v + z * z
    return s.j_c + p.lam * g + 0.5 * p.mu * g * g


def inner_min_closed_form(s: ObjectiveSample, p: LagrangianParams) -> float:
    """Exact minimum of :func:`augmented_lagrangian` over the slack ``z``."""
    m = max(0.0, p.lam + p.mu * (p.v_th - s.j_v))
    return s.j_c + (m * m - p.lam * p.lam) / (2.0 * p.mu)


def lambda_update(lambda_t: float, mu: float, v_th: float, j_v: float) -> float:
    return max(0.0, lambda_t + mu * (v_th - j_v))


def penalty_weight(p: LagrangianParams, j_v_est: float) -> float:
    """AB-CPO behavioral weight ``1 / max(delta, lam + mu (V_th - J_v))``."""
    return 1.0 / max(p.delta, p.lam + p.mu * (p.v_th - j_v_est))


def sigmoid(x: float) -> float:
    return float(expit(x))


def sigmoid_weight(W: float, h: float, v_avg: float, v_th: float) -> float:
    """ABC-RL adaptive behavioral weight ``W * sigmoid((v_avg - v_th) / h)``."""
    if W < 0:
        raise ValueError(f"W must be >= 0, got {W}")
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    x = (v_avg - v_th) / h
    if math.isnan(x):
        # inf - inf: both ends unbounded; treat as the balanced point
        x = 0.0
    return W * sigmoid(x)


def sigmoid_approx_error(lam: float, mu: float, d: float) -> float:
    """Relative error of approximating ``1/(lam + mu d)`` by
    ``(2/lam) sigmoid(-2 mu d / lam)`` where ``d = V_th - J_v``."""
    if not (lam > 0 and mu > 0 and lam + mu * d > 0):
        raise ValueError("need lam > 0, mu > 0 and lam + mu*d > 0")
    exact = 1.0 / (lam + mu * d)
    approx = (2.0 / lam) * sigmoid(-2.0 * mu * d / lam)
    return abs(exact - approx) / exact


# -- verification oracles ------------------------------------------------------

@dataclass(frozen=True)
class Prop1Report:
    closed_form: float
    grid_min: float
    gap: float
    z_star: float


def golden_section_min(f: Callable[[float], float], a: float, b: float,
                       tol: float = 1e-12, max_iter: int = 200) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def verify_prop1(s: ObjectiveSample, p: LagrangianParams, z_max: float,
                 z_step: float = 1e-4) -> Prop1Report:
    """Compare the closed-form inner minimum with a brute-force search over z.

    A uniform grid on ``[-z_max, z_max]`` locates the basin; golden-section
    search on the two neighbouring cells refines it.
    """
    if z_max * z_max < p.lam / p.mu + abs(p.v_th - s.j_v):
        raise ValueError(
            f"z grid [-{z_max}, {z_max}] does not contain the analytic minimizer")
    n = int(math.ceil(z_max / z_step))
    z = np.linspace(-z_max, z_max, 2 * n + 1)
    g = p.v_th - s.j_v + z * z
    vals = s.j_c + p.lam * g + 0.5 * p.mu * g * g
    i = int(np.argmin(vals))
    lo = z[max(i - 1, 0)]
    hi = z[min(i + 1, len(z) - 1)]
    z_star, refined = golden_section_min(lambda x: augmented_lagrangian(s, x, p), lo, hi)
    grid_min = min(refined, float(vals[i]))
    closed = inner_min_closed_form(s, p)
    return Prop1Report(closed, grid_min, abs(closed - grid_min), abs(z_star))
