"""Sampling cost, the cost + alpha * loss objective, and its box-constrained minimizer."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .info_loss import InfoLossModel, predict_info_loss

PG_TOL = 1e-6
MAX_ITER = 10_000
ARMIJO = 1e-4
MAX_HALVINGS = 60
BRUTE_FORCE_LIMIT = 4096
HESS_FLOOR = 1e-12

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObjectiveConfig:
    alpha: float
    max_dist: int
    costs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))
        if not self.costs:
            raise ValueError("need at least one sensor")
        if self.alpha < 0 or any(c < 0 for c in self.costs):
            raise ValueError("alpha and costs must be nonnegative")
        if self.max_dist < 1:
            raise ValueError("max_dist must be >= 1")

    @property
    def m(self) -> int:
        return len(self.costs)


@dataclass(frozen=True)
class ContinuousSolution:
    distances: np.ndarray
    objective_value: float
    iterations: int
    converged: bool


def sampling_cost(costs, distances) -> float:
    d = np.asarray(distances, dtype=float)
    if np.any(d < 1):
        raise ValueError("distances must be >= 1")
    return float(np.sum(np.asarray(costs, dtype=float) / d))


def objective(context, distances, config: ObjectiveConfig, model: InfoLossModel) -> float:
    cost = sampling_cost(config.costs, distances)
    if config.alpha == 0:
        return cost
    return cost + config.alpha * predict_info_loss(model, context, distances)


def round_policy(distances, max_dist: int) -> np.ndarray:
    """Nearest integer with halves rounded up, clipped to [1, max_dist]."""
    d = np.floor(np.asarray(distances, dtype=float) + 0.5)
    return np.clip(d, 1, max_dist).astype(np.int64)


def optimize_policy(
    context, model: InfoLossModel, config: ObjectiveConfig
) -> tuple[ContinuousSolution, np.ndarray]:
    """Minimize the objective over [1, max_dist]^m, then round to integers.

    For fixed C the predicted loss is ``const + sum(lin_j D_j + quad_j D_j^2)``,
    so the objective is separable with a diagonal Hessian. Each iteration
    takes a Hessian-scaled projected gradient step with Armijo backtracking
    from a unit step. Coordinates on which the objective is flat (zero cost
    and zero loss slope) are sent to ``max_dist``.
    """
    if model.m != config.m:
        raise ValueError(f"model has {model.m} sensors, config has {config.m}")
    const, lin, quad = model.distance_terms(context)
    costs = np.asarray(config.costs)
    alpha = config.alpha
    lo, hi = 1.0, float(config.max_dist)
    a_lin, a_quad = alpha * lin, alpha * quad

    def f(d):
        return float(np.sum(costs / d + a_lin * d + a_quad * d * d)) + alpha * const

    x = np.full(config.m, (lo + hi) / 2.0)
    fx = f(x)
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        g = -costs / (x * x) + a_lin + 2.0 * a_quad * x
        h = 2.0 * costs / (x * x * x) + 2.0 * a_quad
        step = g / np.maximum(h, HESS_FLOOR)
        # stop only when both the plain and the scaled projected steps vanish
        pg = max(
            np.max(np.abs(np.clip(x - g, lo, hi) - x)),
            np.max(np.abs(np.clip(x - step, lo, hi) - x)),
        )
        if pg < PG_TOL:
            converged = True
            break
        t = 1.0
        for _ in range(MAX_HALVINGS):
            x_new = np.clip(x - t * step, lo, hi)
            f_new = f(x_new)
            if not math.isfinite(f_new):
                raise FloatingPointError(f"non-finite objective at D={x_new}")
            if f_new <= fx + ARMIJO * float(g @ (x_new - x)):
                break
            t *= 0.5
        else:
            # no representable decrease left
            converged = True
            break
        x, fx = x_new, f_new

    flat = (costs == 0) & (a_lin == 0) & (a_quad == 0)
    x = np.where(flat, hi, x)
    sol = ContinuousSolution(x, f(x), it, converged)
    log.debug("optimize: %d iterations, converged=%s, D=%s", it, converged, np.round(x, 4).tolist())
    return sol, round_policy(x, config.max_dist)


def projected_gradient_norm(context, distances, model: InfoLossModel, config: ObjectiveConfig) -> float:
    """Infinity norm of the unit-step projected gradient; zero at a box-constrained optimum."""
    _, lin, quad = model.distance_terms(context)
    d = np.asarray(distances, dtype=float)
    g = -np.asarray(config.costs) / (d * d) + config.alpha * (lin + 2.0 * quad * d)
    return float(np.max(np.abs(np.clip(d - g, 1.0, config.max_dist) - d)))


def brute_force_policy(context, model: InfoLossModel, config: ObjectiveConfig) -> np.ndarray:
    """Exhaustive integer-grid argmin; ties go to the lexicographically largest D."""
    if config.max_dist**config.m > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"grid of {config.max_dist}^{config.m} points exceeds {BRUTE_FORCE_LIMIT}"
        )
    best_val, best = math.inf, None
    for cand in itertools.product(range(1, config.max_dist + 1), repeat=config.m):
        val = objective(context, cand, config, model)
        tol = 1e-12 * max(1.0, abs(val))
        # the grid is scanned in ascending order, so a tie moves to the larger tuple
        if best is None or val <= best_val + tol:
            best_val, best = min(val, best_val), cand
    return np.array(best, dtype=np.int64)
