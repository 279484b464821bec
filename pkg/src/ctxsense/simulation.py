"""Offline replay of continuous sensing under dynamic or adaptive-probability policies.

Time advances in base intervals. At the start of step ``t`` every sensor whose
countdown is zero is sampled, the degraded record (freshest known value of
each sensor) is encoded, and its KL divergence from the context of the true
record is charged as information loss. A sensor with policy ``p`` is sampled
every ``p`` steps; a policy timer ``T`` re-optimizes the policy ``T`` steps
after the previous decision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .context import AutoencoderModel, encode
from .info_loss import InfoLossModel, kl_rows
from .policy import ObjectiveConfig, optimize_policy
from .trace import Trace

P_MIN, P_MAX = 0.1, 0.9


class TimingMode(str, enum.Enum):
    MIN = "MIN"
    AVG = "AVG"
    MAX = "MAX"
    NEVER = "NEVER"


def set_policy_timer(mode: TimingMode | str, policy) -> float:
    mode = TimingMode(mode)
    policy = np.asarray(policy)
    if mode is TimingMode.MAX:
        return int(policy.max())
    if mode is TimingMode.MIN:
        return int(policy.min())
    if mode is TimingMode.AVG:
        return int(math.floor(float(policy.mean()) + 0.5))
    return math.inf


def update_time_to_sample(policy, prev_policy, time_to_sample) -> np.ndarray:
    """Carry elapsed time since each sensor's last sample over to a new policy."""
    policy = np.asarray(policy, dtype=np.int64)
    tts = np.asarray(time_to_sample, dtype=np.int64)
    if prev_policy is None:
        return policy.copy()
    prev = np.asarray(prev_policy, dtype=np.int64)
    if not (policy.shape == prev.shape == tts.shape):
        raise ValueError("policy, previous policy and countdowns must have equal length")
    if np.array_equal(prev, policy):
        return tts.copy()
    since = prev - tts
    return np.where(tts == 0, policy, np.maximum(0, policy - since))


def advance_countdowns(tts: np.ndarray, policy: np.ndarray, sampled: np.ndarray) -> np.ndarray:
    """One interval passes. A just-sampled sensor restarts its countdown from
    its policy; an overdue unsampled sensor waits at zero for the next step."""
    tts = tts - 1
    neg = tts < 0
    tts[neg & sampled] = policy[neg & sampled] - 1
    tts[neg & ~sampled] = 0
    return tts


@dataclass
class SimulationResult:
    method: str
    alpha: float
    mode: str
    total_cost: float
    total_info_loss: float
    mean_distance: np.ndarray
    policy_changes: int
    steps: int
    policy_history: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)
    step_log: list[dict] | None = None


def _check_models(trace: Trace, context_model: AutoencoderModel, m: int | None = None):
    if context_model.input_dim != trace.n_features:
        raise ValueError(
            f"context model expects {context_model.input_dim} features, trace has {trace.n_features}"
        )
    if m is not None and m != trace.n_sensors:
        raise ValueError(f"loss model has {m} sensors, trace has {trace.n_sensors}")


def run_simulation(
    trace: Trace,
    context_model: AutoencoderModel,
    info_loss_model: InfoLossModel | None,
    costs: Sequence[float],
    alpha: float,
    mode: TimingMode | str,
    max_dist: int,
    *,
    decide: Callable[[np.ndarray], np.ndarray] | None = None,
    log_steps: bool = False,
    method: str = "dynamic",
) -> SimulationResult:
    """Replay ``trace`` under dynamically optimized policies.

    ``decide`` maps a degraded context to an integer policy; it defaults to
    :func:`optimize_policy` with the given alpha and costs.
    """
    mode = TimingMode(mode)
    costs = np.asarray(costs, dtype=float)
    _check_models(trace, context_model, info_loss_model.m if info_loss_model else None)
    if costs.shape != (trace.n_sensors,):
        raise ValueError("one cost per sensor required")
    if decide is None:
        if info_loss_model is None:
            raise ValueError("an information-loss model or a decide callable is required")
        obj = ObjectiveConfig(alpha, max_dist, tuple(costs))

        def decide(ctx):
            return optimize_policy(ctx, info_loss_model, obj)[1]

    slices = trace.slices
    n_steps, m = len(trace), trace.n_sensors
    actual_ctx = encode(context_model, trace.values)
    degraded_ctx = np.empty_like(actual_ctx)
    current = np.array(trace.values[0], dtype=float)

    tts = np.zeros(m, dtype=np.int64)
    timer: float = 0
    policy = prev = None
    dist_sum = np.zeros(m)
    total_cost = 0.0
    decisions = 0
    history: list[tuple[int, tuple[int, ...]]] = []
    log: list[dict] | None = [] if log_steps else None
    ctx = None

    for t in range(n_steps):
        sampled = tts == 0
        if sampled.any():
            for s in np.flatnonzero(sampled):
                current[slices[s]] = trace.values[t, slices[s]]
            total_cost += float(costs[sampled].sum())
            ctx = encode(context_model, current)
        degraded_ctx[t] = ctx

        if timer == 0:
            prev, policy = policy, np.asarray(decide(ctx), dtype=np.int64)
            if np.any(policy < 1) or np.any(policy > max_dist):
                raise ValueError(f"policy {policy} outside [1, {max_dist}]")
            tts = update_time_to_sample(policy, prev, tts)
            timer = set_policy_timer(mode, policy)
            decisions += 1
            history.append((t, tuple(int(p) for p in policy)))

        dist_sum += policy
        if log is not None:
            log.append({
                "t": int(trace.timestamps[t]),
                "sampled": sampled.copy(),
                "policy": policy.copy(),
            })
        tts = advance_countdowns(tts, policy, sampled)
        timer -= 1

    step_loss = kl_rows(actual_ctx, degraded_ctx)
    if log is not None:
        for row, loss in zip(log, step_loss):
            row["loss"] = float(loss)
    return SimulationResult(
        method=method,
        alpha=float(alpha),
        mode=mode.value,
        total_cost=total_cost,
        total_info_loss=float(step_loss.sum()),
        mean_distance=dist_sum / n_steps,
        policy_changes=decisions,
        steps=n_steps,
        policy_history=history,
        step_log=log,
    )


# --- probability-adaptive baseline --------------------------------------------


def baseline_update_probability(p: float, interesting: bool, alpha_param: float) -> float:
    if not 0 < alpha_param < 1:
        raise ValueError("alpha_param must lie in (0, 1)")
    p = p + alpha_param * (1.0 - p) if interesting else p - alpha_param * p
    return min(P_MAX, max(P_MIN, p))


def baseline_distance(p: float, max_dist: int) -> int:
    """Affine map from sensing probability to inter-sample distance (0.9 -> 1, 0.1 -> max_dist)."""
    raw = max_dist - (p - P_MIN) / (P_MAX - P_MIN) * (max_dist - 1)
    return int(min(max_dist, max(1, math.floor(raw + 0.5))))


def nearest_rank_quantile(values, q: float) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no values")
    if not 0 < q <= 1:
        raise ValueError("quantile must lie in (0, 1]")
    rank = max(1, math.ceil(q * v.size - 1e-9))
    return float(v[rank - 1])


def compute_event_threshold(trace: Trace, context_model: AutoencoderModel, quantile: float = 0.9) -> float:
    """Quantile of KL(C_t || C_t+1) over consecutive records of a warmup trace."""
    if len(trace) < 2:
        raise ValueError("need at least two warmup records")
    _check_models(trace, context_model)
    ctx = encode(context_model, trace.values)
    return nearest_rank_quantile(kl_rows(ctx[:-1], ctx[1:]), quantile)


@dataclass
class BaselineState:
    p: np.ndarray
    alpha_param: float
    threshold: float

    def update(self, sensor: int, interesting: bool) -> None:
        self.p[sensor] = baseline_update_probability(float(self.p[sensor]), interesting, self.alpha_param)


def run_baseline(
    trace: Trace,
    context_model: AutoencoderModel,
    costs: Sequence[float],
    max_dist: int,
    threshold: float,
    alpha_param: float = 0.5,
    *,
    log_steps: bool = False,
) -> SimulationResult:
    """Per-sensor probability-adaptive sampling.

    At each of a sensor's sampling events after the first step, the event is
    interesting when the KL divergence from the previously known context to
    the refreshed one exceeds ``threshold``. The updated probability sets the
    distance to that sensor's next sample.
    """
    costs = np.asarray(costs, dtype=float)
    _check_models(trace, context_model)
    slices = trace.slices
    n_steps, m = len(trace), trace.n_sensors
    state = BaselineState(np.full(m, 0.5), alpha_param, threshold)
    dist = np.array([baseline_distance(p, max_dist) for p in state.p], dtype=np.int64)

    actual_ctx = encode(context_model, trace.values)
    degraded_ctx = np.empty_like(actual_ctx)
    current = np.array(trace.values[0], dtype=float)
    tts = np.zeros(m, dtype=np.int64)
    total_cost = 0.0
    dist_sum = np.zeros(m)
    changes = 1
    history = [(0, tuple(int(d) for d in dist))]
    log: list[dict] | None = [] if log_steps else None
    ctx = None

    for t in range(n_steps):
        sampled = tts == 0
        if sampled.any():
            for s in np.flatnonzero(sampled):
                current[slices[s]] = trace.values[t, slices[s]]
            total_cost += float(costs[sampled].sum())
            new_ctx = encode(context_model, current)
            if ctx is not None:
                interesting = float(kl_rows(new_ctx, ctx)) > threshold
                before = dist.copy()
                for s in np.flatnonzero(sampled):
                    state.update(s, interesting)
                    dist[s] = baseline_distance(float(state.p[s]), max_dist)
                if not np.array_equal(before, dist):
                    changes += 1
                    history.append((t, tuple(int(d) for d in dist)))
            ctx = new_ctx
        degraded_ctx[t] = ctx
        dist_sum += dist
        if log is not None:
            log.append({
                "t": int(trace.timestamps[t]),
                "sampled": sampled.copy(),
                "policy": dist.copy(),
                "p": state.p.copy(),
            })
        tts = advance_countdowns(tts, dist, sampled)

    step_loss = kl_rows(actual_ctx, degraded_ctx)
    if log is not None:
        for row, loss in zip(log, step_loss):
            row["loss"] = float(loss)
    return SimulationResult(
        method="baseline",
        alpha=float(alpha_param),
        mode="ADAPTIVE",
        total_cost=total_cost,
        total_info_loss=float(step_loss.sum()),
        mean_distance=dist_sum / n_steps,
        policy_changes=changes,
        steps=n_steps,
        policy_history=history,
        step_log=log,
    )
