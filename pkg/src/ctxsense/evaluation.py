"""Pareto peeling, Friedman / Iman-Davenport, Nemenyi and paired t statistics.

Critical values are never computed here; callers supply them.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata


class DegenerateStatisticError(ArithmeticError):
    pass


@dataclass(frozen=True)
class RunPoint:
    method: str
    info_loss: float
    cost: float

    def __post_init__(self):
        if self.info_loss < 0 or self.cost < 0:
            raise ValueError("run points must be nonnegative")


def dominates(a, b) -> bool:
    """``a`` dominates ``b`` when it is no worse in both coordinates and better in one."""
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def pareto_rank(points: Sequence[RunPoint] | Sequence[tuple[float, float]]) -> list[int]:
    """Peel successive non-dominated fronts (minimizing both coordinates); front k gets rank k."""
    xy = [(p.info_loss, p.cost) if isinstance(p, RunPoint) else tuple(p) for p in points]
    if not xy:
        raise ValueError("need at least one point")
    ranks = [0] * len(xy)
    remaining = set(range(len(xy)))
    level = 0
    while remaining:
        level += 1
        front = [i for i in remaining if not any(dominates(xy[j], xy[i]) for j in remaining if j != i)]
        for i in front:
            ranks[i] = level
        remaining.difference_update(front)
    return ranks


def block_ranks(pareto_levels: Sequence[int]) -> np.ndarray:
    """Convert one block's Pareto levels to Friedman ranks (ties share the average rank)."""
    return rankdata(np.asarray(pareto_levels, dtype=float), method="average")


def rank_matrix(
    results: Iterable, methods: Sequence[str], label: str = "method"
) -> tuple[np.ndarray, list[tuple]]:
    """Rank ``methods`` within each (user, alpha) block by Pareto level.

    ``results`` yields objects with ``user``, ``alpha``, ``method``,
    ``total_info_loss`` and ``total_cost`` attributes (or dict keys). Blocks
    missing a method are skipped.
    """
    blocks: dict[tuple, dict[str, tuple[float, float]]] = defaultdict(dict)
    for r in results:
        get = r.get if isinstance(r, dict) else lambda k, _r=r: getattr(_r, k)
        key = (get("user"), float(get("alpha")))
        blocks[key][get(label)] = (float(get("total_info_loss")), float(get("total_cost")))
    rows, keys = [], []
    for key in sorted(blocks, key=lambda k: (str(k[0]), k[1])):
        cell = blocks[key]
        if not all(m in cell for m in methods):
            continue
        levels = pareto_rank([cell[m] for m in methods])
        rows.append(block_ranks(levels))
        keys.append(key)
    return np.array(rows, dtype=float).reshape(len(rows), len(methods)), keys


def friedman_from_mean_ranks(mean_ranks: Sequence[float], n_blocks: int) -> tuple[float, float]:
    r = np.asarray(mean_ranks, dtype=float)
    k, n = r.size, n_blocks
    if n < 2 or k < 2:
        raise ValueError("need at least two blocks and two methods")
    chi2 = 12.0 * n / (k * (k + 1)) * (float(np.sum(r**2)) - k * (k + 1) ** 2 / 4.0)
    denom = n * (k - 1) - chi2
    if abs(denom) <= 1e-12 * n * (k - 1):
        raise DegenerateStatisticError(
            f"Iman-Davenport denominator vanishes (chi2_F = {chi2} = N(k-1))"
        )
    return chi2, (n - 1) * chi2 / denom


def friedman_iman_davenport(ranks: np.ndarray) -> tuple[float, float]:
    """Friedman chi-square and the Iman-Davenport F statistic for an N x k rank matrix."""
    ranks = np.asarray(ranks, dtype=float)
    if ranks.ndim != 2:
        raise ValueError("rank matrix must be 2-D")
    return friedman_from_mean_ranks(ranks.mean(axis=0), ranks.shape[0])


def nemenyi_critical_difference(k: int, n_blocks: int, q_alpha: float) -> float:
    if k < 2 or n_blocks < 1 or q_alpha <= 0:
        raise ValueError("need k >= 2, N >= 1, q_alpha > 0")
    return q_alpha * math.sqrt(k * (k + 1) / (6.0 * n_blocks))


def nemenyi_pairs(methods: Sequence[str], mean_ranks: Sequence[float], cd: float) -> list[dict]:
    out = []
    for i in range(len(methods)):
        for j in range(i + 1, len(methods)):
            diff = abs(mean_ranks[i] - mean_ranks[j])
            out.append({
                "method_a": methods[i],
                "method_b": methods[j],
                "rank_diff": diff,
                "critical_difference": cd,
                "significant": diff > cd,
            })
    return out


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, int]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise DegenerateStatisticError("paired differences have zero variance")
    return float(d.mean() / (sd / math.sqrt(d.size))), d.size - 1


def tradeoff_curves(results: Iterable[dict]) -> list[dict]:
    """Mean cost and information loss per (method, alpha) across users."""
    acc: dict[tuple[str, float], list[tuple[float, float]]] = defaultdict(list)
    for r in results:
        acc[(r["method"], float(r["alpha"]))].append((float(r["total_cost"]), float(r["total_info_loss"])))
    rows = []
    for (method, alpha), vals in sorted(acc.items()):
        arr = np.array(vals)
        rows.append({
            "alpha": alpha,
            "mean_cost": float(arr[:, 0].mean()),
            "mean_info_loss": float(arr[:, 1].mean()),
            "method": method,
        })
    return rows
