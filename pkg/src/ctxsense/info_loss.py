"""KL-divergence labels and a nonnegative Lasso predicting information loss.

Regression features for a context ``C`` (length n) and distances ``D``
(length m) are laid out as::

    [C_1..C_n, D_1..D_m, C_1^2..C_n^2, D_1^2..D_m^2, C_1 D_1, C_1 D_2, .., C_n D_m]

with no intercept column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .context import ContextDistances
from .extension import ExtensionConfig

FORMAT_VERSION = "ctxsense-infoloss/1"
FEATURE_LAYOUT = "C,D,C^2,D^2,CxD(i-major)"
KL_EPS = 1e-10
LABEL_FLOOR = 1e-12
PROB_TOL = 1e-6


class ConvergenceError(RuntimeError):
    def __init__(self, sweeps: int, residual: float):
        super().__init__(
            f"coordinate descent did not converge in {sweeps} sweeps (max change {residual:.3g})"
        )
        self.sweeps = sweeps
        self.residual = residual


def _check_prob(p: np.ndarray, name: str) -> None:
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"{name} is not a probability vector")


def _smooth(q: np.ndarray) -> np.ndarray:
    # rows without tiny entries are left bit-exact
    low = np.any(q < KL_EPS, axis=-1, keepdims=True)
    floored = np.maximum(q, KL_EPS)
    return np.where(low, floored / floored.sum(axis=-1, keepdims=True), q)


def kl_divergence(p, q) -> float:
    """KL(P || Q) in bits; Q is floored at 1e-10 and renormalized."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    _check_prob(p, "P")
    _check_prob(q, "Q")
    return float(kl_rows(p, q))


def kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(P || Q) in bits, no validation. Last axis is the distribution."""
    q = _smooth(np.asarray(q, dtype=float))
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(p / q), 0.0)
    out = np.maximum(terms.sum(axis=-1), 0.0)
    return np.where(np.all(p == q, axis=-1), 0.0, out)


def n_features(n: int, m: int) -> int:
    return 2 * n + 2 * m + n * m


def transform_batch(contexts: np.ndarray, distances: np.ndarray) -> np.ndarray:
    c = np.atleast_2d(np.asarray(contexts, dtype=float))
    d = np.atleast_2d(np.asarray(distances, dtype=float))
    if c.shape[0] != d.shape[0]:
        raise ValueError("contexts and distances must have the same number of rows")
    inter = (c[:, :, None] * d[:, None, :]).reshape(c.shape[0], -1)
    return np.hstack([c, d, c**2, d**2, inter])


def transform_features(context, distances) -> np.ndarray:
    return transform_batch(context, distances)[0]


def build_training_set(pairs: ContextDistances, config: ExtensionConfig):
    """Features use the actual record's context; labels are KL(actual || row context)."""
    bs = config.block_size
    contexts, dists = pairs.contexts, pairs.distances
    if len(pairs) % bs:
        raise ValueError(f"{len(pairs)} rows is not a whole number of blocks of {bs}")
    heads = np.arange(0, len(pairs), bs)
    assert not np.any(dists[heads]), "block head is not an actual record"
    actual = np.repeat(contexts[heads], bs, axis=0)
    y = kl_rows(actual, contexts)
    y[y < LABEL_FLOOR] = 0.0
    return transform_batch(actual, dists), y


@dataclass
class LassoFit:
    coef: np.ndarray
    sweeps: int
    objective_history: list[float] = field(default_factory=list)


def nonneg_lasso(
    X: np.ndarray,
    y: np.ndarray,
    lam: float = 1e-3,
    tol: float = 1e-8,
    max_sweeps: int = 10_000,
) -> LassoFit:
    """Cyclic coordinate descent for

        min_b (1/2N)||y - X b||^2 + lam * sum(b)   s.t. b >= 0

    with columns rescaled to unit root-mean-square first; the returned
    coefficients are mapped back to the raw columns. Convergence is judged on
    the largest scaled-coefficient change in a sweep.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (N, p) with N >= 1 matching y")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    N, p = X.shape
    scale = np.sqrt(np.mean(X**2, axis=0))
    active = scale > 0
    Z = np.zeros_like(X)
    Z[:, active] = X[:, active] / scale[active]
    G = Z.T @ Z / N
    c = Z.T @ y / N
    yy = float(y @ y) / (2 * N)

    def objective(beta, Gb):
        return yy - c @ beta + 0.5 * beta @ Gb + lam * beta.sum()

    beta = np.zeros(p)
    Gb = np.zeros(p)
    history = [objective(beta, Gb)]
    idx = np.flatnonzero(active)
    diag = np.diag(G)
    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in idx:
            rho = c[j] - Gb[j] + diag[j] * beta[j]
            new = max(0.0, rho - lam) / diag[j]
            delta = new - beta[j]
            if delta != 0.0:
                Gb += G[:, j] * delta
                beta[j] = new
                max_change = max(max_change, abs(delta))
        history.append(objective(beta, Gb))
        if max_change < tol:
            break
    else:
        raise ConvergenceError(max_sweeps, max_change)
    coef = np.zeros(p)
    coef[active] = beta[active] / scale[active]
    return LassoFit(coef, sweep, history)


@dataclass(frozen=True)
class InfoLossModel:
    coef: np.ndarray
    lam: float
    n: int
    m: int

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float)
        if coef.shape != (n_features(self.n, self.m),):
            raise ValueError("coefficient vector does not match (n, m)")
        if np.any(coef < 0):
            raise ValueError("coefficients must be nonnegative")
        object.__setattr__(self, "coef", coef)

    @property
    def b_c(self):
        return self.coef[: self.n]

    @property
    def b_d(self):
        return self.coef[self.n : self.n + self.m]

    @property
    def b_sc(self):
        return self.coef[self.n + self.m : 2 * self.n + self.m]

    @property
    def b_sd(self):
        return self.coef[2 * self.n + self.m : 2 * self.n + 2 * self.m]

    @property
    def b_cd(self):
        return self.coef[2 * self.n + 2 * self.m :].reshape(self.n, self.m)

    def distance_terms(self, context) -> tuple[float, np.ndarray, np.ndarray]:
        """Split the prediction for fixed C into ``const + sum(lin*D + quad*D^2)``."""
        c = np.asarray(context, dtype=float)
        if c.shape != (self.n,):
            raise ValueError(f"context length {c.shape} != {self.n}")
        const = float(self.b_c @ c + self.b_sc @ c**2)
        lin = self.b_d + c @ self.b_cd
        return const, lin, self.b_sd.copy()

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "layout": FEATURE_LAYOUT,
            "n": self.n,
            "m": self.m,
            "lambda": self.lam,
            "coef": self.coef.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InfoLossModel":
        if data.get("version") != FORMAT_VERSION or data.get("layout") != FEATURE_LAYOUT:
            raise ValueError("unsupported information-loss model format")
        return cls(np.asarray(data["coef"], dtype=float), float(data["lambda"]), data["n"], data["m"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "InfoLossModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_info_loss(
    X: np.ndarray,
    y: np.ndarray,
    n: int,
    m: int,
    lam: float = 1e-3,
    tol: float = 1e-8,
    max_sweeps: int = 10_000,
) -> InfoLossModel:
    if X.shape[1] != n_features(n, m):
        raise ValueError(f"feature width {X.shape[1]} != {n_features(n, m)} for n={n}, m={m}")
    fit = nonneg_lasso(X, y, lam, tol, max_sweeps)
    return InfoLossModel(fit.coef, lam, n, m)


def predict_info_loss(model: InfoLossModel, context, distances) -> float:
    c = np.asarray(context, dtype=float)
    d = np.asarray(distances, dtype=float)
    if c.shape != (model.n,):
        raise ValueError(f"context length {c.shape} != {model.n}")
    if d.shape != (model.m,):
        raise ValueError(f"distance vector length {d.shape} != {model.m}")
    return float(model.coef @ transform_features(c, d))


def predict_batch(model: InfoLossModel, contexts, distances) -> np.ndarray:
    return transform_batch(contexts, distances) @ model.coef
