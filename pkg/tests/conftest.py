"""Shared fixtures: a small layout and one trained model stack reused across modules."""

from __future__ import annotations

import contextlib
import time

import numpy as np
import pytest

from ctxsense.context import AutoencoderConfig, detect_contexts, train_autoencoder
from ctxsense.extension import ExtensionConfig, extend
from ctxsense.info_loss import build_training_set, train_info_loss
from ctxsense.trace import SensorSpec, default_layout, fit_standardization, generate_synthetic_trace


@pytest.fixture
def two_sensor_layout():
    return [SensorSpec("a", ("x", "y"), 1.0), SensorSpec("b", ("z",), 0.0)]


@pytest.fixture(scope="session")
def trained_stack():
    """Synthetic user, autoencoder and loss model at demo settings (maxDist 8)."""
    layout = default_layout()
    trace = generate_synthetic_trace(1500, layout, n_regimes=4, switch_prob=0.02, noise_std=0.3, seed=3)
    train, test = trace.split(0.7)
    stats = fit_standardization(train)
    model = train_autoencoder(stats.transform(train.values), AutoencoderConfig(epochs=20, seed=3), stats)
    ext_cfg = ExtensionConfig(max_dist=8, k=20, seed=3)
    X, y = build_training_set(detect_contexts(model, extend(train, ext_cfg)), ext_cfg)
    loss_model = train_info_loss(X, y, model.bottleneck_dim, len(layout))
    return {
        "layout": layout,
        "train": train,
        "test": test,
        "context_model": model,
        "loss_model": loss_model,
        "costs": [s.cost for s in layout],
        "max_dist": 8,
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance reporting ----------------------------------------------------

_ACCEPTANCE_KEY = pytest.StashKey[list]()


class _Criterion:
    def __init__(self, number: int, title: str, limit: float):
        self.number, self.title, self.limit = number, title, limit
        self.ok = False
        self.detail = ""
        self.elapsed = 0.0

    def line(self) -> str:
        status = "PASS" if self.ok and self.elapsed < self.limit else "FAIL"
        timing = f"{self.elapsed:.2f}s < {self.limit:g}s" if self.elapsed < self.limit else (
            f"{self.elapsed:.2f}s exceeds {self.limit:g}s"
        )
        return f"[{status}] criterion {self.number}: {self.title}: {self.detail} ({timing})"


@pytest.fixture
def acceptance(request):
    """Context manager that times one criterion and records its PASS/FAIL line."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    @contextlib.contextmanager
    def run(number: int, title: str, limit: float):
        crit = _Criterion(number, title, limit)
        start = time.perf_counter()
        try:
            yield crit
        except Exception as exc:
            crit.ok = False
            crit.detail = f"{crit.detail} error: {type(exc).__name__}: {exc}".strip()
            raise
        finally:
            crit.elapsed = time.perf_counter() - start
            lines.append((number, crit.line()))
            print(crit.line())
        assert crit.ok, crit.line()
        assert crit.elapsed < limit, crit.line()

    return run


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
