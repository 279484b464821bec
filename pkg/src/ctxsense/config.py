"""Experiment configuration: one JSON document drives every pipeline stage."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .context import AutoencoderConfig
from .extension import ExtensionConfig
from .simulation import TimingMode
from .trace import SensorSpec, default_layout, layout_from_dict, layout_to_dict, load_layout

OUT_ENV = "CTXSENSE_OUT"
DEFAULT_OUT = "ctxsense-out"
USER_SEED_STRIDE = 1000

DEMO_CONFIG: dict = {
    "name": "demo",
    "seed": 0,
    "synthetic": {
        "n_users": 2,
        "n_records": 3000,
        "n_regimes": 4,
        "switch_prob": 0.02,
        "noise_std": 0.3,
    },
    **layout_to_dict(default_layout()),
    "extension": {"max_dist": 8, "k": 20},
    "autoencoder": {"bottleneck_dim": 8, "epochs": 50, "batch_size": 32, "learning_rate": 0.01},
    "lasso": {"lambda": 1e-3, "tol": 1e-8, "max_sweeps": 10000},
    "alphas": [0.1, 1, 5, 10, 20],
    "modes": ["MIN", "AVG", "MAX", "NEVER"],
    "split": 0.7,
    "baseline": {"enabled": True, "alpha_param": 0.5, "quantile": 0.9},
    "evaluation": {"q_alpha": None},
    "parallel": 1,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class UserSource:
    name: str
    seed: int
    path: Path | None = None


@dataclass
class ExperimentConfig:
    raw: dict
    sensors: list[SensorSpec]
    users: list[UserSource]
    synthetic: dict | None
    extension: ExtensionConfig
    autoencoder: AutoencoderConfig
    lasso: dict
    alphas: list[float]
    modes: list[TimingMode]
    split: float
    baseline: dict
    evaluation: dict
    output_dir: Path
    parallel: int
    seed: int

    @property
    def config_hash(self) -> str:
        # execution knobs do not change results
        content = {k: v for k, v in self.raw.items() if k not in ("parallel", "output_dir")}
        blob = json.dumps(content, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def resolve(
    data: dict | None = None,
    *,
    base_dir: Path | None = None,
    out: str | None = None,
    seed: int | None = None,
    parallel: int | None = None,
) -> ExperimentConfig:
    """Fill defaults from the demo config and apply command-line overrides."""
    raw = _merge(DEMO_CONFIG, data or {})
    if data and ("users" in data or "trace" in data):
        raw.pop("synthetic", None)
    if seed is not None:
        raw["seed"] = seed
    if parallel is not None:
        raw["parallel"] = parallel
    base_dir = base_dir or Path.cwd()

    if "layout" in raw:
        sensors = load_layout(base_dir / raw["layout"])
    else:
        sensors = layout_from_dict(raw)
    raw.pop("layout", None)
    raw.update(layout_to_dict(sensors))

    base_seed = int(raw["seed"])
    users: list[UserSource] = []

    def user_seed(i: int) -> int:
        # neighbouring base seeds get disjoint user seeds
        return USER_SEED_STRIDE * base_seed + i

    if "users" in raw or "trace" in raw:
        entries = raw.get("users") or [{"name": "user0", "trace": raw["trace"]}]
        for i, u in enumerate(entries):
            users.append(UserSource(u["name"], user_seed(i), base_dir / u["trace"]))
        synthetic = None
    else:
        synthetic = raw["synthetic"]
        users = [UserSource(f"user{i}", user_seed(i)) for i in range(int(synthetic["n_users"]))]
    if not users:
        raise ConfigError("no users configured")

    alphas = [float(a) for a in raw["alphas"]]
    if not alphas:
        raise ConfigError("alpha list must not be empty")
    if any(a < 0 for a in alphas):
        raise ConfigError("alphas must be nonnegative")
    try:
        modes = [TimingMode(m) for m in raw["modes"]]
    except ValueError as exc:
        raise ConfigError(f"bad mode: {exc}") from None
    split = float(raw["split"])
    if not 0 < split < 1:
        raise ConfigError("split must lie in (0, 1)")

    ext = raw["extension"]
    extension = ExtensionConfig(int(ext["max_dist"]), int(ext["k"]), int(ext.get("seed", base_seed)))
    ae = dict(raw["autoencoder"])
    ae.setdefault("seed", base_seed)
    try:
        autoencoder = AutoencoderConfig(**ae)
    except TypeError as exc:
        raise ConfigError(f"autoencoder config: {exc}") from None

    out_dir = out or raw.get("output_dir") or os.environ.get(OUT_ENV) or DEFAULT_OUT
    parallel_n = int(raw.get("parallel", 1))
    if parallel_n < 1:
        raise ConfigError("parallel must be >= 1")
    return ExperimentConfig(
        raw=raw,
        sensors=sensors,
        users=users,
        synthetic=synthetic,
        extension=extension,
        autoencoder=autoencoder,
        lasso=raw["lasso"],
        alphas=alphas,
        modes=modes,
        split=split,
        baseline=raw["baseline"],
        evaluation=raw.get("evaluation", {}),
        output_dir=Path(out_dir),
        parallel=parallel_n,
        seed=base_seed,
    )


def load_config(path: str | Path | None, **overrides) -> ExperimentConfig:
    if path is None:
        return resolve(None, **overrides)
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return resolve(data, base_dir=path.parent, **overrides)
