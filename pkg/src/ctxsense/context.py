"""Personal autoencoder whose softmax-normalized bottleneck is the latent context.

Architecture: ``d -> hidden (tanh) -> n (linear) -> hidden (tanh) -> d (linear)``,
trained with plain mini-batch gradient descent on the mean squared
reconstruction error. Gradients are written out by hand.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .extension import ExtendedDataset
from .trace import StandardizationStats

FORMAT_VERSION = "ctxsense-autoencoder/1"
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"autoencoder training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class AutoencoderConfig:
    bottleneck_dim: int = 8
    hidden_dim: int | None = None
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.01
    seed: int = 0
    activation: str = "tanh"

    def resolve_hidden(self, input_dim: int) -> int:
        hidden = self.hidden_dim if self.hidden_dim is not None else math.ceil(input_dim / 2)
        if not 1 <= self.bottleneck_dim <= hidden <= input_dim:
            raise ValueError(
                f"need 1 <= bottleneck ({self.bottleneck_dim}) <= hidden ({hidden})"
                f" <= input ({input_dim})"
            )
        return hidden


@dataclass
class AutoencoderModel:
    params: dict[str, np.ndarray]
    config: AutoencoderConfig
    stats: StandardizationStats | None = None
    history: list[float] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def bottleneck_dim(self) -> int:
        return self.params["W2"].shape[1]


def _act(x: np.ndarray, kind: str) -> np.ndarray:
    return np.tanh(x) if kind == "tanh" else x


def _act_grad(h: np.ndarray, kind: str) -> np.ndarray:
    # derivative expressed through the activation output
    return 1.0 - h * h if kind == "tanh" else np.ones_like(h)


def init_params(input_dim: int, config: AutoencoderConfig) -> dict[str, np.ndarray]:
    hidden = config.resolve_hidden(input_dim)
    n = config.bottleneck_dim
    rng = np.random.default_rng(config.seed)
    shapes = [(input_dim, hidden), (hidden, n), (n, hidden), (hidden, input_dim)]
    params = {}
    for i, (fan_in, fan_out) in enumerate(shapes, start=1):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params[f"W{i}"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"b{i}"] = np.zeros(fan_out)
    return params


def _forward(params, x, kind):
    h1 = _act(x @ params["W1"] + params["b1"], kind)
    z = h1 @ params["W2"] + params["b2"]
    h3 = _act(z @ params["W3"] + params["b3"], kind)
    y = h3 @ params["W4"] + params["b4"]
    return h1, z, h3, y


def reconstruction_loss(params: dict[str, np.ndarray], x: np.ndarray, kind: str = "tanh") -> float:
    y = _forward(params, x, kind)[3]
    return float(np.mean((y - x) ** 2))


def loss_and_grads(params: dict[str, np.ndarray], x: np.ndarray, kind: str = "tanh"):
    """Mean squared reconstruction error over all entries and its gradients."""
    h1, z, h3, y = _forward(params, x, kind)
    diff = y - x
    loss = float(np.mean(diff**2))
    dy = 2.0 * diff / diff.size
    g = {"W4": h3.T @ dy, "b4": dy.sum(axis=0)}
    da3 = (dy @ params["W4"].T) * _act_grad(h3, kind)
    g["W3"] = z.T @ da3
    g["b3"] = da3.sum(axis=0)
    dz = da3 @ params["W3"].T
    g["W2"] = h1.T @ dz
    g["b2"] = dz.sum(axis=0)
    da1 = (dz @ params["W2"].T) * _act_grad(h1, kind)
    g["W1"] = x.T @ da1
    g["b1"] = da1.sum(axis=0)
    return loss, g


def train_autoencoder(
    records: np.ndarray,
    config: AutoencoderConfig = AutoencoderConfig(),
    stats: StandardizationStats | None = None,
) -> AutoencoderModel:
    """Fit on standardized records; ``stats`` is kept so :func:`encode` accepts raw values."""
    x = np.asarray(records, dtype=float)
    if x.ndim != 2:
        raise ValueError("records must be a 2-D array")
    if x.shape[0] < config.batch_size:
        raise ValueError(f"need at least batch_size={config.batch_size} records, got {x.shape[0]}")
    params = init_params(x.shape[1], config)
    kind = config.activation
    rng = np.random.default_rng([config.seed, 1])
    history = [reconstruction_loss(params, x, kind)]
    # overflow is reported as TrainingDivergedError instead
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(x.shape[0])
            for start in range(0, x.shape[0], config.batch_size):
                batch = x[order[start : start + config.batch_size]]
                loss, grads = loss_and_grads(params, batch, kind)
                if not math.isfinite(loss):
                    raise TrainingDivergedError(epoch, loss)
                for name in PARAM_NAMES:
                    params[name] -= config.learning_rate * grads[name]
            epoch_loss = reconstruction_loss(params, x, kind)
            if not math.isfinite(epoch_loss):
                raise TrainingDivergedError(epoch, epoch_loss)
            history.append(epoch_loss)
    return AutoencoderModel(params, config, stats, history)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def bottleneck(model: AutoencoderModel, values: np.ndarray) -> np.ndarray:
    """Bottleneck pre-normalization activations for raw (or already standardized) values."""
    x = np.asarray(values, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"record width {x.shape[-1]} != model input dim {model.input_dim}")
    if model.stats is not None:
        x = model.stats.transform(x)
    p, kind = model.params, model.config.activation
    h1 = _act(x @ p["W1"] + p["b1"], kind)
    return h1 @ p["W2"] + p["b2"]


def encode(model: AutoencoderModel, values: np.ndarray) -> np.ndarray:
    """Latent context(s): softmax of the bottleneck. Works on one record or a batch."""
    return softmax(bottleneck(model, values))


@dataclass(frozen=True)
class ContextDistances:
    contexts: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return self.contexts.shape[0]

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return iter(zip(self.contexts, self.distances))


def detect_contexts(model: AutoencoderModel, extended: ExtendedDataset) -> ContextDistances:
    return ContextDistances(encode(model, extended.values), extended.distances.copy())


# --- persistence -------------------------------------------------------------


def model_to_dict(model: AutoencoderModel) -> dict:
    return {
        "version": FORMAT_VERSION,
        "config": asdict(model.config),
        "stats": model.stats.to_dict() if model.stats is not None else None,
        "params": {k: model.params[k].tolist() for k in PARAM_NAMES},
        "history": model.history,
    }


def model_from_dict(data: dict) -> AutoencoderModel:
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported autoencoder format {data.get('version')!r}")
    stats = StandardizationStats.from_dict(data["stats"]) if data["stats"] else None
    params = {k: np.asarray(data["params"][k], dtype=float) for k in PARAM_NAMES}
    return AutoencoderModel(params, AutoencoderConfig(**data["config"]), stats, list(data["history"]))


def save_model(model: AutoencoderModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path: str | Path) -> AutoencoderModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
