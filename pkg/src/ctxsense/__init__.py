"""Context-aware adaptive sampling of smartphone sensors.

Raw sensor records are compressed into a latent context by a small
autoencoder; a nonnegative Lasso predicts how much that context degrades
when each sensor's value is stale by a given number of intervals; and a
box-constrained optimizer picks per-sensor sampling intervals that trade
sampling cost against predicted information loss.
"""

from .context import AutoencoderConfig, AutoencoderModel, encode, train_autoencoder
from .evaluation import friedman_iman_davenport, nemenyi_critical_difference, paired_t_test, pareto_rank
from .extension import ExtensionConfig, extend
from .info_loss import InfoLossModel, kl_divergence, nonneg_lasso, train_info_loss
from .policy import ObjectiveConfig, brute_force_policy, optimize_policy
from .simulation import TimingMode, run_baseline, run_simulation
from .trace import SensorSpec, Trace, default_layout, generate_synthetic_trace, load_trace

__version__ = "0.1.0"

__all__ = [
    "AutoencoderConfig",
    "AutoencoderModel",
    "ExtensionConfig",
    "InfoLossModel",
    "ObjectiveConfig",
    "SensorSpec",
    "TimingMode",
    "Trace",
    "brute_force_policy",
    "default_layout",
    "encode",
    "extend",
    "friedman_iman_davenport",
    "generate_synthetic_trace",
    "kl_divergence",
    "load_trace",
    "nemenyi_critical_difference",
    "nonneg_lasso",
    "optimize_policy",
    "paired_t_test",
    "pareto_rank",
    "run_baseline",
    "run_simulation",
    "train_autoencoder",
    "train_info_loss",
]
