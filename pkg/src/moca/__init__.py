"""Momentum-contrastive autoencoder with hypersphere latent matching.

The package trains MLP autoencoders whose latent marginal is pushed onto
the uniform distribution over the unit hypersphere by a momentum-contrastive
term, alongside MMD / sliced-Wasserstein / Sinkhorn matching baselines, with
the diagnostics needed to compare them. See the CLI (`moca --help`) for the
experiment surface.
"""

from .data import Dataset, batches, load_idx, synth_dataset
from .diagnostics import IsotropyReport, entropy_estimate, svd_spectrum, swd_metric
from .errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    FormatError,
    MocaError,
    NumericError,
    ShapeError,
)
from .losses import (
    ContrastiveParams,
    KernelSpec,
    combined_loss,
    l_neg_mc,
    mmd,
    moco_contrastive,
    mse_reconstruction,
    sinkhorn_divergence,
    swd_loss,
)
from .nn import (
    AdamState,
    Mlp,
    MlpSpec,
    adam_step,
    ema_update,
    forward_decoder,
    forward_encoder,
    load_arrays,
    save_arrays,
)
from .prior import SphereSampler, generate, interpolate, sample_prior
from .records import CSV_COLUMNS, MetricRecord, read_metrics_csv, write_metrics_csv
from .rng import Rng, derive_seed
from .tensor import Tape, Tensor, backward, grad_check
from .train import (
    KeyQueue,
    MomentumSchedule,
    TrainConfig,
    TrainState,
    init_state,
    load_checkpoint,
    moca_step,
    momentum_at,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
