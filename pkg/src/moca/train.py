"""The momentum-contrastive training loop: key queue, momentum schedule,
per-step update, and epoch orchestration with periodic diagnostics.

One step follows the published recipe exactly: encode queries, encode keys
with the frozen momentum encoder (no gradient), decode, combine losses,
update query encoder and decoder with Adam, EMA the key encoder, then
rotate the new keys into the queue. Everything is deterministic given the
config seed; per-epoch randomness is re-derived from (seed, epoch) so a
resumed run continues bit-exactly.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .data import Dataset, batches
from .diagnostics import entropy_estimate, svd_spectrum, swd_metric
from .errors import ContractError, NumericError
from .losses import ContrastiveParams
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
from .prior import sample_prior
from .records import MetricRecord
from .rng import (
    Rng,
    STREAM_EVAL_PRIOR,
    STREAM_PRIOR,
    STREAM_PROJECTIONS,
    STREAM_QUEUE_INIT,
    STREAM_WEIGHT_INIT,
    derive_seed,
)
from .tensor import Tape, Tensor, backward

KEY_NORM_TOL = 1e-6


class KeyQueue:
    """FIFO ring of exactly K unit-norm key vectors."""

    def __init__(self, keys: np.ndarray, cursor: int = 0):
        keys = np.array(keys, dtype=np.float64)
        if keys.ndim != 2 or keys.shape[0] < 1:
            raise ContractError(f"queue needs a nonempty K x d matrix, got {keys.shape}")
        norms = np.sqrt((keys * keys).sum(axis=1))
        if np.any(np.abs(norms - 1.0) > KEY_NORM_TOL):
            raise ContractError("queue keys must be unit norm within 1e-6")
        self._keys = keys
        self._cursor = int(cursor) % keys.shape[0]

    @classmethod
    def init(cls, capacity: int, dim: int, rng: Rng) -> "KeyQueue":
        """K random keys drawn uniformly on the sphere."""
        if capacity < 1:
            raise ContractError(f"queue capacity must be >= 1, got {capacity}")
        return cls(sample_prior(dim, capacity, rng))

    @property
    def capacity(self) -> int:
        return self._keys.shape[0]

    @property
    def dim(self) -> int:
        return self._keys.shape[1]

    @property
    def cursor(self) -> int:
        return self._cursor

    def keys(self) -> np.ndarray:
        """Stored keys in ring order (order is irrelevant to the loss)."""
        return self._keys.copy()

    def snapshot(self) -> np.ndarray:
        """Keys ordered oldest to newest."""
        return np.roll(self._keys, -self._cursor, axis=0)

    def enqueue(self, new_keys: np.ndarray) -> None:
        """Overwrite the B oldest entries with the batch of new keys."""
        new_keys = np.asarray(new_keys, dtype=np.float64)
        b = new_keys.shape[0]
        if b > self.capacity:
            raise ContractError(f"cannot enqueue {b} keys into a queue of {self.capacity}")
        norms = np.sqrt((new_keys * new_keys).sum(axis=1))
        if np.any(np.abs(norms - 1.0) > KEY_NORM_TOL):
            raise ContractError("enqueued keys must be unit norm within 1e-6")
        for row in new_keys:
            self._keys[self._cursor] = row
            self._cursor = (self._cursor + 1) % self.capacity


@dataclass(frozen=True)
class MomentumSchedule:
    """Cosine ramp from m0 at step 0 to exactly 1 at the final step."""

    m0: float
    total_steps: int

    def __post_init__(self):
        if not 0.0 <= self.m0 < 1.0:
            raise ContractError(f"m0 must lie in [0, 1), got {self.m0}")
        if self.total_steps < 1:
            raise ContractError(f"total_steps must be >= 1, got {self.total_steps}")

    def at(self, t: int) -> float:
        if not (0 <= t <= self.total_steps):
            raise ContractError(f"step {t} outside [0, {self.total_steps}]")
        return 1.0 - (1.0 - self.m0) * (math.cos(math.pi * t / self.total_steps) + 1.0) / 2.0


def momentum_at(schedule: MomentumSchedule, t: int) -> float:
    return schedule.at(t)


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs, hashable and JSON-translatable."""

    data: str
    encoder: MlpSpec
    decoder: MlpSpec
    contrastive: ContrastiveParams
    m0: float
    epochs: int
    batch_size: int
    lr: float
    seed: int
    eval_every: int = 5
    lr_decay_every: int = 0
    lr_decay_factor: float = 2.0
    eval_samples: int = 1000
    eval_nproj: int = 256
    svd_samples: int = 10000
    entropy_samples: int = 1024
    run_id: str = "run"

    def __post_init__(self):
        if not self.encoder.normalize_output:
            raise ContractError("encoder must normalize its output")
        if self.decoder.normalize_output:
            raise ContractError("decoder must not normalize its output")
        latent = self.encoder.out_dim
        if self.decoder.in_dim != latent:
            raise ContractError(
                f"decoder input dim {self.decoder.in_dim} != latent dim {latent}"
            )
        if self.encoder.in_dim != self.decoder.out_dim:
            raise ContractError("encoder input dim must equal decoder output dim")
        if self.batch_size < 1 or self.epochs < 0:
            raise ContractError("batch_size must be >= 1 and epochs >= 0")
        if self.batch_size > self.contrastive.queue_size:
            raise ContractError(
                f"batch size {self.batch_size} exceeds queue size {self.contrastive.queue_size}"
            )
        if self.eval_every < 1:
            raise ContractError("eval_every must be >= 1")

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim


@dataclass
class TrainState:
    config: TrainConfig
    enc_q: Mlp
    enc_k: Mlp
    dec: Mlp
    queue: KeyQueue
    adam: AdamState
    schedule: MomentumSchedule
    t: int = 0
    epoch: int = 0
    base_lr: float = field(default=0.0)

    def merged_params(self) -> dict[str, Tensor]:
        merged = {f"enc_q/{k}": v for k, v in self.enc_q.params.items()}
        merged.update({f"dec/{k}": v for k, v in self.dec.params.items()})
        return merged

    def apply_merged(self, merged: dict[str, Tensor]) -> None:
        self.enc_q.params = {
            k[len("enc_q/"):]: v for k, v in merged.items() if k.startswith("enc_q/")
        }
        self.dec.params = {
            k[len("dec/"):]: v for k, v in merged.items() if k.startswith("dec/")
        }


def steps_per_epoch(n_samples: int, batch_size: int) -> int:
    return n_samples // batch_size


def init_state(config: TrainConfig, n_samples: int) -> TrainState:
    """Fresh models, queue, optimizer, and schedule for a dataset of size N."""
    per_epoch = steps_per_epoch(n_samples, config.batch_size)
    if config.epochs > 0 and per_epoch < 1:
        raise ContractError("dataset too small for even one full batch")
    total = max(config.epochs * per_epoch, 1)
    init_rng = Rng(config.seed, STREAM_WEIGHT_INIT)
    enc_q = Mlp.create(config.encoder, init_rng.spawn(0))
    dec = Mlp.create(config.decoder, init_rng.spawn(1))
    enc_k = enc_q.frozen_copy()
    queue = KeyQueue.init(
        config.contrastive.queue_size, config.latent_dim, Rng(config.seed, STREAM_QUEUE_INIT)
    )
    state = TrainState(
        config=config,
        enc_q=enc_q,
        enc_k=enc_k,
        dec=dec,
        queue=queue,
        adam=AdamState.create(
            {**{f"enc_q/{k}": v for k, v in enc_q.params.items()},
             **{f"dec/{k}": v for k, v in dec.params.items()}},
            lr=config.lr,
        ),
        schedule=MomentumSchedule(config.m0, total),
        base_lr=config.lr,
    )
    return state


def moca_step(state: TrainState, x_batch: np.ndarray) -> MetricRecord:
    """One full training step; returns its loss record.

    Raises NumericError (with the diagnostic record attached) if the loss
    goes non-finite.
    """
    cfg = state.config
    if state.t >= state.schedule.total_steps:
        raise ContractError(f"step {state.t} beyond schedule horizon {state.schedule.total_steps}")
    x = Tensor(np.asarray(x_batch, dtype=np.float64))
    with Tape() as tape:
        z_q = forward_encoder(state.enc_q, x)
        z_k = forward_encoder(state.enc_k, x).detach()  # no gradient through keys
        x_rec = forward_decoder(state.dec, z_q)
        rec = losses.mse_reconstruction(x, x_rec)
        con = losses.moco_contrastive(z_q, z_k, state.queue.keys(), cfg.contrastive.tau)
        total = rec + cfg.contrastive.lam * con

    m = state.schedule.at(state.t)
    record = MetricRecord(
        run_id=cfg.run_id,
        epoch=state.epoch,
        step=state.t,
        loss_total=total.item(),
        loss_rec=rec.item(),
        loss_con=con.item(),
        momentum_m=m,
    )
    if not (math.isfinite(record.loss_total) and math.isfinite(record.loss_rec) and math.isfinite(record.loss_con)):
        raise NumericError(f"non-finite loss at step {state.t}", record=record)

    merged = state.merged_params()
    grads = backward(total, tape)
    named_grads = {name: grads[p] for name, p in merged.items()}
    state.apply_merged(adam_step(state.adam, merged, named_grads))
    state.enc_k.params = ema_update(state.enc_k.params, state.enc_q.params, m)
    state.queue.enqueue(z_k.data)
    state.t += 1
    return record


def _epoch_diagnostics(
    state: TrainState, record: MetricRecord, dataset: Dataset, eval_set: Dataset | None
) -> None:
    """Fill the optional metric fields on an epoch row, reproducibly.

    Latent-side metrics (distance to the prior, singular spectrum, entropy)
    probe the training data; the sample-quality metric compares generated
    samples against the held-out set when one is configured. Probe indices
    and all randomness derive from the run seed, so every eval is a pure
    function of (seed, epoch).
    """
    cfg = state.config
    seed = cfg.seed
    epoch = record.epoch
    d = cfg.latent_dim

    probe_rng = Rng(derive_seed(seed, STREAM_EVAL_PRIOR, 0x50524F42))
    n_svd = min(cfg.svd_samples, dataset.n_samples)
    probe_idx = probe_rng.permutation(dataset.n_samples)[:n_svd]
    latents = forward_encoder(state.enc_q, Tensor(dataset.features[probe_idx])).data

    n_eval = min(cfg.eval_samples, latents.shape[0])
    prior_rng = Rng(derive_seed(seed, STREAM_EVAL_PRIOR, epoch))
    proj_rng = Rng(derive_seed(seed, STREAM_PROJECTIONS, epoch))
    record.swd_to_prior = swd_metric(
        latents[:n_eval], sample_prior(d, n_eval, prior_rng), cfg.eval_nproj, proj_rng
    )

    if latents.shape[0] >= d:
        record.svd_dispersion = svd_spectrum(latents).dispersion
    n_ent = min(cfg.entropy_samples, latents.shape[0])
    record.entropy_est = entropy_estimate(latents[:n_ent], cfg.contrastive.tau)

    if eval_set is not None:
        n_gen = min(cfg.eval_samples, eval_set.n_samples)
        held_out = eval_set.features[:n_gen]
        gen_rng = Rng(derive_seed(seed, STREAM_PRIOR, epoch))
        generated = forward_decoder(state.dec, Tensor(sample_prior(d, n_gen, gen_rng))).data
        proj_rng2 = Rng(derive_seed(seed, STREAM_PROJECTIONS, epoch, 1))
        record.swd_samples_vs_test = swd_metric(generated, held_out, cfg.eval_nproj, proj_rng2)


def train(
    state: TrainState,
    dataset: Dataset,
    eval_set: Dataset | None = None,
    record_sink=None,
) -> list[MetricRecord]:
    """Run the remaining epochs of `state`; returns per-epoch records.

    Emits an epoch-0 diagnostics row when starting fresh, then one row per
    epoch with loss means and (at the eval cadence and final epoch) the
    diagnostic metrics. `record_sink` receives each row as it is produced.
    """
    cfg = state.config
    per_epoch = steps_per_epoch(dataset.n_samples, cfg.batch_size)
    if cfg.epochs == 0:
        return []
    if per_epoch < 1:
        raise ContractError("dataset too small for even one full batch")
    expected_total = cfg.epochs * per_epoch
    if state.schedule.total_steps != expected_total:
        raise ContractError(
            f"schedule horizon {state.schedule.total_steps} != epochs*steps {expected_total}"
        )

    out: list[MetricRecord] = []

    def emit(row: MetricRecord) -> None:
        out.append(row)
        if record_sink is not None:
            record_sink(row)

    if state.epoch == 0 and state.t == 0:
        t0 = time.perf_counter()
        zero = MetricRecord(run_id=cfg.run_id, epoch=0, step=0, momentum_m=state.schedule.at(0))
        _epoch_diagnostics(state, zero, dataset, eval_set)
        zero.wall_seconds = time.perf_counter() - t0
        emit(zero)

    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        t0 = time.perf_counter()
        if cfg.lr_decay_every > 0:
            state.adam.lr = state.base_lr / (
                cfg.lr_decay_factor ** ((epoch - 1) // cfg.lr_decay_every)
            )
        state.epoch = epoch
        sums = np.zeros(3)
        last_m = None
        for x_batch in batches(dataset, cfg.batch_size, cfg.seed, epoch):
            step_rec = moca_step(state, x_batch)
            sums += (step_rec.loss_total, step_rec.loss_rec, step_rec.loss_con)
            last_m = step_rec.momentum_m
        row = MetricRecord(
            run_id=cfg.run_id,
            epoch=epoch,
            step=state.t,
            loss_total=sums[0] / per_epoch,
            loss_rec=sums[1] / per_epoch,
            loss_con=sums[2] / per_epoch,
            momentum_m=last_m,
        )
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            _epoch_diagnostics(state, row, dataset, eval_set)
        row.wall_seconds = time.perf_counter() - t0
        emit(row)
    return out


# -- checkpoint assembly -----------------------------------------------------

def config_to_json(config: TrainConfig) -> str:
    payload = {
        "data": config.data,
        "enc_dims": list(config.encoder.layer_dims),
        "dec_dims": list(config.decoder.layer_dims),
        "activation": config.encoder.activation,
        "lambda": config.contrastive.lam,
        "tau": config.contrastive.tau,
        "queue_size": config.contrastive.queue_size,
        "m0": config.m0,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "lr": config.lr,
        "seed": config.seed,
        "eval_every": config.eval_every,
        "lr_decay_every": config.lr_decay_every,
        "lr_decay_factor": config.lr_decay_factor,
        "eval_samples": config.eval_samples,
        "eval_nproj": config.eval_nproj,
        "svd_samples": config.svd_samples,
        "entropy_samples": config.entropy_samples,
        "run_id": config.run_id,
    }
    return json.dumps(payload, sort_keys=True)


def config_from_json(blob: str) -> TrainConfig:
    p = json.loads(blob)
    return TrainConfig(
        data=p["data"],
        encoder=MlpSpec(tuple(p["enc_dims"]), p["activation"], normalize_output=True),
        decoder=MlpSpec(tuple(p["dec_dims"]), p["activation"], normalize_output=False),
        contrastive=ContrastiveParams(tau=p["tau"], lam=p["lambda"], queue_size=p["queue_size"]),
        m0=p["m0"],
        epochs=p["epochs"],
        batch_size=p["batch_size"],
        lr=p["lr"],
        seed=p["seed"],
        eval_every=p["eval_every"],
        lr_decay_every=p["lr_decay_every"],
        lr_decay_factor=p["lr_decay_factor"],
        eval_samples=p["eval_samples"],
        eval_nproj=p["eval_nproj"],
        svd_samples=p["svd_samples"],
        entropy_samples=p["entropy_samples"],
        run_id=p["run_id"],
    )


def save_checkpoint(state: TrainState, path) -> None:
    """Serialize the full training state into one container file."""
    entries: dict[str, np.ndarray] = {}
    for prefix, model in (("enc_q", state.enc_q), ("enc_k", state.enc_k), ("dec", state.dec)):
        for name, p in model.params.items():
            entries[f"{prefix}/{name}"] = p.data
    for name, m in state.adam.m.items():
        entries[f"adam/m/{name}"] = m
    for name, v in state.adam.v.items():
        entries[f"adam/v/{name}"] = v
    entries["adam/scalars"] = np.array(
        [state.adam.lr, state.adam.beta1, state.adam.beta2, state.adam.eps, float(state.adam.t)]
    )
    entries["queue/keys"] = state.queue.keys()
    entries["queue/cursor"] = np.array([float(state.queue.cursor)])
    entries["train/counters"] = np.array(
        [float(state.t), float(state.epoch), float(state.schedule.total_steps), state.base_lr]
    )
    config_bytes = config_to_json(state.config).encode("utf-8")
    entries["meta/config_utf8"] = np.frombuffer(config_bytes, dtype=np.uint8).astype(np.float64)
    save_arrays(path, entries)


def load_checkpoint(path) -> TrainState:
    entries = load_arrays(path)
    config = config_from_json(
        bytes(entries["meta/config_utf8"].astype(np.uint8)).decode("utf-8")
    )

    def model_params(prefix: str, spec: MlpSpec, requires_grad: bool) -> Mlp:
        params = {
            name[len(prefix) + 1:]: Tensor(arr, requires_grad=requires_grad)
            for name, arr in entries.items()
            if name.startswith(prefix + "/") and name.count("/") == 1
        }
        return Mlp(spec, params)

    enc_q = model_params("enc_q", config.encoder, True)
    enc_k = model_params("enc_k", config.encoder, False)
    dec = model_params("dec", config.decoder, True)
    lr, b1, b2, eps, t_adam = entries["adam/scalars"]
    adam = AdamState(lr=float(lr), beta1=float(b1), beta2=float(b2), eps=float(eps), t=int(t_adam))
    for name, arr in entries.items():
        if name.startswith("adam/m/"):
            adam.m[name[len("adam/m/"):]] = arr
        elif name.startswith("adam/v/"):
            adam.v[name[len("adam/v/"):]] = arr
    t, epoch, total_steps, base_lr = entries["train/counters"]
    state = TrainState(
        config=config,
        enc_q=enc_q,
        enc_k=enc_k,
        dec=dec,
        queue=KeyQueue(entries["queue/keys"], cursor=int(entries["queue/cursor"][0])),
        adam=adam,
        schedule=MomentumSchedule(config.m0, int(total_steps)),
        t=int(t),
        epoch=int(epoch),
        base_lr=float(base_lr),
    )
    return state
