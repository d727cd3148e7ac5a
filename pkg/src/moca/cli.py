"""Command-line surface: experiments, sweeps, sampling, and diagnostics.

Subcommands: synth-match, train, sample, interpolate, sweep, eval-swd,
diag-svd, config. All flags are long-form; a JSON config file provides the
base values and explicit flags override it. Every command taking --seed is
fully deterministic: CSV bodies are byte-identical across reruns, with
wall-clock timing confined to the JSON sidecar.

Exit codes: 0 success, 2 config error, 3 data/format error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import losses
from .data import Dataset, load_idx, synth_dataset
from .diagnostics import svd_spectrum, swd_metric
from .errors import ConfigError, ContractError, FormatError, MocaError, NumericError
from .losses import ContrastiveParams, KernelSpec
from .nn import AdamState, Mlp, MlpSpec, adam_step, ema_update, forward_encoder
from .prior import generate, interpolate, sample_prior
from .records import CSV_COLUMNS, MetricRecord, write_metrics_csv, write_sidecar
from .rng import (
    Rng,
    STREAM_EVAL_PRIOR,
    STREAM_PRIOR,
    STREAM_PROJECTIONS,
    STREAM_QUEUE_INIT,
    STREAM_SWEEP,
    STREAM_WEIGHT_INIT,
    derive_seed,
)
from .tensor import Tape, Tensor, backward
from .train import (
    KeyQueue,
    MomentumSchedule,
    TrainConfig,
    init_state,
    load_checkpoint,
    save_checkpoint,
    train,
)

TRAIN_DEFAULTS = {
    "kind": "train",
    "data": "mnist",
    "images": "data/mnist/train-images-idx3-ubyte",
    "labels": "data/mnist/train-labels-idx1-ubyte",
    "eval_images": "data/mnist/t10k-images-idx3-ubyte",
    "eval_labels": "data/mnist/t10k-labels-idx1-ubyte",
    "synth_samples": 1000,
    "synth_dim": 100,
    "enc_hidden": [128, 128, 128],
    "dec_hidden": [128, 128],
    "latent_dim": 6,
    "activation": "relu",
    "lambda": 5.0,
    "tau": 0.99,
    "queue_size": 10000,
    "m0": 0.99,
    "epochs": 25,
    "batch_size": 64,
    "lr": 0.001,
    "lr_decay_every": 0,
    "lr_decay_factor": 2.0,
    "seed": 0,
    "eval_every": 5,
    "eval_samples": 1000,
    "eval_nproj": 256,
    "svd_samples": 10000,
    "entropy_samples": 1024,
    "run_id": "",
}

SYNTH_MATCH_DEFAULTS = {
    "kind": "synth-match",
    "method": "contrastive",
    "synth_samples": 1000,
    "synth_dim": 100,
    "enc_hidden": [128],
    "latent_dim": 128,
    "activation": "relu",
    "tau": 0.05,
    "queue_size": 1000,
    "m0": 0.99,
    "epochs": 80,
    "batch_size": 64,
    "lr": 0.001,
    "seed": 0,
    "eval_samples": 1000,
    "eval_nproj": 256,
    "mmd_kernel": "imq",
    "mmd_scale": 0.0,
    "swd_projections": 64,
    "sinkhorn_eps": 0.0,
    "sinkhorn_iters": 50,
    "run_id": "",
}

MATCH_METHODS = ("contrastive", "mmd", "swd", "sinkhorn")
SWEEP_AXES = {"lambda": "lambda", "tau": "tau", "m0": "m0", "K": "queue_size"}


def load_config(kind: str, config_path, overrides: dict) -> dict:
    defaults = TRAIN_DEFAULTS if kind == "train" else SYNTH_MATCH_DEFAULTS
    cfg = json.loads(json.dumps(defaults))  # deep copy
    if config_path:
        try:
            with open(config_path) as f:
                doc = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a flat JSON object")
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "kind" in doc and doc["kind"] != kind:
            raise ConfigError(f"config kind {doc['kind']!r} does not match command {kind!r}")
        cfg.update(doc)
    for key, value in overrides.items():
        if value is None:
            continue
        cfg[key] = value
    cfg["kind"] = kind
    if not cfg["run_id"]:
        digest = hashlib.sha256(
            json.dumps(cfg, sort_keys=True).encode("utf-8")
        ).hexdigest()[:10]
        cfg["run_id"] = f"{kind}-{digest}"
    return cfg


def _train_config(cfg: dict, input_dim: int) -> TrainConfig:
    try:
        encoder = MlpSpec(
            (input_dim, *cfg["enc_hidden"], cfg["latent_dim"]),
            cfg["activation"],
            normalize_output=True,
        )
        decoder = MlpSpec(
            (cfg["latent_dim"], *cfg["dec_hidden"], input_dim),
            cfg["activation"],
            normalize_output=False,
        )
        return TrainConfig(
            data=cfg["data"],
            encoder=encoder,
            decoder=decoder,
            contrastive=ContrastiveParams(
                tau=float(cfg["tau"]), lam=float(cfg["lambda"]), queue_size=int(cfg["queue_size"])
            ),
            m0=float(cfg["m0"]),
            epochs=int(cfg["epochs"]),
            batch_size=int(cfg["batch_size"]),
            lr=float(cfg["lr"]),
            seed=int(cfg["seed"]),
            eval_every=int(cfg["eval_every"]),
            lr_decay_every=int(cfg["lr_decay_every"]),
            lr_decay_factor=float(cfg["lr_decay_factor"]),
            eval_samples=int(cfg["eval_samples"]),
            eval_nproj=int(cfg["eval_nproj"]),
            svd_samples=int(cfg["svd_samples"]),
            entropy_samples=int(cfg["entropy_samples"]),
            run_id=cfg["run_id"],
        )
    except ContractError as e:
        raise ConfigError(str(e)) from e


def load_train_data(cfg: dict) -> tuple[Dataset, Dataset | None]:
    if cfg["data"] == "synth":
        train_ds = synth_dataset(int(cfg["synth_samples"]), int(cfg["synth_dim"]), int(cfg["seed"]))
        eval_ds = synth_dataset(
            int(cfg["synth_samples"]),
            int(cfg["synth_dim"]),
            derive_seed(int(cfg["seed"]), 0x4556414C),
        )
        return train_ds, eval_ds
    if cfg["data"] == "mnist":
        train_ds = load_idx(cfg["images"], cfg["labels"])
        eval_ds = None
        if cfg.get("eval_images") and cfg.get("eval_labels"):
            eval_ds = load_idx(cfg["eval_images"], cfg["eval_labels"])
        return train_ds, eval_ds
    raise ConfigError(f"unknown data source {cfg['data']!r}")


def resolve_out_dir(explicit, run_id: str) -> Path:
    if explicit:
        out = Path(explicit)
    else:
        root = os.environ.get("MOCA_OUT_DIR", "moca-out")
        out = Path(root) / run_id
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# -- synth-match -------------------------------------------------------------

def run_synth_match(cfg: dict) -> list[MetricRecord]:
    """Latent-matching race: train the encoder with one objective only."""
    method = cfg["method"]
    if method not in MATCH_METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {MATCH_METHODS}")
    seed = int(cfg["seed"])
    d = int(cfg["latent_dim"])
    batch = int(cfg["batch_size"])
    epochs = int(cfg["epochs"])
    dataset = synth_dataset(int(cfg["synth_samples"]), int(cfg["synth_dim"]), seed)

    enc_spec = MlpSpec(
        (dataset.n_features, *cfg["enc_hidden"], d), cfg["activation"], normalize_output=True
    )
    enc = Mlp.create(enc_spec, Rng(seed, STREAM_WEIGHT_INIT).spawn(0))
    adam = AdamState.create(enc.params, lr=float(cfg["lr"]))

    per_epoch = dataset.n_samples // batch
    total_steps = max(epochs * per_epoch, 1)
    if method == "contrastive":
        enc_k = enc.frozen_copy()
        queue = KeyQueue.init(int(cfg["queue_size"]), d, Rng(seed, STREAM_QUEUE_INIT))
        schedule = MomentumSchedule(float(cfg["m0"]), total_steps)
    kernel = (
        KernelSpec(cfg["mmd_kernel"], float(cfg["mmd_scale"]))
        if float(cfg["mmd_scale"]) > 0
        else losses.default_kernel(d)
    )
    sink_eps = float(cfg["sinkhorn_eps"]) if float(cfg["sinkhorn_eps"]) > 0 else None

    def eval_row(epoch: int, step: int, mean_loss: float | None, momentum: float | None) -> MetricRecord:
        latents = forward_encoder(enc, Tensor(dataset.features)).data
        n_eval = min(int(cfg["eval_samples"]), latents.shape[0])
        target = sample_prior(d, n_eval, Rng(derive_seed(seed, STREAM_EVAL_PRIOR, epoch)))
        value = swd_metric(
            latents[:n_eval], target, int(cfg["eval_nproj"]),
            Rng(derive_seed(seed, STREAM_PROJECTIONS, epoch)),
        )
        return MetricRecord(
            run_id=cfg["run_id"],
            epoch=epoch,
            step=step,
            loss_total=mean_loss,
            loss_con=mean_loss if method == "contrastive" else None,
            momentum_m=momentum,
            swd_to_prior=value,
        )

    records = [eval_row(0, 0, None, None)]
    step = 0
    from .data import batches

    for epoch in range(1, epochs + 1):
        loss_sum = 0.0
        momentum = None
        for x_batch in batches(dataset, batch, seed, epoch):
            x = Tensor(x_batch)
            with Tape() as tape:
                z = forward_encoder(enc, x)
                if method == "contrastive":
                    z_k = forward_encoder(enc_k, x).detach()
                    loss = losses.moco_contrastive(z, z_k, queue.keys(), float(cfg["tau"]))
                else:
                    target = Tensor(
                        sample_prior(d, batch, Rng(derive_seed(seed, STREAM_PRIOR, step)))
                    )
                    if method == "mmd":
                        loss = losses.mmd(z, target, kernel)
                    elif method == "swd":
                        loss = losses.swd_loss(
                            z, target, int(cfg["swd_projections"]),
                            Rng(derive_seed(seed, STREAM_PROJECTIONS, 0x4C4F5353, step)),
                        )
                    else:
                        loss = losses.sinkhorn_divergence(
                            z, target, sink_eps, int(cfg["sinkhorn_iters"])
                        )
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite {method} loss at step {step}")
            grads = backward(loss, tape)
            named = {name: grads[p] for name, p in enc.params.items()}
            enc.params = adam_step(adam, enc.params, named)
            if method == "contrastive":
                momentum = schedule.at(step if step <= total_steps else total_steps)
                enc_k.params = ema_update(enc_k.params, enc.params, momentum)
                queue.enqueue(z_k.data)
            loss_sum += value
            step += 1
        records.append(eval_row(epoch, step, loss_sum / per_epoch, momentum))
    return records


def cmd_synth_match(args) -> int:
    cfg = load_config("synth-match", args.config, _collect(args, SYNTH_MATCH_DEFAULTS))
    out_dir = resolve_out_dir(args.out, cfg["run_id"])
    started = time.time()
    records = run_synth_match(cfg)
    csv_path = out_dir / "metrics.csv"
    write_metrics_csv(csv_path, records)
    write_sidecar(out_dir / "run.json", {
        "command": "synth-match",
        "config": cfg,
        "started_unix": started,
        "wall_seconds_total": time.time() - started,
        "csv_columns": list(CSV_COLUMNS),
    })
    print(f"wrote {csv_path}")
    return 0


# -- train -------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_config("train", args.config, _collect(args, TRAIN_DEFAULTS))
    train_ds, eval_ds = load_train_data(cfg)
    if args.resume:
        state = load_checkpoint(args.resume)
        run_cfg = state.config
    else:
        run_cfg = _train_config(cfg, train_ds.n_features)
        state = init_state(run_cfg, train_ds.n_samples)
    out_dir = resolve_out_dir(args.out, run_cfg.run_id)
    records: list[MetricRecord] = []
    started = time.time()
    code = 0
    abort_record = None
    try:
        train(state, train_ds, eval_ds, record_sink=records.append)
    except NumericError as e:
        code = 4
        abort_record = e.record
        print(f"numeric abort: {e}", file=sys.stderr)
    ckpt_path = out_dir / "checkpoint.moca"
    save_checkpoint(state, ckpt_path)
    csv_path = out_dir / "metrics.csv"
    write_metrics_csv(csv_path, records)
    write_sidecar(out_dir / "run.json", {
        "command": "train",
        "config": cfg,
        "resumed_from": str(args.resume) if args.resume else None,
        "started_unix": started,
        "wall_seconds_total": time.time() - started,
        "wall_seconds_per_row": [r.wall_seconds for r in records],
        "checkpoint_sha256": _sha256(ckpt_path),
        "csv_columns": list(CSV_COLUMNS),
        "aborted_at_step": abort_record.step if abort_record else None,
    })
    print(f"wrote {csv_path}")
    return code


# -- sample / interpolate ------------------------------------------------------

def _write_raw(path: Path, array: np.ndarray, sidecar: dict) -> None:
    blob = np.ascontiguousarray(array, dtype="<f8").tobytes()
    with open(path, "wb") as f:
        f.write(blob)
    sidecar = dict(sidecar)
    sidecar["shape"] = list(array.shape)
    sidecar["dtype"] = "<f8"
    write_sidecar(path.with_suffix(path.suffix + ".json"), sidecar)


def read_raw(path) -> np.ndarray:
    """Read an array written by cmd_sample/cmd_interpolate (raw + sidecar)."""
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json")) as f:
        sidecar = json.load(f)
    data = np.frombuffer(open(path, "rb").read(), dtype=sidecar["dtype"])
    return data.reshape(sidecar["shape"])


def cmd_sample(args) -> int:
    state = load_checkpoint(args.checkpoint)
    if args.count < 0:
        raise ConfigError("--count must be >= 0")
    samples = generate(state.dec, state.config.latent_dim, args.count, Rng(args.seed, STREAM_PRIOR))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_raw(out, samples, {
        "command": "sample",
        "seed": args.seed,
        "count": args.count,
        "checkpoint_sha256": _sha256(Path(args.checkpoint)),
    })
    print(f"wrote {out}")
    return 0


def cmd_interpolate(args) -> int:
    state = load_checkpoint(args.checkpoint)
    if args.steps < 2:
        raise ConfigError("--steps must be >= 2")
    cfg = dict(TRAIN_DEFAULTS)
    cfg["data"] = state.config.data
    cfg["seed"] = state.config.seed
    for key in ("images", "labels", "eval_images", "eval_labels"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    cfg["synth_samples"] = TRAIN_DEFAULTS["synth_samples"]
    dataset, _ = load_train_data(cfg)
    n = dataset.n_samples
    if not (0 <= args.index_a < n and 0 <= args.index_b < n):
        raise ConfigError(f"indices must lie in [0, {n})")
    alphas = [1.0 - i / (args.steps - 1) for i in range(args.steps)]
    frames = interpolate(
        state.enc_q,
        state.dec,
        dataset.features[args.index_a],
        dataset.features[args.index_b],
        alphas,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_raw(out, np.stack(frames), {
        "command": "interpolate",
        "index_a": args.index_a,
        "index_b": args.index_b,
        "alphas": alphas,
        "checkpoint_sha256": _sha256(Path(args.checkpoint)),
    })
    print(f"wrote {out}")
    return 0


# -- sweep ---------------------------------------------------------------------

def cmd_sweep(args) -> int:
    if args.axis not in SWEEP_AXES:
        raise ConfigError(f"unknown axis {args.axis!r}; choose from {sorted(SWEEP_AXES)}")
    key = SWEEP_AXES[args.axis]
    try:
        values = [float(v) for v in args.values.split(",") if v != ""]
    except ValueError as e:
        raise ConfigError(f"cannot parse --values: {e}") from e
    if not values:
        raise ConfigError("--values must list at least one value")
    base_cfg = load_config("train", args.config, _collect(args, TRAIN_DEFAULTS))
    out_root = resolve_out_dir(args.out, base_cfg["run_id"] + "-sweep")
    summary_rows = []
    for i, value in enumerate(values):
        cfg = dict(base_cfg)
        cfg[key] = int(value) if key == "queue_size" else value
        cfg["seed"] = derive_seed(int(base_cfg["seed"]), STREAM_SWEEP, i) % (2 ** 31)
        cfg["run_id"] = f"{base_cfg['run_id']}-{args.axis}-{_fmt_value(value)}"
        train_ds, eval_ds = load_train_data(cfg)
        run_cfg = _train_config(cfg, train_ds.n_features)
        state = init_state(run_cfg, train_ds.n_samples)
        run_dir = out_root / f"{args.axis}-{_fmt_value(value)}"
        run_dir.mkdir(parents=True, exist_ok=True)
        records = train(state, train_ds, eval_ds)
        write_metrics_csv(run_dir / "metrics.csv", records)
        save_checkpoint(state, run_dir / "checkpoint.moca")
        final = records[-1]
        summary_rows.append({
            "axis": args.axis,
            "value": value,
            "seed": cfg["seed"],
            "final_loss_rec": final.loss_rec,
            "final_swd_samples_vs_test": final.swd_samples_vs_test,
            "final_entropy_est": final.entropy_est,
            "final_svd_dispersion": final.svd_dispersion,
        })
    summary_path = out_root / "summary.csv"
    with open(summary_path, "w") as f:
        cols = list(summary_rows[0])
        f.write(",".join(cols) + "\n")
        for row in summary_rows:
            f.write(",".join("" if row[c] is None else repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")
    write_sidecar(out_root / "sweep.json", {
        "command": "sweep",
        "axis": args.axis,
        "values": values,
        "base_config": base_cfg,
    })
    print(f"wrote {summary_path}")
    return 0


def _fmt_value(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(v)


# -- eval-swd / diag-svd ---------------------------------------------------------

def cmd_eval_swd(args) -> int:
    a = read_raw(args.a)
    b = read_raw(args.b)
    value = swd_metric(
        a.reshape(a.shape[0], -1),
        b.reshape(b.shape[0], -1),
        args.n_proj,
        Rng(args.seed, STREAM_PROJECTIONS),
    )
    print(repr(value))
    if args.out:
        write_sidecar(Path(args.out), {"swd": value, "n_proj": args.n_proj, "seed": args.seed})
    return 0


def cmd_diag_svd(args) -> int:
    state = load_checkpoint(args.checkpoint)
    cfg = dict(TRAIN_DEFAULTS)
    cfg["data"] = state.config.data
    cfg["seed"] = state.config.seed
    for key in ("images", "labels", "eval_images", "eval_labels"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value
    dataset, _ = load_train_data(cfg)
    count = min(args.count, dataset.n_samples)
    latents = forward_encoder(state.enc_q, Tensor(dataset.features[:count])).data
    report = svd_spectrum(latents)
    payload = {
        "singular_values": [float(s) for s in report.singular_values],
        "normalized": [float(s) for s in report.normalized],
        "dispersion": report.dispersion,
        "count": count,
    }
    print(repr(report.dispersion))
    if args.out:
        write_sidecar(Path(args.out), payload)
    return 0


def cmd_config(args) -> int:
    if args.action != "print-defaults":
        raise ConfigError(f"unknown config action {args.action!r}")
    defaults = TRAIN_DEFAULTS if args.kind == "train" else SYNTH_MATCH_DEFAULTS
    print(json.dumps(defaults, indent=2, sort_keys=True))
    return 0


# -- argument plumbing -----------------------------------------------------------

def _collect(args, defaults: dict) -> dict:
    """Pull explicitly passed flag values matching config keys."""
    out = {}
    mapping = {"lambda_": "lambda"}
    for dest, value in vars(args).items():
        key = mapping.get(dest, dest)
        if key in defaults and value is not None:
            out[key] = value
    return out


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _add_shared_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--queue-size", dest="queue_size", type=int, default=None)
    p.add_argument("--m0", type=float, default=None)
    p.add_argument("--latent-dim", dest="latent_dim", type=int, default=None)
    p.add_argument("--enc-hidden", dest="enc_hidden", type=_int_list, default=None)
    p.add_argument("--activation", choices=("relu", "tanh"), default=None)
    p.add_argument("--eval-samples", dest="eval_samples", type=int, default=None)
    p.add_argument("--eval-nproj", dest="eval_nproj", type=int, default=None)
    p.add_argument("--run-id", dest="run_id", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moca", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-match", help="latent-matching race on synthetic data")
    _add_shared_train_flags(p)
    p.add_argument("--method", choices=MATCH_METHODS, default=None)
    p.add_argument("--synth-samples", dest="synth_samples", type=int, default=None)
    p.add_argument("--synth-dim", dest="synth_dim", type=int, default=None)
    p.add_argument("--mmd-kernel", dest="mmd_kernel", choices=("imq", "rbf"), default=None)
    p.add_argument("--mmd-scale", dest="mmd_scale", type=float, default=None)
    p.add_argument("--swd-projections", dest="swd_projections", type=int, default=None)
    p.add_argument("--sinkhorn-eps", dest="sinkhorn_eps", type=float, default=None)
    p.add_argument("--sinkhorn-iters", dest="sinkhorn_iters", type=int, default=None)
    p.set_defaults(func=cmd_synth_match)

    p = sub.add_parser("train", help="full training run")
    _add_shared_train_flags(p)
    p.add_argument("--data", choices=("mnist", "synth"), default=None)
    p.add_argument("--images", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--eval-images", dest="eval_images", default=None)
    p.add_argument("--eval-labels", dest="eval_labels", default=None)
    p.add_argument("--synth-samples", dest="synth_samples", type=int, default=None)
    p.add_argument("--synth-dim", dest="synth_dim", type=int, default=None)
    p.add_argument("--dec-hidden", dest="dec_hidden", type=_int_list, default=None)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--lr-decay-every", dest="lr_decay_every", type=int, default=None)
    p.add_argument("--lr-decay-factor", dest="lr_decay_factor", type=float, default=None)
    p.add_argument("--eval-every", dest="eval_every", type=int, default=None)
    p.add_argument("--svd-samples", dest="svd_samples", type=int, default=None)
    p.add_argument("--entropy-samples", dest="entropy_samples", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="decode prior samples from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("interpolate", help="latent interpolation between two inputs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index-a", dest="index_a", type=int, required=True)
    p.add_argument("--index-b", dest="index_b", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--images", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--eval-images", dest="eval_images", default=None)
    p.add_argument("--eval-labels", dest="eval_labels", default=None)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("sweep", help="one training run per value of one axis")
    _add_shared_train_flags(p)
    p.add_argument("--data", choices=("mnist", "synth"), default=None)
    p.add_argument("--images", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--eval-images", dest="eval_images", default=None)
    p.add_argument("--eval-labels", dest="eval_labels", default=None)
    p.add_argument("--synth-samples", dest="synth_samples", type=int, default=None)
    p.add_argument("--synth-dim", dest="synth_dim", type=int, default=None)
    p.add_argument("--dec-hidden", dest="dec_hidden", type=_int_list, default=None)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--eval-every", dest="eval_every", type=int, default=None)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval-swd", help="sliced-Wasserstein distance between sample files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--n-proj", dest="n_proj", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval_swd)

    p = sub.add_parser("diag-svd", help="latent singular spectrum of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--count", type=int, default=10000)
    p.add_argument("--out", default=None)
    p.add_argument("--images", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--eval-images", dest="eval_images", default=None)
    p.add_argument("--eval-labels", dest="eval_labels", default=None)
    p.set_defaults(func=cmd_diag_svd)

    p = sub.add_parser("config", help="configuration helpers")
    p.add_argument("action", choices=("print-defaults",))
    p.add_argument("--kind", choices=("train", "synth-match"), default="train")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ContractError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (FormatError, FileNotFoundError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric abort: {e}", file=sys.stderr)
        return 4
    except MocaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
