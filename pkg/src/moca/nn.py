"""MLP encoder/decoder networks, Adam, EMA updates, and checkpoint files.

Parameters live in flat name->Tensor maps (`layer{i}.weight`,
`layer{i}.bias`). Weights use Glorot-uniform initialization drawn from the
package RNG, so two models built from the same seed are bit-identical;
biases start at zero. Encoders normalize their output rows onto the unit
sphere; decoders do not.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, FormatError, ShapeError
from .rng import Rng
from .tensor import Tensor

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths input->hidden...->output plus activation placement."""

    layer_dims: tuple[int, ...]
    activation: str = "relu"
    normalize_output: bool = False

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise ContractError(f"layer_dims needs >= 2 positive extents, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1


def init_params(spec: MlpSpec, rng: Rng, requires_grad: bool = True) -> dict[str, Tensor]:
    """Glorot-uniform weights, zero biases; deterministic in the rng stream."""
    params: dict[str, Tensor] = {}
    for i in range(spec.n_layers):
        fan_in, fan_out = spec.layer_dims[i], spec.layer_dims[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = (rng.uniform_array((fan_in, fan_out)) * 2.0 - 1.0) * bound
        params[f"layer{i}.weight"] = Tensor(w, requires_grad=requires_grad)
        params[f"layer{i}.bias"] = Tensor(np.zeros((1, fan_out)), requires_grad=requires_grad)
    return params


class Mlp:
    """An MlpSpec bound to one ParamSet; callable on (B, in_dim) tensors."""

    def __init__(self, spec: MlpSpec, params: dict[str, Tensor]):
        expected = {f"layer{i}.{kind}" for i in range(spec.n_layers) for kind in ("weight", "bias")}
        if set(params) != expected:
            raise ContractError(f"param names {sorted(params)} do not match spec")
        for i in range(spec.n_layers):
            want = (spec.layer_dims[i], spec.layer_dims[i + 1])
            if params[f"layer{i}.weight"].shape != want:
                raise ShapeError(f"layer{i}.weight must have shape {want}")
            if params[f"layer{i}.bias"].shape != (1, want[1]):
                raise ShapeError(f"layer{i}.bias must have shape (1, {want[1]})")
        self.spec = spec
        self.params = params

    @classmethod
    def create(cls, spec: MlpSpec, rng: Rng, requires_grad: bool = True) -> "Mlp":
        return cls(spec, init_params(spec, rng, requires_grad))

    def frozen_copy(self) -> "Mlp":
        """Same weights, detached from gradients (key-encoder role)."""
        return Mlp(self.spec, {k: v.detach() for k, v in self.params.items()})

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.spec.in_dim:
            raise ShapeError(
                f"input shape {x.shape} incompatible with layer_dims {self.spec.layer_dims}"
            )
        act = T.relu if self.spec.activation == "relu" else T.tanh
        h = x
        for i in range(self.spec.n_layers):
            h = T.matmul(h, self.params[f"layer{i}.weight"]) + self.params[f"layer{i}.bias"]
            if i < self.spec.n_layers - 1:
                h = act(h)
        if self.spec.normalize_output:
            h = T.l2_normalize(h)
        return h


def forward_encoder(model: Mlp, x: Tensor) -> Tensor:
    """Encode a batch; rows of the result are unit-norm latents."""
    if not model.spec.normalize_output:
        raise ContractError("encoder spec must set normalize_output=True")
    return model(x)


def forward_decoder(model: Mlp, z: Tensor) -> Tensor:
    """Decode a batch of latents back to input space (no normalization)."""
    if model.spec.normalize_output:
        raise ContractError("decoder spec must not normalize output")
    return model(z)


@dataclass
class AdamState:
    """Adam moments for one named parameter set."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, params: dict[str, Tensor], lr: float, **kw) -> "AdamState":
        state = cls(lr=lr, **kw)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(
    state: AdamState, params: dict[str, Tensor], grads: dict[str, np.ndarray]
) -> dict[str, Tensor]:
    """One bias-corrected Adam update; returns the new parameter map.

    The moment buffers and step counter in `state` are advanced in place;
    gradient names must match the parameter names exactly.
    """
    if set(grads) != set(params):
        missing = set(params) - set(grads)
        extra = set(grads) - set(params)
        raise ContractError(f"gradient names mismatch (missing={sorted(missing)}, extra={sorted(extra)})")
    if set(state.m) != set(params):
        raise ContractError("Adam state does not cover these parameters")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    new_params: dict[str, Tensor] = {}
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        step = np.sqrt(v / bc2)
        step += state.eps
        np.divide(m / bc1, step, out=step)
        step *= state.lr
        new_params[name] = Tensor(p.data - step, requires_grad=p.requires_grad)
    return new_params


def ema_update(
    key_params: dict[str, Tensor], query_params: dict[str, Tensor], m: float
) -> dict[str, Tensor]:
    """theta_k <- m * theta_k + (1 - m) * theta_q, elementwise."""
    if set(key_params) != set(query_params):
        raise ContractError("EMA parameter sets are not name-aligned")
    out: dict[str, Tensor] = {}
    for name, k in key_params.items():
        q = query_params[name]
        if k.shape != q.shape:
            raise ShapeError(f"EMA shape mismatch for {name}: {k.shape} vs {q.shape}")
        out[name] = Tensor(m * k.data + (1.0 - m) * q.data, requires_grad=False)
    return out


# -- checkpoint container ---------------------------------------------------
#
# Layout (all integers little-endian):
#   magic "MOCA" | u32 version=1 | u32 entry count | entries... | u32 crc32
# Entry: u16 name length | UTF-8 name | u8 rank | rank x u64 dims |
#        row-major float64 payload.
# The CRC covers the entries region (everything between the header and the
# trailing checksum).

CHECKPOINT_MAGIC = b"MOCA"
CHECKPOINT_VERSION = 1


def save_arrays(path, entries: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays in the checkpoint container format."""
    body = bytearray()
    for name, arr in entries.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        name_bytes = name.encode("utf-8")
        if len(name_bytes) > 0xFFFF:
            raise ContractError(f"entry name too long: {name!r}")
        if arr.ndim > 0xFF:
            raise ContractError(f"entry rank too large: {arr.ndim}")
        body += len(name_bytes).to_bytes(2, "little")
        body += name_bytes
        body += arr.ndim.to_bytes(1, "little")
        for dim in arr.shape:
            body += int(dim).to_bytes(8, "little")
        body += arr.astype("<f8").tobytes()
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += CHECKPOINT_VERSION.to_bytes(4, "little")
    blob += len(entries).to_bytes(4, "little")
    blob += body
    blob += (zlib.crc32(bytes(body)) & 0xFFFFFFFF).to_bytes(4, "little")
    with open(path, "wb") as f:
        f.write(bytes(blob))


def load_arrays(path) -> dict[str, np.ndarray]:
    """Read a checkpoint container; FormatError carries the failing offset."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12:
        raise FormatError("file shorter than the 12-byte header", offset=len(blob))
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}", offset=0)
    version = int.from_bytes(blob[4:8], "little")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    count = int.from_bytes(blob[8:12], "little")
    if len(blob) < 16:
        raise FormatError("missing checksum trailer", offset=len(blob))
    body = blob[12:-4]
    stored_crc = int.from_bytes(blob[-4:], "little")
    actual_crc = zlib.crc32(body) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise FormatError(
            f"checksum mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})",
            offset=len(blob) - 4,
        )
    entries: dict[str, np.ndarray] = {}
    at = 0

    def need(n: int, what: str) -> bytes:
        nonlocal at
        if at + n > len(body):
            raise FormatError(f"truncated while reading {what}", offset=12 + at)
        chunk = body[at:at + n]
        at += n
        return chunk

    for _ in range(count):
        name_len = int.from_bytes(need(2, "name length"), "little")
        name = need(name_len, "name").decode("utf-8")
        rank = need(1, "rank")[0]
        dims = tuple(
            int.from_bytes(need(8, f"dim {i} of {name!r}"), "little") for i in range(rank)
        )
        n_values = 1
        for d in dims:
            n_values *= d
        payload = need(8 * n_values, f"payload of {name!r}")
        entries[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    if at != len(body):
        raise FormatError("trailing bytes after final entry", offset=12 + at)
    return entries
