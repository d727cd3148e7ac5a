"""Latent-distribution-matching objectives and the reconstruction loss.

All functions build on the tape tensor ops, so each one is differentiable
end to end (the Sinkhorn divergence by unrolling its iterations, the sliced
Wasserstein loss through its per-projection sorted matching). Inputs that
must live on the unit sphere are checked to a 1e-6 norm tolerance and then
defensively re-normalized before any dot products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .rng import Rng
from .tensor import Tensor

UNIT_ROW_TOL = 1e-6


@dataclass(frozen=True)
class ContrastiveParams:
    """Temperature, regularization weight, and queue capacity."""

    tau: float
    lam: float
    queue_size: int

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ContractError(f"tau must be positive, got {self.tau}")
        if self.lam < 0.0:
            raise ContractError(f"lambda must be >= 0, got {self.lam}")
        if self.queue_size < 1:
            raise ContractError(f"queue size must be >= 1, got {self.queue_size}")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth for the MMD estimate."""

    kind: str  # "imq" | "rbf"
    scale: float  # IMQ constant C, or RBF sigma^2

    def __post_init__(self):
        if self.kind not in ("imq", "rbf"):
            raise ContractError(f"unknown kernel kind {self.kind!r}")
        if self.scale <= 0.0:
            raise ContractError(f"kernel scale must be positive, got {self.scale}")


def default_kernel(dim: int) -> KernelSpec:
    """IMQ with C = 2*d, the customary choice for sphere-dimension d latents."""
    return KernelSpec("imq", 2.0 * dim)


def _as_unit_rows(t, what: str) -> Tensor:
    t = t if isinstance(t, Tensor) else Tensor(t)
    if t.data.ndim != 2:
        raise ShapeError(f"{what} must be 2-d, got shape {t.shape}")
    norms = np.sqrt((t.data * t.data).sum(axis=1))
    if np.any(np.abs(norms - 1.0) > UNIT_ROW_TOL):
        worst = float(np.abs(norms - 1.0).max())
        raise ContractError(f"{what} rows must be unit norm within {UNIT_ROW_TOL}; worst deviation {worst:.3e}")
    return T.l2_normalize(t)


def mse_reconstruction(x: Tensor, x_rec: Tensor) -> Tensor:
    """Squared error summed over features, averaged over the batch."""
    if x.shape != x_rec.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {x_rec.shape}")
    batch = x.shape[0]
    return T.tsum(T.square(T.sub(x_rec, x))) * (1.0 / batch)


def l_neg_mc(z, pool, tau: float) -> Tensor:
    """Monte-Carlo negative-sampling term.

    (1/B) sum_i log (1/K) sum_j exp(z_i . p_j / tau); its negation is the
    kernel-density entropy estimate of the latent batch. Minimized (in the
    population limit) by the uniform distribution on the sphere.
    """
    if tau <= 0.0:
        raise ContractError(f"tau must be positive, got {tau}")
    z = _as_unit_rows(z, "z")
    pool = _as_unit_rows(pool, "pool")
    k = pool.shape[0]
    # scaling the queries by 1/tau scales every logit without touching the
    # B x K matrix twice
    logits = T.matmul(z * (1.0 / tau), T.transpose(pool))
    return T.mean(T.logsumexp_rows(logits)) - math.log(k)


def moco_contrastive(z_q: Tensor, z_k: Tensor, queue_keys, tau: float) -> Tensor:
    """Cross-entropy over logits [z_q.z_k_pos | z_q.Q] / tau with label 0.

    `queue_keys` is the stored dictionary (any K x d matrix of unit rows);
    gradient flows only through z_q: the paired keys must already be
    detached and the queue is a constant.
    """
    if tau <= 0.0:
        raise ContractError(f"tau must be positive, got {tau}")
    if isinstance(z_k, Tensor) and z_k.requires_grad:
        raise ContractError("z_k must not carry gradient (detach the key encoder output)")
    keys = queue_keys.keys() if hasattr(queue_keys, "keys") and callable(queue_keys.keys) else queue_keys
    keys = keys if isinstance(keys, Tensor) else Tensor(keys)
    if keys.shape[0] < 1:
        raise ContractError("queue must hold at least one key")
    z_q = _as_unit_rows(z_q, "z_q")
    z_k = _as_unit_rows(z_k, "z_k").detach()
    keys = _as_unit_rows(keys, "queue").detach()
    if z_q.shape != z_k.shape:
        raise ShapeError(f"z_q/z_k shape mismatch: {z_q.shape} vs {z_k.shape}")
    # Cross-entropy with label 0 over logits [l_pos | l_neg] / tau, computed
    # as logaddexp(l_pos, LSE(l_neg)) - l_pos so the B x K block is touched
    # once; scaling the queries alone scales every logit by 1/tau.
    zq_scaled = z_q * (1.0 / tau)
    l_pos = T.sum_rows(T.mul(zq_scaled, z_k))    # B x 1
    l_neg = T.matmul(zq_scaled, T.transpose(keys))  # B x K
    ce = T.logaddexp(l_pos, T.logsumexp_rows(l_neg)) - l_pos
    return T.mean(ce)


def _pairwise_sqdist(x: Tensor, y: Tensor) -> Tensor:
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"feature dims differ: {x.shape} vs {y.shape}")
    xsq = T.sum_rows(T.square(x))                # A x 1
    ysq = T.sum_rows(T.square(y))                # C x 1
    cross = T.matmul(x, T.transpose(y))          # A x C
    return xsq + T.transpose(ysq) - 2.0 * cross


def _kernel_matrix(x: Tensor, y: Tensor, kernel: KernelSpec) -> Tensor:
    d2 = _pairwise_sqdist(x, y)
    if kernel.kind == "imq":
        return kernel.scale * T.reciprocal(d2 + kernel.scale)
    return T.exp(d2 * (-0.5 / kernel.scale))


def mmd(x, y, kernel: KernelSpec) -> Tensor:
    """Biased V-statistic MMD^2: mean k(x,x') + mean k(y,y') - 2 mean k(x,y)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    y = y if isinstance(y, Tensor) else Tensor(y)
    if x.shape[0] < 1 or y.shape[0] < 1:
        raise ContractError("mmd needs nonempty sample sets")
    return (
        T.mean(_kernel_matrix(x, x, kernel))
        + T.mean(_kernel_matrix(y, y, kernel))
        - 2.0 * T.mean(_kernel_matrix(x, y, kernel))
    )


def projection_matrix(dim: int, n_proj: int, rng: Rng) -> np.ndarray:
    """d x P matrix of unit-norm projection directions."""
    theta = rng.normal_array((dim, n_proj))
    norms = np.sqrt((theta * theta).sum(axis=0, keepdims=True))
    while np.any(norms <= 1e-12):  # probability-zero guard
        redraw = rng.normal_array((dim, n_proj))
        theta = np.where(norms <= 1e-12, redraw, theta)
        norms = np.sqrt((theta * theta).sum(axis=0, keepdims=True))
    return theta / norms


def swd_loss(x, y, n_proj: int, rng: Rng) -> Tensor:
    """Sliced squared-W2: mean over random directions of the sorted 1-d matching.

    Requires equal sample counts; sorting solves each projected transport
    problem exactly, and gradients follow the matched pairs.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    y = y if isinstance(y, Tensor) else Tensor(y)
    if x.shape[0] != y.shape[0]:
        raise ContractError(f"swd_loss needs equal sample counts, got {x.shape[0]} and {y.shape[0]}")
    theta = Tensor(projection_matrix(x.shape[1], n_proj, rng))
    sx = T.sort_columns(T.matmul(x, theta))
    sy = T.sort_columns(T.matmul(y, theta))
    return T.mean(T.square(sx - sy))


def _ot_entropic(cost: Tensor, eps: float, n_iter: int) -> Tensor:
    """Sharp transport cost <P, C> after damped log-domain iterations.

    Potentials update symmetrically (both from the previous iterate, then
    averaged), which makes the finite-iteration value exactly symmetric
    under transposition of the cost.
    """
    n_rows, n_cols = cost.shape
    log_a = -math.log(n_rows)
    log_b = -math.log(n_cols)
    f = Tensor(np.zeros((n_rows, 1)))
    g = Tensor(np.zeros((n_cols, 1)))
    neg_cost = -1.0 * cost
    neg_cost_t = T.transpose(neg_cost)
    for _ in range(n_iter):
        f_new = -eps * T.logsumexp_rows((T.transpose(g) + neg_cost) * (1.0 / eps) + log_b)
        g_new = -eps * T.logsumexp_rows((T.transpose(f) + neg_cost_t) * (1.0 / eps) + log_a)
        f = 0.5 * (f + f_new)
        g = 0.5 * (g + g_new)
    log_plan = (f + T.transpose(g) + neg_cost) * (1.0 / eps) + (log_a + log_b)
    return T.tsum(T.mul(T.exp(log_plan), cost))


def sinkhorn_divergence(x, y, eps: float | None = None, n_iter: int = 50) -> Tensor:
    """Debiased entropic OT: OT(x,y) - (OT(x,x) + OT(y,y)) / 2.

    Uniform weights on squared-Euclidean cost; `eps=None` picks
    0.1 * mean pairwise squared distance between x and y. Gradients flow
    through the unrolled iterations.
    """
    if eps is not None and eps <= 0.0:
        raise ContractError(f"eps must be positive, got {eps}")
    if n_iter < 1:
        raise ContractError(f"n_iter must be >= 1, got {n_iter}")
    x = x if isinstance(x, Tensor) else Tensor(x)
    y = y if isinstance(y, Tensor) else Tensor(y)
    cost_xy = _pairwise_sqdist(x, y)
    if eps is None:
        eps = max(0.1 * float(cost_xy.data.mean()), 1e-12)
    return (
        _ot_entropic(cost_xy, eps, n_iter)
        - 0.5 * _ot_entropic(_pairwise_sqdist(x, x), eps, n_iter)
        - 0.5 * _ot_entropic(_pairwise_sqdist(y, y), eps, n_iter)
    )


def combined_loss(
    x: Tensor, enc_q, enc_k, dec, queue_keys, params: ContrastiveParams
) -> tuple[Tensor, Tensor, Tensor]:
    """Reconstruction plus lambda-weighted contrastive term.

    Returns (total, reconstruction, contrastive) so callers can log the
    parts. The key encoder output is detached; only the query encoder and
    decoder receive gradient.
    """
    from .nn import forward_decoder, forward_encoder  # local import avoids cycle

    z_q = forward_encoder(enc_q, x)
    z_k = forward_encoder(enc_k, x).detach()
    x_rec = forward_decoder(dec, z_q)
    rec = mse_reconstruction(x, x_rec)
    con = moco_contrastive(z_q, z_k, queue_keys, params.tau)
    total = rec + params.lam * con
    return total, rec, con
