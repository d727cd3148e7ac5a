"""Evaluation-side analyses: sliced-Wasserstein metric, latent singular
spectrum via Jacobi rotations, and the kernel-density entropy estimate.

Everything here is gradient-free; the SWD metric intentionally shares its
projection construction with the differentiable loss so the two routes can
be cross-checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError
from .losses import l_neg_mc, projection_matrix
from .rng import Rng


def swd_metric(samples_a, samples_b, n_proj: int = 256, rng: Rng | None = None) -> float:
    """Squared sliced-W2 between two equally sized sample sets."""
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ContractError("swd_metric needs 2-d sample matrices")
    if a.shape[0] != b.shape[0]:
        raise ContractError(f"sample counts differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    if rng is None:
        rng = Rng(0)
    theta = projection_matrix(a.shape[1], n_proj, rng)
    pa = np.sort(a @ theta, axis=0)
    pb = np.sort(b @ theta, axis=0)
    return float(np.mean((pa - pb) ** 2))


def jacobi_eigenvalues(sym: np.ndarray, tol: float = 1e-10, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm drops to `tol`.
    """
    a = np.array(sym, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"jacobi_eigenvalues needs a square matrix, got {a.shape}")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n == 1:
        return a[0].copy()
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(a * a) - np.sum(np.diag(a) ** 2))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                beta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(beta) if beta != 0.0 else 1.0
                t = t / (abs(beta) + np.sqrt(beta * beta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = c * t
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
    else:
        raise NumericError(f"Jacobi sweep limit {max_sweeps} reached (off-diagonal {off:.3e})")
    return np.diag(a).copy()


@dataclass(frozen=True)
class IsotropyReport:
    """Descending singular values with spread statistics."""

    singular_values: np.ndarray
    normalized: np.ndarray  # sigma_i / sigma_1
    dispersion: float  # std(sigma) / mean(sigma)


def svd_spectrum(latents: np.ndarray, tol: float = 1e-10) -> IsotropyReport:
    """Singular values of the (uncentered) N x d latent matrix.

    Computed as square roots of the Gram-matrix eigenvalues, which is exact
    for N >= d and keeps the small d x d problem dense and cheap.
    """
    mat = np.asarray(latents, dtype=np.float64)
    if mat.ndim != 2:
        raise ContractError("svd_spectrum needs a 2-d latent matrix")
    n, d = mat.shape
    if n < d:
        raise ContractError(f"need at least as many rows as columns, got {n} x {d}")
    gram = mat.T @ mat
    eig = jacobi_eigenvalues(gram, tol=tol)
    sigma = np.sqrt(np.clip(eig, 0.0, None))
    sigma = np.sort(sigma)[::-1]
    if sigma[0] <= 0.0:
        raise ContractError("latent matrix is identically zero")
    return IsotropyReport(
        singular_values=sigma,
        normalized=sigma / sigma[0],
        dispersion=float(np.std(sigma) / np.mean(sigma)),
    )


def entropy_estimate(z, tau: float) -> float:
    """Kernel-density entropy reading of a latent batch (higher = more spread).

    Definitionally the negation of the negative-sampling term evaluated with
    the batch as its own pool.
    """
    return -l_neg_mc(z, z, tau).item()
