"""Uniform hypersphere prior: sampling, generation, and latent interpolation.

Samples are standard Gaussians normalized onto the unit sphere, which makes
the direction exactly uniform. Generation decodes prior draws; interpolation
walks the chord between two encoded latents and re-projects onto the sphere.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DegenerateInputError
from .nn import Mlp, forward_decoder, forward_encoder
from .rng import Rng
from .tensor import NORM_EPS, Tensor


def sample_prior(d: int, count: int, rng: Rng) -> np.ndarray:
    """(count, d) rows i.i.d. uniform on the unit sphere."""
    if d < 1:
        raise ContractError(f"dimension must be >= 1, got {d}")
    if count < 0:
        raise ContractError(f"count must be >= 0, got {count}")
    z = rng.normal_array((count, d))
    norms = np.sqrt((z * z).sum(axis=1, keepdims=True))
    while np.any(norms <= NORM_EPS):  # probability-zero event; re-draw those rows
        bad = norms[:, 0] <= NORM_EPS
        z[bad] = rng.normal_array((int(bad.sum()), d))
        norms = np.sqrt((z * z).sum(axis=1, keepdims=True))
    return z / norms


class SphereSampler:
    """Stateful sampler owning its rng stream; one instance per thread."""

    def __init__(self, dim: int, rng: Rng):
        if dim < 1:
            raise ContractError(f"dimension must be >= 1, got {dim}")
        self.dim = dim
        self._rng = rng

    def draw(self, count: int) -> np.ndarray:
        return sample_prior(self.dim, count, self._rng)


def generate(decoder: Mlp, d: int, count: int, rng: Rng) -> np.ndarray:
    """Decode `count` prior samples into input space."""
    if d != decoder.spec.in_dim:
        raise ContractError(f"latent dim {d} != decoder input dim {decoder.spec.in_dim}")
    z = sample_prior(d, count, rng)
    if count == 0:
        return np.zeros((0, decoder.spec.out_dim))
    return forward_decoder(decoder, Tensor(z)).data


def interpolate(encoder: Mlp, decoder: Mlp, x, x_other, alphas) -> list[np.ndarray]:
    """Decode sphere-projected chords alpha*z + (1-alpha)*z' for each alpha.

    alpha=1 and alpha=0 reproduce the two reconstructions bit-exactly (the
    endpoints skip the redundant re-normalization of an already unit z).
    """
    alphas = [float(a) for a in alphas]
    if any(a < 0.0 or a > 1.0 for a in alphas):
        raise ContractError(f"alphas must lie in [0, 1], got {alphas}")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    x_other = np.asarray(x_other, dtype=np.float64).reshape(1, -1)
    z = forward_encoder(encoder, Tensor(x)).data
    z_other = forward_encoder(encoder, Tensor(x_other)).data
    frames = []
    for a in alphas:
        if a == 1.0:
            z_alpha = z
        elif a == 0.0:
            z_alpha = z_other
        else:
            mix = a * z + (1.0 - a) * z_other
            norm = float(np.sqrt((mix * mix).sum()))
            if norm <= NORM_EPS:
                raise DegenerateInputError(
                    f"interpolant at alpha={a} has norm {norm:.3e}; endpoints are antipodal"
                )
            z_alpha = mix / norm
        frames.append(forward_decoder(decoder, Tensor(z_alpha)).data[0])
    return frames
