"""Seeded pseudo-random number generation used everywhere in this package.

The generator is xoshiro256++ (a 64-bit shift-register generator) with its
state filled by the splitmix64 sequence, which is the initialization the
xoshiro authors recommend. Every consumer of randomness owns an `Rng`
constructed from `(seed, stream)`, so independent subsystems (weight init,
shuffling, projections, prior draws, ...) never share or race a stream and
any run is reproducible from its seed alone.

Stream layout, fixed for reproducibility:

* scalar draws (`next_u64`, `uniform`, `normal`, `randint`, `permutation`)
  consume the single stream `splitmix64(seed + stream * GOLDEN)`;
* block draws (`normal_array`, `uniform_array`) use 64 lanes per call; call
  number `c` (0-based, counted per Rng) fills element `i` of the flattened
  output from lane `i % 64`, each lane being an independent xoshiro256++
  stream seeded from `(seed, stream, c, lane)`. Block and scalar draws
  therefore do not interact.

Uniform doubles are `(x >> 11) * 2**-53` in [0, 1). Gaussians come from the
Box-Muller transform on pairs of uniforms.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_LANES = 64
_U53 = 2.0 ** -53

_UMASK = np.uint64(_MASK64)
_SHIFT_MULT = np.uint64(0xBF58476D1CE4E5B9)
_SHIFT_MULT2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return state, z


def derive_seed(seed: int, *keys: int) -> int:
    """Mix extra integer keys into a seed; used for per-epoch subseeds."""
    state = seed & _MASK64
    for key in keys:
        state, out = _splitmix64((state ^ (key & _MASK64)) & _MASK64)
        state = out
    state, out = _splitmix64(state)
    return out


def _seed_state(material: int) -> list[int]:
    """Fill a 4-word xoshiro256++ state from splitmix64, never all-zero."""
    state = material & _MASK64
    words = []
    for _ in range(4):
        state, out = _splitmix64(state)
        words.append(out)
    if not any(words):
        words[0] = _GOLDEN
    return words


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256++ stream addressed by (seed, stream)."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = seed & _MASK64
        self.stream = stream & _MASK64
        self._s = _seed_state((self.seed + self.stream * _GOLDEN) & _MASK64)
        self._spare_normal: float | None = None
        self._block_calls = 0

    def spawn(self, key: int) -> "Rng":
        """Independent child stream; deterministic in (seed, stream, key)."""
        return Rng(derive_seed(self.seed, self.stream, key))

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[0] + s[3]) & _MASK64, 23) + s[0]) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """One double in [0, 1)."""
        return (self.next_u64() >> 11) * _U53

    def normal(self) -> float:
        """One standard Gaussian via Box-Muller (caches the paired draw)."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1]: keeps log() finite
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def randint(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection on the top of the range."""
        if n <= 0:
            raise ValueError("randint needs n >= 1")
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            x = self.next_u64()
            if x <= limit:
                return x % n

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    # -- vectorized block draws ------------------------------------------

    def _lane_block(self, count: int) -> np.ndarray:
        """`count` uniforms in [0,1) from 64 fresh lanes (one call's worth)."""
        call = self._block_calls
        self._block_calls += 1
        lane_seeds = [
            derive_seed(self.seed, self.stream, 0x424C4F43, call, lane)
            for lane in range(_LANES)
        ]
        s = np.empty((4, _LANES), dtype=np.uint64)
        for lane, mat in enumerate(lane_seeds):
            s[:, lane] = _seed_state(mat)
        steps = -(-count // _LANES)
        out = np.empty(steps * _LANES, dtype=np.uint64)
        s0, s1, s2, s3 = s[0], s[1], s[2], s[3]
        seventeen = np.uint64(17)
        for step in range(steps):
            tmp = (s0 + s3) & _UMASK
            out[step * _LANES:(step + 1) * _LANES] = (
                (((tmp << np.uint64(23)) | (tmp >> np.uint64(41))) + s0) & _UMASK
            )
            t = (s1 << seventeen) & _UMASK
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << np.uint64(45)) | (s3 >> np.uint64(19))) & _UMASK
        return (out[:count] >> np.uint64(11)).astype(np.float64) * _U53

    def uniform_array(self, shape) -> np.ndarray:
        """Array of uniforms in [0, 1) with the documented lane layout."""
        shape = tuple(int(d) for d in (shape if np.iterable(shape) else (shape,)))
        count = int(np.prod(shape)) if shape else 1
        return self._lane_block(count).reshape(shape)

    def normal_array(self, shape) -> np.ndarray:
        """Array of standard Gaussians (vectorized Box-Muller)."""
        shape = tuple(int(d) for d in (shape if np.iterable(shape) else (shape,)))
        count = int(np.prod(shape)) if shape else 1
        pairs = -(-count // 2)
        u = self._lane_block(2 * pairs)
        u1 = 1.0 - u[:pairs]
        u2 = u[pairs:]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:count].reshape(shape)


# Stream ids: one per randomness consumer, so streams never collide.
STREAM_WEIGHT_INIT = 1
STREAM_QUEUE_INIT = 2
STREAM_SHUFFLE = 3
STREAM_SYNTH_DATA = 4
STREAM_PRIOR = 5
STREAM_PROJECTIONS = 6
STREAM_EVAL_PRIOR = 7
STREAM_SWEEP = 8
