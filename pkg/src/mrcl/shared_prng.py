"""Deterministic shared random source.

Encoder and decoder regenerate identical Gaussian sample streams from a
public 64-bit seed. The construction is counter-based so the k-th sample of
a block is a pure function of (root_seed, block_id, k, dimension) and the
decoder can jump straight to it:

    block_seed        = mix(root_seed XOR (block_id + 1) * GOLDEN)
    uniform(seed, c)  = (mix(seed + c * GOLDEN) >> 11) * 2^-53
    normal            = sqrt(-2*ln(1 - u1)) * cos(2*pi*u2)   [two uniforms]

where mix is the 64-bit finalizer x ^= x>>30; x *= 0xBF58476D1CE4E5B9;
x ^= x>>27; x *= 0x94D049BB133111EB; x ^= x>>31. These constants and the
two-uniforms-per-normal convention are part of the compressed-file format
contract. The (1 - u1) argument guards ln(0) since uniforms live in [0, 1).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """64-bit avalanche finalizer (exact integer arithmetic)."""
    x &= MASK64
    x ^= x >> 30
    x = (x * _M1) & MASK64
    x ^= x >> 27
    x = (x * _M2) & MASK64
    x ^= x >> 31
    return x


def derive_block_seed(root_seed: int, block_id: int) -> int:
    """Decorrelated per-block sub-seed; bit-exact across platforms."""
    return mix64((root_seed ^ ((block_id + 1) * GOLDEN)) & MASK64)


def uniform64_stream(seed: int, counter: int) -> float:
    """The counter-th uniform of the stream keyed by seed, in [0, 1)."""
    return (mix64((seed + counter * GOLDEN) & MASK64) >> 11) * 2.0**-53


def uniforms_at(seed: int, start: int, n: int) -> np.ndarray:
    """Vector of n consecutive stream uniforms starting at counter start."""
    return kernels.uniforms(seed, start, n)


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized mix64 over a uint64 array (exact, backend-independent)."""
    x = x.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        x ^= x >> np.uint64(30)
        x *= np.uint64(_M1)
        x ^= x >> np.uint64(27)
        x *= np.uint64(_M2)
        x ^= x >> np.uint64(31)
    return x


@dataclass
class SampleStream:
    """A position in the shared sample stream of one block.

    Value semantics: the k-th d-dimensional Gaussian sample occupies
    counters [2dk, 2d(k+1)) relative to counter 0, so random access by
    counter jump reproduces sequential generation bit-exactly.
    """

    root_seed: int
    block_id: int = 0
    counter: int = 0
    block_seed: int = field(init=False)

    def __post_init__(self):
        self.block_seed = derive_block_seed(self.root_seed, self.block_id)

    def at_sample(self, k: int, dim: int) -> "SampleStream":
        """Fresh stream positioned at the start of sample k."""
        return SampleStream(self.root_seed, self.block_id, 2 * dim * k)

    def next_uniform(self) -> float:
        u = uniform64_stream(self.block_seed, self.counter)
        self.counter += 1
        return u


def standard_normal(stream: SampleStream) -> float:
    """Next Box-Muller normal; advances the stream counter by 2."""
    z = kernels.normals(stream.block_seed, stream.counter, 1)[0]
    stream.counter += 2
    return float(z)


def standard_normals(stream: SampleStream, n: int) -> np.ndarray:
    """Next n normals; advances the counter by 2n."""
    z = kernels.normals(stream.block_seed, stream.counter, n)
    stream.counter += 2 * n
    return z


def sample_from(p, stream: SampleStream) -> np.ndarray:
    """Draw one vector sample w = mean + std*z from a DiagonalGaussian.

    Consumes exactly 2*dim uniforms so sample indexing stays reproducible.
    """
    z = standard_normals(stream, p.dim)
    return p.mean + p.std * z
