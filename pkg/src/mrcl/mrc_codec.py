"""Index coding of one weight block against the shared sample stream.

Encoding draws K samples w_0..w_{K-1} from the encoding distribution p via
the shared stream, reweights them by the importance ratios
a_k = q(w_k)/p(w_k) into a discrete proxy distribution, draws an index k*
from the proxy and transmits only k*. Decoding regenerates sample k* by a
counter jump, never evaluating q. All weights are kept in log-space with
log-sum-exp normalization: linear-space ratios underflow for realistic KL
values.

Also provides the bias/coding-length diagnostics used by the statistical
acceptance suites.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core_distributions import DiagonalGaussian, DimensionMismatchError
from .shared_prng import SampleStream, derive_block_seed, uniforms_at

LN2 = math.log(2.0)
MAX_K_BITS = 30


class FeasibilityError(ValueError):
    """Requested per-block budget needs more than 2^30 samples."""


class CorruptStreamError(ValueError):
    """Decoded index is outside the advertised bit-width."""


class DegenerateWeightsError(ValueError):
    """Every importance weight is zero (q vanished on all K samples)."""


def ceil_information(x: float) -> int:
    """ceil with a snap-to-integer guard.

    Budgets specified in whole bits arrive here as nats/ln2 ratios; float
    noise of order 1e-16 must not push e.g. 20.000000000000004 up to 21.
    The snap implements the exact-real-arithmetic reading of the contract.
    """
    n = round(x)
    if abs(x - n) <= 1e-9 * max(1.0, abs(x)):
        return int(n)
    return int(math.ceil(x))


def k_bits_for(kl_nats: float, slack_nats: float = 0.0) -> int:
    """Whole-bit message width for a block with the given KL budget."""
    if kl_nats < 0 or slack_nats < 0:
        raise ValueError("kl_nats and slack_nats must be >= 0")
    bits = max(0, ceil_information((kl_nats + slack_nats) / LN2))
    if bits > MAX_K_BITS:
        raise FeasibilityError(
            f"block KL exceeds feasible sample budget ({bits} bits > {MAX_K_BITS})"
        )
    return bits


def required_samples(kl_nats: float, slack_nats: float = 0.0) -> int:
    """K = 2^ceil((kl + slack)/ln 2): enough samples that log2(K) whole
    bits cover the budget; rounding up only adds samples, which reduces
    the proxy bias."""
    return 1 << k_bits_for(kl_nats, slack_nats)


@dataclass(frozen=True)
class ProxyDistribution:
    """Discrete distribution over the K drawn samples.

    probs are proportional to the importance weights; log_weights holds
    log q(w_k) - log p(w_k) and normalizer is their log-sum-exp.
    """

    log_weights: np.ndarray
    normalizer: float

    @classmethod
    def from_log_weights(cls, log_weights: np.ndarray) -> "ProxyDistribution":
        log_weights = np.asarray(log_weights, dtype=np.float64)
        if log_weights.ndim != 1 or log_weights.shape[0] < 1:
            raise ValueError("log_weights must be a vector with K >= 1")
        m = float(np.max(log_weights))
        if m == -math.inf or np.isnan(m):
            raise DegenerateWeightsError("q has zero density at every drawn sample")
        normalizer = m + math.log(float(np.sum(np.exp(log_weights - m))))
        return cls(log_weights, normalizer)

    @property
    def n_samples(self) -> int:
        return self.log_weights.shape[0]

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_weights - self.normalizer)

    def expectation(self, f_values: np.ndarray) -> float:
        return float(np.dot(self.probs, np.asarray(f_values, dtype=np.float64)))


@dataclass(frozen=True)
class EncodedBlock:
    """Transmitted message for one block: k_bits-wide sample index."""

    index: int
    k_bits: int

    def __post_init__(self):
        if not (0 <= self.index < (1 << self.k_bits)):
            raise CorruptStreamError(
                f"index {self.index} does not fit in {self.k_bits} bits"
            )


def _weight_kernel_inputs(q: DiagonalGaussian, p: DiagonalGaussian):
    const = float(np.sum(p.log_std) - np.sum(q.log_std))
    q_inv2var = 0.5 * np.exp(-2.0 * q.log_std)
    return const, q_inv2var


def block_proxy(q: DiagonalGaussian, p: DiagonalGaussian, stream: SampleStream, K: int) -> ProxyDistribution:
    """Importance-reweighted proxy over the K stream samples of a block."""
    if q.dim != p.dim:
        raise DimensionMismatchError(f"q has dim {q.dim}, p has dim {p.dim}")
    if K < 1:
        raise ValueError("K must be >= 1")
    const, q_inv2var = _weight_kernel_inputs(q, p)
    lw = kernels.log_weight_samples_from_p(
        stream.block_seed, stream.counter, K, p.mean, p.std, q.mean, q_inv2var, const
    )
    return ProxyDistribution.from_log_weights(lw)


def select_index(proxy: ProxyDistribution, selection_uniform: float) -> int:
    """Inverse-CDF draw in ascending index order: first k with CDF > u."""
    if not (0.0 <= selection_uniform < 1.0):
        raise ValueError("selection_uniform must lie in [0, 1)")
    cdf = np.cumsum(proxy.probs)
    k = int(np.searchsorted(cdf, selection_uniform, side="right"))
    return min(k, proxy.n_samples - 1)


def regenerate_sample(p: DiagonalGaussian, stream: SampleStream, k: int) -> np.ndarray:
    """Sample k of the block by counter jump: cost O(dim), independent of K."""
    z = kernels.normals(stream.block_seed, stream.counter + 2 * p.dim * k, p.dim)
    return p.mean + p.std * z


def encode_block(
    q: DiagonalGaussian,
    p: DiagonalGaussian,
    stream: SampleStream,
    K: int,
    selection_uniform: float,
):
    """Encode one block. Returns (EncodedBlock, chosen sample).

    The selection uniform comes from the encoder's private randomness; the
    decoder never needs it. The passed stream is read, not mutated: samples
    occupy counters [c, c + 2*dim*K) relative to the stream's position.
    Message cost is exactly log2(K) bits for power-of-two K.
    """
    proxy = block_proxy(q, p, stream, K)
    k_star = select_index(proxy, selection_uniform)
    k_bits = (K - 1).bit_length()
    return EncodedBlock(k_star, k_bits), regenerate_sample(p, stream, k_star)


def decode_block(p: DiagonalGaussian, stream: SampleStream, block: EncodedBlock) -> np.ndarray:
    """Regenerate the encoder's chosen sample from p and the index alone.

    Bit-identical to the encoder's returned sample within one build; the
    stream must carry the same (root_seed, block_id) used at encode time.
    """
    if not (0 <= block.index < (1 << block.k_bits)):
        raise CorruptStreamError(
            f"index {block.index} does not fit in {block.k_bits} bits"
        )
    return regenerate_sample(p, stream, block.index)


def encode_block_many(
    q: DiagonalGaussian,
    p: DiagonalGaussian,
    K: int,
    n_trials: int,
    root_seed: int,
    selection_seed: int,
    block_id_start: int = 0,
):
    """Repeat encode_block over n_trials independent blocks.

    Trial t uses the shared stream (root_seed, block_id_start + t) and the
    t-th uniform of the private selection stream. Returns (indices,
    samples) with samples stacked row-wise. This is a plain loop over
    encode_block, so it is trivially equivalent to the scalar op.
    """
    sel = uniforms_at(derive_block_seed(selection_seed, 0), 0, n_trials)
    indices = np.empty(n_trials, dtype=np.int64)
    samples = np.empty((n_trials, q.dim), dtype=np.float64)
    for t in range(n_trials):
        stream = SampleStream(root_seed, block_id_start + t)
        block, w = encode_block(q, p, stream, K, float(sel[t]))
        indices[t] = block.index
        samples[t] = w
    return indices, samples


def bias_bound_epsilon(t: float, tail_prob: float) -> float:
    """epsilon = (e^{-t/4} + 2*sqrt(tail_prob))^{1/2}; the proxy-bias rate
    for K = exp(KL + t) samples."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if not (0.0 <= tail_prob <= 1.0):
        raise ValueError("tail_prob must lie in [0, 1]")
    return math.sqrt(math.exp(-t / 4.0) + 2.0 * math.sqrt(tail_prob))


def estimate_log_ratio_tail(
    q: DiagonalGaussian,
    p: DiagonalGaussian,
    threshold_nats: float,
    n: int,
    seed: int,
) -> float:
    """Monte-Carlo estimate of P_q(log q(w) - log p(w) > threshold)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if q.dim != p.dim:
        raise DimensionMismatchError(f"q has dim {q.dim}, p has dim {p.dim}")
    const = float(np.sum(p.log_std) - np.sum(q.log_std))
    p_inv2var = 0.5 * np.exp(-2.0 * p.log_std)
    r = kernels.log_ratio_samples_from_q(
        derive_block_seed(seed, 0), 0, n, q.mean, q.std, p.mean, p_inv2var, const
    )
    return float(np.count_nonzero(r > threshold_nats)) / n


def coding_length_bounds(kl_nats: float, constant_nats: float = 5.0):
    """(lower, upper) bounds on the expected message length in nats:
    lower = KL, upper = KL + 2 ln(KL + 1) + c.

    The c term is a reporting convention for the order-one overhead (the
    bound's additive constant is never pinned numerically); measured
    constants are reported by the diagnostics instead of asserted.
    """
    if kl_nats < 0:
        raise ValueError("kl_nats must be >= 0")
    return kl_nats, kl_nats + 2.0 * math.log(kl_nats + 1.0) + constant_nats
