"""Greedy rejection sampling over discrete supports, plus the prefix-free
integer code for the accepted index.

The sampler accepts each proposal with the highest probability compatible
with the cumulative acceptance mass staying below the target:

    alpha_i(w) = min(q(w) - p_{i-1}(w), (1 - p*_{i-1}) p(w))
    p_i(w)     = p_{i-1}(w) + alpha_i(w)
    beta_i     = alpha_i(w_i) / ((1 - p*_{i-1}) p(w_i))

with p_{-1} = 0 and p*_{-1} = 0. It is unbiased (q - p_i <= q (1-p)^i)
and the 1-based accepted index i*, transmitted with an Elias-delta code,
costs about KL(q||p) + 2 log2(KL+1) + O(1) bits in expectation. It serves
as the exact reference coder for quantized scalar blocks and as the test
oracle for the coding-length claims; the main pipeline uses mrc_codec.
"""

from dataclasses import dataclass, field

import numpy as np

from .shared_prng import GOLDEN, MASK64, SampleStream, derive_block_seed, mix64_array

MAX_SUPPORT = 1 << 16
MAX_ITERATIONS = 10**6


class SamplerExhaustedError(RuntimeError):
    pass


class MalformedCodeError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteDistribution:
    probs: np.ndarray
    cdf: np.ndarray = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.shape[0] < 1:
            raise ValueError("probs must be a non-empty vector")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(float(np.sum(probs)) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {float(np.sum(probs))!r}, not 1")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)
        cdf = np.cumsum(probs)
        cdf.flags.writeable = False
        object.__setattr__(self, "cdf", cdf)

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def normalized(cls, weights) -> "DiscreteDistribution":
        w = np.asarray(weights, dtype=np.float64)
        return cls(w / np.sum(w))

    def draw_index(self, u: float) -> int:
        """Inverse-CDF draw: first index with CDF > u."""
        return min(int(np.searchsorted(self.cdf, u, side="right")), self.size - 1)


@dataclass(frozen=True)
class GrsState:
    """Cumulative acceptance masses after the first `iteration` steps."""

    p_cum: np.ndarray
    p_star: float
    iteration: int

    @classmethod
    def initial(cls, support_size: int) -> "GrsState":
        return cls(np.zeros(support_size), 0.0, 0)


def _alpha_beta(state: GrsState, q: DiscreteDistribution, p: DiscreteDistribution):
    remaining = 1.0 - state.p_star
    cap = remaining * p.probs
    alpha = np.minimum(q.probs - state.p_cum, cap)
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(cap > 0.0, alpha / cap, 0.0)
    return alpha, beta


def grs_step(
    state: GrsState,
    q: DiscreteDistribution,
    p: DiscreteDistribution,
    proposal_index: int,
    accept_uniform: float,
):
    """One acceptance round. Returns (state', accepted index or None)."""
    if state.p_star >= 1.0:
        raise SamplerExhaustedError("sampler exhausted: halting mass reached 1")
    if not (0 <= proposal_index < q.size):
        raise ValueError("proposal_index outside the support")
    alpha, beta = _alpha_beta(state, q, p)
    cum = state.p_cum + alpha
    new_state = GrsState(cum, float(np.sum(cum)), state.iteration + 1)
    accepted = proposal_index if accept_uniform <= beta[proposal_index] else None
    return new_state, accepted


def grs_sample(
    q: DiscreteDistribution,
    p: DiscreteDistribution,
    proposal_stream: SampleStream,
    accept_stream: SampleStream,
    max_iterations: int = MAX_ITERATIONS,
):
    """Run the sampler to acceptance; returns (element, 1-based index i*)."""
    if q.size != p.size:
        raise ValueError("q and p must share a support")
    if q.size > MAX_SUPPORT:
        raise ValueError(f"support larger than {MAX_SUPPORT} is intractable here")
    state = GrsState.initial(q.size)
    for _ in range(max_iterations):
        proposal = p.draw_index(proposal_stream.next_uniform())
        state, accepted = grs_step(state, q, p, proposal, accept_stream.next_uniform())
        if accepted is not None:
            return accepted, state.iteration
    raise SamplerExhaustedError(f"no acceptance within {max_iterations} iterations")


def grs_sample_many(q: DiscreteDistribution, p: DiscreteDistribution, trials: int, seed: int):
    """Vectorized replay of `trials` independent grs_sample runs.

    Trial t consumes the streams (derive(seed, 0), block t) for proposals
    and (derive(seed, 1), block t) for acceptance, exactly like the scalar
    sampler, so the two paths agree draw-for-draw. Returns (elements,
    iterations) with iterations 1-based.
    """
    proposal_root = derive_block_seed(seed, 0)
    accept_root = derive_block_seed(seed, 1)
    ids = np.arange(trials, dtype=np.uint64)
    with np.errstate(over="ignore"):
        prop_seeds = mix64_array(np.uint64(proposal_root) ^ ((ids + np.uint64(1)) * np.uint64(GOLDEN)))
        acc_seeds = mix64_array(np.uint64(accept_root) ^ ((ids + np.uint64(1)) * np.uint64(GOLDEN)))

    elements = np.full(trials, -1, dtype=np.int64)
    iterations = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    state = GrsState.initial(q.size)
    i = 0
    inv53 = 2.0**-53
    while active.size and i < MAX_ITERATIONS:
        if state.p_star >= 1.0:
            raise SamplerExhaustedError("sampler exhausted: halting mass reached 1")
        alpha, beta = _alpha_beta(state, q, p)
        ctr = np.uint64((i * GOLDEN) & MASK64)
        with np.errstate(over="ignore"):
            u_prop = (mix64_array(prop_seeds[active] + ctr) >> np.uint64(11)).astype(np.float64) * inv53
            u_acc = (mix64_array(acc_seeds[active] + ctr) >> np.uint64(11)).astype(np.float64) * inv53
        proposals = np.minimum(np.searchsorted(p.cdf, u_prop, side="right"), q.size - 1)
        accepted = u_acc <= beta[proposals]
        done = active[accepted]
        elements[done] = proposals[accepted]
        iterations[done] = i + 1
        active = active[~accepted]
        new_cum = state.p_cum + alpha
        state = GrsState(new_cum, float(np.sum(new_cum)), i + 1)
        i += 1
    if active.size:
        raise SamplerExhaustedError(f"no acceptance within {MAX_ITERATIONS} iterations")
    return elements, iterations


def grs_halting_defect(q: DiscreteDistribution, p: DiscreteDistribution, i: int) -> np.ndarray:
    """q(w) - p_i(w) after running the deterministic recursion through
    step i (steps 0..i inclusive, p_{-1} = 0). Each entry is bounded by
    q(w) (1 - p(w))^i."""
    if i < 0:
        raise ValueError("i must be >= 0")
    state = GrsState.initial(q.size)
    for _ in range(i + 1):
        alpha, _ = _alpha_beta(state, q, p)
        cum = state.p_cum + alpha
        state = GrsState(cum, float(np.sum(cum)), state.iteration + 1)
    return q.probs - state.p_cum


def prefix_code_length(n: int) -> int:
    """Bit length of the Elias-delta code: L + 2*floor(log2(L+1)) + 1 with
    L = floor(log2 n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    nbits = n.bit_length()
    return (nbits - 1) + 2 * (nbits.bit_length() - 1) + 1


def prefix_encode_index(n: int) -> str:
    """Elias delta: Elias-gamma of floor(log2 n)+1, then the low
    floor(log2 n) bits of n. Prefix-free, |l(n)| ~ log n + 2 log log n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    nbits = n.bit_length()
    gamma = "0" * (nbits.bit_length() - 1) + format(nbits, "b")
    return gamma + format(n, "b")[1:]


def prefix_decode_index(bits: str, start: int = 0):
    """Inverse of prefix_encode_index. Returns (n, next position)."""
    pos = start
    zeros = 0
    while pos < len(bits) and bits[pos] == "0":
        zeros += 1
        pos += 1
    if pos >= len(bits):
        raise MalformedCodeError("ran out of bits inside the gamma prefix")
    if pos + zeros + 1 > len(bits):
        raise MalformedCodeError("truncated gamma value")
    nbits = int(bits[pos : pos + zeros + 1], 2)
    pos += zeros + 1
    low = nbits - 1
    if pos + low > len(bits):
        raise MalformedCodeError("truncated mantissa")
    n = 1 << low
    if low:
        n |= int(bits[pos : pos + low], 2)
    return n, pos + low


def _bit_lengths(values: np.ndarray) -> np.ndarray:
    v = values.astype(np.uint64, copy=True)
    out = np.zeros(v.shape, dtype=np.int64)
    while np.any(v):
        out += v > 0
        v >>= np.uint64(1)
    return out


def code_lengths(indices: np.ndarray) -> np.ndarray:
    """Vectorized prefix_code_length over an array of 1-based indices."""
    nbits = _bit_lengths(np.asarray(indices))
    return (nbits - 1) + 2 * (_bit_lengths(nbits) - 1) + 1


def grs_expected_code_length(q: DiscreteDistribution, p: DiscreteDistribution, trials: int, seed: int) -> float:
    """Mean Elias-delta length (bits) of i* over independent sampler runs."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    _, iterations = grs_sample_many(q, p, trials, seed)
    return float(np.mean(code_lengths(iterations)))
