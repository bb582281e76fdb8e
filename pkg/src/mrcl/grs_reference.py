"""Reference coder: per-coordinate greedy rejection sampling on a
quantized grid.

Each weight coordinate's encoding distribution N(0, sigma_p^2) is cut into
m equal-probability bins, making the discrete proposal distribution
uniform and the grid derivable by the decoder from the file header alone.
The coordinate's variational marginal is projected onto the same bins and
the accepted proposal index is transmitted with the Elias-delta code. This
path exists as an exact, per-scalar alternative to the block index coder;
it is not the main pipeline.
"""

import math
from functools import lru_cache

import numpy as np

from .grs_sampler import DiscreteDistribution, grs_sample
from .shared_prng import SampleStream, uniform64_stream

GRID_SIZE = 256

# Acklam's rational approximation for the standard normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def std_normal_quantile(p: float) -> float:
    """Inverse standard-normal CDF, refined to ~1 ulp via Halley steps on
    erfc. Deterministic scalar arithmetic only."""
    if not 0.0 < p < 1.0:
        raise ValueError("quantile argument must lie in (0, 1)")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    for _ in range(2):
        e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
        u = e * _SQRT_2PI * math.exp(0.5 * x * x)
        x -= u / (1.0 + 0.5 * x * u)
    return x


def _std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@lru_cache(maxsize=8)
def _grid(m: int):
    """(interior edges, bin centers) of the standard-normal equal-mass grid."""
    edges = np.array([std_normal_quantile(i / m) for i in range(1, m)])
    centers = np.array([std_normal_quantile((i + 0.5) / m) for i in range(m)])
    return edges, centers


@lru_cache(maxsize=8)
def uniform_grid_distribution(m: int) -> DiscreteDistribution:
    return DiscreteDistribution(np.full(m, 1.0 / m))


def decode_grid_value(sigma_p: float, element: int, m: int = GRID_SIZE) -> float:
    """Representative weight value of a bin: sigma_p * center (p mean is 0)."""
    _, centers = _grid(m)
    return float(sigma_p * centers[element])


def coordinate_target(mu_q: float, sigma_q: float, sigma_p: float, m: int = GRID_SIZE) -> DiscreteDistribution:
    """Variational marginal mass per grid bin, normalized to sum exactly 1."""
    edges, _ = _grid(m)
    cdf = np.empty(m + 1)
    cdf[0], cdf[m] = 0.0, 1.0
    for i, e in enumerate(edges):
        cdf[i + 1] = _std_normal_cdf((sigma_p * e - mu_q) / sigma_q)
    mass = np.diff(cdf)
    np.maximum(mass, 0.0, out=mass)
    return DiscreteDistribution.normalized(mass)


def encode_coordinate(
    mu_q: float,
    sigma_q: float,
    sigma_p: float,
    proposal_stream: SampleStream,
    accept_stream: SampleStream,
    m: int = GRID_SIZE,
):
    """Returns (1-based accepted index i*, decoded weight value)."""
    q_disc = coordinate_target(mu_q, sigma_q, sigma_p, m)
    element, i_star = grs_sample(q_disc, uniform_grid_distribution(m), proposal_stream, accept_stream)
    return i_star, decode_grid_value(sigma_p, element, m)


def decode_coordinate(sigma_p: float, proposal_stream: SampleStream, i_star: int, m: int = GRID_SIZE) -> float:
    """Regenerate the accepted proposal: one uniform at counter i*-1."""
    if i_star < 1:
        raise ValueError("accepted index is 1-based")
    u = uniform64_stream(proposal_stream.block_seed, proposal_stream.counter + i_star - 1)
    element = uniform_grid_distribution(m).draw_index(u)
    return decode_grid_value(sigma_p, element, m)
