"""Diagonal-Gaussian distributions: log-densities, analytic KL, and a
Monte-Carlo KL oracle.

All information quantities are in nats throughout the library; conversion
to bits happens only at the format/CLI boundary (1 nat = log2(e) bits).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .shared_prng import derive_block_seed

LOG_STD_MIN = -23.0
LOG_STD_MAX = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

NATS_TO_BITS = 1.0 / math.log(2.0)


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class DiagonalGaussian:
    """Mean/log-std vector pair; the density factorizes over coordinates.

    log_std is the unconstrained parameterization (avoids sigma <= 0) and
    is clamped to [-23, 10] so exp(log_std) is always finite and positive.
    """

    mean: np.ndarray
    log_std: np.ndarray
    std: np.ndarray = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        # copy before freezing: the instance must not make the caller's
        # arrays read-only as a side effect
        mean = np.atleast_1d(np.array(self.mean, dtype=np.float64))
        log_std = np.atleast_1d(np.array(self.log_std, dtype=np.float64))
        if mean.ndim != 1 or log_std.ndim != 1 or mean.shape != log_std.shape:
            raise DimensionMismatchError(
                f"mean and log_std must be equal-length vectors, got {mean.shape} vs {log_std.shape}"
            )
        if mean.shape[0] < 1:
            raise DimensionMismatchError("dimension must be >= 1")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(log_std))):
            raise ValueError("non-finite distribution parameters")
        log_std = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
        mean.flags.writeable = False
        log_std.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_std", log_std)
        std = np.exp(log_std)
        std.flags.writeable = False
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def standard(cls, dim: int) -> "DiagonalGaussian":
        return cls(np.zeros(dim), np.zeros(dim))

    @classmethod
    def from_std(cls, mean, std) -> "DiagonalGaussian":
        std = np.atleast_1d(np.asarray(std, dtype=np.float64))
        return cls(mean, np.log(std))


def _check_same_dim(a: DiagonalGaussian, b: DiagonalGaussian):
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} vs {b.dim}")


def log_density(g: DiagonalGaussian, w) -> float:
    """log N(w; mean, diag(std^2)) = sum_i [-log s_i - log(2*pi)/2 - (w_i-m_i)^2/(2 s_i^2)]."""
    w = np.atleast_1d(np.asarray(w, dtype=np.float64))
    if w.shape != g.mean.shape:
        raise DimensionMismatchError(f"sample has shape {w.shape}, expected {g.mean.shape}")
    zeta = (w - g.mean) / g.std
    return float(np.sum(-g.log_std - _HALF_LOG_2PI - 0.5 * zeta * zeta))


def kl_elementwise(q_mean, q_log_std, p_mean, p_log_std) -> np.ndarray:
    """Per-coordinate KL(N(qm, qs^2) || N(pm, ps^2)) in nats.

    kl_i = log(ps/qs) + (qs^2 + (qm - pm)^2) / (2 ps^2) - 1/2
    """
    q_var = np.exp(2.0 * np.asarray(q_log_std, dtype=np.float64))
    p_var = np.exp(2.0 * np.asarray(p_log_std, dtype=np.float64))
    dm = np.asarray(q_mean, dtype=np.float64) - np.asarray(p_mean, dtype=np.float64)
    return (p_log_std - np.asarray(q_log_std)) + (q_var + dm * dm) / (2.0 * p_var) - 0.5


def kl_divergence(q: DiagonalGaussian, p: DiagonalGaussian) -> float:
    """Analytic KL(q || p) in nats; additive over coordinates, >= 0."""
    _check_same_dim(q, p)
    return float(np.sum(kl_elementwise(q.mean, q.log_std, p.mean, p.log_std)))


def _log_ratio_samples_two_density(q: DiagonalGaussian, p: DiagonalGaussian, n: int, seed: int) -> np.ndarray:
    """log q(w) - log p(w) for n samples w ~ q, both densities evaluated
    with the same expression so the difference is exactly 0 when q == p.

    Deliberately independent of the codec's fused log-weight kernel: this
    is the oracle path.
    """
    _check_same_dim(q, p)
    d = q.dim
    block_seed = derive_block_seed(seed, 0)
    out = np.empty(n, dtype=np.float64)
    chunk = max(1, (1 << 18) // d)
    lq_const = float(np.sum(-q.log_std - _HALF_LOG_2PI))
    lp_const = float(np.sum(-p.log_std - _HALF_LOG_2PI))
    for off in range(0, n, chunk):
        m = min(chunk, n - off)
        z = kernels.normals(block_seed, 2 * d * off, m * d).reshape(m, d)
        w = q.mean + q.std * z
        zq = (w - q.mean) / q.std
        zp = (w - p.mean) / p.std
        lq = lq_const - 0.5 * np.sum(zq * zq, axis=1)
        lp = lp_const - 0.5 * np.sum(zp * zp, axis=1)
        out[off : off + m] = lq - lp
    return out


def kl_monte_carlo(q: DiagonalGaussian, p: DiagonalGaussian, n_samples: int, seed: int) -> float:
    """Unbiased sample-mean estimate of KL(q || p); deterministic in seed.

    Serves as the independent oracle for kl_divergence. Exactly zero for
    q == p since every per-sample term cancels bit-for-bit.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    return float(np.mean(_log_ratio_samples_two_density(q, p, n_samples, seed)))


def kl_monte_carlo_stats(q: DiagonalGaussian, p: DiagonalGaussian, n_samples: int, seed: int):
    """(estimate, standard error) of the Monte-Carlo KL; plumbing for the
    4-standard-error oracle agreement checks."""
    r = _log_ratio_samples_two_density(q, p, n_samples, seed)
    return float(np.mean(r)), float(np.std(r) / math.sqrt(n_samples))
