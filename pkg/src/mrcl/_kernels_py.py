"""Numpy fallback for the sample-generation hot kernels.

Only the transcendental-bearing kernels live behind the backend switch
(Box-Muller normals and the fused per-sample log-weight accumulators); all
integer/uniform machinery is exact and backend-independent. Buffers are
allocated per call so concurrent callers never share scratch memory.
"""

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_PI = 6.283185307179586
_INV53 = 2.0 ** -53

# chunk sizes keep scratch in cache; values are not load-bearing
_UCHUNK = 1 << 17
_WCHUNK_ELEMS = 1 << 18

_err = np.seterr(over="ignore")  # uint64 wraparound is intentional
np.seterr(**_err)


def _mix_inplace(x):
    x ^= x >> _S30
    x *= _M1
    x ^= x >> _S27
    x *= _M2
    x ^= x >> _S31
    return x


def _uniform_chunk(seed, start, n, out):
    """out[i] = (mix(seed + (start+i)*GOLDEN) >> 11) * 2^-53, exactly."""
    with np.errstate(over="ignore"):
        buf = np.arange(start, start + n, dtype=np.uint64)
        buf *= _GOLDEN
        buf += np.uint64(seed)
        _mix_inplace(buf)
        buf >>= _S11
    np.multiply(buf, _INV53, casting="unsafe", out=out)
    return out


def uniforms(seed, start, n):
    out = np.empty(n, dtype=np.float64)
    for off in range(0, n, _UCHUNK):
        m = min(_UCHUNK, n - off)
        _uniform_chunk(seed, start + off, m, out[off : off + m])
    return out


def _normals_chunk(seed, start, n, out):
    # counters [start, start+2n); start must be even-aligned by the caller
    u = uniforms(seed, start, 2 * n).reshape(n, 2)
    u1 = u[:, 0].copy()
    u2 = u[:, 1].copy()
    np.negative(u1, out=u1)
    np.log1p(u1, out=u1)       # log(1 - u1), safe at u1 = 0
    u1 *= -2.0
    np.sqrt(u1, out=u1)
    u2 *= _TWO_PI
    np.cos(u2, out=u2)
    np.multiply(u1, u2, out=out)
    return out


def normals(seed, start, n):
    """n standard normals; normal i consumes counters (start+2i, start+2i+1)."""
    out = np.empty(n, dtype=np.float64)
    half = _UCHUNK >> 1
    for off in range(0, n, half):
        m = min(half, n - off)
        _normals_chunk(seed, start + 2 * off, m, out[off : off + m])
    return out


def log_weight_samples_from_p(seed, start, n_samples, p_mean, p_std, q_mean, q_inv2var, const_term):
    """Importance log-weights log q(w_k) - log p(w_k) for w_k drawn from p.

    Sample k occupies counters [start + 2dk, start + 2d(k+1)). With
    w = p_mean + p_std*z the p-density quadratic reduces to z^2/2:

        lw_k = const + sum_j [ z_j^2/2 - (w_j - q_mean_j)^2 * q_inv2var_j ]

    where const = sum_j (p_log_std_j - q_log_std_j) is precomputed by the
    caller (exp/log of the parameters never happens inside the kernel, so
    regeneration arithmetic stays bit-identical to the numpy path).
    """
    d = p_mean.shape[0]
    out = np.empty(n_samples, dtype=np.float64)
    chunk = max(1, _WCHUNK_ELEMS // max(d, 1))
    for off in range(0, n_samples, chunk):
        m = min(chunk, n_samples - off)
        z = normals(seed, start + 2 * d * off, m * d).reshape(m, d)
        w = z * p_std
        w += p_mean
        w -= q_mean
        np.square(w, out=w)
        w *= q_inv2var
        np.square(z, out=z)
        z *= 0.5
        z -= w
        np.sum(z, axis=1, out=out[off : off + m])
    out += const_term
    return out


def log_ratio_samples_from_q(seed, start, n_samples, q_mean, q_std, p_mean, p_inv2var, const_term):
    """log q(w) - log p(w) for w drawn from q; mirror of the p-sample kernel.

        lr = const + sum_j [ (w_j - p_mean_j)^2 * p_inv2var_j - z_j^2/2 ]
    """
    d = q_mean.shape[0]
    out = np.empty(n_samples, dtype=np.float64)
    chunk = max(1, _WCHUNK_ELEMS // max(d, 1))
    for off in range(0, n_samples, chunk):
        m = min(chunk, n_samples - off)
        z = normals(seed, start + 2 * d * off, m * d).reshape(m, d)
        w = z * q_std
        w += q_mean
        w -= p_mean
        np.square(w, out=w)
        w *= p_inv2var
        np.square(z, out=z)
        z *= 0.5
        np.subtract(w, z, out=w)
        np.sum(w, axis=1, out=out[off : off + m])
    out += const_term
    return out
