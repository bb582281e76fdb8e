"""Statistical verification suites behind the `diagnostics` CLI command.

Each suite runs with fixed seeds (identical report on every invocation)
and returns one row per check; the CLI prints them and fails the process
if any row fails. The trials arguments only scale effort, never the
acceptance thresholds.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import grs_reference, kernels, mrc_codec
from .core_distributions import DiagonalGaussian, kl_divergence
from .grs_sampler import (
    DiscreteDistribution,
    code_lengths,
    grs_halting_defect,
    grs_sample_many,
    prefix_code_length,
    prefix_encode_index,
)
from .shared_prng import derive_block_seed, uniforms_at

LOG2E = 1.0 / math.log(2.0)


@dataclass(frozen=True)
class DiagnosticResult:
    name: str
    passed: bool
    details: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.details}"


def _proxy_bias_pair():
    q = DiagonalGaussian(np.array([0.5]), np.log([0.25]))
    p = DiagonalGaussian.standard(1)
    return q, p


def proxy_bias_check(trials: int = 1000, tail_n: int = 100_000, t: float = 4.0,
                     seed: int = 0xB1A5) -> DiagnosticResult:
    """Proxy-bias rate vs the epsilon bound.

    Builds `trials` independent proxies with K = ceil(exp(KL + t)) samples
    and counts how often |E_proxy[w] - E_q[w]| reaches the bound
    2*||f||*eps/(1-eps); the rate must stay within 2*eps plus three
    binomial standard deviations.
    """
    q, p = _proxy_bias_pair()
    kl = kl_divergence(q, p)
    K = math.ceil(math.exp(kl + t))
    tail = mrc_codec.estimate_log_ratio_tail(q, p, kl + t / 2.0, tail_n, seed)
    eps = mrc_codec.bias_bound_epsilon(t, tail)
    f_norm = math.sqrt(float(q.mean[0]) ** 2 + float(q.std[0]) ** 2)
    threshold = 2.0 * f_norm * eps / (1.0 - eps)
    true_mean = float(q.mean[0])

    const = float(p.log_std[0] - q.log_std[0])
    q_inv2var = 0.5 * math.exp(-2.0 * float(q.log_std[0]))
    events = 0
    for trial in range(trials):
        stream_seed = derive_block_seed(seed, 2 + trial)
        z = kernels.normals(stream_seed, 0, K)
        w = p.mean[0] + p.std[0] * z
        lw = kernels.log_weight_samples_from_p(
            stream_seed, 0, K, p.mean, p.std, q.mean, np.array([q_inv2var]), const
        )
        proxy = mrc_codec.ProxyDistribution.from_log_weights(lw)
        if abs(proxy.expectation(w) - true_mean) >= threshold:
            events += 1
    rate = events / trials
    bound = min(1.0, 2.0 * eps)
    slack = 3.0 * math.sqrt(max(bound * (1.0 - bound), 1e-12) / trials)
    ok = rate <= bound + slack
    return DiagnosticResult(
        "proxy-bias",
        ok,
        f"K={K} tail={tail:.4f} eps={eps:.4f} event_rate={rate:.4f} "
        f"allowed={bound:.4f}+{slack:.4f}",
    )


def _seeded_distribution(seed: int, lane: int, m: int, floor: float) -> DiscreteDistribution:
    u = uniforms_at(derive_block_seed(seed, lane), 0, m)
    return DiscreteDistribution.normalized(floor + (1.0 - floor) * u)


def grs_unbiasedness_check(n_pairs: int = 20, trials: int = 1_000_000,
                           seed: int = 0x6B5) -> DiagnosticResult:
    """Empirical output distribution vs the target, and the halting bound
    q - p_i <= q(1-p)^i checked exactly along the recursion."""
    worst_tv = 0.0
    worst_defect = 0.0
    for pair in range(n_pairs):
        m = 2 + int(uniforms_at(derive_block_seed(seed, 1000 + pair), 0, 1)[0] * 7)  # 2..8
        q = _seeded_distribution(seed, 2 * pair, m, 0.05)
        p = _seeded_distribution(seed, 2 * pair + 1, m, 0.1)  # min p >= 0.1/m >= 0.0125
        elements, _ = grs_sample_many(q, p, trials, derive_block_seed(seed, 4000 + pair))
        emp = np.bincount(elements, minlength=m) / trials
        worst_tv = max(worst_tv, 0.5 * float(np.abs(emp - q.probs).sum()))
        for i in (0, 1, 2, 4, 8, 16, 32, 64):
            defect = grs_halting_defect(q, p, i)
            bound = q.probs * (1.0 - p.probs) ** i
            worst_defect = max(worst_defect, float(np.max(defect - bound)))
    tv_limit = 0.01
    if trials < 1_000_000:
        # the 0.01 criterion is calibrated for 1e6 trials; scaled-down
        # smoke runs get a sampling-noise allowance on top
        tv_limit += 2.0 * math.sqrt(8.0 / trials)
    ok = worst_tv < tv_limit and worst_defect <= 1e-12
    return DiagnosticResult(
        "grs-unbiasedness",
        ok,
        f"pairs={n_pairs} trials={trials} worst_tv={worst_tv:.5f} (limit {tv_limit:.5f}) "
        f"worst_halting_defect_excess={worst_defect:.2e}",
    )


def discrete_kl_bits(q: DiscreteDistribution, p: DiscreteDistribution) -> float:
    mask = q.probs > 0
    return float(np.sum(q.probs[mask] * np.log(q.probs[mask] / p.probs[mask]))) * LOG2E


def grs_coding_length_check(n_pairs: int = 50, m: int = 16, trials: int = 4000,
                            seed: int = 0xC0DE) -> DiagnosticResult:
    """Measured mean Elias-delta length vs KL_bits + 2 log2(KL_bits+1) + 6;
    the max observed constant is reported alongside."""
    max_constant = -math.inf
    ok = True
    for pair in range(n_pairs):
        u = uniforms_at(derive_block_seed(seed, pair), 0, m)
        q = DiscreteDistribution.normalized(u * u + 1e-4)  # spiky target
        p = _seeded_distribution(seed, 10_000 + pair, m, 0.25)
        kl_bits = discrete_kl_bits(q, p)
        measured = float(np.mean(code_lengths(
            grs_sample_many(q, p, trials, derive_block_seed(seed, 20_000 + pair))[1]
        )))
        constant = measured - kl_bits - 2.0 * math.log2(kl_bits + 1.0)
        max_constant = max(max_constant, constant)
        if constant > 6.0:
            ok = False
    return DiagnosticResult(
        "grs-coding-length",
        ok,
        f"pairs={n_pairs} m={m} trials={trials} max_constant={max_constant:.3f} (allowed 6.0)",
    )


def prefix_code_check(length_limit: int = 1_000_000, prefix_limit: int = 1 << 14) -> DiagnosticResult:
    """Length bound |l(n)| <= log2(n) + 2 log2(log2(n)+1) + 4 for n up to
    the limit, and exhaustive prefix-freeness on the small range.

    The closed-form length is cross-checked against the constructed
    bitstring on the exhaustive range, then used for the full scan.
    """
    codes = []
    for n in range(1, prefix_limit + 1):
        c = prefix_encode_index(n)
        if len(c) != prefix_code_length(n):
            return DiagnosticResult("prefix-code", False, f"length formula mismatch at n={n}")
        codes.append(c)
    code_set = set(codes)
    for c in codes:
        for cut in range(1, len(c)):
            if c[:cut] in code_set:
                return DiagnosticResult("prefix-code", False, f"prefix collision at {c!r}")
    ns = np.arange(1, length_limit + 1, dtype=np.uint64)
    lengths = code_lengths(ns)
    log2n = np.log2(ns.astype(np.float64))
    bound = log2n + 2.0 * np.log2(log2n + 1.0) + 4.0
    ok = bool(np.all(lengths <= bound))
    worst = float(np.max(lengths - bound))
    return DiagnosticResult(
        "prefix-code",
        ok,
        f"n<=10^6 max(length-bound)={worst:.3f} prefix-free<=2^14=yes",
    )


def coding_length_comparison(trials: int = 4000, seed: int = 0x7E57) -> DiagnosticResult:
    """Side-by-side coding cost for both coders on Gaussian pairs.

    Block coder: whole-bit message k_bits vs the KL-based upper bound.
    Reference coder: measured Elias-delta length on the quantized pair vs
    its own bound. Reported in bits; PASS requires both within bounds.
    """
    rows = []
    ok = True
    for i, (mu, sq, sp) in enumerate(((0.4, 0.5, 1.0), (1.0, 0.25, 0.8), (0.1, 0.8, 1.2))):
        q = DiagonalGaussian(np.array([mu]), np.log([sq]))
        p = DiagonalGaussian(np.zeros(1), np.log([sp]))
        kl = kl_divergence(q, p)
        lower, upper = mrc_codec.coding_length_bounds(kl)
        mrc_bits = mrc_codec.k_bits_for(kl)
        qd = grs_reference.coordinate_target(mu, sq, sp, 64)
        pd = grs_reference.uniform_grid_distribution(64)
        kl_disc_bits = discrete_kl_bits(qd, pd)
        grs_bits = float(np.mean(code_lengths(
            grs_sample_many(qd, pd, trials, derive_block_seed(seed, i))[1]
        )))
        grs_bound = kl_disc_bits + 2.0 * math.log2(kl_disc_bits + 1.0) + 6.0
        if mrc_bits > upper * LOG2E or grs_bits > grs_bound:
            ok = False
        rows.append(
            f"kl={kl * LOG2E:.2f}b mrc={mrc_bits}b<= {upper * LOG2E:.2f}b "
            f"grs={grs_bits:.2f}b<= {grs_bound:.2f}b"
        )
    return DiagnosticResult("coding-length-comparison", ok, " | ".join(rows))


def run_all(trials_scale: float = 1.0) -> list:
    s = max(trials_scale, 1e-3)
    return [
        proxy_bias_check(trials=max(100, int(1000 * s)), tail_n=max(1000, int(100_000 * s))),
        grs_unbiasedness_check(trials=max(10_000, int(1_000_000 * s))),
        grs_coding_length_check(trials=max(200, int(4000 * s))),
        prefix_code_check(length_limit=max(1000, int(1_000_000 * s))),
        coding_length_comparison(trials=max(200, int(4000 * s))),
    ]
