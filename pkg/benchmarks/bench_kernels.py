"""Throughput comparison: compiled kernels vs the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--quick]

Covers the three hot kernels plus an end-to-end block encode shaped like
the bundled size-contract config (d=90, K=2^20). The same numbers decide
whether building the extension is worth it on a given host.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mrcl import _kernels_py  # noqa: E402

try:
    from mrcl import _kernels_c
except ImportError:
    _kernels_c = None


def _rate(fn, n_items, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return n_items / best / 1e6


def bench_backend(mod, k_samples, d):
    n_uni = 2 * k_samples * d
    n_norm = k_samples * d
    qm = np.linspace(-0.3, 0.3, d)
    qls = np.linspace(-2.0, -0.5, d)
    pm = np.zeros(d)
    ps = np.full(d, 0.7)
    qiv = 0.5 * np.exp(-2.0 * qls)
    c0 = float(np.sum(np.log(ps)) - np.sum(qls))
    return {
        "uniforms M/s": _rate(lambda: mod.uniforms(7, 0, n_uni), n_uni),
        "normals M/s": _rate(lambda: mod.normals(7, 0, n_norm), n_norm),
        "block log-weights M normals/s": _rate(
            lambda: mod.log_weight_samples_from_p(7, 0, k_samples, pm, ps, qm, qiv, c0),
            n_norm,
        ),
    }


def bench_encode(backend_env, k_bits, d):
    """Full encode_block wall time in a subprocess-free way: flip the
    selection by reloading mrcl.kernels with the env override."""
    import importlib
    import os

    import mrcl.kernels

    old = os.environ.pop("MRCL_FORCE_PY", None)
    if backend_env:
        os.environ["MRCL_FORCE_PY"] = "1"
    importlib.reload(mrcl.kernels)
    import mrcl.mrc_codec

    importlib.reload(mrcl.mrc_codec)
    from mrcl.core_distributions import DiagonalGaussian
    from mrcl.shared_prng import SampleStream

    rng = np.random.default_rng(0)
    q = DiagonalGaussian(rng.normal(0, 0.3, d), rng.uniform(-2, -1, d))
    p = DiagonalGaussian(np.zeros(d), np.full(d, -0.4))
    t0 = time.perf_counter()
    mrcl.mrc_codec.encode_block(q, p, SampleStream(1, 0), 1 << k_bits, 0.5)
    wall = time.perf_counter() - t0
    if old is None:
        os.environ.pop("MRCL_FORCE_PY", None)
    else:
        os.environ["MRCL_FORCE_PY"] = old
    importlib.reload(mrcl.kernels)
    importlib.reload(mrcl.mrc_codec)
    return wall


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller sizes")
    args = ap.parse_args()
    k_samples = 1 << (14 if args.quick else 17)
    d = 90
    k_bits = 14 if args.quick else 20

    backends = [("python", _kernels_py)]
    if _kernels_c is not None:
        backends.append(("c", _kernels_c))
    else:
        print("compiled backend not built (pip install -e . or "
              "python setup.py build_ext --inplace)")

    rows = {name: bench_backend(mod, k_samples, d) for name, mod in backends}
    metrics = list(next(iter(rows.values())))
    width = max(len(m) for m in metrics)
    print(f"{'metric':<{width}}  " + "  ".join(f"{n:>10}" for n in rows))
    for m in metrics:
        print(f"{m:<{width}}  " + "  ".join(f"{rows[n][m]:10.1f}" for n in rows))

    print(f"\nencode_block, d={d}, K=2^{k_bits}:")
    print(f"  python   {bench_encode(True, k_bits, d):7.2f}s")
    if _kernels_c is not None:
        print(f"  compiled {bench_encode(False, k_bits, d):7.2f}s")


if __name__ == "__main__":
    main()
