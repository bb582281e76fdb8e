"""Command-line surface: compress, decompress, eval, sweep, diagnostics.

Exit codes: 0 ok, 2 config/data error, 3 compressed-format error,
4 diagnostics failure. Every path runs headlessly with the bundled
fixtures; plots are emitted as CSV for external tooling.
"""

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import bitstream_format as bitstream
from . import diagnostics
from .datasets import DatasetFormatError, load_dataset
from .model_zoo import HashConfig, ModelSpec
from .trainer import ConfigError, TrainConfig, evaluate, run_compression

LN2 = math.log(2.0)

_CONFIG_FIELDS = {
    "coding_goal_nats": ("coding_goal", float),
    "coding_goal_bits": ("coding_goal", lambda v: float(v) * LN2),
    "local_goal_nats": ("local_goal", float),
    "local_goal_bits": ("local_goal", lambda v: float(v) * LN2),
    "init_iterations": ("init_iterations", int),
    "intermediate_iterations": ("intermediate_iterations", int),
    "eps_beta0": ("eps_beta0", float),
    "eps_beta": ("eps_beta", float),
    "learning_rate": ("learning_rate", float),
    "batch_size": ("batch_size", int),
    "root_seed": ("root_seed", int),
    "trainer_seed": ("trainer_seed", int),
    "coder": ("coder", str),
    "init_q_log_std": ("init_q_log_std", float),
    "init_p_log_std": ("init_p_log_std", float),
    "log_every": ("log_every", int),
}


def parse_config_text(text: str):
    """key = value lines (# comments) -> (TrainConfig, ModelSpec)."""
    train_kwargs = {}
    layers = None
    activation = "tanh"
    task = "classification"
    hash_entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key == "layers":
                layers = tuple(int(v) for v in value.split(","))
            elif key == "activation":
                activation = value
            elif key == "task":
                task = value
            elif key.startswith("hash_layer_"):
                l = int(key.rsplit("_", 1)[1])
                buckets, hash_seed = value.split("/")
                hash_entries[l] = HashConfig(int(buckets), int(hash_seed))
            elif key in _CONFIG_FIELDS:
                name, conv = _CONFIG_FIELDS[key]
                train_kwargs[name] = conv(value)
            else:
                raise ConfigError(key, "unknown field")
        except ConfigError:
            raise
        except (ValueError, IndexError) as exc:
            raise ConfigError(key, f"bad value {value!r} ({exc})") from exc
    if layers is None:
        raise ConfigError("layers", "missing (e.g. layers = 2,78,25,2)")
    if "coding_goal" not in train_kwargs:
        raise ConfigError("coding_goal_bits", "missing coding goal")
    if "local_goal" not in train_kwargs:
        raise ConfigError("local_goal_bits", "missing local goal")
    hashes = [hash_entries.get(l) for l in range(len(layers) - 1)]
    if any(l >= len(layers) - 1 or l < 0 for l in hash_entries):
        bad = sorted(l for l in hash_entries if l >= len(layers) - 1 or l < 0)
        raise ConfigError(f"hash_layer_{bad[0]}", "layer index outside the model")
    try:
        spec = ModelSpec(layers, activation, task, tuple(hashes))
        config = TrainConfig(**train_kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        field = "layers" if "layer" in str(exc) or "activation" not in str(exc) else "activation"
        raise ConfigError(field, str(exc)) from exc
    return config, spec


def parse_config_file(path):
    p = Path(path)
    if not p.exists():
        raise ConfigError("config", f"no such file: {path}")
    return parse_config_text(p.read_text())


def _write_weights(out_path, decoded: bitstream.DecodedModel):
    out_path = Path(out_path)
    out_path.write_bytes(decoded.trainable.astype("<f8").tobytes())
    spec = decoded.header.model
    manifest = {
        "layer_sizes": list(spec.layer_sizes),
        "activation": spec.activation,
        "task": spec.task,
        "hash_configs": [
            None if hc is None else {"bucket_count": hc.bucket_count, "hash_seed": hc.hash_seed}
            for hc in spec.hash_configs
        ],
        "n_weights": decoded.header.n_weights,
        "dtype": "<f8",
    }
    Path(str(out_path) + ".manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def _read_weights(path):
    manifest = json.loads(Path(str(path) + ".manifest.json").read_text())
    spec = ModelSpec(
        tuple(manifest["layer_sizes"]),
        manifest["activation"],
        manifest["task"],
        tuple(
            None if hc is None else HashConfig(hc["bucket_count"], hc["hash_seed"])
            for hc in manifest["hash_configs"]
        ),
    )
    w = np.frombuffer(Path(path).read_bytes(), dtype="<f8").copy()
    if w.shape[0] != spec.n_trainable:
        raise DatasetFormatError(
            f"weights file holds {w.shape[0]} values, model needs {spec.n_trainable}"
        )
    return spec, w


def cmd_compress(config_path, data_path, out_path, seed_override=None) -> int:
    config, spec = parse_config_file(config_path)
    if seed_override is not None:
        config = TrainConfig(**{**config.__dict__, "root_seed": seed_override})
    data = load_dataset(data_path, spec.task)
    result = run_compression(config, spec, data)
    raw = bitstream.write(result.compressed)
    Path(out_path).write_bytes(raw)
    Path(str(out_path) + ".log").write_text("\n".join(result.log_lines) + "\n")
    rep = bitstream.size_report(result.compressed)
    print(
        f"wrote {out_path}: {rep['total_bytes']} bytes "
        f"(header {rep['header_bytes']} + payload {rep['payload_bytes']}), "
        f"ratio {rep['ratio']:.1f}x vs 32-bit, budget_warnings={result.n_budget_warnings}"
    )
    return 0


def cmd_decompress(in_path, out_path) -> int:
    raw = Path(in_path).read_bytes()
    decoded = bitstream.decompress(raw)
    _write_weights(out_path, decoded)
    print(f"wrote {out_path} ({decoded.trainable.shape[0]} weights) + manifest")
    return 0


def cmd_eval(weights_path, data_path) -> int:
    spec, w = _read_weights(weights_path)
    data = load_dataset(data_path, spec.task)
    err, mean_ll = evaluate(spec, w, data)
    print(f"error_percent={100.0 * err:.4f}")
    print(f"mean_log_likelihood_nats={mean_ll:.6f}")
    return 0


def cmd_sweep(config_path, data_path, c_nats, out_path=None, test_data_path=None) -> int:
    config, spec = parse_config_file(config_path)
    data = load_dataset(data_path, spec.task)
    if test_data_path is None and data_path == "two-cluster":
        test_data_path = "two-cluster:test"
    test = load_dataset(test_data_path, spec.task) if test_data_path else data
    lines = ["c_nats,file_bytes,compression_ratio,test_error,mean_train_ll,wall_time_s"]
    for c in sorted(c_nats):
        cfg = TrainConfig(**{**config.__dict__, "coding_goal": c})
        t0 = time.perf_counter()
        result = run_compression(cfg, spec, data)
        wall = time.perf_counter() - t0
        rep = bitstream.size_report(result.compressed)
        err, _ = evaluate(spec, result.trainable_weights, test)
        _, train_ll = evaluate(spec, result.trainable_weights, data)
        lines.append(
            f"{c:.6f},{rep['total_bytes']},{rep['ratio']:.4f},{err:.6f},{train_ll:.6f},{wall:.3f}"
        )
    csv = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(csv)
    sys.stdout.write(csv)
    return 0


def cmd_diagnostics(trials_scale: float = 1.0) -> int:
    results = diagnostics.run_all(trials_scale)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 4


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mrcl", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compress", help="train and encode a model")
    c.add_argument("--config", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--seed-override", type=int, default=None)

    d = sub.add_parser("decompress", help="rebuild weights from a compressed file")
    d.add_argument("--in", dest="in_path", required=True)
    d.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="evaluate a decoded weights file")
    e.add_argument("--weights", required=True)
    e.add_argument("--data", required=True)

    s = sub.add_parser("sweep", help="compress at several coding goals, emit CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--c-nats", required=True, help="comma-separated coding goals in nats")
    s.add_argument("--out", default=None)
    s.add_argument("--test-data", default=None)

    g = sub.add_parser("diagnostics", help="run the statistical verification suites")
    g.add_argument("--diag-trials", type=float, default=1.0,
                   help="scale factor on all trial counts")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compress":
            return cmd_compress(args.config, args.data, args.out, args.seed_override)
        if args.command == "decompress":
            return cmd_decompress(args.in_path, args.out)
        if args.command == "eval":
            return cmd_eval(args.weights, args.data)
        if args.command == "sweep":
            c_list = [float(v) for v in args.c_nats.split(",") if v.strip()]
            if not c_list:
                raise ConfigError("c-nats", "empty sweep list")
            return cmd_sweep(args.config, args.data, c_list, args.out, args.test_data)
        if args.command == "diagnostics":
            return cmd_diagnostics(args.diag_trials)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DatasetFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2
    except bitstream.FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    raise AssertionError("unreachable")


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
