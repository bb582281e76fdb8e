"""Bundled desk-scale datasets and dataset IO.

Two loader interfaces: a CSV-like text format (header row, last column is
the target) and a binary fixture format ("MRDS") used for the checked-in
8x8 digit-style set. The two-cluster task is generated deterministically
from a fixed seed at call time, so it needs no fixture file.
"""

import struct
from pathlib import Path

import numpy as np

from .model_zoo import Dataset
from .shared_prng import SampleStream, standard_normals, uniforms_at

DATA_MAGIC = b"MRDS"
TWO_CLUSTER_SEED = 0xDA7A01
DIGITS_SEED = 0xDA7A02

BUNDLED_DIR = Path(__file__).parent / "data"


class DatasetFormatError(ValueError):
    pass


def two_cluster_dataset(n: int = 1000, seed: int = TWO_CLUSTER_SEED, split: str = "train") -> Dataset:
    """Two Gaussian clusters in 2-D at (-1.5, 0) and (+1.5, 0), std 0.5.

    Classes alternate so the set is exactly balanced; train/test splits
    use disjoint stream lanes of the same seed.
    """
    lane = {"train": 0, "test": 1}[split]
    stream = SampleStream(seed, lane)
    z = standard_normals(stream, 2 * n).reshape(n, 2)
    y = np.arange(n, dtype=np.int64) % 2
    centers = np.where(y[:, None] == 0, -1.5, 1.5)
    x = 0.5 * z
    x[:, 0] += centers[:, 0]
    return Dataset(x, y)


_DIGIT_GLYPHS = [
    "0011110001100110110000111100001111000011110000110110011000111100",
    "0001100000111000000110000001100000011000000110000001100001111110",
    "00111100011001100000011000001100000110000011000001100000011111110",
    "0011110001100110000001100001110000000110000001100110011000111100",
    "0000110000011100001111000110110011001100111111100000110000001100",
    "0111111001100000011000000111110000000110000001100110011000111100",
    "0011110001100110011000000111110001100110011001100110011000111100",
    "0111111000000110000011000001100000110000001100000110000001100000",
    "0011110001100110011001100011110001100110011001100110011000111100",
    "0011110001100110011001100110011000111110000001100110011000111100",
]


def _glyph_image(c: int) -> np.ndarray:
    bits = _DIGIT_GLYPHS[c].ljust(64, "0")[:64]
    return np.array([float(ch) for ch in bits]).reshape(8, 8)


def digit_style_dataset(n: int = 900, seed: int = DIGITS_SEED, noise_std: float = 0.25) -> Dataset:
    """8x8 digit-style bitmaps: glyph templates + 1-pixel random shifts +
    Gaussian pixel noise, clipped to [0, 1]. Classes cycle 0..9."""
    shift_stream = SampleStream(seed, 0)
    noise_stream = SampleStream(seed, 1)
    shifts = uniforms_at(shift_stream.block_seed, 0, 2 * n).reshape(n, 2)
    noise = standard_normals(noise_stream, 64 * n).reshape(n, 8, 8)
    x = np.empty((n, 64))
    y = np.arange(n, dtype=np.int64) % 10
    for i in range(n):
        img = _glyph_image(int(y[i]))
        dr = int(shifts[i, 0] * 3) - 1
        dc = int(shifts[i, 1] * 3) - 1
        img = np.roll(np.roll(img, dr, axis=0), dc, axis=1)
        x[i] = np.clip(img + noise_std * noise[i], 0.0, 1.0).ravel()
    return Dataset(x, y)


def save_fixture(path, data: Dataset, task: str = "classification"):
    """Binary fixture writer: magic, version, task, n, d_in, t_cols, then
    float64 inputs row-major and int32/float64 targets."""
    with open(path, "wb") as fh:
        fh.write(DATA_MAGIC)
        task_id = 0 if task == "classification" else 1
        if task_id == 0:
            t_cols = int(data.targets.max()) + 1
        else:
            t_cols = data.targets.shape[1]
        fh.write(struct.pack("<BBIII", 1, task_id, data.n, data.inputs.shape[1], t_cols))
        fh.write(data.inputs.astype("<f8").tobytes())
        if task_id == 0:
            fh.write(data.targets.astype("<i4").tobytes())
        else:
            fh.write(data.targets.astype("<f8").tobytes())


def load_fixture(path) -> Dataset:
    raw = Path(path).read_bytes()
    if raw[:4] != DATA_MAGIC:
        raise DatasetFormatError(f"bad dataset magic {raw[:4]!r}")
    version, task_id, n, d_in, t_cols = struct.unpack_from("<BBIII", raw, 4)
    if version != 1:
        raise DatasetFormatError(f"unknown dataset version {version}")
    off = 4 + struct.calcsize("<BBIII")
    need = n * d_in * 8 + (n * 4 if task_id == 0 else n * t_cols * 8)
    if len(raw) - off < need:
        raise DatasetFormatError("dataset file truncated")
    x = np.frombuffer(raw, dtype="<f8", count=n * d_in, offset=off).reshape(n, d_in)
    off += n * d_in * 8
    if task_id == 0:
        y = np.frombuffer(raw, dtype="<i4", count=n, offset=off).astype(np.int64)
    else:
        y = np.frombuffer(raw, dtype="<f8", count=n * t_cols, offset=off).reshape(n, t_cols)
    return Dataset(x.copy(), y.copy())


def save_csv(path, data: Dataset):
    d = data.inputs.shape[1]
    header = ",".join([f"x{i}" for i in range(d)] + ["y"])
    is_classif = data.targets.dtype.kind in "iu"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(data.n):
            row = ",".join(repr(float(v)) for v in data.inputs[i])
            if is_classif:
                fh.write(f"{row},{int(data.targets[i])}\n")
            else:
                fh.write(f"{row},{float(data.targets[i, 0])!r}\n")


def load_csv(path, task: str = "classification") -> Dataset:
    with open(path) as fh:
        header = fh.readline()
        if not header.strip():
            raise DatasetFormatError("empty CSV file")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows:
        raise DatasetFormatError("CSV has a header but no rows")
    try:
        x = np.array([[float(v) for v in r[:-1]] for r in rows])
        if task == "classification":
            y = np.array([int(float(r[-1])) for r in rows], dtype=np.int64)
        else:
            y = np.array([[float(r[-1])] for r in rows])
    except ValueError as exc:
        raise DatasetFormatError(f"unparseable CSV cell: {exc}") from exc
    return Dataset(x, y)


def load_dataset(path, task: str = "classification") -> Dataset:
    """Dispatch on extension: .mrds binary fixture, anything else CSV.
    The names 'two-cluster[:test]' and 'digits' load the bundled sets."""
    name = str(path)
    if name == "two-cluster":
        return two_cluster_dataset()
    if name == "two-cluster:test":
        return two_cluster_dataset(n=2000, split="test")
    if name == "digits":
        return load_fixture(BUNDLED_DIR / "digits8x8.mrds")
    if name.endswith(".mrds"):
        return load_fixture(path)
    return load_csv(path, task)
