"""Bit-exact serialization of a compressed model.

Layout (all multi-byte integers little-endian, floats IEEE-754 binary64):

    offset  field
    0       magic "MRCL" (4 bytes)
    4       version u8 (currently 1)
    5       coder u8 (0 = fixed-width block indices, 1 = GRS/Elias-delta)
    6       root_seed u64
    14      n_sizes u8, then n_sizes * u32 layer sizes
    ..      activation u8 (0 tanh, 1 relu), task u8 (0 classif, 1 regr)
    ..      per weight layer: has_hash u8 [+ bucket_count u32 + hash_seed u64]
    ..      per weight layer: p log-std f64
    ..      n_weights u32, B u32, k_bits u8, payload_nbytes u32
    ..      payload, bits packed MSB-first, zero-padded to a byte boundary

The header alone determines the decoder's partition, sample streams and
encoding distribution; the payload is B indices of k_bits each (coder 0)
or one Elias-delta code per weight coordinate in partition order (coder 1).
"""

import struct
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import grs_reference, mrc_codec
from .grs_sampler import prefix_code_length, prefix_decode_index, prefix_encode_index
from .model_zoo import ACTIVATIONS, TASKS, HashConfig, ModelSpec, expand_hashed_weights
from .shared_prng import SampleStream

MAGIC = b"MRCL"
VERSION = 1
_CODER_IDS = {"mrc": 0, "grs": 1}
_CODER_NAMES = {v: k for k, v in _CODER_IDS.items()}


class FormatError(ValueError):
    exit_code = 3


class BadMagicError(FormatError):
    pass


class UnknownVersionError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class BitWriter:
    """MSB-first bit packer."""

    def __init__(self):
        self._bytes = bytearray()
        self._acc = 0
        self._nacc = 0
        self.bit_length = 0

    def write_uint(self, value: int, nbits: int):
        if value < 0 or value >> nbits:
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self._acc = (self._acc << nbits) | value
        self._nacc += nbits
        self.bit_length += nbits
        while self._nacc >= 8:
            self._nacc -= 8
            self._bytes.append((self._acc >> self._nacc) & 0xFF)
        self._acc &= (1 << self._nacc) - 1

    def write_bitstring(self, bits: str):
        for ch in bits:
            self.write_uint(1 if ch == "1" else 0, 1)

    def getvalue(self) -> bytes:
        if self._nacc:
            return bytes(self._bytes) + bytes([(self._acc << (8 - self._nacc)) & 0xFF])
        return bytes(self._bytes)


class BitReader:
    """MSB-first bit unpacker with hard bounds."""

    def __init__(self, data: bytes):
        self._data = data
        self.pos = 0
        self.nbits = 8 * len(data)

    def read_uint(self, nbits: int) -> int:
        if self.pos + nbits > self.nbits:
            raise TruncatedPayloadError("payload ended mid-field")
        v = 0
        pos = self.pos
        for _ in range(nbits):
            v = (v << 1) | ((self._data[pos >> 3] >> (7 - (pos & 7))) & 1)
            pos += 1
        self.pos = pos
        return v

    def as_bitstring(self) -> str:
        return "".join(f"{b:08b}" for b in self._data)


@dataclass(frozen=True, eq=False)
class CompressedModel:
    """The wire artifact: header plus per-block sample indices."""

    root_seed: int
    model: ModelSpec
    p_log_std: np.ndarray
    n_weights: int
    n_blocks: int
    k_bits: int
    coder: str = "mrc"
    indices: Optional[np.ndarray] = None
    grs_indices: Optional[list] = None

    def __post_init__(self):
        if self.coder not in _CODER_IDS:
            raise ValueError(f"unknown coder {self.coder!r}")
        if self.n_weights != self.model.n_trainable:
            raise ValueError(
                f"n_weights {self.n_weights} != model trainable count {self.model.n_trainable}"
            )
        object.__setattr__(self, "p_log_std", np.asarray(self.p_log_std, dtype=np.float64))
        if len(self.p_log_std) != self.model.n_weight_layers:
            raise ValueError("one p log-std per weight layer required")
        if self.coder == "mrc":
            idx = np.asarray(self.indices if self.indices is not None else [], dtype=np.int64)
            if idx.shape != (self.n_blocks,):
                raise ValueError(f"expected {self.n_blocks} indices, got {idx.shape}")
            if self.n_blocks and (idx.min() < 0 or idx.max() >= 1 << self.k_bits):
                raise ValueError("index outside k_bits range")
            object.__setattr__(self, "indices", idx)

    def payload_bits(self) -> int:
        if self.coder == "mrc":
            return self.n_blocks * self.k_bits
        return sum(prefix_code_length(int(i)) for blk in self.grs_indices for i in blk)


def _pack_payload(model: CompressedModel) -> bytes:
    w = BitWriter()
    if model.coder == "mrc":
        for idx in model.indices:
            w.write_uint(int(idx), model.k_bits)
    else:
        for blk in model.grs_indices:
            for i_star in blk:
                w.write_bitstring(prefix_encode_index(int(i_star)))
    return w.getvalue()


def write(model: CompressedModel) -> bytes:
    """Serialize; read(write(m)) == m exactly."""
    spec = model.model
    out = bytearray()
    out += MAGIC
    out += struct.pack("<BB", VERSION, _CODER_IDS[model.coder])
    out += struct.pack("<Q", model.root_seed)
    out += struct.pack("<B", len(spec.layer_sizes))
    out += struct.pack(f"<{len(spec.layer_sizes)}I", *spec.layer_sizes)
    out += struct.pack("<BB", ACTIVATIONS.index(spec.activation), TASKS.index(spec.task))
    for hc in spec.hash_configs:
        if hc is None:
            out += struct.pack("<B", 0)
        else:
            out += struct.pack("<BIQ", 1, hc.bucket_count, hc.hash_seed)
    out += struct.pack(f"<{spec.n_weight_layers}d", *model.p_log_std)
    payload = _pack_payload(model)
    out += struct.pack("<IIBI", model.n_weights, model.n_blocks, model.k_bits, len(payload))
    out += payload
    return bytes(out)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.off + size > len(self.data):
            raise TruncatedPayloadError(f"file ended inside header field {fmt!r}")
        vals = struct.unpack_from(fmt, self.data, self.off)
        self.off += size
        return vals


def read(data: bytes) -> CompressedModel:
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}")
    cur = _Cursor(data)
    cur.off = 4
    version, coder_id = cur.take("<BB")
    if version != VERSION:
        raise UnknownVersionError(f"unknown format version {version}")
    if coder_id not in _CODER_NAMES:
        raise FormatError(f"unknown coder id {coder_id}")
    (root_seed,) = cur.take("<Q")
    (n_sizes,) = cur.take("<B")
    sizes = cur.take(f"<{n_sizes}I")
    act_id, task_id = cur.take("<BB")
    if act_id >= len(ACTIVATIONS) or task_id >= len(TASKS):
        raise FormatError(f"unknown activation/task ids ({act_id}, {task_id})")
    hashes = []
    for _ in range(n_sizes - 1):
        (flag,) = cur.take("<B")
        if flag == 0:
            hashes.append(None)
        else:
            bc, hs = cur.take("<IQ")
            hashes.append(HashConfig(bc, hs))
    p_log_std = np.array(cur.take(f"<{n_sizes - 1}d"))
    n_weights, n_blocks, k_bits, payload_nbytes = cur.take("<IIBI")
    payload = data[cur.off : cur.off + payload_nbytes]
    if len(payload) < payload_nbytes:
        raise TruncatedPayloadError(
            f"payload truncated: header promises {payload_nbytes} bytes, {len(payload)} present"
        )
    spec = ModelSpec(tuple(sizes), ACTIVATIONS[act_id], TASKS[task_id], tuple(hashes))
    coder = _CODER_NAMES[coder_id]
    indices = None
    grs_indices = None
    if coder == "mrc":
        if payload_nbytes != (n_blocks * k_bits + 7) // 8:
            raise TruncatedPayloadError(
                f"payload holds {payload_nbytes} bytes, expected {(n_blocks * k_bits + 7) // 8}"
            )
        r = BitReader(payload)
        indices = np.array([r.read_uint(k_bits) for _ in range(n_blocks)], dtype=np.int64)
    else:
        grs_indices = _read_grs_indices(payload, spec, n_weights, n_blocks, root_seed)
    return CompressedModel(
        root_seed=root_seed, model=spec, p_log_std=p_log_std, n_weights=n_weights,
        n_blocks=n_blocks, k_bits=k_bits, coder=coder, indices=indices, grs_indices=grs_indices,
    )


def _read_grs_indices(payload: bytes, spec: ModelSpec, n_weights: int, n_blocks: int, root_seed: int):
    from .trainer import BlockPartition

    partition = BlockPartition.build(n_weights, n_blocks, root_seed)
    bits = BitReader(payload).as_bitstring()
    pos = 0
    out = []
    for b in range(n_blocks):
        blk = np.empty(partition.offsets[b + 1] - partition.offsets[b], dtype=np.int64)
        for i in range(blk.size):
            blk[i], pos = prefix_decode_index(bits, pos)
        out.append(blk)
    return out


@dataclass(frozen=True)
class DecodedModel:
    trainable: np.ndarray
    layers: List[Tuple[np.ndarray, np.ndarray]]
    header: CompressedModel


def decompress(data) -> DecodedModel:
    """Rebuild the weights from header + indices; q is never evaluated."""
    from .trainer import BlockPartition

    model = read(data) if isinstance(data, (bytes, bytearray)) else data
    spec = model.model
    partition = BlockPartition.build(model.n_weights, model.n_blocks, model.root_seed)
    layer_ids = spec.coord_layer_ids()
    trainable = np.empty(model.n_weights)
    for b in range(model.n_blocks):
        coords = partition.block_coords(b)
        p_b_log_std = model.p_log_std[layer_ids[coords]]
        if model.coder == "mrc":
            from .core_distributions import DiagonalGaussian

            p_b = DiagonalGaussian(np.zeros(coords.size), p_b_log_std)
            block = mrc_codec.EncodedBlock(int(model.indices[b]), model.k_bits)
            trainable[coords] = mrc_codec.decode_block(
                p_b, SampleStream(model.root_seed, b), block
            )
        else:
            sigma = np.exp(p_b_log_std)
            for i, c in enumerate(coords):
                trainable[c] = grs_reference.decode_coordinate(
                    float(sigma[i]), SampleStream(model.root_seed, int(c)), int(model.grs_indices[b][i])
                )
    return DecodedModel(trainable, expand_hashed_weights(spec, trainable), model)


def header_size(model: CompressedModel) -> int:
    spec = model.model
    hash_bytes = sum(1 if hc is None else 13 for hc in spec.hash_configs)
    return 4 + 2 + 8 + 1 + 4 * len(spec.layer_sizes) + 2 + hash_bytes + 8 * spec.n_weight_layers + 13


def size_report(model: CompressedModel) -> dict:
    """Byte accounting and the ratio against 32-bit uncompressed storage."""
    data_len = len(write(model))
    return {
        "header_bytes": header_size(model),
        "payload_bytes": data_len - header_size(model),
        "total_bytes": data_len,
        "uncompressed_bytes": 4 * model.n_weights,
        "ratio": (4.0 * model.n_weights) / data_len,
    }
