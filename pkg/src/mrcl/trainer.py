"""KL-budgeted variational training with progressive block encoding.

The weight vector is split into B = ceil(C/C_loc) random blocks, each with
a local budget of C_loc nats enforced by a multiplicatively annealed
penalty factor. After an initial convergence phase the blocks are encoded
one at a time in random order; each encoded block is frozen to its decoded
value and the remaining blocks get a few compensating update iterations.

All randomness is split into two worlds: the public root seed drives
everything the decoder must reproduce (partition, per-block sample
streams), the private trainer seed drives everything it must not need
(initialization, minibatches, reparameterization noise, encode order,
index selection, rejection-sampler acceptance).
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import grs_reference, mrc_codec
from .core_distributions import DiagonalGaussian, kl_elementwise
from .model_zoo import Dataset, ModelSpec, elbo_and_gradients, forward, _per_row_log_likelihood
from .shared_prng import SampleStream, standard_normals, uniforms_at

PARTITION_STREAM_ID = 0xFFFFFFFF

# private-stream lanes under the trainer seed
_INIT, _BATCH, _NOISE, _ORDER, _SELECT, _ACCEPT = range(6)

BETA_MIN = 1e-12
BETA_MAX = 1e4

CODERS = ("mrc", "grs")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field '{field_name}': {message}")
        self.field_name = field_name


class NonFiniteGradientError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    coding_goal: float                  # C, nats
    local_goal: float                   # C_loc, nats
    init_iterations: int = 10_000       # I0
    intermediate_iterations: int = 50   # I
    eps_beta0: float = 1e-8
    eps_beta: float = 5e-5
    learning_rate: float = 1e-3
    batch_size: int = 128
    root_seed: int = 0
    trainer_seed: int = 1
    coder: str = "mrc"
    init_q_log_std: float = -2.3
    init_p_log_std: float = -0.7
    log_every: int = 500

    def __post_init__(self):
        if not (self.local_goal > 0):
            raise ConfigError("local_goal", "must be > 0")
        if self.coding_goal < self.local_goal:
            raise ConfigError("coding_goal", "must be >= local_goal")
        if self.init_iterations < 0:
            raise ConfigError("init_iterations", "must be >= 0")
        if self.intermediate_iterations < 0:
            raise ConfigError("intermediate_iterations", "must be >= 0")
        if not (self.eps_beta > 0):
            raise ConfigError("eps_beta", "must be > 0")
        if not (self.eps_beta0 > 0):
            raise ConfigError("eps_beta0", "must be > 0")
        if not (self.learning_rate > 0):
            raise ConfigError("learning_rate", "must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        if self.coder not in CODERS:
            raise ConfigError("coder", f"must be one of {CODERS}")


@dataclass(frozen=True)
class BlockPartition:
    """Random equal-size split of weight indices, reproducible from the
    public seed; only the block count travels in the file."""

    n_weights: int
    n_blocks: int
    order: np.ndarray
    offsets: np.ndarray
    block_ids: np.ndarray

    @classmethod
    def build(cls, n_weights: int, n_blocks: int, root_seed: int) -> "BlockPartition":
        if not (1 <= n_blocks <= n_weights):
            raise ValueError(f"need 1 <= B <= n_weights, got B={n_blocks}, n={n_weights}")
        order = np.arange(n_weights, dtype=np.int64)
        u = uniforms_at(SampleStream(root_seed, PARTITION_STREAM_ID).block_seed, 0, max(n_weights - 1, 0))
        for t, i in enumerate(range(n_weights - 1, 0, -1)):
            j = min(int(u[t] * (i + 1)), i)  # guard float rounding at u->1
            order[i], order[j] = order[j], order[i]
        base, rem = divmod(n_weights, n_blocks)
        sizes = np.full(n_blocks, base, dtype=np.int64)
        sizes[:rem] += 1
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        block_ids = np.empty(n_weights, dtype=np.int64)
        for b in range(n_blocks):
            block_ids[order[offsets[b] : offsets[b + 1]]] = b
        return cls(n_weights, n_blocks, order, offsets, block_ids)

    def block_coords(self, b: int) -> np.ndarray:
        return self.order[self.offsets[b] : self.offsets[b + 1]]


def block_count(coding_goal: float, local_goal: float) -> int:
    return max(1, mrc_codec.ceil_information(coding_goal / local_goal))


def make_partition(n_weights: int, coding_goal: float, local_goal: float, root_seed: int) -> BlockPartition:
    """B = ceil(C / C_loc) consecutive runs of a seeded Fisher-Yates shuffle."""
    return BlockPartition.build(n_weights, block_count(coding_goal, local_goal), root_seed)


class Adam:
    """Ascent Adam over named parameter groups with per-group update masks."""

    B1, B2, EPS = 0.9, 0.999, 1e-8

    def __init__(self, params: dict, learning_rate: float):
        self.lr = learning_rate
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, masks: Optional[dict] = None):
        self.t += 1
        c1 = 1.0 - self.B1**self.t
        c2 = 1.0 - self.B2**self.t
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(f"non-finite gradient for parameter '{name}'")
            m = self.m[name]
            v = self.v[name]
            m *= self.B1
            m += (1.0 - self.B1) * g
            v *= self.B2
            v += (1.0 - self.B2) * (g * g)
            update = (self.lr / c1) * m / (np.sqrt(v / c2) + self.EPS)
            sel = None if masks is None else masks.get(name)
            if sel is None:
                params[name] += update
            else:
                params[name][sel] += update[sel]


def anneal_betas(betas: np.ndarray, open_mask: np.ndarray, kl_per_block: np.ndarray,
                 local_goal: float, eps_beta: float) -> np.ndarray:
    """Multiplicative per-block penalty update: grow while over budget,
    shrink otherwise (ties shrink); closed blocks never change."""
    factor = np.where(kl_per_block > local_goal, 1.0 + eps_beta, 1.0 / (1.0 + eps_beta))
    out = np.where(open_mask, np.clip(betas * factor, BETA_MIN, BETA_MAX), betas)
    return out


@dataclass
class TrainState:
    q_mean: np.ndarray
    q_log_std: np.ndarray
    p_log_std: np.ndarray        # one shared value per weight layer
    betas: np.ndarray
    open_mask: np.ndarray
    frozen_mask: np.ndarray
    frozen_values: np.ndarray
    adam: Adam
    step: int = 0


@dataclass
class CompressResult:
    compressed: "object"          # bitstream_format.CompressedModel
    trainable_weights: np.ndarray
    variational_mean: np.ndarray  # q mean as of each coordinate's freeze
    log_lines: list
    block_kls_at_encode: np.ndarray
    n_budget_warnings: int


def _glorot_init(spec: ModelSpec, stream: SampleStream) -> np.ndarray:
    out = np.empty(spec.n_trainable)
    for l, sl in enumerate(spec.trainable_slices()):
        d_in, d_out = spec.layer_sizes[l], spec.layer_sizes[l + 1]
        a = math.sqrt(6.0 / (d_in + d_out))
        n = sl.stop - sl.start
        u = uniforms_at(stream.block_seed, stream.counter, n)
        stream.counter += n
        out[sl] = (2.0 * u - 1.0) * a
    return out


def _batch_indices(stream: SampleStream, n: int, batch_size: int) -> np.ndarray:
    u = uniforms_at(stream.block_seed, stream.counter, batch_size)
    stream.counter += batch_size
    return np.minimum((u * n).astype(np.int64), n - 1)


def _encoding_p(spec: ModelSpec, p_log_std: np.ndarray, coords: np.ndarray) -> DiagonalGaussian:
    layer_ids = spec.coord_layer_ids()
    return DiagonalGaussian(np.zeros(coords.shape[0]), p_log_std[layer_ids[coords]])


def run_compression(config: TrainConfig, spec: ModelSpec, data: Dataset) -> CompressResult:
    """Full pipeline: variational convergence, then progressive
    encode/freeze/refine over the blocks. Returns the wire object plus the
    exact weights the decoder will reproduce."""
    from .bitstream_format import CompressedModel

    P = spec.n_trainable
    B = block_count(config.coding_goal, config.local_goal)
    partition = BlockPartition.build(P, B, config.root_seed)
    k_bits = mrc_codec.k_bits_for(config.local_goal)
    K = 1 << k_bits
    layer_ids = spec.coord_layer_ids()

    streams = {lane: SampleStream(config.trainer_seed, lane) for lane in range(6)}
    state = TrainState(
        q_mean=_glorot_init(spec, streams[_INIT]),
        q_log_std=np.full(P, config.init_q_log_std),
        p_log_std=np.full(spec.n_weight_layers, config.init_p_log_std),
        betas=np.full(B, config.eps_beta0),
        open_mask=np.ones(B, dtype=bool),
        frozen_mask=np.zeros(P, dtype=bool),
        frozen_values=np.zeros(P),
        adam=None,
        step=0,
    )
    state.adam = Adam(
        {"q_mean": state.q_mean, "q_log_std": state.q_log_std, "p_log_std": state.p_log_std},
        config.learning_rate,
    )
    log_lines = []

    def variational_updates(count: int, phase: str, p_trainable: bool):
        for _ in range(count):
            active = ~state.frozen_mask
            idx = _batch_indices(streams[_BATCH], data.n, config.batch_size)
            noise = standard_normals(streams[_NOISE], int(active.sum()))
            res = elbo_and_gradients(
                spec, state.q_mean, state.q_log_std, state.p_log_std,
                state.frozen_mask, state.frozen_values, partition.block_ids,
                state.betas, state.open_mask, data.subset(idx), noise, data.n,
            )
            grads = {"q_mean": res.grad_q_mean, "q_log_std": res.grad_q_log_std}
            masks = {"q_mean": active, "q_log_std": active}
            if p_trainable:
                grads["p_log_std"] = res.grad_p_log_std
            state.adam.step(
                {"q_mean": state.q_mean, "q_log_std": state.q_log_std, "p_log_std": state.p_log_std},
                grads, masks,
            )
            np.clip(state.q_log_std, -23.0, 10.0, out=state.q_log_std)
            np.clip(state.p_log_std, -23.0, 10.0, out=state.p_log_std)
            state.betas = anneal_betas(
                state.betas, state.open_mask, res.kl_per_block, config.local_goal, config.eps_beta
            )
            state.step += 1
            if state.step % config.log_every == 0 or state.step == 1:
                kl_blocks = " ".join(
                    f"{kl:.3e}" if is_open else "-"
                    for kl, is_open in zip(res.kl_per_block, state.open_mask)
                )
                log_lines.append(
                    f"step={state.step} phase={phase} objective={res.objective:.6e} "
                    f"ll={res.scaled_log_likelihood:.6e} "
                    f"beta_min={state.betas.min():.3e} beta_max={state.betas.max():.3e} "
                    f"open={int(state.open_mask.sum())} kl_blocks=[{kl_blocks}]"
                )

    log_lines.append(
        f"begin n_weights={P} blocks={B} k_bits={k_bits} samples_per_block={K} coder={config.coder}"
    )
    variational_updates(config.init_iterations, "init", p_trainable=True)
    # p is part of the header and every block must decode against the same
    # p, so it freezes once encoding starts.
    log_lines.append(
        "p_frozen log_std=[" + " ".join(f"{v:.9e}" for v in state.p_log_std) + "]"
    )

    indices = np.zeros(B, dtype=np.int64)
    grs_indices = [None] * B
    block_kls = np.zeros(B)
    n_warn = 0
    while state.open_mask.any():
        remaining = np.flatnonzero(state.open_mask)
        u = streams[_ORDER].next_uniform()
        b = int(remaining[min(int(u * remaining.size), remaining.size - 1)])
        state.open_mask[b] = False
        coords = partition.block_coords(b)
        kl_b = float(
            np.sum(kl_elementwise(
                state.q_mean[coords], state.q_log_std[coords],
                np.zeros(coords.size), state.p_log_std[layer_ids[coords]],
            ))
        )
        block_kls[b] = kl_b
        if kl_b > config.local_goal:
            n_warn += 1
            log_lines.append(
                f"warning block={b} kl={kl_b:.6e} nats exceeds local goal {config.local_goal:.6e}"
            )
        p_b = _encoding_p(spec, state.p_log_std, coords)
        if config.coder == "mrc":
            q_b = DiagonalGaussian(state.q_mean[coords], state.q_log_std[coords])
            block, w_star = mrc_codec.encode_block(
                q_b, p_b, SampleStream(config.root_seed, b), K, streams[_SELECT].next_uniform()
            )
            indices[b] = block.index
            log_lines.append(f"encode block={b} index={block.index} kl={kl_b:.6e}")
        else:
            sigma_q = np.exp(state.q_log_std[coords])
            w_star = np.empty(coords.size)
            istars = np.empty(coords.size, dtype=np.int64)
            for i, c in enumerate(coords):
                istars[i], w_star[i] = grs_reference.encode_coordinate(
                    float(state.q_mean[c]), float(sigma_q[i]), float(p_b.std[i]),
                    SampleStream(config.root_seed, int(c)), streams[_ACCEPT],
                )
            grs_indices[b] = istars
            log_lines.append(
                f"encode block={b} grs_mean_index={istars.mean():.3f} kl={kl_b:.6e}"
            )
        state.frozen_mask[coords] = True
        state.frozen_values[coords] = w_star
        if state.open_mask.any() and config.intermediate_iterations:
            variational_updates(config.intermediate_iterations, "refine", p_trainable=False)

    log_lines.append(f"done steps={state.step} budget_warnings={n_warn}")
    compressed = CompressedModel(
        root_seed=config.root_seed,
        model=spec,
        p_log_std=state.p_log_std.copy(),
        n_weights=P,
        n_blocks=B,
        k_bits=k_bits if config.coder == "mrc" else 0,
        coder=config.coder,
        indices=indices if config.coder == "mrc" else None,
        grs_indices=grs_indices if config.coder == "grs" else None,
    )
    return CompressResult(
        compressed, state.frozen_values.copy(), state.q_mean.copy(), log_lines, block_kls, n_warn
    )


def evaluate(spec: ModelSpec, w: np.ndarray, data: Dataset):
    """(error rate, mean per-example log-likelihood).

    Error is the misclassified fraction for classification and the RMSE
    for regression.
    """
    outputs = forward(spec, w, data.inputs)
    mean_ll = math.fsum(_per_row_log_likelihood(spec, outputs, data.targets)) / data.n
    if spec.task == "classification":
        err = float(np.mean(np.argmax(outputs, axis=1) != data.targets))
    else:
        err = float(np.sqrt(np.mean((outputs - data.targets) ** 2)))
    return err, mean_ll


def train_baseline(spec: ModelSpec, data: Dataset, iterations: int, learning_rate: float,
                   seed: int, batch_size: int = 128) -> np.ndarray:
    """Deterministic point-estimate training (plain Adam on the data fit);
    the uncompressed reference for the size/error trade-off."""
    from .model_zoo import log_likelihood_and_grad

    init = SampleStream(seed, _INIT)
    batches = SampleStream(seed, _BATCH)
    w = _glorot_init(spec, init)
    adam = Adam({"w": w}, learning_rate)
    for _ in range(iterations):
        idx = _batch_indices(batches, data.n, batch_size)
        batch = data.subset(idx)
        _, g = log_likelihood_and_grad(spec, w, batch)
        adam.step({"w": w}, {"w": g * (data.n / batch.n)})
    return w
