"""Small dense models with hand-written gradients.

Provides the data-fit term of the variational objective (categorical
cross-entropy or unit-variance Gaussian likelihood), the reparameterized
single-sample ELBO gradient used by the trainer, and deterministic random
weight sharing (many weight positions reading one trainable bucket).

No autodiff dependency: the gradients here are checked against central
finite differences, and that oracle must stay independent of the library
under test.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .core_distributions import kl_elementwise
from .shared_prng import mix64_array

ACTIVATIONS = ("tanh", "relu")
TASKS = ("classification", "regression")


@dataclass(frozen=True)
class HashConfig:
    """Weight sharing for one layer: bucket_count trainable values serve
    the full parameter block via a seeded hash."""

    bucket_count: int
    hash_seed: int


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets)
        if inputs.ndim != 2:
            raise ValueError("inputs must be a 2-D matrix")
        if targets.dtype.kind in "iu":
            targets = targets.astype(np.int64)
            if targets.ndim != 1:
                raise ValueError("class targets must be a vector")
        else:
            targets = np.atleast_2d(targets.astype(np.float64))
            if targets.shape[0] == 1 and inputs.shape[0] != 1:
                targets = targets.T
        if targets.shape[0] != inputs.shape[0]:
            raise ValueError(
                f"row mismatch: {inputs.shape[0]} inputs vs {targets.shape[0]} targets"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.targets[idx])


@dataclass(frozen=True)
class ModelSpec:
    """Architecture: dense layer sizes, activation, task, optional
    per-layer weight sharing."""

    layer_sizes: tuple
    activation: str = "tanh"
    task: str = "classification"
    hash_configs: tuple = ()

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        hashes = tuple(self.hash_configs) or (None,) * (len(sizes) - 1)
        if len(hashes) != len(sizes) - 1:
            raise ValueError("hash_configs must have one entry per weight layer")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "hash_configs", hashes)
        for l, hc in enumerate(hashes):
            if hc is None:
                continue
            if not (1 <= hc.bucket_count <= self.layer_param_count(l)):
                raise ValueError(
                    f"layer {l}: bucket_count {hc.bucket_count} outside [1, {self.layer_param_count(l)}]"
                )

    @property
    def n_weight_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def layer_param_count(self, l: int) -> int:
        return self.layer_sizes[l] * self.layer_sizes[l + 1] + self.layer_sizes[l + 1]

    def layer_trainable_count(self, l: int) -> int:
        hc = self.hash_configs[l]
        return self.layer_param_count(l) if hc is None else hc.bucket_count

    @property
    def full_param_count(self) -> int:
        return sum(self.layer_param_count(l) for l in range(self.n_weight_layers))

    @property
    def n_trainable(self) -> int:
        return sum(self.layer_trainable_count(l) for l in range(self.n_weight_layers))

    def trainable_slices(self):
        out, off = [], 0
        for l in range(self.n_weight_layers):
            c = self.layer_trainable_count(l)
            out.append(slice(off, off + c))
            off += c
        return out

    def coord_layer_ids(self) -> np.ndarray:
        """Trainable coordinate -> weight-layer index."""
        return np.repeat(
            np.arange(self.n_weight_layers),
            [self.layer_trainable_count(l) for l in range(self.n_weight_layers)],
        )


@lru_cache(maxsize=64)
def _hash_mapping(param_count: int, bucket_count: int, hash_seed: int) -> Optional[np.ndarray]:
    """Full flat position j -> bucket mix(hash_seed XOR j) mod bucket_count.

    Degenerates to the identity when every parameter gets its own bucket.
    """
    if bucket_count == param_count:
        return None
    j = np.arange(param_count, dtype=np.uint64)
    buckets = mix64_array(np.uint64(hash_seed) ^ j) % np.uint64(bucket_count)
    return buckets.astype(np.int64)


def layer_hash_mapping(spec: ModelSpec, l: int) -> Optional[np.ndarray]:
    hc = spec.hash_configs[l]
    if hc is None:
        return None
    return _hash_mapping(spec.layer_param_count(l), hc.bucket_count, hc.hash_seed)


def expand_hashed_weights(spec: ModelSpec, buckets: np.ndarray):
    """Trainable vector -> list of (W, b) per layer; pure in (spec, buckets)."""
    buckets = np.asarray(buckets, dtype=np.float64)
    if buckets.shape != (spec.n_trainable,):
        raise ValueError(f"expected {spec.n_trainable} trainable values, got {buckets.shape}")
    layers = []
    for l, sl in enumerate(spec.trainable_slices()):
        flat = buckets[sl]
        mapping = layer_hash_mapping(spec, l)
        if mapping is not None:
            flat = flat[mapping]
        d_in, d_out = spec.layer_sizes[l], spec.layer_sizes[l + 1]
        layers.append((flat[: d_in * d_out].reshape(d_in, d_out), flat[d_in * d_out :]))
    return layers


def _forward(spec: ModelSpec, layers, X):
    act = X
    activations = [X]
    for l, (W, b) in enumerate(layers):
        z = act @ W + b
        if l < spec.n_weight_layers - 1:
            act = np.tanh(z) if spec.activation == "tanh" else np.maximum(z, 0.0)
        else:
            act = z
        activations.append(act)
    return activations


def forward(spec: ModelSpec, buckets: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Network outputs (logits or regression means) for a batch."""
    return _forward(spec, expand_hashed_weights(spec, buckets), np.asarray(X, dtype=np.float64))[-1]


def _per_row_log_likelihood(spec: ModelSpec, outputs: np.ndarray, targets: np.ndarray):
    if spec.task == "classification":
        if np.any(targets < 0) or np.any(targets >= outputs.shape[1]):
            raise ValueError("class id outside the output layer")
        m = outputs.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.sum(np.exp(outputs - m), axis=1))
        return outputs[np.arange(outputs.shape[0]), targets] - lse
    if targets.shape != outputs.shape:
        raise ValueError(f"target shape {targets.shape} vs output shape {outputs.shape}")
    resid = outputs - targets
    return -0.5 * np.sum(resid * resid, axis=1) - 0.5 * outputs.shape[1] * math.log(2.0 * math.pi)


def log_likelihood(spec: ModelSpec, w: np.ndarray, data: Dataset) -> float:
    """Total log p(D|w) in nats.

    Row terms are combined with an exactly-rounded sum, so duplicating the
    dataset doubles the result bit-exactly.
    """
    rows = _per_row_log_likelihood(spec, forward(spec, w, data.inputs), data.targets)
    return math.fsum(rows)


def log_likelihood_and_grad(spec: ModelSpec, w: np.ndarray, data: Dataset):
    """(log-likelihood, gradient w.r.t. the trainable vector)."""
    layers = expand_hashed_weights(spec, np.asarray(w, dtype=np.float64))
    activations = _forward(spec, layers, data.inputs)
    outputs = activations[-1]
    rows = _per_row_log_likelihood(spec, outputs, data.targets)

    if spec.task == "classification":
        m = outputs.max(axis=1, keepdims=True)
        e = np.exp(outputs - m)
        softmax = e / e.sum(axis=1, keepdims=True)
        delta = -softmax
        delta[np.arange(outputs.shape[0]), data.targets] += 1.0
    else:
        delta = data.targets - outputs

    grad = np.empty(spec.n_trainable, dtype=np.float64)
    slices = spec.trainable_slices()
    for l in range(spec.n_weight_layers - 1, -1, -1):
        a_prev = activations[l]
        dW = a_prev.T @ delta
        db = delta.sum(axis=0)
        flat = np.concatenate([dW.ravel(), db])
        mapping = layer_hash_mapping(spec, l)
        if mapping is not None:
            flat = np.bincount(mapping, weights=flat, minlength=spec.layer_trainable_count(l))
        grad[slices[l]] = flat
        if l > 0:
            delta = delta @ layers[l][0].T
            if spec.activation == "tanh":
                delta *= 1.0 - activations[l] * activations[l]
            else:
                delta *= activations[l] > 0.0
    return math.fsum(rows), grad


@dataclass
class ElboResult:
    objective: float
    grad_q_mean: np.ndarray
    grad_q_log_std: np.ndarray
    grad_p_log_std: np.ndarray
    kl_per_block: np.ndarray
    scaled_log_likelihood: float


def elbo_and_gradients(
    spec: ModelSpec,
    q_mean: np.ndarray,
    q_log_std: np.ndarray,
    p_log_std_layers: np.ndarray,
    frozen_mask: np.ndarray,
    frozen_values: np.ndarray,
    block_ids: np.ndarray,
    betas: np.ndarray,
    open_mask: np.ndarray,
    batch: Dataset,
    noise: np.ndarray,
    dataset_size: int,
) -> ElboResult:
    """Single-sample reparameterized objective and its exact gradients.

    objective = (n/|batch|) * log p(batch | w) - sum_{b open} beta_b KL_b
    with w = q_mean + sigma*noise on non-frozen coordinates and the stored
    decoded values elsewhere. noise has one entry per non-frozen
    coordinate. Gradients flow through the reparameterization and the
    analytic per-coordinate KL; p's mean is fixed at zero and its log-std
    is shared per layer.
    """
    P = q_mean.shape[0]
    active = ~frozen_mask
    if noise.shape[0] != int(active.sum()):
        raise ValueError(f"noise length {noise.shape[0]} != active count {int(active.sum())}")
    layer_ids = spec.coord_layer_ids()
    p_ls_coord = p_log_std_layers[layer_ids]
    sigma = np.exp(q_log_std)

    noise_full = np.zeros(P)
    noise_full[active] = noise
    w = np.where(frozen_mask, frozen_values, q_mean + sigma * noise_full)

    ll, g_w = log_likelihood_and_grad(spec, w, batch)
    scale = dataset_size / batch.n
    n_blocks = betas.shape[0]
    kl_coord = kl_elementwise(q_mean, q_log_std, np.zeros(P), p_ls_coord)
    kl_per_block = np.bincount(block_ids, weights=kl_coord, minlength=n_blocks)

    beta_coord = np.where(open_mask[block_ids], betas[block_ids], 0.0)
    objective = scale * ll - float(np.dot(betas[open_mask], kl_per_block[open_mask]))

    p_var = np.exp(2.0 * p_ls_coord)
    q_var = sigma * sigma
    g_mean = scale * g_w * active - beta_coord * (q_mean / p_var)
    g_log_std = scale * g_w * noise_full * sigma - beta_coord * (q_var / p_var - 1.0)
    dkl_dlam = 1.0 - (q_var + q_mean * q_mean) / p_var
    g_p_log_std = np.bincount(
        layer_ids, weights=-beta_coord * dkl_dlam, minlength=spec.n_weight_layers
    )
    return ElboResult(objective, g_mean, g_log_std, g_p_log_std, kl_per_block, scale * ll)
