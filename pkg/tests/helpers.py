"""Shared oracles for the module tests and the acceptance suite."""

from mrcl.model_zoo import Dataset, HashConfig, ModelSpec, elbo_and_gradients


def random_elbo_config(rng):
    """Random architecture/partition/freeze state for gradient checking;
    includes hashed layers and partially frozen blocks."""
    depth = int(rng.integers(2, 4))
    sizes = [int(rng.integers(2, 5))]
    for _ in range(depth - 1):
        sizes.append(int(rng.integers(2, 7)))
    task = "classification" if rng.random() < 0.7 else "regression"
    activation = "tanh" if rng.random() < 0.7 else "relu"
    hashes = []
    for l in range(depth - 1):
        full = sizes[l] * sizes[l + 1] + sizes[l + 1]
        if rng.random() < 0.5 and full > 4:
            hashes.append(HashConfig(int(rng.integers(3, full)), int(rng.integers(2**40))))
        else:
            hashes.append(None)
    spec = ModelSpec(tuple(sizes), activation, task, tuple(hashes))
    P = spec.n_trainable

    n_rows = int(rng.integers(4, 10))
    x = rng.normal(0, 1, (n_rows, sizes[0]))
    if task == "classification":
        data = Dataset(x, rng.integers(0, sizes[-1], n_rows))
    else:
        data = Dataset(x, rng.normal(0, 1, (n_rows, sizes[-1])))

    n_blocks = int(rng.integers(1, min(4, P) + 1))
    block_ids = rng.integers(0, n_blocks, P)
    betas = rng.uniform(0.01, 2.0, n_blocks)
    open_mask = rng.random(n_blocks) < 0.7
    open_mask[int(rng.integers(n_blocks))] = True
    frozen = ~open_mask[block_ids]
    return dict(
        spec=spec,
        q_mean=rng.normal(0, 0.5, P),
        q_log_std=rng.uniform(-2.5, -0.5, P),
        p_log_std_layers=rng.uniform(-1.0, 0.5, spec.n_weight_layers),
        frozen_mask=frozen,
        frozen_values=rng.normal(0, 0.3, P),
        block_ids=block_ids,
        betas=betas,
        open_mask=open_mask,
        batch=data,
        noise=rng.normal(0, 1, int((~frozen).sum())),
        dataset_size=int(rng.integers(n_rows, 100)),
    )


def elbo_gradient_max_rel_error(cfg, h=1e-5):
    """Central finite differences of the fixed-noise objective vs the
    analytic gradients; returns the worst relative error over every
    coordinate of (q_mean, q_log_std, p_log_std)."""
    res = elbo_and_gradients(**cfg)

    def objective(qm, qls, pls):
        c = dict(cfg)
        c["q_mean"], c["q_log_std"], c["p_log_std_layers"] = qm, qls, pls
        return elbo_and_gradients(**c).objective

    qm, qls, pls = cfg["q_mean"], cfg["q_log_std"], cfg["p_log_std_layers"]
    worst = 0.0
    for arr, grad, slot in ((qm, res.grad_q_mean, 0), (qls, res.grad_q_log_std, 1),
                            (pls, res.grad_p_log_std, 2)):
        for j in range(arr.shape[0]):
            up, dn = arr.copy(), arr.copy()
            up[j] += h
            dn[j] -= h
            args_up = [qm, qls, pls]
            args_dn = [qm, qls, pls]
            args_up[slot] = up
            args_dn[slot] = dn
            numeric = (objective(*args_up) - objective(*args_dn)) / (2 * h)
            denom = max(abs(numeric), abs(grad[j]), 1e-6)
            worst = max(worst, abs(grad[j] - numeric) / denom)
    return worst
