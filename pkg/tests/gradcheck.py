"""Central finite-difference oracle shared by the gradient tests."""

import numpy as np

from tactile_svae import svae

H = 1e-5


def rel_err(a, n, floor=1e-6):
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def fd_param_errors(loss_fn, params, grads, rng, per_tensor=6):
    """Max relative error over a random sample of entries in every parameter tensor."""
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        g = grads.get(name, np.zeros_like(p)).reshape(-1)
        picks = rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False)
        num = np.empty(len(picks))
        for j, idx in enumerate(picks):
            old = flat[idx]
            flat[idx] = old + H
            up = loss_fn()
            flat[idx] = old - H
            down = loss_fn()
            flat[idx] = old
            num[j] = (up - down) / (2 * H)
        worst = max(worst, rel_err(g[picks], num))
    return worst


def random_micro_arch(rng):
    """A 16x16 SVAE with well under 5k parameters."""
    n_blocks = int(rng.integers(1, 4))
    channels = tuple(int(c) for c in rng.integers(2, 5, n_blocks))
    return svae.SVAEArchitecture(
        height=16, width=16,
        latent_dim=int(rng.integers(2, 6)),
        stem_channels=int(rng.integers(1, 4)),
        channels=channels,
        regressor_hidden=tuple(int(h) for h in rng.integers(3, 9, int(rng.integers(0, 3)))),
    )


def svae_gradient_error(arch, seed, alpha, beta, objective="svae", batch=3):
    """Max relative error of the full objective's gradient against finite differences (float64)."""
    rng = np.random.default_rng(seed)
    net = svae.SVAENetwork(arch)
    params = net.init_params(seed, np.float64)
    # zero biases put dead-channel activations exactly on the ReLU kink,
    # where central differences are meaningless
    for name, p in params.items():
        if name.endswith(".b"):
            p += rng.normal(0.0, 0.1, p.shape)
    x = rng.random((batch, arch.height, arch.width))
    y = rng.standard_normal((batch, 6))
    eps = rng.standard_normal((batch, arch.latent_dim))
    cfg = svae.LossConfig(alpha=alpha, beta=beta, objective=objective)
    _, grads = net.loss(params, x, y, cfg, eps)

    def loss():
        return net.loss(params, x, y, cfg, eps, grads=False)[0].total

    return fd_param_errors(loss, params, grads, rng), params.num_values()
