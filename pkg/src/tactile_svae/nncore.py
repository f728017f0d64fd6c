"""A small reverse-mode network kernel written directly against numpy.

Tensors are plain ``numpy.ndarray`` objects in NHWC layout. Each layer is a
stateless description; parameters live in a :class:`ModelParameters` map keyed
by dotted names, so one parameter set can be saved, copied or perturbed
without touching the layer objects. ``forward`` returns the output together
with a :class:`Cache` that ``backward`` consumes exactly once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import NumericError, ShapeError, UsageError


class ModelParameters(dict):
    """Ordered name -> array map. ``version`` changes whenever an optimizer writes to it."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.version = 0

    def copy(self) -> "ModelParameters":
        return ModelParameters((k, v.copy()) for k, v in self.items())

    def astype(self, dtype) -> "ModelParameters":
        return ModelParameters((k, v.astype(dtype)) for k, v in self.items())

    def num_values(self) -> int:
        return sum(v.size for v in self.values())


class Cache:
    __slots__ = ("entries", "version", "consumed")

    def __init__(self, entries, version):
        self.entries = entries
        self.version = version
        self.consumed = False

    def claim(self, params: ModelParameters):
        if self.consumed:
            raise UsageError("cache already consumed by a backward pass")
        if getattr(params, "version", self.version) != self.version:
            raise UsageError("parameters changed since the forward pass; cache is stale")
        self.consumed = True


# variance gain per init mode: 2 keeps ReLU activations at unit scale, 1 suits linear outputs
_GAINS = {"fan_in": 2.0, "fan_in_linear": 1.0}


def _uniform_fan_in(rng, shape, fan_in, dtype, mode="fan_in"):
    if mode not in _GAINS:
        raise ValueError(f"unknown init mode {mode!r}")
    bound = math.sqrt(3.0 * _GAINS[mode] / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    name = ""

    def init(self, rng, dtype) -> dict:
        return {}

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def forward(self, params, x):
        raise NotImplementedError

    def backward(self, params, cache, dy):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, name, n_in, n_out, init="fan_in"):
        self.name, self.n_in, self.n_out, self.init_mode = name, n_in, n_out, init

    def init(self, rng, dtype):
        shape = (self.n_out, self.n_in)
        if self.init_mode == "zeros":
            w = np.zeros(shape, dtype)
        elif self.init_mode == "identity":
            w = np.eye(self.n_out, self.n_in, dtype=dtype)
        else:
            w = _uniform_fan_in(rng, shape, self.n_in, dtype, self.init_mode)
        return {f"{self.name}.W": w, f"{self.name}.b": np.zeros(self.n_out, dtype)}

    def out_shape(self, in_shape):
        if in_shape != (self.n_in,):
            raise ShapeError(f"{self.name}: expected input ({self.n_in},), got {in_shape}")
        return (self.n_out,)

    def forward(self, params, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"{self.name}: expected (N, {self.n_in}) input, got {x.shape}")
        w = params[f"{self.name}.W"]
        return x @ w.T + params[f"{self.name}.b"], x

    def backward(self, params, x, dy):
        grads = {f"{self.name}.W": dy.T @ x, f"{self.name}.b": dy.sum(axis=0)}
        return dy @ params[f"{self.name}.W"], grads


class Conv2d(Layer):
    """Square-kernel convolution, NHWC, 'same' padding (k // 2) and integer stride.

    Weights are stored as (k, k, c_in, c_out) so the im2col matrix multiplies
    them without any transpose.
    """

    def __init__(self, name, c_in, c_out, k=3, stride=1, init="fan_in"):
        self.name, self.c_in, self.c_out = name, c_in, c_out
        self.k, self.stride, self.pad, self.init_mode = k, stride, k // 2, init

    def init(self, rng, dtype):
        shape = (self.k, self.k, self.c_in, self.c_out)
        if self.init_mode == "zeros":
            w = np.zeros(shape, dtype)
        else:
            w = _uniform_fan_in(rng, shape, self.c_in * self.k * self.k, dtype, self.init_mode)
        return {f"{self.name}.W": w, f"{self.name}.b": np.zeros(self.c_out, dtype)}

    def _out_hw(self, h, w):
        return (h + 2 * self.pad - self.k) // self.stride + 1, (w + 2 * self.pad - self.k) // self.stride + 1

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[2] != self.c_in:
            raise ShapeError(f"{self.name}: expected (H, W, {self.c_in}) input, got {in_shape}")
        return (*self._out_hw(*in_shape[:2]), self.c_out)

    def _window(self, a, i, j, ho, wo):
        s = self.stride
        return a[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s]

    def forward(self, params, x):
        if x.ndim != 4 or x.shape[3] != self.c_in:
            raise ShapeError(f"{self.name}: expected (N, H, W, {self.c_in}) input, got {x.shape}")
        n, h, w_, c = x.shape
        ho, wo = self._out_hw(h, w_)
        p, k = self.pad, self.k
        w = params[f"{self.name}.W"]
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        if self.c_out < c:
            # narrow outputs: k*k shifted products beat one huge im2col matrix
            y = np.zeros((n * ho * wo, self.c_out), dtype=x.dtype)
            for i in range(k):
                for j in range(k):
                    y += np.ascontiguousarray(self._window(xp, i, j, ho, wo)).reshape(-1, c) @ w[i, j]
            y += params[f"{self.name}.b"]
            return y.reshape(n, ho, wo, self.c_out), ("shift", xp, x.shape)
        cols = np.empty((n, ho, wo, k * k, c), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, :, :, i * k + j] = self._window(xp, i, j, ho, wo)
        cols = cols.reshape(n * ho * wo, k * k * c)
        y = cols @ w.reshape(k * k * c, self.c_out)
        y += params[f"{self.name}.b"]
        return y.reshape(n, ho, wo, self.c_out), ("cols", cols, x.shape, xp.shape)

    def backward(self, params, cache, dy):
        mode = cache[0]
        _, ho, wo, o = dy.shape
        k, p = self.k, self.pad
        dy2 = dy.reshape(-1, o)
        w = params[f"{self.name}.W"]
        if mode == "shift":
            _, xp, (n, h, w_, c) = cache
            dw = np.empty_like(w)
            dxp = np.zeros(xp.shape, dtype=dy.dtype)
            for i in range(k):
                for j in range(k):
                    dw[i, j] = np.ascontiguousarray(self._window(xp, i, j, ho, wo)).reshape(-1, c).T @ dy2
                    self._window(dxp, i, j, ho, wo)[...] += (dy2 @ w[i, j].T).reshape(n, ho, wo, c)
        else:
            _, cols, (n, h, w_, c), xp_shape = cache
            dw = (cols.T @ dy2).reshape(w.shape)
            dcols = (dy2 @ w.reshape(k * k * c, o).T).reshape(n, ho, wo, k * k, c)
            dxp = np.zeros(xp_shape, dtype=dy.dtype)
            for i in range(k):
                for j in range(k):
                    self._window(dxp, i, j, ho, wo)[...] += dcols[:, :, :, i * k + j]
        grads = {f"{self.name}.W": dw, f"{self.name}.b": dy2.sum(axis=0)}
        dx = dxp[:, p:p + h, p:p + w_] if p else dxp
        return dx, grads


class ReLU(Layer):
    def __init__(self, name="relu"):
        self.name = name

    def forward(self, params, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, params, mask, dy):
        return dy * mask, {}


class Sigmoid(Layer):
    def __init__(self, name="sigmoid"):
        self.name = name

    def forward(self, params, x):
        y = expit(x)
        return y, y

    def backward(self, params, y, dy):
        return dy * y * (1 - y), {}


class Reshape(Layer):
    def __init__(self, name, shape):
        self.name, self.shape = name, tuple(shape)

    def out_shape(self, in_shape):
        if math.prod(in_shape) != math.prod(self.shape):
            raise ShapeError(f"{self.name}: cannot reshape {in_shape} to {self.shape}")
        return self.shape

    def forward(self, params, x):
        return x.reshape(x.shape[0], *self.shape), x.shape

    def backward(self, params, in_shape, dy):
        return dy.reshape(in_shape), {}


class Flatten(Layer):
    def __init__(self, name="flatten"):
        self.name = name

    def out_shape(self, in_shape):
        return (math.prod(in_shape),)

    def forward(self, params, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, in_shape, dy):
        return dy.reshape(in_shape), {}


class Upsample2x(Layer):
    """Nearest-neighbour upsampling by 2 along H and W (NHWC)."""

    def __init__(self, name="up"):
        self.name = name

    def out_shape(self, in_shape):
        h, w, c = in_shape
        return (2 * h, 2 * w, c)

    def forward(self, params, x):
        return x.repeat(2, axis=1).repeat(2, axis=2), None

    def backward(self, params, cache, dy):
        n, h, w, c = dy.shape
        return dy.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4)), {}


class Sequential(Layer):
    def __init__(self, name, layers):
        self.name, self.layers = name, list(layers)

    def init(self, rng, dtype):
        out = {}
        for layer in self.layers:
            out.update(layer.init(rng, dtype))
        return out

    def out_shape(self, in_shape):
        for layer in self.layers:
            in_shape = layer.out_shape(in_shape)
        return in_shape

    def forward(self, params, x):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(params, x)
            caches.append(c)
        return x, caches

    def backward(self, params, caches, dy):
        grads = {}
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dy, g = layer.backward(params, c, dy)
            grads.update(g)
        return dy, grads


class ResidualBlock(Layer):
    """``y = skip(x) + conv2(relu(conv1(x)))``, optionally followed by a 2x upsample.

    The skip path is the identity when shapes agree, otherwise a 1x1 projection.
    Upsampling after the convolutions keeps the decoder's cost at the lower
    resolution, mirroring the encoder's strided blocks. With the second
    convolution zeroed (and no projection) the block is exactly the identity.
    """

    def __init__(self, name, c_in, c_out, stride=1, upsample=False, zero_branch=False):
        self.name = name
        post = [Upsample2x(f"{name}.up")] if upsample else []
        self.main = Sequential(name, [
            Conv2d(f"{name}.conv1", c_in, c_out, 3, stride),
            ReLU(f"{name}.relu"),
            Conv2d(f"{name}.conv2", c_out, c_out, 3, 1, init="zeros" if zero_branch else "fan_in_linear"),
        ] + post)
        if c_in != c_out or stride != 1:
            self.skip = Sequential(f"{name}.skip", [Conv2d(f"{name}.proj", c_in, c_out, 1, stride, init="fan_in_linear")] + post)
        elif upsample:
            self.skip = Sequential(f"{name}.skip", post)
        else:
            self.skip = None

    def init(self, rng, dtype):
        out = self.main.init(rng, dtype)
        if self.skip is not None:
            out.update(self.skip.init(rng, dtype))
        return out

    def out_shape(self, in_shape):
        out = self.main.out_shape(in_shape)
        if self.skip is not None and self.skip.out_shape(in_shape) != out:
            raise ShapeError(f"{self.name}: skip/main shape mismatch")
        if self.skip is None and out != in_shape:
            raise ShapeError(f"{self.name}: identity skip needs matching shapes")
        return out

    def forward(self, params, x):
        y, cm = self.main.forward(params, x)
        if self.skip is None:
            return y + x, (cm, None)
        s, cs = self.skip.forward(params, x)
        return y + s, (cm, cs)

    def backward(self, params, cache, dy):
        cm, cs = cache
        dx, grads = self.main.backward(params, cm, dy)
        if self.skip is None:
            return dx + dy, grads
        dxs, gs = self.skip.backward(params, cs, dy)
        grads.update(gs)
        return dx + dxs, grads


# ---------------------------------------------------------------------------
# public functional surface


def init_params(net: Layer, seed: int, dtype=np.float32) -> ModelParameters:
    return ModelParameters(net.init(np.random.default_rng(seed), dtype))


def forward(params: ModelParameters, net: Layer, x: np.ndarray, in_shape: tuple | None = None):
    """Run ``net`` and return ``(output, Cache)``."""
    if in_shape is not None and tuple(x.shape[1:]) != tuple(in_shape):
        raise ShapeError(f"{net.name}: expected input {tuple(in_shape)}, got {tuple(x.shape[1:])}")
    y, entries = net.forward(params, x)
    return y, Cache(entries, getattr(params, "version", 0))


def backward(params: ModelParameters, net: Layer, cache: Cache, dy: np.ndarray):
    """Return ``(parameter gradients, input gradient)`` for a cache from :func:`forward`."""
    cache.claim(params)
    dx, grads = net.backward(params, cache.entries, dy)
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {params[name].shape}")
    return grads, dx


def reparameterize(mu, logvar, eps):
    """Gaussian sample ``mu + exp(logvar / 2) * eps``."""
    mu, logvar, eps = np.asarray(mu), np.asarray(logvar), np.asarray(eps)
    if not (mu.shape == logvar.shape == eps.shape):
        raise ShapeError(f"shape mismatch: mu {mu.shape}, logvar {logvar.shape}, eps {eps.shape}")
    return mu + np.exp(0.5 * logvar) * eps


def kl_diag_gaussian(mu, logvar):
    """KL( N(mu, diag(exp(logvar))) || N(0, I) ), summed over the last axis."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ShapeError(f"shape mismatch: mu {mu.shape}, logvar {logvar.shape}")
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(logvar))):
        raise NumericError("non-finite mu/logvar")
    # expm1(lv) - lv keeps precision near logvar = 0
    kl = 0.5 * np.sum(mu * mu + (np.expm1(logvar) - logvar), axis=-1)
    return float(kl) if np.ndim(kl) == 0 else kl


@dataclass
class AdamState:
    lr: float = 5e-5
    lr_decay: float = 0.97  # per epoch
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    epoch: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def current_lr(self) -> float:
        return self.lr * self.lr_decay ** self.epoch

    def end_epoch(self):
        self.epoch += 1


def adam_step(params: ModelParameters, grads: dict, state: AdamState):
    """One bias-corrected Adam update, applied in place. Returns ``(params, state)``.

    Parameters without a gradient entry are left untouched.
    """
    state.step += 1
    t = state.step
    lr = state.current_lr()
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p -= (lr * update).astype(p.dtype, copy=False)
    if hasattr(params, "version"):
        params.version += 1
    return params, state
