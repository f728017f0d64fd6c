"""Supervised variational autoencoder for deformation images.

An encoder maps a tactile image to a diagonal Gaussian over a ``d``-dim latent
code; an image decoder reconstructs from a reparameterized sample, and a small
regressor predicts the 6D wrench from the latent mean. Training minimizes

    alpha/(1+alpha) * recon + 1/(1+alpha) * pred + beta * KL

with per-pixel MSE reconstruction, MSE over normalized wrench channels, and
the closed-form KL against N(0, I), each averaged over the batch.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nncore as nn
from .errors import ConfigError, DataError, FormatError, ShapeError

log = logging.getLogger(__name__)

MAGIC = b"SVAE"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class SVAEArchitecture:
    height: int = 64
    width: int = 64
    latent_dim: int = 32
    stem_channels: int = 8
    channels: tuple = (8, 16, 32, 64)
    regressor_hidden: tuple = (1024, 1024)
    wrench_dim: int = 6

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "regressor_hidden", tuple(int(c) for c in self.regressor_hidden))
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.wrench_dim != 6:
            raise ConfigError("wrench output is exactly 6")
        factor = 2 ** len(self.channels)
        if self.height % factor or self.width % factor:
            raise ConfigError(f"input size must be divisible by {factor}")

    @property
    def bottleneck(self) -> tuple:
        f = 2 ** len(self.channels)
        return (self.height // f, self.width // f, self.channels[-1])

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["channels"] = list(self.channels)
        d["regressor_hidden"] = list(self.regressor_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    beta: float = 0.1
    # "svae" uses the weighted objective; "convnet" is prediction only (beta ignored);
    # "vae" is reconstruction + beta*KL with no gradient into the regressor
    objective: str = "svae"

    def __post_init__(self):
        if not (self.alpha >= 0):
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if not (self.beta >= 0):
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.objective not in ("svae", "convnet", "vae"):
            raise ConfigError(f"unknown objective {self.objective!r}")

    def weights(self) -> tuple:
        """(reconstruction weight, prediction weight, KL weight)."""
        if self.objective == "convnet":
            return 0.0, 1.0, 0.0
        if self.objective == "vae":
            return 1.0, 0.0, self.beta
        if self.alpha == np.inf:
            return 1.0, 0.0, self.beta
        # the larger weight is computed by division and the smaller as its exact
        # complement, so the two always sum to exactly 1.0
        w_recon = self.alpha / (1.0 + self.alpha)
        if w_recon >= 0.5:
            return w_recon, 1.0 - w_recon, self.beta
        w_pred = 1.0 / (1.0 + self.alpha)
        return 1.0 - w_pred, w_pred, self.beta


@dataclass
class LossBreakdown:
    recon: float
    pred: float
    kl: float
    total: float


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    lr: float = 5e-5
    lr_decay: float = 0.97


class SVAENetwork:
    """Layer graph for one architecture; parameters are passed in explicitly."""

    def __init__(self, arch: SVAEArchitecture):
        self.arch = arch
        ch = arch.channels
        enc = [nn.Conv2d("enc.stem", 1, arch.stem_channels, 3, 1), nn.ReLU()]
        c_prev = arch.stem_channels
        for i, c in enumerate(ch):
            enc.append(nn.ResidualBlock(f"enc.block{i}", c_prev, c, stride=2))
            c_prev = c
        enc += [nn.ReLU(), nn.Flatten()]
        self.encoder = nn.Sequential("enc", enc)
        flat = int(np.prod(arch.bottleneck))
        self.mu_head = nn.Dense("mu", flat, arch.latent_dim, init="fan_in_linear")
        self.logvar_head = nn.Dense("logvar", flat, arch.latent_dim, init="fan_in_linear")

        dec = [nn.Dense("dec.fc", arch.latent_dim, flat), nn.Reshape("dec.reshape", arch.bottleneck), nn.ReLU()]
        rev = list(reversed(ch))
        outs = rev[1:] + [arch.stem_channels]
        for i, (cin, cout) in enumerate(zip(rev, outs)):
            dec.append(nn.ResidualBlock(f"dec.block{i}", cin, cout, upsample=True))
        dec += [nn.ReLU(), nn.Conv2d("dec.out", arch.stem_channels, 1, 3, 1, init="fan_in_linear"), nn.Sigmoid()]
        self.decoder = nn.Sequential("dec", dec)

        reg, width = [], arch.latent_dim
        for i, h in enumerate(arch.regressor_hidden):
            reg += [nn.Dense(f"reg.fc{i}", width, h), nn.ReLU()]
            width = h
        reg.append(nn.Dense("reg.out", width, arch.wrench_dim, init="fan_in_linear"))
        self.regressor = nn.Sequential("reg", reg)

        self.in_shape = (arch.height, arch.width, 1)
        # validates every layer's shape contract up front
        self.encoder.out_shape(self.in_shape)
        self.decoder.out_shape((arch.latent_dim,))
        self.regressor.out_shape((arch.latent_dim,))

    def init_params(self, seed: int, dtype=np.float32) -> nn.ModelParameters:
        rng = np.random.default_rng(seed)
        params = nn.ModelParameters()
        for part in (self.encoder, self.mu_head, self.logvar_head, self.decoder, self.regressor):
            params.update(part.init(rng, dtype))
        return params

    def _as_batch(self, x):
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        if x.ndim == 3:
            x = x[..., None]
        if tuple(x.shape[1:]) != self.in_shape:
            raise ShapeError(f"image batch {tuple(x.shape[1:])} does not match architecture {self.in_shape}")
        return x

    def encode(self, params, x):
        x = self._as_batch(x).astype(params["mu.W"].dtype, copy=False)
        h, _ = nn.forward(params, self.encoder, x)
        return self.mu_head.forward(params, h)[0], self.logvar_head.forward(params, h)[0]

    def decode(self, params, z):
        z = np.atleast_2d(np.asarray(z, dtype=params["mu.W"].dtype))
        if z.shape[1] != self.arch.latent_dim:
            raise ShapeError(f"latent length {z.shape[1]} != {self.arch.latent_dim}")
        y, _ = nn.forward(params, self.decoder, z)
        return y[..., 0]

    def regress(self, params, mu):
        mu = np.atleast_2d(np.asarray(mu, dtype=params["mu.W"].dtype))
        if mu.shape[1] != self.arch.latent_dim:
            raise ShapeError(f"latent length {mu.shape[1]} != {self.arch.latent_dim}")
        return nn.forward(params, self.regressor, mu)[0]

    def loss(self, params, x, y, cfg: LossConfig, eps, grads: bool = True):
        """Loss breakdown and (optionally) the gradient of ``total`` w.r.t. every parameter.

        ``y`` holds normalized wrench labels; ``eps`` the standard-normal draws
        for the reparameterized sample, one row per image.
        """
        x = self._as_batch(x)
        n = x.shape[0]
        if n == 0:
            raise DataError("empty batch")
        w_rec, w_pred, w_kl = cfg.weights()
        h, c_enc = nn.forward(params, self.encoder, x)
        mu, c_mu = self.mu_head.forward(params, h)
        lv, c_lv = self.logvar_head.forward(params, h)
        eps = np.asarray(eps, dtype=mu.dtype).reshape(mu.shape)
        std = np.exp(0.5 * lv)
        z = mu + std * eps
        xhat, c_dec = nn.forward(params, self.decoder, z)
        yhat, c_reg = nn.forward(params, self.regressor, mu)

        diff_x = xhat - x
        diff_y = yhat - y
        recon = float(np.mean(diff_x * diff_x))
        pred = float(np.mean(diff_y * diff_y))
        kl = float(np.mean(nn.kl_diag_gaussian(mu, lv)))
        total = w_rec * recon + w_pred * pred + w_kl * kl
        out = LossBreakdown(recon, pred, kl, total)
        if not grads:
            return out, None

        g = {}
        dmu = (w_kl / n) * mu
        dlv = (w_kl / n) * 0.5 * np.expm1(lv)
        if w_rec > 0:
            dxhat = (2.0 * w_rec / diff_x.size) * diff_x
            gd, dz = nn.backward(params, self.decoder, c_dec, dxhat.astype(x.dtype, copy=False))
            g.update(gd)
            dmu = dmu + dz
            dlv = dlv + dz * eps * 0.5 * std
        if w_pred > 0:
            dyhat = (2.0 * w_pred / diff_y.size) * diff_y
            gr, dmu_r = nn.backward(params, self.regressor, c_reg, dyhat.astype(x.dtype, copy=False))
            g.update(gr)
            dmu = dmu + dmu_r
        dh_mu, g_mu = self.mu_head.backward(params, c_mu, dmu)
        dh_lv, g_lv = self.logvar_head.backward(params, c_lv, dlv)
        g.update(g_mu)
        g.update(g_lv)
        ge, _ = nn.backward(params, self.encoder, c_enc, dh_mu + dh_lv)
        g.update(ge)
        return out, g


@dataclass
class Checkpoint:
    arch: SVAEArchitecture
    params: nn.ModelParameters
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self._net = None

    @property
    def network(self) -> SVAENetwork:
        if self._net is None:
            self._net = SVAENetwork(self.arch)
        return self._net

    @property
    def label_mean(self):
        return np.asarray(self.metadata.get("label_mean", [0.0] * 6))

    @property
    def label_std(self):
        return np.asarray(self.metadata.get("label_std", [1.0] * 6))


# ---------------------------------------------------------------------------
# inference surface


def encode(ckpt: Checkpoint, images):
    """Latent mean and log-variance, each (N, d), for one image or a batch."""
    return ckpt.network.encode(ckpt.params, images)


def decode_image(ckpt: Checkpoint, z):
    return ckpt.network.decode(ckpt.params, z)


def predict_wrench(ckpt: Checkpoint, mu):
    """Physical-unit wrench (N, 6) from latent means."""
    y = ckpt.network.regress(ckpt.params, mu).astype(np.float64)
    return denormalize(y, ckpt.label_mean, ckpt.label_std)


def svae_loss(ckpt: Checkpoint, images, wrenches, cfg: LossConfig, eps) -> LossBreakdown:
    y = normalize(np.asarray(wrenches, dtype=np.float64), ckpt.label_mean, ckpt.label_std)
    dtype = ckpt.params["mu.W"].dtype
    x = np.asarray(images, dtype=dtype)
    return ckpt.network.loss(ckpt.params, x, y.astype(dtype), cfg, eps, grads=False)[0]


def normalize(y, mean, std):
    return (y - mean) / std


def denormalize(y, mean, std):
    return y * std + mean


def reconstruction_mse(ckpt: Checkpoint, images, batch_size: int = 256) -> float:
    """Mean per-pixel squared error of decode(encode(x).mu) against x."""
    images = np.asarray(images)
    total = 0.0
    for i in range(0, len(images), batch_size):
        x = images[i:i + batch_size]
        mu, _ = encode(ckpt, x)
        xhat = decode_image(ckpt, mu).astype(np.float64)
        total += float(np.sum((xhat - x) ** 2))
    return total / images.size


def encode_all(ckpt: Checkpoint, images, batch_size: int = 256):
    mus, lvs = [], []
    for i in range(0, len(images), batch_size):
        mu, lv = encode(ckpt, images[i:i + batch_size])
        mus.append(mu)
        lvs.append(lv)
    return np.concatenate(mus).astype(np.float64), np.concatenate(lvs).astype(np.float64)


# ---------------------------------------------------------------------------
# training


def _batch_loss(net, params, x, y, cfg, eps_rng, bs):
    acc = np.zeros(4)
    for i in range(0, len(x), bs):
        xb, yb = x[i:i + bs], y[i:i + bs]
        eps = eps_rng.standard_normal((len(xb), net.arch.latent_dim)).astype(x.dtype)
        lb, _ = net.loss(params, xb, yb, cfg, eps, grads=False)
        acc += len(xb) * np.array([lb.recon, lb.pred, lb.kl, lb.total])
    acc /= len(x)
    return LossBreakdown(*[float(v) for v in acc])


def train(dataset, arch: SVAEArchitecture = SVAEArchitecture(), cfg: LossConfig = LossConfig(),
          hyper: TrainConfig = TrainConfig(), callback=None) -> Checkpoint:
    """Fit an SVAE on ``dataset.train``; validation loss is tracked every epoch.

    ``dataset`` needs ``train`` and ``val`` attributes with ``images`` (N, H, W)
    and ``wrenches`` (N, 6). Everything random derives from ``hyper.seed``.
    """
    tr, va = dataset.train, dataset.val
    if len(tr.images) == 0 or len(va.images) == 0:
        raise DataError("train and validation splits must be non-empty")
    net = SVAENetwork(arch)
    mean = tr.wrenches.mean(axis=0)
    std = tr.wrenches.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)

    x_tr = np.asarray(tr.images, dtype=np.float32)[..., None]
    y_tr = normalize(tr.wrenches, mean, std).astype(np.float32)
    x_va = np.asarray(va.images, dtype=np.float32)[..., None]
    y_va = normalize(va.wrenches, mean, std).astype(np.float32)

    rng = np.random.default_rng(hyper.seed)
    params = net.init_params(int(rng.integers(2**31)))
    state = nn.AdamState(lr=hyper.lr, lr_decay=hyper.lr_decay)
    val_seed = int(rng.integers(2**31))

    def validate():
        return _batch_loss(net, params, x_va, y_va, cfg, np.random.default_rng(val_seed), 256)

    initial = validate()
    history, val_history = [], []
    bs = hyper.batch_size
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(x_tr))
        acc = np.zeros(4)
        for i in range(0, len(order), bs):
            idx = order[i:i + bs]
            eps = rng.standard_normal((len(idx), arch.latent_dim)).astype(np.float32)
            lb, grads = net.loss(params, x_tr[idx], y_tr[idx], cfg, eps)
            if not np.isfinite(lb.total):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            nn.adam_step(params, grads, state)
            acc += len(idx) * np.array([lb.recon, lb.pred, lb.kl, lb.total])
        state.end_epoch()
        acc /= len(order)
        history.append(dataclasses.asdict(LossBreakdown(*[float(v) for v in acc])))
        val = validate()
        val_history.append(dataclasses.asdict(val))
        log.info("epoch %d train %.5f val %.5f", epoch + 1, acc[3], val.total)
        if callback is not None:
            callback(epoch, history[-1], val_history[-1])

    ckpt = Checkpoint(arch, params, {
        "epochs": hyper.epochs,
        "seed": hyper.seed,
        "batch_size": hyper.batch_size,
        "lr": hyper.lr,
        "lr_decay": hyper.lr_decay,
        "loss": dataclasses.asdict(cfg),
        "label_mean": [float(v) for v in mean],
        "label_std": [float(v) for v in std],
        "initial_val": dataclasses.asdict(initial),
        "loss_history": history,
        "val_history": val_history,
    })
    ckpt.metadata["recon_mse_ceiling"] = reconstruction_mse(ckpt, tr.images)
    return ckpt


# ---------------------------------------------------------------------------
# checkpoint file format
#
#   b"SVAE" | u32 version | u64 header length | UTF-8 JSON header | payload
#
# The header's "tensors" list gives name, dims, offset and length (bytes, relative
# to the payload start) of each little-endian float32 tensor.


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    directory, blobs, offset = [], [], 0
    for name, arr in ckpt.params.items():
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        directory.append({"name": name, "dims": list(arr.shape), "offset": offset, "length": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({
        "architecture": ckpt.arch.to_dict(),
        "metadata": ckpt.metadata,
        "tensors": directory,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}", offset=0)
    if len(data) < 16:
        raise FormatError(f"{path}: truncated preamble", offset=len(data))
    version, hlen = struct.unpack_from("<IQ", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", offset=4)
    if len(data) < 16 + hlen:
        raise FormatError(f"{path}: truncated header", offset=len(data))
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}", offset=16) from None
    base = 16 + hlen
    params = nn.ModelParameters()
    for entry in header["tensors"]:
        start = base + entry["offset"]
        count = int(np.prod(entry["dims"], dtype=np.int64))
        if entry["length"] != 4 * count:
            raise FormatError(f"{path}: tensor {entry['name']} length disagrees with dims", offset=start)
        if start + entry["length"] > len(data):
            raise FormatError(f"{path}: truncated inside tensor {entry['name']}", offset=len(data))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=start).reshape(entry["dims"])
        params[entry["name"]] = arr.astype(np.float32)
    arch = SVAEArchitecture.from_dict(header["architecture"])
    return Checkpoint(arch, params, header["metadata"])
