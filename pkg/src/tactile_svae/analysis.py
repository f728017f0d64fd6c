"""Evaluation metrics and latent-space studies for trained models."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import svae
from .errors import ConfigError, DataError, UndefinedMetricError
from .plant import FORCE_LIMIT_N, TORQUE_LIMIT_NMM, encode_pgm

AXES = ("fx", "fy", "fz", "tx", "ty", "tz")
DEFAULT_FORCE_BINS = tuple((float(lo), float(lo + 2)) for lo in range(0, int(FORCE_LIMIT_N), 2))
DEFAULT_TORQUE_BINS = tuple((float(lo), float(lo + 120)) for lo in range(0, int(TORQUE_LIMIT_NMM), 120))


# ---------------------------------------------------------------------------
# scalar metrics


def r2(pred, truth) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape or truth.size == 0:
        raise ConfigError(f"r2 needs equal non-empty sequences, got {pred.size} and {truth.size}")
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError("r2 is undefined for constant truth")
    return 1.0 - float(np.sum((truth - pred) ** 2)) / ss_tot


@dataclass
class MetricsReport:
    r2: list
    mse: list
    mean_r2: float
    recon_mse: float
    count: int

    def to_dict(self):
        return dataclasses.asdict(self)


def wrench_metrics(pred, truth, recon_mse: float = float("nan")) -> MetricsReport:
    pred, truth = np.asarray(pred, np.float64), np.asarray(truth, np.float64)
    per_r2 = [r2(pred[:, k], truth[:, k]) for k in range(truth.shape[1])]
    per_mse = [float(np.mean((pred[:, k] - truth[:, k]) ** 2)) for k in range(truth.shape[1])]
    return MetricsReport(per_r2, per_mse, float(np.mean(per_r2)), float(recon_mse), len(truth))


def evaluate(ckpt: svae.Checkpoint, split) -> MetricsReport:
    """Per-axis R² and MSE of predicted wrenches plus reconstruction error on a split."""
    mu, _ = svae.encode_all(ckpt, split.images)
    pred = svae.predict_wrench(ckpt, mu)
    return wrench_metrics(pred, split.wrenches, svae.reconstruction_mse(ckpt, split.images))


# ---------------------------------------------------------------------------
# error histograms


@dataclass
class BinStats:
    lower: float
    upper: float
    mean: float
    std: float
    count: int


def _check_bins(bins):
    bins = [(float(lo), float(hi)) for lo, hi in bins]
    if not bins:
        raise ConfigError("at least one bin is required")
    for lo, hi in bins:
        if not hi > lo:
            raise ConfigError(f"empty bin [{lo}, {hi})")
    for (_, hi), (lo, _) in zip(bins, bins[1:]):
        if lo < hi:
            raise ConfigError(f"bins overlap at {lo}")
        if lo > hi:
            raise ConfigError(f"bins are not contiguous between {hi} and {lo}")
    return bins


def error_histogram(pred, truth, bins=DEFAULT_FORCE_BINS) -> list[BinStats]:
    """Signed error (pred - truth) statistics, binned on |truth| with half-open bins."""
    bins = _check_bins(bins)
    pred = np.asarray(pred, np.float64).ravel()
    truth = np.asarray(truth, np.float64).ravel()
    if pred.shape != truth.shape:
        raise ConfigError("pred and truth differ in length")
    mag, err = np.abs(truth), pred - truth
    out = []
    for lo, hi in bins:
        e = err[(mag >= lo) & (mag < hi)]
        if e.size:
            out.append(BinStats(lo, hi, float(e.mean()), float(e.std()), int(e.size)))
        else:
            out.append(BinStats(lo, hi, float("nan"), 0.0, 0))
    return out


def wrench_error_histograms(pred, truth, force_bins=DEFAULT_FORCE_BINS,
                            torque_bins=DEFAULT_TORQUE_BINS) -> dict:
    pred, truth = np.asarray(pred), np.asarray(truth)
    return {axis: error_histogram(pred[:, k], truth[:, k], force_bins if k < 3 else torque_bins)
            for k, axis in enumerate(AXES)}


# ---------------------------------------------------------------------------
# correlations


@dataclass
class CorrelationMatrix:
    values: np.ndarray
    flagged: np.ndarray  # True where a correlation is undefined (zero variance)

    def mean_abs_offdiag(self) -> float:
        m = self.values
        if m.shape[0] != m.shape[1]:
            raise ConfigError("off-diagonal mean needs a square matrix")
        off = ~np.eye(len(m), dtype=bool) & ~self.flagged
        return float(np.mean(np.abs(m[off]))) if off.any() else float("nan")


def _pearson(a: np.ndarray, b: np.ndarray) -> CorrelationMatrix:
    """Pearson coefficients between columns of a (N, p) and b (N, q)."""
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    sa = np.sqrt(np.sum(a * a, axis=0))
    sb = np.sqrt(np.sum(b * b, axis=0))
    tiny = 1e-12 * max(1.0, float(np.max(sa, initial=0.0)), float(np.max(sb, initial=0.0)))
    ok_a, ok_b = sa > tiny, sb > tiny
    denom = np.outer(np.where(ok_a, sa, 1.0), np.where(ok_b, sb, 1.0))
    m = np.clip((a.T @ b) / denom, -1.0, 1.0)
    flagged = ~np.outer(ok_a, ok_b)
    m[flagged] = np.nan
    return CorrelationMatrix(m, flagged)


def correlation_of_codes(codes) -> CorrelationMatrix:
    """Latent-latent Pearson matrix; symmetric with a unit diagonal wherever defined."""
    codes = np.asarray(codes, np.float64)
    if codes.ndim != 2 or len(codes) == 0:
        raise ConfigError("codes must be a non-empty (N, d) array")
    cm = _pearson(codes, codes)
    m = np.triu(cm.values)
    m = m + np.triu(m, 1).T
    ok = ~np.diag(cm.flagged)
    m[np.diag_indices_from(m)] = np.where(ok, 1.0, np.nan)
    return CorrelationMatrix(m, cm.flagged)


def latent_correlation(ckpt: svae.Checkpoint, split) -> CorrelationMatrix:
    if len(split.images) == 0:
        raise ConfigError("split is empty")
    mu, _ = svae.encode_all(ckpt, split.images)
    return correlation_of_codes(mu)


def latent_wrench_correlation(ckpt: svae.Checkpoint, split) -> CorrelationMatrix:
    """(d, 6) Pearson coefficients between latent means and wrench components."""
    mu, _ = svae.encode_all(ckpt, split.images)
    return _pearson(mu, np.asarray(split.wrenches, np.float64))


# ---------------------------------------------------------------------------
# traversals


def latent_traversal(ckpt: svae.Checkpoint, dims, value_range=(-5.0, 5.0), steps: int = 11,
                     anchor=None) -> np.ndarray:
    """Decoded images, shape (len(dims), steps, H, W).

    Each row sweeps one coordinate uniformly over ``value_range`` while the
    others stay at ``anchor`` (zeros by default, i.e. the prior mean).
    """
    d = ckpt.arch.latent_dim
    dims = [int(k) for k in dims]
    if not dims:
        raise ConfigError("select at least one latent dimension")
    for k in dims:
        if not 0 <= k < d:
            raise ConfigError(f"latent dimension {k} outside [0, {d})")
    if steps < 2:
        raise ConfigError("steps must be >= 2")
    base = np.zeros(d) if anchor is None else np.asarray(anchor, np.float64).reshape(d)
    values = np.linspace(value_range[0], value_range[1], steps)
    codes = np.repeat(base[None, None, :], len(dims), axis=0).repeat(steps, axis=1)
    for row, k in enumerate(dims):
        codes[row, :, k] = values
    imgs = svae.decode_image(ckpt, codes.reshape(-1, d).astype(ckpt.params["mu.W"].dtype))
    return imgs.reshape(len(dims), steps, ckpt.arch.height, ckpt.arch.width).astype(np.float64)


def collapsed_dims(ckpt: svae.Checkpoint, threshold: float = 1e-6) -> list[int]:
    """Latent coordinates the decoder ignores (decoder input-weight column norm below threshold)."""
    w = ckpt.params["dec.fc.W"]
    return [int(k) for k in np.flatnonzero(np.linalg.norm(w, axis=0) < threshold)]


def mosaic(grid: np.ndarray, pad: int = 1) -> np.ndarray:
    """Tile a (rows, cols, H, W) image grid into one image with ``pad``-pixel gutters."""
    rows, cols, h, w = grid.shape
    out = np.zeros((rows * (h + pad) - pad, cols * (w + pad) - pad))
    for r in range(rows):
        for c in range(cols):
            out[r * (h + pad):r * (h + pad) + h, c * (w + pad):c * (w + pad) + w] = grid[r, c]
    return out


# ---------------------------------------------------------------------------
# Land vs Water


def cosine_similarity_rows(a, b) -> np.ndarray:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    same = np.all(a == b, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.sum(a * b, axis=1) / (na * nb)
    return np.where(same, 1.0, np.clip(np.nan_to_num(sim), -1.0, 1.0))


def domain_shift_report(ckpt: svae.Checkpoint, land_images, water_images, land_wrenches,
                        water_wrenches=None) -> dict:
    """Compare latent codes and wrench accuracy for matched Land/Water pairs."""
    land_images, water_images = np.asarray(land_images), np.asarray(water_images)
    if land_images.shape != water_images.shape:
        raise DataError(f"unpaired inputs: {land_images.shape} vs {water_images.shape}")
    land_wrenches = np.asarray(land_wrenches, np.float64)
    if water_wrenches is not None and not np.array_equal(np.asarray(water_wrenches), land_wrenches):
        raise DataError("paired samples must share wrench labels")
    if len(land_wrenches) != len(land_images):
        raise DataError("wrench count does not match image count")
    mu_l, _ = svae.encode_all(ckpt, land_images)
    mu_w, _ = svae.encode_all(ckpt, water_images)
    cos = cosine_similarity_rows(mu_l, mu_w)
    land = wrench_metrics(svae.predict_wrench(ckpt, mu_l), land_wrenches)
    water = wrench_metrics(svae.predict_wrench(ckpt, mu_w), land_wrenches)
    return {
        "pairs": int(len(cos)),
        "cosine_similarity": cos.tolist(),
        "mean_cosine_similarity": float(cos.mean()),
        "mean_abs_latent_difference": np.abs(mu_l - mu_w).mean(axis=0).tolist(),
        "land": land.to_dict(),
        "water": water.to_dict(),
        "mean_r2_gap": float(land.mean_r2 - water.mean_r2),
    }


# ---------------------------------------------------------------------------
# sweeps


ALPHA_GRID = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0)
SWEEP_EPOCHS = 20


def _row(label, alpha, ckpt, split):
    m = evaluate(ckpt, split)
    return {"model": label, "alpha": alpha, "recon_mse": m.recon_mse, "mean_r2": m.mean_r2, "r2": m.r2}


def alpha_sweep(dataset, alphas=ALPHA_GRID, arch=svae.SVAEArchitecture(), beta: float = 0.1,
                hyper=svae.TrainConfig(epochs=SWEEP_EPOCHS), baselines: bool = True,
                progress=None) -> list[dict]:
    """One training run per alpha with shared data and seed, evaluated on the test split.

    With ``baselines`` the table gains a prediction-only network and an
    unsupervised VAE trained the same way.
    """
    alphas = [float(a) for a in alphas]
    if len(alphas) < 2:
        raise ConfigError("alpha sweep needs at least two alphas")
    cells = [("svae", a, svae.LossConfig(alpha=a, beta=beta)) for a in alphas]
    if baselines:
        cells += [("convnet", None, svae.LossConfig(beta=beta, objective="convnet")),
                  ("vae", None, svae.LossConfig(beta=beta, objective="vae"))]
    rows = []
    for label, alpha, loss in cells:
        ckpt = svae.train(dataset, arch, loss, hyper)
        rows.append(_row(label, alpha, ckpt, dataset.test))
        if progress is not None:
            progress(rows[-1])
    return rows


def latent_dim_sweep(dataset, dims=(6, 16, 32, 64, 128, 256), arch=svae.SVAEArchitecture(),
                     alpha: float = 100.0, beta: float = 0.1,
                     hyper=svae.TrainConfig(epochs=SWEEP_EPOCHS), progress=None) -> list[dict]:
    """Reconstruction error against latent size, trained with a reconstruction-heavy weighting."""
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ConfigError("latent-dimension sweep needs at least two sizes")
    curve = []
    for d in dims:
        a = dataclasses.replace(arch, latent_dim=d)
        ckpt = svae.train(dataset, a, svae.LossConfig(alpha=alpha, beta=beta), hyper)
        curve.append({"latent_dim": d, "recon_mse": svae.reconstruction_mse(ckpt, dataset.test.images)})
        if progress is not None:
            progress(curve[-1])
    return curve


# ---------------------------------------------------------------------------
# report writers


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path, rows: list[dict]) -> None:
    """Flat CSV; the header is the union of row keys in first-seen order."""
    fields = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _jsonable(v) for k, v in r.items()})
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def metrics_rows(report: MetricsReport) -> list[dict]:
    rows = [{"metric": "r2", "axis": a, "value": v} for a, v in zip(AXES, report.r2)]
    rows += [{"metric": "mse", "axis": a, "value": v} for a, v in zip(AXES, report.mse)]
    rows += [{"metric": "mean_r2", "axis": "", "value": report.mean_r2},
             {"metric": "recon_mse", "axis": "", "value": report.recon_mse},
             {"metric": "count", "axis": "", "value": report.count}]
    return rows


def histogram_rows(hists: dict) -> list[dict]:
    return [{"axis": axis, **dataclasses.asdict(b)} for axis, bins in hists.items() for b in bins]


def write_pgm_mosaic(path, grid: np.ndarray) -> None:
    Path(path).write_bytes(encode_pgm(mosaic(grid)))
