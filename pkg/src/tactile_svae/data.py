"""Synthetic data collection: pose sampling, paired image/wrench records, splits, on-disk format.

Layout of a dataset directory::

    manifest.json          UTF-8 JSON, keys sorted
    images/000000.pgm      binary P5, one per sample, 6-digit zero-padded id
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError, IntegrityError
from .plant import (
    THETA_RANGE,
    X_RANGE_CM,
    Z_RANGE_CM,
    ContactPose,
    DomainTag,
    FingerPlantConfig,
    ThresholdBand,
    color_threshold,
    deform,
    encode_pgm,
    read_pgm,
    render,
    wrench_at_base,
)

SCHEMA_VERSION = 1
SPLIT_RATIOS = (7, 1, 2)
SPLIT_NAMES = ("train", "val", "test")
MIN_SAMPLES = 10
_SPLIT_STREAM = 0xFFFFFFFF  # sample streams use (seed, id); ids never reach this


def sample_pose(rng: np.random.Generator) -> ContactPose:
    """Uniform draw over the contact-pose box."""
    x = rng.uniform(*X_RANGE_CM)
    z = rng.uniform(*Z_RANGE_CM)
    theta = rng.uniform(*THETA_RANGE)
    return ContactPose(float(x), float(z), float(theta))


def config_digest(cfg: FingerPlantConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def split_sizes(n: int) -> tuple[int, int, int]:
    """7:1:2 partition; validation and test are rounded, train takes the remainder."""
    total = sum(SPLIT_RATIOS)
    n_val = int(round(n * SPLIT_RATIOS[1] / total))
    n_test = int(round(n * SPLIT_RATIOS[2] / total))
    return n - n_val - n_test, n_val, n_test


def assign_splits(n: int, seed: int) -> list[str]:
    n_train, n_val, _ = split_sizes(n)
    order = np.random.default_rng([seed, _SPLIT_STREAM]).permutation(n)
    labels = [""] * n
    for rank, i in enumerate(order):
        labels[i] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return labels


def _sig9(v: float) -> float:
    return float(f"{v:.9g}")


def synthesize_sample(i: int, seed: int, cfg: FingerPlantConfig, domain: DomainTag,
                      clutter: bool = True, pose: ContactPose | None = None):
    """Pose, wrench and camera image for sample ``i``; each id has its own rng stream."""
    rng = np.random.default_rng([seed, i])
    drawn = sample_pose(rng)
    pose = pose or drawn
    render_seed = int(rng.integers(2**63))
    state = deform(pose, cfg)
    wrench = wrench_at_base(state, cfg).as_array()
    img = render(state, domain, clutter, render_seed, cfg)
    return pose, wrench, img


def generate_dataset(n: int, cfg: FingerPlantConfig = FingerPlantConfig(),
                     domain: DomainTag = DomainTag.land(), seed: int = 0,
                     out_dir=None, clutter: bool = True) -> dict:
    """Write ``n`` samples and a manifest to ``out_dir``; returns the manifest dict.

    Regenerating with the same arguments reproduces every byte.
    """
    if int(n) != n or n < MIN_SAMPLES:
        raise ConfigError(f"dataset needs at least {MIN_SAMPLES} samples, got {n}")
    if out_dir is None:
        raise ConfigError("out_dir is required")
    n = int(n)
    out = Path(out_dir)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)

    splits = assign_splits(n, seed)
    records = []
    for i in range(n):
        pose, wrench, img = synthesize_sample(i, seed, cfg, domain, clutter)
        name = f"images/{i:06d}.pgm"
        (out / name).write_bytes(encode_pgm(img))
        records.append({
            "id": i,
            "file": name,
            "split": splits[i],
            "pose": {"x_cm": pose.x_cm, "z_cm": pose.z_cm, "theta_rad": pose.theta_rad},
            "wrench": [_sig9(v) for v in wrench],
            "domain": domain.variant,
        })
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "seed": int(seed),
        "count": n,
        "split_ratios": list(SPLIT_RATIOS),
        "split_sizes": dict(zip(SPLIT_NAMES, split_sizes(n))),
        "pose_ranges": {"x_cm": list(X_RANGE_CM), "z_cm": list(Z_RANGE_CM), "theta_rad": list(THETA_RANGE)},
        "clutter": bool(clutter),
        "domain": domain.to_dict(),
        "plant_config": cfg.to_dict(),
        "plant_config_digest": config_digest(cfg),
        "samples": records,
    }
    write_manifest(out / "manifest.json", manifest)
    return manifest


def write_manifest(path, manifest: dict) -> None:
    text = json.dumps(manifest, sort_keys=True, indent=1, ensure_ascii=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


@dataclass
class Split:
    """A view over one subset; images are (N, H, W) float64 in [0, 1]."""

    ids: np.ndarray
    images: np.ndarray
    wrenches: np.ndarray
    poses: np.ndarray  # (N, 3): x_cm, z_cm, theta_rad

    def __len__(self):
        return len(self.ids)


@dataclass
class Dataset:
    manifest: dict
    ids: np.ndarray
    images: np.ndarray
    wrenches: np.ndarray
    poses: np.ndarray
    splits: np.ndarray  # split name per sample

    def __len__(self):
        return len(self.ids)

    def view(self, name: str) -> Split:
        if name not in SPLIT_NAMES:
            raise ConfigError(f"unknown split {name!r}")
        sel = self.splits == name
        return Split(self.ids[sel], self.images[sel], self.wrenches[sel], self.poses[sel])

    @property
    def train(self) -> Split:
        return self.view("train")

    @property
    def val(self) -> Split:
        return self.view("val")

    @property
    def test(self) -> Split:
        return self.view("test")

    @property
    def plant_config(self) -> FingerPlantConfig:
        return FingerPlantConfig.from_dict(self.manifest["plant_config"])

    @property
    def domain(self) -> DomainTag:
        return DomainTag(**self.manifest["domain"])


def load_dataset(directory, cfg: FingerPlantConfig | None = None, threshold: bool = True,
                 band: ThresholdBand = ThresholdBand()) -> Dataset:
    """Read a dataset directory.

    Images are thresholded with ``band`` unless ``threshold`` is False, which
    returns the raw camera frames. When ``cfg`` is given, the manifest must have
    been produced by that exact plant configuration.
    """
    root = Path(directory)
    try:
        manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{root / 'manifest.json'}: invalid JSON ({exc.msg})", offset=exc.pos) from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported manifest schema {manifest.get('schema_version')!r}")
    stored = FingerPlantConfig.from_dict(manifest["plant_config"])
    if config_digest(stored) != manifest["plant_config_digest"]:
        raise IntegrityError("manifest plant config does not match its recorded digest")
    if cfg is not None and config_digest(cfg) != manifest["plant_config_digest"]:
        raise IntegrityError("dataset was generated with a different plant config")

    records = manifest["samples"]
    ids = np.array([r["id"] for r in records], dtype=np.int64)
    if len(ids) != manifest["count"] or not np.array_equal(np.sort(ids), np.arange(len(ids))):
        raise DataError("sample ids must be unique and dense from 0")
    images = []
    for r in records:
        path = root / r["file"]
        if not path.is_file():
            raise FileNotFoundError(f"sample {r['id']}: image file {r['file']} is missing")
        img = read_pgm(path)
        images.append(color_threshold(img, band) if threshold else img)
    return Dataset(
        manifest=manifest,
        ids=ids,
        images=np.stack(images),
        wrenches=np.array([r["wrench"] for r in records], dtype=np.float64),
        poses=np.array([[r["pose"]["x_cm"], r["pose"]["z_cm"], r["pose"]["theta_rad"]] for r in records]),
        splits=np.array([r["split"] for r in records]),
    )


def generate_pairs(n: int, cfg: FingerPlantConfig = FingerPlantConfig(),
                   water: DomainTag = DomainTag.water(), seed: int = 0,
                   clutter: bool = True, band: ThresholdBand = ThresholdBand()):
    """Matched Land/Water samples: same pose, same wrench, thresholded images.

    Returns ``(land_images, water_images, wrenches, poses)``.
    """
    land, wet, wrenches, poses = [], [], [], []
    for i in range(n):
        pose, wrench, img_l = synthesize_sample(i, seed, cfg, DomainTag.land(), clutter)
        _, _, img_w = synthesize_sample(i, seed, cfg, water, clutter)
        land.append(color_threshold(img_l, band))
        wet.append(color_threshold(img_w, band))
        wrenches.append(wrench)
        poses.append([pose.x_cm, pose.z_cm, pose.theta_rad])
    return np.stack(land), np.stack(wet), np.array(wrenches), np.array(poses)


def dataset_files(directory) -> list[str]:
    """Relative paths of every file in a dataset directory, sorted."""
    root = Path(directory)
    return sorted(str(p.relative_to(root)).replace(os.sep, "/") for p in root.rglob("*") if p.is_file())
