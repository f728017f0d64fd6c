"""Synthetic soft finger: a tapered 2D mass-spring lattice seen by an in-finger camera.

The lattice lives in the image plane. Its horizontal axis is the finger-base X
axis (lateral) and its vertical axis is the base Y axis (gripping direction),
with row 0 clamped to the base. A rod pressed into the finger at depth
``x_cm`` loads the nodes near the contact point; the static equilibrium
``K u = f`` gives the node displacements, and the forces carried by the
springs attached to the base give the wrench.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg, ndimage

from .errors import ConfigError, DomainError, FormatError

CROSS_SECTIONS = ("circle", "square", "hexagon", "oval")

# Pose box sampled during data collection.
X_RANGE_CM = (0.0, 5.0)
Z_RANGE_CM = (-5.0, 5.0)
THETA_RANGE = (-math.pi, math.pi)

FORCE_LIMIT_N = 10.0
TORQUE_LIMIT_NMM = 600.0

# relative gains of the six channels before calibration
CHANNEL_GAINS = np.array([6.0, 1.0, 1.0, 0.0314, 0.00575, 1.0])

BACKGROUND = 0.0
FOREGROUND_BASE = 0.68
MARKER_GAIN = 0.2
# compressed lattice cells look denser: shading follows local areal strain
STRAIN_GAIN = 2.5
STRAIN_SHADE_MAX = 0.12


@dataclass(frozen=True)
class ContactPose:
    x_cm: float
    z_cm: float
    theta_rad: float

    def validate(self):
        for name, value, (lo, hi) in (
            ("x_cm", self.x_cm, X_RANGE_CM),
            ("z_cm", self.z_cm, Z_RANGE_CM),
            ("theta_rad", self.theta_rad, THETA_RANGE),
        ):
            if not (lo <= value <= hi):
                raise DomainError(f"{name}={value!r} outside [{lo}, {hi}]")
        return self

    def mirrored(self) -> "ContactPose":
        return ContactPose(self.x_cm, -self.z_cm, -self.theta_rad)


@dataclass(frozen=True)
class FingerPlantConfig:
    grid_rows: int = 10
    grid_cols: int = 7
    node_stiffness: float = 2.0  # N/mm
    tip_taper: float = 0.92
    contact_radius_mm: float = 4.0
    cross_section: str = "circle"
    # (force gain, torque gain); frozen from calibrate_wrench_scale() on the defaults.
    wrench_scale: tuple = (0.875793661, 7.80885774)
    base_width_mm: float = 28.0
    length_mm: float = 45.0
    contact_height: float = 0.6  # contact band centre, fraction of the length
    lateral_mm_per_cm: float = 1.6
    load_gain: float = 0.3  # N per cm of depth per unit contact weight
    image_size: int = 64
    px_per_mm: float = 1.2

    def __post_init__(self):
        if self.grid_rows < 4 or self.grid_cols < 4:
            raise ConfigError("lattice needs at least 4x4 nodes")
        if not (0.0 < self.tip_taper <= 1.0):
            raise ConfigError("tip_taper must lie in (0, 1]")
        if self.cross_section not in CROSS_SECTIONS:
            raise ConfigError(f"unknown cross_section {self.cross_section!r}")
        object.__setattr__(self, "wrench_scale", tuple(float(s) for s in self.wrench_scale))
        if len(self.wrench_scale) != 2:
            raise ConfigError("wrench_scale is (force_gain, torque_gain)")
        positives = (
            self.node_stiffness, self.contact_radius_mm, *self.wrench_scale,
            self.base_width_mm, self.length_mm, self.contact_height,
            self.lateral_mm_per_cm, self.load_gain, self.image_size, self.px_per_mm,
        )
        if any(not (v > 0) for v in positives):
            raise ConfigError("plant parameters must all be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["wrench_scale"] = list(self.wrench_scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FingerPlantConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown plant keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class DomainTag:
    variant: str = "land"
    brightness_shift: float = 0.0
    noise_std: float = 0.0
    blur_radius_px: float = 0.0
    caustic_amplitude: float = 0.0

    def __post_init__(self):
        if self.variant not in ("land", "water"):
            raise ConfigError(f"unknown domain variant {self.variant!r}")
        perturb = (self.brightness_shift, self.noise_std, self.blur_radius_px, self.caustic_amplitude)
        if self.variant == "land" and any(p != 0 for p in perturb):
            raise ConfigError("land domain has no photometric perturbation")
        if not (-0.3 <= self.brightness_shift <= 0.3):
            raise ConfigError("brightness_shift must lie in [-0.3, 0.3]")
        if not (0.0 <= self.noise_std <= 0.2):
            raise ConfigError("noise_std must lie in [0, 0.2]")
        if self.blur_radius_px < 0:
            raise ConfigError("blur_radius_px must be >= 0")
        if not (0.0 <= self.caustic_amplitude <= 0.3):
            raise ConfigError("caustic_amplitude must lie in [0, 0.3]")

    @classmethod
    def land(cls) -> "DomainTag":
        return cls("land")

    @classmethod
    def water(cls, brightness_shift=-0.05, noise_std=0.02, blur_radius_px=0.3,
              caustic_amplitude=0.05) -> "DomainTag":
        return cls("water", brightness_shift, noise_std, blur_radius_px, caustic_amplitude)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class DeformationState:
    displacements: np.ndarray  # (rows, cols, 2) in mm, (dX, dY)
    contact_mask: np.ndarray  # (rows, cols) bool

    def scaled(self, factor: float) -> "DeformationState":
        return DeformationState(self.displacements * factor, self.contact_mask.copy())


@dataclass(frozen=True)
class Wrench:
    fx: float
    fy: float
    fz: float
    tx: float
    ty: float
    tz: float
    frame: str = "finger_base"

    def as_array(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.fz, self.tx, self.ty, self.tz])

    @classmethod
    def from_array(cls, values, frame: str = "finger_base") -> "Wrench":
        v = [float(x) for x in np.asarray(values).reshape(6)]
        return cls(*v, frame=frame)


@dataclass(frozen=True)
class ThresholdBand:
    lo: float = 0.45
    hi: float = 1.0

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ConfigError(f"empty threshold band [{self.lo}, {self.hi}]")


# ---------------------------------------------------------------------------
# lattice assembly


def rest_positions(cfg: FingerPlantConfig) -> np.ndarray:
    """Undeformed node coordinates (rows, cols, 2) in mm; symmetric about X = 0."""
    rows, cols = cfg.grid_rows, cfg.grid_cols
    pitch_y = cfg.length_mm / (rows - 1)
    pos = np.empty((rows, cols, 2))
    offsets = np.arange(cols) - (cols - 1) / 2.0
    for i in range(rows):
        pitch_x = cfg.base_width_mm / (cols - 1) * cfg.tip_taper ** i
        pos[i, :, 0] = offsets * pitch_x
        pos[i, :, 1] = i * pitch_y
    return pos


def _springs(cfg: FingerPlantConfig):
    rows, cols = cfg.grid_rows, cfg.grid_cols
    idx = np.arange(rows * cols).reshape(rows, cols)
    pairs = [
        (idx[:, :-1], idx[:, 1:]),
        (idx[:-1, :], idx[1:, :]),
        (idx[:-1, :-1], idx[1:, 1:]),
        (idx[:-1, 1:], idx[1:, :-1]),
    ]
    a = np.concatenate([p[0].ravel() for p in pairs])
    b = np.concatenate([p[1].ravel() for p in pairs])
    return a, b


@functools.lru_cache(maxsize=16)
def _assembly(cfg: FingerPlantConfig):
    rows, cols = cfg.grid_rows, cfg.grid_cols
    n = rows * cols
    pos = rest_positions(cfg).reshape(n, 2)
    a, b = _springs(cfg)
    d = pos[b] - pos[a]
    unit = d / np.linalg.norm(d, axis=1, keepdims=True)
    k = cfg.node_stiffness
    K = np.zeros((2 * n, 2 * n))
    for ia, ib, u in zip(a, b, unit):
        blk = k * np.outer(u, u)
        for p, q, s in ((ia, ia, 1), (ib, ib, 1), (ia, ib, -1), (ib, ia, -1)):
            K[2 * p:2 * p + 2, 2 * q:2 * q + 2] += s * blk
    free = np.arange(cols, n)  # row 0 clamped
    dof = np.stack([2 * free, 2 * free + 1], axis=1).ravel()
    factor = linalg.cho_factor(K[np.ix_(dof, dof)])
    # springs that touch the clamped row: (free end node, unit vector, base node X)
    base_sel = (a < cols) | (b < cols)
    base_free_end = np.where(a[base_sel] < cols, b[base_sel], a[base_sel])
    base_node = np.where(a[base_sel] < cols, a[base_sel], b[base_sel])
    return {
        "pos": pos,
        "dof": dof,
        "factor": factor,
        "base_free_end": base_free_end,
        "base_unit": unit[base_sel],
        "base_x": pos[base_node, 0],
    }


def _contact_radius(cfg: FingerPlantConfig, theta: float) -> float:
    shape_mod = {
        "circle": 0.0,
        "oval": 0.35 * math.cos(2 * theta),
        "square": 0.15 * math.cos(4 * theta),
        "hexagon": 0.08 * math.cos(6 * theta),
    }[cfg.cross_section]
    return cfg.contact_radius_mm * (1.0 + shape_mod)


def contact_weights(pose: ContactPose, cfg: FingerPlantConfig) -> np.ndarray:
    pos = rest_positions(cfg)
    r = _contact_radius(cfg, pose.theta_rad)
    cx = pose.z_cm * cfg.lateral_mm_per_cm
    cy = (cfg.contact_height + 0.12 * math.cos(pose.theta_rad)) * cfg.length_mm
    d2 = (pos[..., 0] - cx) ** 2 + (pos[..., 1] - cy) ** 2
    w = np.exp(-d2 / (2.0 * r * r))
    w[0] = 0.0
    return w


def deform(pose: ContactPose, cfg: FingerPlantConfig) -> DeformationState:
    """Static lattice response to a rod pressed in at ``pose``.

    Load per node is ``depth * load_gain * w`` along the push direction
    ``(0.1 sin(theta) + 0.03 z/5, -1)``; displacement is therefore linear in depth.
    """
    pose.validate()
    asm = _assembly(cfg)
    rows, cols = cfg.grid_rows, cfg.grid_cols
    w = contact_weights(pose, cfg)
    lateral = 0.1 * math.sin(pose.theta_rad) + 0.03 * pose.z_cm / Z_RANGE_CM[1]
    load = np.zeros((rows, cols, 2))
    load[..., 0] = pose.x_cm * cfg.load_gain * w * lateral
    load[..., 1] = -pose.x_cm * cfg.load_gain * w
    rhs = load.reshape(-1)[asm["dof"]]
    u = np.zeros(2 * rows * cols)
    if pose.x_cm != 0.0:
        u[asm["dof"]] = linalg.cho_solve(asm["factor"], rhs)
    mask = (w >= 0.1) & (pose.x_cm > 0.0)
    return DeformationState(u.reshape(rows, cols, 2), mask)


def raw_wrench(state: DeformationState, cfg: FingerPlantConfig) -> np.ndarray:
    """Unscaled base wrench; every entry is a fixed linear functional of the displacements."""
    asm = _assembly(cfg)
    u = state.displacements.reshape(-1, 2)
    unit = asm["base_unit"]
    tension = cfg.node_stiffness * np.einsum("ij,ij->i", unit, u[asm["base_free_end"]])
    carried = tension[:, None] * unit  # force each base spring transmits
    fx = carried[:, 0].sum()
    fy = -carried[:, 1].sum()
    tz = -(asm["base_x"] * carried[:, 1]).sum()

    # out-of-plane channels: fixed combinations of in-plane displacement features
    pos = asm["pos"]
    k = cfg.node_stiffness
    yn = pos[:, 1] / cfg.length_mm
    xn = pos[:, 0] / cfg.base_width_mm
    push = -u[:, 1]
    fz = k * (np.sum(push * (1.0 - yn)) - 2.0 * np.sum(push * np.abs(xn)))
    tx = k * cfg.length_mm * np.sum(push * (yn - 0.5))
    ty = k * cfg.length_mm * (np.sum(u[:, 0] * yn) - 3.0 * np.sum(push * xn))
    return CHANNEL_GAINS * np.array([fx, fy, fz, tx, ty, tz])


def wrench_at_base(state: DeformationState, cfg: FingerPlantConfig) -> Wrench:
    fs, ts = cfg.wrench_scale
    raw = raw_wrench(state, cfg)
    return Wrench.from_array(raw * np.array([fs, fs, fs, ts, ts, ts]))


def plant_wrench(pose: ContactPose, cfg: FingerPlantConfig) -> np.ndarray:
    """Ground-truth wrench as a length-6 array (N, N, N, N*mm, N*mm, N*mm)."""
    return wrench_at_base(deform(pose, cfg), cfg).as_array()


def calibrate_wrench_scale(cfg: FingerPlantConfig, n: int = 10_000, seed: int = 0,
                           force_target: float = 9.5, torque_target: float = 570.0):
    """Brute-force sweep returning (force_gain, torque_gain) so sweep maxima hit the targets."""
    rng = np.random.default_rng(seed)
    peak = np.zeros(6)
    for _ in range(n):
        pose = ContactPose(rng.uniform(*X_RANGE_CM), rng.uniform(*Z_RANGE_CM), rng.uniform(*THETA_RANGE))
        peak = np.maximum(peak, np.abs(raw_wrench(deform(pose, cfg), cfg)))
    return force_target / peak[:3].max(), torque_target / peak[3:].max()


# ---------------------------------------------------------------------------
# rendering


def _to_pixels(points_mm: np.ndarray, cfg: FingerPlantConfig) -> np.ndarray:
    size = cfg.image_size
    col = (size - 1) / 2.0 + points_mm[..., 0] * cfg.px_per_mm
    row = (size - 1) - 0.08 * size - points_mm[..., 1] * cfg.px_per_mm
    return np.stack([row, col], axis=-1)


def _refine(grid: np.ndarray, s: int) -> np.ndarray:
    """Bilinearly refine a (rows, cols, 2) lattice by factor ``s`` along both axes."""
    rows, cols = grid.shape[:2]
    ti = np.linspace(0, rows - 1, (rows - 1) * s + 1)
    tj = np.linspace(0, cols - 1, (cols - 1) * s + 1)
    i0 = np.minimum(ti.astype(int), rows - 2)
    j0 = np.minimum(tj.astype(int), cols - 2)
    fi = (ti - i0)[:, None, None]
    fj = (tj - j0)[None, :, None]
    g00 = grid[i0][:, j0]
    g01 = grid[i0][:, j0 + 1]
    g10 = grid[i0 + 1][:, j0]
    g11 = grid[i0 + 1][:, j0 + 1]
    return (1 - fi) * ((1 - fj) * g00 + fj * g01) + fi * ((1 - fj) * g10 + fj * g11)


def _splat(points_px: np.ndarray, weights: np.ndarray, sigma: float, size: int) -> np.ndarray:
    # separable Gaussian kernels, float32 for speed (the result is re-quantised anyway)
    axis = np.arange(size, dtype=np.float32)
    pts = points_px.astype(np.float32)
    scale = np.float32(-0.5 / (sigma * sigma))
    # clamp keeps exp() out of the (slow) subnormal range
    gr = np.exp(np.maximum(np.square(axis[None, :] - pts[:, 0:1]) * scale, -20.0))
    gc = np.exp(np.maximum(np.square(axis[None, :] - pts[:, 1:2]) * scale, -20.0))
    return ((gr * weights.astype(np.float32)[:, None]).T @ gc).astype(np.float64)


@functools.lru_cache(maxsize=16)
def _body_weights(cfg: FingerPlantConfig, s: int, sigma: float) -> np.ndarray:
    # area represented by each refined sample point in the rest pose, normalised so the
    # splatted body field is ~1 in the interior
    fine = _to_pixels(_refine(rest_positions(cfg), s), cfg)
    dr = np.abs(np.gradient(fine[..., 0], axis=0))
    dc = np.abs(np.gradient(fine[..., 1], axis=1))
    area = dr * dc
    return (area / (2 * math.pi * sigma * sigma)).ravel()


def foreground(state: DeformationState, cfg: FingerPlantConfig):
    """Finger foreground intensity and mask for a deformation state."""
    s, sigma_body, sigma_marker = 3, 1.3, 0.9
    nodes = rest_positions(cfg) + state.displacements
    fine = _to_pixels(_refine(nodes, s), cfg).reshape(-1, 2)
    body = _splat(fine, _body_weights(cfg, s, sigma_body), sigma_body, cfg.image_size)
    node_px = _to_pixels(nodes, cfg).reshape(-1, 2)
    markers = _splat(node_px, np.ones(len(node_px)), sigma_marker, cfg.image_size)
    mask = body >= 0.5
    shade = _strain_shading(nodes, cfg, s, sigma_body)
    intensity = FOREGROUND_BASE + MARKER_GAIN * np.clip(markers, 0.0, 1.0) + shade
    return np.where(mask, intensity, BACKGROUND), mask


def _cell_areas(grid: np.ndarray) -> np.ndarray:
    # shoelace formula over each quad of a (rows, cols, 2) lattice
    quad = np.stack([grid[:-1, :-1], grid[:-1, 1:], grid[1:, 1:], grid[1:, :-1]])
    x, y = quad[..., 0], quad[..., 1]
    return 0.5 * np.abs(np.sum(x * np.roll(y, -1, axis=0) - np.roll(x, -1, axis=0) * y, axis=0))


@functools.lru_cache(maxsize=16)
def _rest_cells(cfg: FingerPlantConfig, s: int) -> np.ndarray:
    return _cell_areas(_refine(rest_positions(cfg), s))


def _strain_shading(nodes: np.ndarray, cfg: FingerPlantConfig, s: int, sigma: float) -> np.ndarray:
    """Smooth intensity offset from the areal strain of each refined lattice cell."""
    fine = _refine(nodes, s)
    rest = _rest_cells(cfg, s)
    strain = _cell_areas(fine) / rest - 1.0
    shade = np.clip(STRAIN_GAIN * strain, -STRAIN_SHADE_MAX, STRAIN_SHADE_MAX).ravel()
    centers = _to_pixels(0.25 * (fine[:-1, :-1] + fine[:-1, 1:] + fine[1:, 1:] + fine[1:, :-1]), cfg).reshape(-1, 2)
    w = rest.ravel()
    num = _splat(centers, w * shade, sigma, cfg.image_size)
    den = _splat(centers, w, sigma, cfg.image_size)
    return num / np.maximum(den, 1e-12)


def _clutter(size: int, rng: np.random.Generator) -> np.ndarray:
    img = np.zeros((size, size))
    rr, cc = np.mgrid[0:size, 0:size]
    for _ in range(int(rng.integers(3, 7))):
        level = rng.uniform(0.1, 0.3)
        r0, c0 = rng.uniform(0, size, 2)
        if rng.random() < 0.5:
            rad = rng.uniform(2, 8)
            shape = (rr - r0) ** 2 + (cc - c0) ** 2 <= rad * rad
        else:
            hr, hc = rng.uniform(2, 10, 2)
            shape = (np.abs(rr - r0) <= hr) & (np.abs(cc - c0) <= hc)
        img[shape] = level
    return img


def render(state: DeformationState, domain: DomainTag, clutter: bool, seed: int,
           cfg: FingerPlantConfig | None = None) -> np.ndarray:
    """Camera image (H, W) in [0, 1] of a deformation state.

    Clutter shapes sit behind the finger at intensities in [0.1, 0.3]. Water adds
    blur, a low-frequency caustic pattern, a brightness shift and pixel noise.
    """
    cfg = cfg or FingerPlantConfig()
    rng = np.random.default_rng(seed)
    img, mask = foreground(state, cfg)
    if clutter:
        img = np.where(mask, img, _clutter(cfg.image_size, rng))
    if domain.variant == "water":
        size = cfg.image_size
        if domain.blur_radius_px > 0:
            img = ndimage.gaussian_filter(img, domain.blur_radius_px, mode="nearest")
        if domain.caustic_amplitude > 0:
            k1, k2 = rng.uniform(0.08, 0.2, 2)
            p1, p2 = rng.uniform(0, 2 * math.pi, 2)
            axis = np.arange(size)
            img = img + domain.caustic_amplitude * np.outer(np.sin(k1 * axis + p1), np.sin(k2 * axis + p2))
        img = img + domain.brightness_shift
        if domain.noise_std > 0:
            img = img + rng.normal(0.0, domain.noise_std, img.shape)
    return np.clip(img, 0.0, 1.0)


def color_threshold(img: np.ndarray, band: ThresholdBand = ThresholdBand()) -> np.ndarray:
    """Zero every pixel outside the finger's intensity band."""
    keep = (img >= band.lo) & (img <= band.hi)
    return np.where(keep, img, 0.0)


# ---------------------------------------------------------------------------
# PGM


def write_pgm(path, img: np.ndarray) -> None:
    """Binary P5, maxval 255, row-major; values are rounded to the nearest level."""
    Path(path).write_bytes(encode_pgm(img))


def encode_pgm(img: np.ndarray) -> bytes:
    q = np.rint(np.clip(np.asarray(img), 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = q.shape
    return b"P5\n%d %d\n255\n" % (w, h) + q.tobytes()


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM", offset=0)
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header", offset=pos)
        tokens.append(int(data[start:pos]))
    pos += 1
    w, h, maxval = tokens
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}", offset=pos)
    body = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos) if len(data) - pos >= w * h else None
    if body is None:
        raise FormatError(f"{path}: pixel data truncated", offset=len(data))
    return body.reshape(h, w).astype(np.float64) / 255.0
