"""Force control on top of the tactile estimator.

The gripper is a one-dimensional position-controlled plant: position ``P``
(mm of finger travel) maps to grip force through a monotone law that is zero
before contact. The loop measures ``P``, estimates force, and commands a new
position with a proportional update and a dead-band.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import svae
from .errors import ConfigError, InfeasibleReferenceError, RangeError
from .plant import (
    ContactPose,
    DomainTag,
    FingerPlantConfig,
    ThresholdBand,
    Wrench,
    X_RANGE_CM,
    color_threshold,
    deform,
    render,
    wrench_at_base,
)

GRIP_AXIS = 1  # world Y is the gripping direction


# ---------------------------------------------------------------------------
# wrench projection


@dataclass(frozen=True)
class FrameTransform:
    """Rotation taking finger-base coordinates to world coordinates."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        if r.shape != (3, 3) or not np.all(np.isfinite(r)):
            raise ConfigError("rotation must be a finite 3x3 matrix")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ConfigError("rotation is not in SO(3)")
        object.__setattr__(self, "rotation", r)

    @classmethod
    def about_z(cls, angle_rad: float) -> "FrameTransform":
        c, s = math.cos(angle_rad), math.sin(angle_rad)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]))


def project_grip_force(w, transform: FrameTransform = FrameTransform()) -> float:
    """World-Y component of the rotated force part; torques are ignored."""
    if isinstance(w, Wrench):
        if w.frame != "finger_base":
            raise ConfigError(f"expected a finger_base wrench, got frame {w.frame!r}")
        w = w.as_array()
    w = np.asarray(w, dtype=np.float64).reshape(6)
    return float(transform.rotation[GRIP_AXIS] @ w[:3])


# ---------------------------------------------------------------------------
# plant


@dataclass(frozen=True)
class GraspPlant:
    """Monotone position-to-force law.

    ``nodes`` are (P, F) pairs in mm and N, the first at (p_c, 0). Beyond the
    last node the law continues with the final slope. ``shifts`` is a step
    schedule of (t_start, dP) moving the whole law along P, which models the
    object changing its contact-onset position mid-grasp.
    """

    p_c: float
    p_max: float
    nodes: tuple
    shifts: tuple = ()

    def __post_init__(self):
        nodes = tuple((float(p), float(f)) for p, f in self.nodes)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "shifts", tuple(sorted((float(t), float(d)) for t, d in self.shifts)))
        if not (0.0 <= self.p_c < self.p_max):
            raise ConfigError(f"need 0 <= p_c < p_max, got {self.p_c}, {self.p_max}")
        if len(nodes) < 2:
            raise ConfigError("force law needs at least two nodes")
        if nodes[0] != (float(self.p_c), 0.0):
            raise ConfigError("first node must be (p_c, 0)")
        ps = np.array([p for p, _ in nodes])
        fs = np.array([f for _, f in nodes])
        if np.any(np.diff(ps) <= 0):
            raise ConfigError("node positions must be strictly increasing")
        if np.any(np.diff(fs) < 0):
            raise ConfigError("force law must be non-decreasing")

    @classmethod
    def linear(cls, slope: float, p_c: float = 10.0, p_max: float = 30.0, shifts=()) -> "GraspPlant":
        return cls(p_c, p_max, ((p_c, 0.0), (p_c + 1.0, slope)), shifts)

    @classmethod
    def from_offsets(cls, p_c: float, p_max: float, offsets, shifts=()) -> "GraspPlant":
        """Nodes given relative to the contact onset."""
        return cls(p_c, p_max, tuple((p_c + dp, f) for dp, f in offsets), shifts)

    @property
    def slopes(self) -> np.ndarray:
        p = np.array([n[0] for n in self.nodes])
        f = np.array([n[1] for n in self.nodes])
        return np.diff(f) / np.diff(p)

    @property
    def lambda_min(self) -> float:
        return float(self.slopes.min())

    @property
    def lambda_max(self) -> float:
        return float(self.slopes.max())

    def shift_at(self, t: float) -> float:
        d = 0.0
        for t0, dp in self.shifts:
            if t >= t0:
                d = dp
        return d

    def onset(self, t: float = 0.0) -> float:
        return self.p_c + self.shift_at(t)

    def psi(self, u: float) -> float:
        """Force law evaluated at un-shifted position ``u >= p_c``."""
        ps = [n[0] for n in self.nodes]
        fs = [n[1] for n in self.nodes]
        if u >= ps[-1]:
            return fs[-1] + self.slopes[-1] * (u - ps[-1])
        return float(np.interp(u, ps, fs))

    def psi_inverse(self, force: float) -> float:
        """Smallest un-shifted position reaching ``force``."""
        if force <= 0:
            return self.p_c
        ps = [n[0] for n in self.nodes]
        fs = [n[1] for n in self.nodes]
        if force >= fs[-1]:
            if self.slopes[-1] <= 0:
                raise InfeasibleReferenceError(f"force {force} N is never reached")
            return ps[-1] + (force - fs[-1]) / self.slopes[-1]
        k = int(np.searchsorted(fs, force, side="left"))
        p0, f0, p1, f1 = ps[k - 1], fs[k - 1], ps[k], fs[k]
        return p0 + (force - f0) * (p1 - p0) / (f1 - f0)

    def max_force(self, t: float = 0.0) -> float:
        return plant_force(self.p_max, self, t)

    def with_shifts(self, shifts) -> "GraspPlant":
        return GraspPlant(self.p_c, self.p_max, self.nodes, tuple(shifts))


def plant_force(p: float, plant: GraspPlant, t: float = 0.0) -> float:
    """Contact force at position ``p`` and time ``t``; zero before contact."""
    if p > plant.p_max + 1e-12:
        raise RangeError(f"position {p} mm beyond p_max {plant.p_max} mm")
    if p < 0:
        raise RangeError(f"position {p} mm is negative")
    shift = plant.shift_at(t)
    u = p - shift
    if u < plant.p_c:
        return 0.0
    return plant.psi(u)


DEFAULT_PLANT = GraspPlant.from_offsets(10.0, 30.0, ((0, 0.0), (2, 0.5), (6, 3.0), (10, 6.0)))


# ---------------------------------------------------------------------------
# reference motion


@dataclass(frozen=True)
class ControllerConfig:
    k: float = 0.6  # N/mm
    delta: float = 0.05  # N
    loop_rate: float = 120.0  # Hz

    def __post_init__(self):
        for name in ("k", "delta", "loop_rate"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive and finite, got {v}")


@dataclass
class ControllerState:
    p_m: float
    f_est: float
    f_ref: float
    p_ref: float = float("nan")


def motion_step(state: ControllerState, cfg: ControllerConfig, p_max: float = math.inf) -> float:
    """Commanded position: hold inside the dead-band, otherwise move by error / K."""
    err = state.f_ref - state.f_est
    if not (math.isfinite(err) and math.isfinite(state.p_m)):
        raise ConfigError("controller state must be finite")
    if abs(err) <= cfg.delta:
        return state.p_m
    return min(max(state.p_m + err / cfg.k, 0.0), p_max)


# ---------------------------------------------------------------------------
# estimators


class OracleEstimator:
    """Reads the true plant force."""

    name = "oracle"

    def __call__(self, plant: GraspPlant, p: float, t: float, tick: int) -> float:
        return plant_force(p, plant, t)


class SVAEEstimator:
    """Renders the finger at the current force, then thresholds, encodes, predicts and projects.

    The object presses the finger at a fixed lateral offset and orientation;
    the grip force sets the contact depth through the finger's own (linear)
    force-per-depth at that pose. ``scene_seed`` fixes clutter and caustics;
    with ``frame_noise`` each tick also draws fresh sensor noise.
    """

    name = "svae"

    def __init__(self, ckpt: svae.Checkpoint, finger: FingerPlantConfig = FingerPlantConfig(),
                 domain: DomainTag = DomainTag.land(), z_cm: float = 0.0, theta_rad: float = 0.0,
                 transform: FrameTransform = FrameTransform(), band: ThresholdBand = ThresholdBand(),
                 clutter: bool = True, scene_seed: int = 0, frame_noise: bool = False):
        self.ckpt, self.finger, self.domain = ckpt, finger, domain
        self.z_cm, self.theta_rad = z_cm, theta_rad
        self.transform, self.band, self.clutter = transform, band, clutter
        self.scene_seed, self.frame_noise = scene_seed, frame_noise
        unit = wrench_at_base(deform(ContactPose(1.0, z_cm, theta_rad), finger), finger)
        self.force_per_cm = project_grip_force(unit, transform)
        if self.force_per_cm <= 0:
            raise ConfigError("pose gives no grip-direction force")

    def depth_for(self, force: float) -> float:
        return min(max(force / self.force_per_cm, X_RANGE_CM[0]), X_RANGE_CM[1])

    def image(self, force: float, tick: int = 0) -> np.ndarray:
        state = deform(ContactPose(self.depth_for(force), self.z_cm, self.theta_rad), self.finger)
        seed = self.scene_seed + tick if self.frame_noise else self.scene_seed
        return color_threshold(render(state, self.domain, self.clutter, seed, self.finger), self.band)

    def estimate_image(self, img: np.ndarray) -> float:
        mu, _ = svae.encode(self.ckpt, img)
        w = svae.predict_wrench(self.ckpt, mu)[0]
        return project_grip_force(w, self.transform)

    def __call__(self, plant: GraspPlant, p: float, t: float, tick: int) -> float:
        return self.estimate_image(self.image(plant_force(p, plant, t), tick))


# ---------------------------------------------------------------------------
# traces


@dataclass
class Trace:
    """Per-tick log. Time is ``tick / loop_rate``."""

    loop_rate: float
    ticks: list = field(default_factory=list)
    p_m: list = field(default_factory=list)
    f_est: list = field(default_factory=list)
    f_ref: list = field(default_factory=list)
    f_true: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def append(self, tick, p_m, f_est, f_ref, f_true, event=""):
        self.ticks.append(tick)
        self.p_m.append(p_m)
        self.f_est.append(f_est)
        self.f_ref.append(f_ref)
        self.f_true.append(f_true)
        self.events.append(event)

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.ticks, dtype=np.float64) / self.loop_rate

    def __len__(self):
        return len(self.ticks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "P_m", "F_est", "F_ref", "event"])
        for k in range(len(self)):
            w.writerow([repr(float(self.times[k])), repr(self.p_m[k]), repr(self.f_est[k]),
                        repr(self.f_ref[k]), self.events[k]])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    def segments(self, tag: str) -> list[tuple[int, int]]:
        """Index ranges [start, end) that begin at each event ``tag``."""
        starts = [k for k, e in enumerate(self.events) if tag in e.split("+")]
        return list(zip(starts, starts[1:] + [len(self)]))

    def settling(self, tag: str, delta: float) -> list[dict]:
        """Ticks from each tagged event until |F_est - F_ref| <= delta, and whether it then held."""
        out = []
        err = np.abs(np.asarray(self.f_est) - np.asarray(self.f_ref))
        for a, b in self.segments(tag):
            inside = np.flatnonzero(err[a:b] <= delta)
            if inside.size == 0:
                out.append({"start": a, "ticks": None, "held": False, "f_ref": self.f_ref[a]})
                continue
            first = int(inside[0])
            out.append({"start": a, "ticks": first, "held": bool(np.all(err[a + first:b] <= delta)),
                        "f_ref": self.f_ref[a]})
        return out


Estimator = Callable[[GraspPlant, float, float, int], float]


def _check_feasible(plant: GraspPlant, f_ref: float, t: float = 0.0):
    top = plant.max_force(t)
    if f_ref > top:
        raise InfeasibleReferenceError(f"reference {f_ref} N exceeds the plant's {top:.4g} N at p_max")
    if f_ref < 0:
        raise InfeasibleReferenceError(f"reference {f_ref} N is negative")


def _run(plant: GraspPlant, refs: Sequence[float], events: Sequence[str], cfg: ControllerConfig,
         estimator: Estimator, p0: float) -> Trace:
    trace = Trace(cfg.loop_rate)
    p = float(p0)
    for tick, (f_ref, event) in enumerate(zip(refs, events)):
        t = tick / cfg.loop_rate
        f_est = float(estimator(plant, p, t, tick))
        state = ControllerState(p, f_est, float(f_ref))
        state.p_ref = motion_step(state, cfg, plant.p_max)
        trace.append(tick, p, f_est, float(f_ref), plant_force(p, plant, t), event)
        p = state.p_ref  # ideal inner position loop
    return trace


def run_force_tracking(plan: Sequence[tuple[float, int]], plant: GraspPlant = DEFAULT_PLANT,
                       cfg: ControllerConfig = ControllerConfig(), estimator: Estimator | None = None,
                       p0: float | None = None) -> Trace:
    """Track a sequence of (F_ref, hold_ticks) setpoints; starts at contact onset by default."""
    if not plan:
        raise ConfigError("plan is empty")
    estimator = estimator or OracleEstimator()
    refs, events = [], []
    for f_ref, hold in plan:
        if int(hold) < 1:
            raise ConfigError("each setpoint must be held for at least one tick")
        _check_feasible(plant, f_ref)
        refs += [f_ref] * int(hold)
        events += ["step"] + [""] * (int(hold) - 1)
    return _run(plant, refs, events, cfg, estimator, plant.p_c if p0 is None else p0)


# rotating an oval tube between the fingers changes its width along the grip axis


def oval_width(angle_rad: float, grip_semi_axis_mm: float = 10.0, other_semi_axis_mm: float = 15.0) -> float:
    a, b = grip_semi_axis_mm, other_semi_axis_mm
    return 2.0 * math.sqrt((a * math.cos(angle_rad)) ** 2 + (b * math.sin(angle_rad)) ** 2)


def rotation_schedule(angles_deg: Sequence[float], period_ticks: int, loop_rate: float,
                      start_tick: int | None = None, **axes) -> tuple:
    """P_c shifts for a tube rotated to each absolute angle in turn.

    A wider cross-section meets the finger earlier, so the onset moves back by
    half the width gain.
    """
    w0 = oval_width(0.0, **axes)
    start = period_ticks if start_tick is None else start_tick
    return tuple(((start + k * period_ticks) / loop_rate, -(oval_width(math.radians(a), **axes) - w0) / 2.0)
                 for k, a in enumerate(angles_deg))


def run_disturbance(plant: GraspPlant, f_ref: float = 0.4, cfg: ControllerConfig = ControllerConfig(),
                    estimator: Estimator | None = None, total_ticks: int | None = None,
                    p0: float | None = None) -> Trace:
    """Hold ``f_ref`` while the plant's contact onset follows its shift schedule."""
    estimator = estimator or OracleEstimator()
    for t0, _ in ((0.0, 0.0),) + plant.shifts:
        _check_feasible(plant, f_ref, t0)
    shift_ticks = {int(round(t0 * cfg.loop_rate)) for t0, _ in plant.shifts}
    last = max(shift_ticks, default=0)
    n = total_ticks if total_ticks is not None else last + 120
    events = []
    for tick in range(n):
        tags = (["start"] if tick == 0 else []) + (["shift"] if tick in shift_ticks else [])
        events.append("+".join(tags))
    return _run(plant, [f_ref] * n, events, cfg, estimator, plant.p_c if p0 is None else p0)


# ---------------------------------------------------------------------------
# contraction check


def contraction_bound(plant: GraspPlant, k: float) -> float:
    return float(np.max(np.abs(1.0 - plant.slopes / k)))


def contraction_run(plant: GraspPlant, k: float, f_ref: float, delta: float = 0.05,
                    max_steps: int = 10_000, p0: float | None = None) -> dict:
    """Iterate the position update from contact onset until |e| <= delta, recording every error."""
    cfg = ControllerConfig(k=k, delta=delta)
    p = plant.p_c if p0 is None else p0
    errs = [f_ref - plant_force(p, plant)]
    bound = contraction_bound(plant, k)
    while abs(errs[-1]) > delta and len(errs) <= max_steps:
        p = motion_step(ControllerState(p, f_ref - errs[-1], f_ref), cfg, plant.p_max)
        errs.append(f_ref - plant_force(p, plant))
    a = np.abs(np.asarray(errs))
    converged = bool(a[-1] <= delta)
    return {
        "k": k,
        "f_ref": f_ref,
        "lambda_min": plant.lambda_min,
        "lambda_max": plant.lambda_max,
        "gain_condition": bool(k > plant.lambda_max / 2),
        "steps": len(errs) - 1,
        "converged": converged,
        "strictly_decreasing": bool(np.all(np.diff(a) < 0)),
        "bound": bound,
        "bound_holds": bool(np.all(a[1:] <= bound * a[:-1] + 1e-9)),
        "errors": [float(e) for e in errs[:50]],
    }


def random_plant(rng: np.random.Generator, lambda_max: float = 1.0, max_segments: int = 4) -> GraspPlant:
    """Piecewise-linear plant with strictly positive slopes, the steepest exactly ``lambda_max``."""
    n = int(rng.integers(1, max_segments + 1))
    slopes = rng.uniform(0.2, 1.0, n) * lambda_max
    slopes[rng.integers(n)] = lambda_max
    widths = rng.uniform(1.0, 5.0, n)
    p_c = float(rng.uniform(2.0, 10.0))
    offsets, p, f = [(0.0, 0.0)], 0.0, 0.0
    for s, w in zip(slopes, widths):
        p, f = p + w, f + s * w
        offsets.append((p, f))
    return GraspPlant.from_offsets(p_c, p_c + p, offsets)


def verify_contraction(trials: int = 200, k_factors=(0.6, 0.8, 1.0, 1.5), lambda_max: float = 1.0,
                       delta: float = 0.05, seed: int = 0, extra=()) -> dict:
    """Random plants and feasible references for each gain ``K = factor * lambda_max``.

    ``extra`` holds (plant, K, F_ref) cases appended as given, e.g. gains at or
    below half the steepest slope.
    """
    rng = np.random.default_rng(seed)
    runs = []
    for _ in range(trials):
        plant = random_plant(rng, lambda_max)
        f_ref = float(rng.uniform(2 * delta, plant.max_force()))
        for kf in k_factors:
            runs.append(contraction_run(plant, kf * lambda_max, f_ref, delta))
    for plant, k, f_ref in extra:
        runs.append(contraction_run(plant, k, f_ref, delta, max_steps=200))
    eligible = [r for r in runs if r["gain_condition"]]
    ok = [r for r in eligible if r["converged"] and r["strictly_decreasing"] and r["bound_holds"]]
    flagged = [r for r in runs if not (r["converged"] and r["strictly_decreasing"])]
    return {
        "runs": len(runs),
        "eligible": len(eligible),
        "pass_rate": len(ok) / len(eligible) if eligible else float("nan"),
        "max_steps": max((r["steps"] for r in ok), default=0),
        "flagged": flagged,
        "results": runs,
    }


# ---------------------------------------------------------------------------
# grasping


@dataclass(frozen=True)
class GraspObject:
    name: str
    width_mm: float
    offsets: tuple  # force law relative to contact onset
    f_min: float
    f_max: float
    z_cm: float = 0.0
    theta_rad: float = 0.0

    def __post_init__(self):
        if not self.f_min < self.f_max:
            raise ConfigError(f"{self.name}: empty success window")

    @property
    def f_target(self) -> float:
        return 0.5 * (self.f_min + self.f_max)


GRIPPER_OPEN_MM = 100.0
GRIPPER_TRAVEL_MM = 45.0

DEFAULT_OBJECTS = (
    GraspObject("sponge", 60.0, ((0, 0.0), (8, 1.2), (14, 3.0)), 0.6, 2.0, 0.0, 0.0),
    GraspObject("tube", 50.0, ((0, 0.0), (10, 3.5)), 1.0, 3.0, 1.0, 0.4),
    GraspObject("bottle", 64.0, ((0, 0.0), (2, 0.6), (8, 4.8)), 1.5, 3.5, -1.0, -0.3),
    GraspObject("fruit", 56.0, ((0, 0.0), (4, 0.8), (10, 4.4)), 1.0, 2.6, 0.5, 1.0),
    GraspObject("cup", 44.0, ((0, 0.0), (10, 5.0)), 1.0, 3.0, -0.5, -0.8),
)


@dataclass(frozen=True)
class GraspScenario:
    obj: GraspObject
    mode: str = "closed"  # "open" | "closed"
    sigma_mm: float = 5.0
    trials: int = 10
    seed: int = 0
    tick_budget: int = 240

    def __post_init__(self):
        if self.mode not in ("open", "closed"):
            raise ConfigError(f"unknown grasp mode {self.mode!r}")
        if self.sigma_mm < 0:
            raise ConfigError("sigma must be >= 0")
        if self.trials < 1 or self.tick_budget < 1:
            raise ConfigError("trials and tick budget must be positive")


def object_plant(obj: GraspObject, offset_mm: float = 0.0) -> GraspPlant:
    """Plant for an object whose actual position differs from nominal by ``offset_mm``."""
    p_c = (GRIPPER_OPEN_MM - obj.width_mm) / 2.0 + offset_mm
    p_c = min(max(p_c, 0.0), GRIPPER_TRAVEL_MM - 1.0)
    return GraspPlant.from_offsets(p_c, GRIPPER_TRAVEL_MM, obj.offsets)


def grasp_trial(scenario: GraspScenario, estimator: Estimator | None, rng: np.random.Generator,
                cfg: ControllerConfig = ControllerConfig(k=0.5)) -> tuple[bool, Trace]:
    """One grasp. Open loop closes to the nominal target width; closed loop servos until confirmed."""
    obj = scenario.obj
    offset = float(rng.normal(0.0, scenario.sigma_mm)) if scenario.sigma_mm > 0 else 0.0
    plant = object_plant(obj, offset)
    nominal = object_plant(obj)
    trace = Trace(cfg.loop_rate)
    if scenario.mode == "open":
        p = min(nominal.psi_inverse(obj.f_target), plant.p_max)
        f = plant_force(p, plant)
        trace.append(0, p, float("nan"), obj.f_target, f, "close")
        return obj.f_min <= f <= obj.f_max, trace

    estimator = estimator or OracleEstimator()
    p, confirmed = 0.0, False
    for tick in range(scenario.tick_budget):
        t = tick / cfg.loop_rate
        f_est = float(estimator(plant, p, t, tick))
        f_true = plant_force(p, plant, t)
        if abs(f_est - obj.f_target) <= cfg.delta:
            trace.append(tick, p, f_est, obj.f_target, f_true, "confirm")
            confirmed = True
            break
        trace.append(tick, p, f_est, obj.f_target, f_true, "")
        p = motion_step(ControllerState(p, f_est, obj.f_target), cfg, plant.p_max)
    f = plant_force(p, plant)
    return confirmed and obj.f_min <= f <= obj.f_max, trace


def grasp_experiment(objects: Sequence[GraspObject] = DEFAULT_OBJECTS, trials: int = 10,
                     sigma_mm: float = 5.0, seed: int = 0, estimators: dict | None = None,
                     cfg: ControllerConfig = ControllerConfig(k=0.5), tick_budget: int = 240) -> dict:
    """Success rates for open/closed loop in each domain.

    ``estimators`` maps a domain name to a factory ``f(obj) -> estimator``;
    by default both domains use the oracle. Each (object, trial) draws the
    same approach offset in every cell, so cells differ only by mode and domain.
    """
    if len(objects) < 1:
        raise ConfigError("need at least one object")
    estimators = estimators or {"land": lambda obj: OracleEstimator(), "water": lambda obj: OracleEstimator()}
    table = {}
    for domain, factory in estimators.items():
        for mode in ("open", "closed"):
            per_obj = {}
            for j, obj in enumerate(objects):
                est = factory(obj) if mode == "closed" else None
                sc = GraspScenario(obj, mode, sigma_mm, trials, seed, tick_budget)
                rng = np.random.default_rng([seed, j])
                wins = sum(grasp_trial(sc, est, rng, cfg)[0] for _ in range(trials))
                per_obj[obj.name] = wins / trials
            table[f"{mode}/{domain}"] = {"per_object": per_obj, "average": float(np.mean(list(per_obj.values())))}
    return table


def grasp_rows(table: dict) -> list[dict]:
    rows = []
    for cell, v in table.items():
        mode, domain = cell.split("/")
        for name, rate in v["per_object"].items():
            rows.append({"mode": mode, "domain": domain, "object": name, "success_rate": rate})
        rows.append({"mode": mode, "domain": domain, "object": "average", "success_rate": v["average"]})
    return rows
