"""Parametric generator of labeled synthetic exercise repetitions.

Each repetition animates a rigid 25-joint skeleton through a raised-cosine
phase profile (neutral -> peak -> neutral). Error classes deflect the
class-defining angle away from the correct profile by a configurable
margin, so classes are geometrically separated by construction. Legs stay
put in all three exercises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dataio import Corpus, EXERCISES, LABELS, SkeletonSequence
from .skeleton import JOINT_NAMES

_J = {name: i for i, name in enumerate(JOINT_NAMES)}

# bone lengths in meters
_L = {
    "spine_lower": 0.25, "spine_upper": 0.25, "neck": 0.10, "head": 0.15,
    "clavicle": 0.20, "upper_arm": 0.28, "forearm": 0.25,
    "hand": 0.08, "hand_tip": 0.08, "thumb": 0.05,
    "pelvis": 0.10, "thigh": 0.40, "shin": 0.45, "foot": 0.15,
}

_BASE_HEIGHT = 1.0


@dataclass(frozen=True)
class MotionSpec:
    """Angle targets (degrees) reached at the peak of the movement."""

    exercise: str
    error_class: str
    arm_elevation_deg: float        # active arm(s), 0 = hanging, 90 = horizontal
    off_arm_elevation_deg: float    # the other arm (flank stretch)
    torso_rotation_deg: float
    lean_deg: float
    arm_spread_deg: float           # 0 = lateral raise, 90 = forward raise
    elbow_bend_deg: float
    noise_sigma: float = 0.0        # meters, additive Gaussian on every coordinate
    t_raw: int = 60
    seed: int = 0

    def __post_init__(self):
        if self.exercise not in EXERCISES:
            raise ValueError(f"unknown exercise {self.exercise!r}")
        if self.error_class not in LABELS:
            raise ValueError(f"unknown error class {self.error_class!r}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.t_raw < 2:
            raise ValueError("t_raw must be >= 2")
        for f in ("arm_elevation_deg", "off_arm_elevation_deg", "torso_rotation_deg",
                  "lean_deg", "arm_spread_deg", "elbow_bend_deg"):
            val = getattr(self, f)
            if not -180.0 <= val <= 180.0:
                raise ValueError(f"{f}={val} outside [-180, 180]")


# correct-profile peak angles per exercise:
# (elev, off_elev, yaw, lean, spread, bend)
_CORRECT = {
    "torso_rotation": (100.0, 100.0, 60.0, 0.0, 0.0, 0.0),
    "flank_stretch": (170.0, 0.0, 0.0, 30.0, 0.0, 45.0),
    "hiding_face": (90.0, 90.0, 0.0, 0.0, 0.0, 90.0),
}

# which angle each error class deflects, and the sign of the deflection
_ERROR_AXES = {
    "torso_rotation": {"error1": ("arm_elevation_deg", -1),
                       "error2": ("torso_rotation_deg", -1),
                       "error3": ("lean_deg", +1)},
    "flank_stretch": {"error1": ("off_arm_elevation_deg", +1),
                      "error2": ("lean_deg", -1),
                      "error3": ("elbow_bend_deg", -1)},
    "hiding_face": {"error1": ("arm_elevation_deg", -1),
                    "error2": ("arm_spread_deg", +1),
                    "error3": ("elbow_bend_deg", -1)},
}


def default_spec(exercise: str, error_class: str, margin_deg: float = 25.0,
                 noise_sigma: float = 0.0, t_raw: int = 60, seed: int = 0) -> MotionSpec:
    """Spec for a class: the correct profile with the class angle deflected by margin_deg."""
    if exercise not in _CORRECT:
        raise ValueError(f"unknown exercise {exercise!r}")
    elev, off, yaw, lean, spread, bend = _CORRECT[exercise]
    spec = MotionSpec(exercise=exercise, error_class=error_class,
                      arm_elevation_deg=elev, off_arm_elevation_deg=off,
                      torso_rotation_deg=yaw, lean_deg=lean,
                      arm_spread_deg=spread, elbow_bend_deg=bend,
                      noise_sigma=noise_sigma, t_raw=t_raw, seed=seed)
    if error_class == "correct":
        return spec
    axes = _ERROR_AXES[exercise]
    if error_class not in axes:
        raise ValueError(f"invalid class {error_class!r} for {exercise!r}")
    field_name, sign = axes[error_class]
    return replace(spec, **{field_name: getattr(spec, field_name) + sign * margin_deg})


# -- rigid-body pose construction ------------------------------------------

def _rodrigues(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    k = axis / np.linalg.norm(axis)
    return (v * math.cos(angle) + np.cross(k, v) * math.sin(angle)
            + k * np.dot(k, v) * (1.0 - math.cos(angle)))


def _arm_points(shoulder: np.ndarray, side: float, elev: float, spread: float,
                bend: float) -> list:
    """Elbow, wrist, hand, hand tip, thumb for one arm. side=+1 left, -1 right."""
    d = np.array([side * math.sin(elev) * math.cos(spread),
                  -math.cos(elev),
                  math.sin(elev) * math.sin(spread)])
    # elbow hinge axis: perpendicular to the upper arm, horizontal-ish
    axis = np.array([-d[2], 0.0, d[0]])
    if np.linalg.norm(axis) < 1e-9:
        axis = np.array([0.0, 0.0, side])
    fd = _rodrigues(d, axis, bend)
    elbow = shoulder + _L["upper_arm"] * d
    wrist = elbow + _L["forearm"] * fd
    hand = wrist + _L["hand"] * fd
    tip = hand + _L["hand_tip"] * fd
    thumb_dir = np.cross(fd, axis / np.linalg.norm(axis))
    thumb = wrist + _L["thumb"] * thumb_dir
    return [elbow, wrist, hand, tip, thumb]


def _pose(yaw: float, lean: float, elev_l: float, elev_r: float,
          spread: float, bend_l: float, bend_r: float) -> np.ndarray:
    """Joint positions [25, 3] for one frame; angles in radians."""
    p = np.zeros((25, 3))
    base = np.array([0.0, _BASE_HEIGHT, 0.0])
    p[_J["SpineBase"]] = base

    # stationary lower body
    for side, hip, knee, ankle, foot in (
            (+1, "HipLeft", "KneeLeft", "AnkleLeft", "FootLeft"),
            (-1, "HipRight", "KneeRight", "AnkleRight", "FootRight")):
        h = base + np.array([side * _L["pelvis"], 0.0, 0.0])
        k = h + np.array([0.0, -_L["thigh"], 0.0])
        a = k + np.array([0.0, -_L["shin"], 0.0])
        f = a + np.array([0.0, 0.0, _L["foot"]])
        p[_J[hip]], p[_J[knee]], p[_J[ankle]], p[_J[foot]] = h, k, a, f

    # upper body in a local frame at SpineBase, then yaw + lean
    local = {}
    local["SpineMid"] = np.array([0.0, _L["spine_lower"], 0.0])
    local["SpineShoulder"] = local["SpineMid"] + np.array([0.0, _L["spine_upper"], 0.0])
    local["Neck"] = local["SpineShoulder"] + np.array([0.0, _L["neck"], 0.0])
    local["Head"] = local["Neck"] + np.array([0.0, _L["head"], 0.0])
    local["ShoulderLeft"] = local["SpineShoulder"] + np.array([_L["clavicle"], 0.0, 0.0])
    local["ShoulderRight"] = local["SpineShoulder"] + np.array([-_L["clavicle"], 0.0, 0.0])

    for side, sh, names in (
            (+1, "ShoulderLeft", ["ElbowLeft", "WristLeft", "HandLeft", "HandTipLeft", "ThumbLeft"]),
            (-1, "ShoulderRight", ["ElbowRight", "WristRight", "HandRight", "HandTipRight", "ThumbRight"])):
        elev = elev_l if side > 0 else elev_r
        bend = bend_l if side > 0 else bend_r
        pts = _arm_points(local[sh], side, elev, spread, bend)
        for name, pt in zip(names, pts):
            local[name] = pt

    cy, sy = math.cos(yaw), math.sin(yaw)
    cl, sl = math.cos(lean), math.sin(lean)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cl, -sl, 0], [sl, cl, 0], [0, 0, 1]])
    r = rz @ ry
    for name, v in local.items():
        p[_J[name]] = base + r @ v
    return p


def _phase(t_raw: int) -> np.ndarray:
    k = np.arange(t_raw)
    return 0.5 * (1.0 - np.cos(2.0 * math.pi * k / (t_raw - 1)))


def peak_frame(t_raw: int) -> int:
    return int(np.argmax(_phase(t_raw)))


def generate(spec: MotionSpec) -> SkeletonSequence:
    """Forward-kinematic repetition for the given spec; deterministic in seed."""
    rad = math.radians
    phase = _phase(spec.t_raw)
    frames = np.empty((spec.t_raw, 25, 3))
    lead = rad(spec.arm_elevation_deg)
    off = rad(spec.off_arm_elevation_deg)
    for t, ph in enumerate(phase):
        if spec.exercise == "flank_stretch":
            elev_l, elev_r = ph * off, ph * lead
        else:
            elev_l = elev_r = ph * lead
        frames[t] = _pose(
            yaw=ph * rad(spec.torso_rotation_deg),
            lean=ph * rad(spec.lean_deg),
            elev_l=elev_l, elev_r=elev_r,
            spread=ph * rad(spec.arm_spread_deg),
            bend_l=ph * rad(spec.elbow_bend_deg),
            bend_r=ph * rad(spec.elbow_bend_deg),
        )
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        frames = frames + rng.normal(0.0, spec.noise_sigma, frames.shape)
    return SkeletonSequence(
        frames=frames, exercise=spec.exercise, label=spec.error_class,
        group=3, source_id=f"{spec.exercise}_{spec.error_class}_s{spec.seed}")


def generate_corpus(n_per_class: int, exercise: str, noise_sigma: float = 0.01,
                    seed: int = 0, margin_deg: float = 25.0, t_raw: int = 60,
                    group: int = 3) -> Corpus:
    """Balanced 4-class corpus: 4 * n_per_class sequences with distinct seeds."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    seqs = []
    counter = 0
    for label in LABELS:
        for i in range(n_per_class):
            sub_seed = seed * 1_000_003 + counter
            spec = default_spec(exercise, label, margin_deg=margin_deg,
                                noise_sigma=noise_sigma, t_raw=t_raw, seed=sub_seed)
            seq = generate(spec)
            seq = replace(seq, group=group,
                          source_id=f"{exercise}_{label}_g{group}_{i:04d}")
            seqs.append(seq)
            counter += 1
    return Corpus(tuple(seqs))


def bone_lengths(frames: np.ndarray, edges) -> np.ndarray:
    """Per-frame bone lengths [T, num_edges]; used by rigidity checks."""
    out = np.empty((frames.shape[0], len(edges)))
    for e, (i, j) in enumerate(edges):
        out[:, e] = np.linalg.norm(frames[:, i] - frames[:, j], axis=1)
    return out
