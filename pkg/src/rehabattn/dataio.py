"""Skeleton sequence corpus: canonical file format, interpolation, tensor layout.

One sequence file per exercise repetition:

    exercise: torso_rotation
    label: error1
    group: 3
    fps: 30
    x0,y0,z0,x1,y1,z1,...        # one line per frame, 25*C values

Coordinates are written with repr-exact float formatting so that a
save -> load -> save round trip is byte identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from .skeleton import NUM_JOINTS
from .tensor import Tensor

EXERCISES = ("torso_rotation", "flank_stretch", "hiding_face")
LABELS = ("correct", "error1", "error2", "error3")
GROUPS = (1, 2, 3)    # patients, healthy, simulated-error professionals


class CorpusFormatError(ValueError):
    """Malformed sequence file; message carries file and line."""


@dataclass(frozen=True)
class SkeletonSequence:
    """One labeled exercise repetition: frames [T, 25, C] in meters."""

    frames: np.ndarray
    exercise: str
    label: str
    group: int
    source_id: str = ""
    fps: float = 30.0

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", f)
        if f.ndim != 3 or f.shape[1] != NUM_JOINTS or f.shape[2] not in (2, 3):
            raise CorpusFormatError(
                f"frames must be [T, {NUM_JOINTS}, 2|3], got {f.shape}")
        if f.shape[0] < 2:
            raise CorpusFormatError(f"need at least 2 frames, got {f.shape[0]}")
        if not np.isfinite(f).all():
            raise CorpusFormatError("non-finite coordinate value")
        if self.exercise not in EXERCISES:
            raise CorpusFormatError(f"unknown exercise {self.exercise!r}")
        if self.label not in LABELS:
            raise CorpusFormatError(f"unknown label {self.label!r}")
        if self.group not in GROUPS:
            raise CorpusFormatError(f"group must be one of {GROUPS}, got {self.group!r}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_coords(self) -> int:
        return self.frames.shape[2]

    @property
    def label_index(self) -> int:
        return LABELS.index(self.label)


@dataclass(frozen=True)
class Corpus:
    sequences: tuple

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]

    def class_counts(self) -> dict:
        """Per exercise, counts per label."""
        out = {}
        for s in self.sequences:
            out.setdefault(s.exercise, {lab: 0 for lab in LABELS})
            out[s.exercise][s.label] += 1
        return out

    def filter(self, exercise=None, group=None) -> "Corpus":
        seqs = [s for s in self.sequences
                if (exercise is None or s.exercise == exercise)
                and (group is None or s.group == group)]
        return Corpus(tuple(seqs))

    def labels(self) -> np.ndarray:
        return np.array([s.label_index for s in self.sequences], dtype=np.int64)

    def groups(self) -> np.ndarray:
        return np.array([s.group for s in self.sequences], dtype=np.int64)


# -- canonical file format -------------------------------------------------

def save_sequence(seq: SkeletonSequence, path):
    t, v, c = seq.frames.shape
    with open(path, "w") as fh:
        fh.write(f"exercise: {seq.exercise}\n")
        fh.write(f"label: {seq.label}\n")
        fh.write(f"group: {seq.group}\n")
        fh.write(f"fps: {seq.fps!r}\n")
        flat = seq.frames.reshape(t, v * c)
        for row in flat:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def load_sequence(path) -> SkeletonSequence:
    header = {}
    rows = []
    with open(path) as fh:
        lines = fh.readlines()
    lineno = 0
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if ":" in line and not rows and line.split(":", 1)[0] in ("exercise", "label", "group", "fps"):
            key, val = line.split(":", 1)
            header[key.strip()] = val.strip()
            continue
        parts = line.split(",")
        try:
            values = [float(p) for p in parts]
        except ValueError as e:
            raise CorpusFormatError(f"{path}:{lineno}: bad number: {e}") from None
        rows.append(values)
    for key in ("exercise", "label", "group"):
        if key not in header:
            raise CorpusFormatError(f"{path}: missing header line {key!r}")
    if not rows:
        raise CorpusFormatError(f"{path}: no frame data")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise CorpusFormatError(f"{path}: inconsistent frame widths {sorted(widths)}")
    width = widths.pop()
    if width == NUM_JOINTS * 3:
        c = 3
    elif width == NUM_JOINTS * 2:
        c = 2
    else:
        raise CorpusFormatError(
            f"{path}: expected {NUM_JOINTS * 3} (3-D) or {NUM_JOINTS * 2} (2-D) "
            f"values per frame for {NUM_JOINTS} joints, got {width}")
    frames = np.array(rows).reshape(len(rows), NUM_JOINTS, c)
    try:
        return SkeletonSequence(
            frames=frames,
            exercise=header["exercise"],
            label=header["label"],
            group=int(header["group"]),
            fps=float(header.get("fps", 30.0)),
            source_id=os.path.splitext(os.path.basename(str(path)))[0],
        )
    except CorpusFormatError as e:
        raise CorpusFormatError(f"{path}: {e}") from None


def save_corpus(corpus: Corpus, directory):
    os.makedirs(directory, exist_ok=True)
    for i, seq in enumerate(corpus):
        name = seq.source_id or f"seq_{i:05d}"
        save_sequence(seq, os.path.join(directory, f"{name}.skl"))


def load_corpus(directory) -> Corpus:
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"corpus directory not found: {directory}")
    files = sorted(f for f in os.listdir(directory) if f.endswith(".skl"))
    seqs = tuple(load_sequence(os.path.join(directory, f)) for f in files)
    return Corpus(seqs)


# -- preprocessing ------------------------------------------------------

def interpolate(seq: SkeletonSequence, t_target: int) -> SkeletonSequence:
    """Piecewise-linear resampling to t_target frames over normalized time."""
    if t_target < 2:
        raise ValueError(f"t_target must be >= 2, got {t_target}")
    t, v, c = seq.frames.shape
    if t == t_target:
        return seq
    src = np.linspace(0.0, 1.0, t)
    dst = np.linspace(0.0, 1.0, t_target)
    flat = seq.frames.reshape(t, v * c)
    out = np.empty((t_target, v * c))
    for k in range(v * c):
        out[:, k] = np.interp(dst, src, flat[:, k])
    # endpoints must be bit-exact
    out[0] = flat[0]
    out[-1] = flat[-1]
    return replace(seq, frames=out.reshape(t_target, v, c))


def center_on_spine_base(seq: SkeletonSequence) -> SkeletonSequence:
    """Opt-in normalization: subtract the per-frame SpineBase position."""
    return replace(seq, frames=seq.frames - seq.frames[:, :1, :])


def to_model_tensor(seq: SkeletonSequence) -> Tensor:
    """Channel-first layout [C, T, V]."""
    return Tensor(np.transpose(seq.frames, (2, 0, 1)))


def from_model_tensor(x, exercise: str, label: str, group: int, **kw) -> SkeletonSequence:
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    return SkeletonSequence(frames=np.transpose(data, (1, 2, 0)),
                            exercise=exercise, label=label, group=group, **kw)


def corpus_to_batch(corpus: Corpus, t_target: int) -> tuple:
    """Stack a corpus into (x [N,C,T,V], labels [N]) for the model."""
    xs = [np.transpose(interpolate(s, t_target).frames, (2, 0, 1)) for s in corpus]
    return Tensor(np.stack(xs)), corpus.labels()
