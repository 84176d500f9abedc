"""Synthetic rehabilitation-exercise sequences.

Each exercise is a rigid-body motion built with forward kinematics and a
raised-cosine phase. Error classes deflect one class-defining joint angle
by a margin, so "correct" and each error class differ geometrically in a
way a clinician could name. The margin controls task difficulty.
"""

import numpy as np

from rehabattn.dataio import LABELS, save_corpus
from rehabattn.skeleton import JOINT_NAMES, default_topology
from rehabattn.synthgen import (bone_lengths, default_spec, generate,
                                generate_corpus, peak_frame)

J = {n: i for i, n in enumerate(JOINT_NAMES)}

for label in LABELS:
    spec = default_spec("torso_rotation", label)
    seq = generate(spec)
    pk = peak_frame(seq.num_frames)
    wrist_y = seq.frames[pk][J["WristLeft"], 1]
    shoulder_z = seq.frames[pk][J["ShoulderLeft"], 2]
    print(f"{label:<8s} peak wrist height {wrist_y:+.3f}  "
          f"peak shoulder depth {shoulder_z:+.3f}")

# Bones stay rigid over the whole motion (before sensor noise is added).
seq = generate(default_spec("flank_stretch", "correct"))
lengths = bone_lengths(seq.frames, default_topology().edges)
print("\nmax bone-length drift over flank_stretch:",
      (lengths.max(axis=0) - lengths.min(axis=0)).max())

# A corpus is balanced over the four classes and fully seeded.
corpus = generate_corpus(5, "hiding_face", noise_sigma=0.01, seed=42)
print("\ncorpus class counts:", corpus.class_counts())

# Hard mode shrinks the margins from 25 to 8 degrees.
easy = generate(default_spec("torso_rotation", "error2", margin_deg=25.0))
hard = generate(default_spec("torso_rotation", "error2", margin_deg=8.0))
ref = generate(default_spec("torso_rotation", "correct"))
pk = peak_frame(ref.num_frames)
print("\npeak-frame distance from correct:")
print("  easy margin:", np.abs(easy.frames[pk] - ref.frames[pk]).max())
print("  hard margin:", np.abs(hard.frames[pk] - ref.frames[pk]).max())

save_corpus(corpus, "/tmp/rehabattn_demo_corpus")
print("\nwrote the corpus to /tmp/rehabattn_demo_corpus (.skl text files)")
