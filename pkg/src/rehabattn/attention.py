"""Joint-importance analysis from trained attention weights.

The per-layer attention arrays produced by the model have shape
[N, heads, T, V, V]. Averaging over every non-joint axis (and over layers
and sequences) gives a single 25x25 map; column sums score how much each
joint is attended to. Differencing maps from correct and incorrect
repetitions highlights the joints that define an error.
"""

from __future__ import annotations

import json

import numpy as np

from .dataio import Corpus, LABELS, interpolate
from .model import ModelWeights, forward
from .skeleton import JOINT_NAMES, HypergraphPartition, default_partition


def average_attention(attention_stack) -> np.ndarray:
    """Mean over layers, sequences, heads, frames -> [V, V] map.

    Accepts one stack (list of [N,H,T,V,V] arrays) or a list of stacks.
    """
    if not attention_stack:
        raise ValueError("empty attention stack")
    if isinstance(attention_stack[0], list):
        layers = [a for stack in attention_stack for a in stack]
    else:
        layers = list(attention_stack)
    v = layers[0].shape[-1]
    total = np.zeros((v, v))
    count = 0
    for a in layers:
        flat = a.reshape(-1, v, v)
        total += flat.sum(axis=0)
        count += flat.shape[0]
    return total / count


def joint_importance(attention_map: np.ndarray) -> np.ndarray:
    """Column sums of the map, renormalized to a distribution over joints."""
    scores = np.asarray(attention_map).sum(axis=0)
    return scores / scores.sum()


def importance_contrast(correct_map: np.ndarray, incorrect_map: np.ndarray) -> np.ndarray:
    """Signed per-joint difference of column sums (correct - incorrect)."""
    correct_map = np.asarray(correct_map)
    incorrect_map = np.asarray(incorrect_map)
    if correct_map.shape != incorrect_map.shape:
        raise ValueError(f"map shapes differ: {correct_map.shape} vs {incorrect_map.shape}")
    return correct_map.sum(axis=0) - incorrect_map.sum(axis=0)


def attention_map_for_corpus(weights: ModelWeights, corpus: Corpus,
                             label: str | None = None) -> np.ndarray:
    """Dataset-averaged attention map, optionally restricted to one true label."""
    seqs = [s for s in corpus if label is None or s.label == label]
    if not seqs:
        raise ValueError(f"no sequences with label {label!r}")
    stacks = []
    for s in seqs:
        x = np.transpose(interpolate(s, weights.config.t_frames).frames, (2, 0, 1))[None]
        _, stack = forward(x, weights, training=False)
        stacks.append(stack)
    return average_attention(stacks)


def correct_incorrect_maps(weights: ModelWeights, corpus: Corpus) -> tuple:
    """(correct map, incorrect map) grouped by true label."""
    correct = attention_map_for_corpus(weights, corpus, label="correct")
    incorrect_seqs = Corpus(tuple(s for s in corpus if s.label != "correct"))
    incorrect = attention_map_for_corpus(weights, incorrect_seqs)
    return correct, incorrect


def group_mean_importance(importance: np.ndarray,
                          partition: HypergraphPartition | None = None) -> dict:
    """Mean importance per body-part group."""
    partition = partition or default_partition()
    return {name: float(np.mean([importance[j] for j in group]))
            for name, group in zip(partition.group_names, partition.groups)}


# -- rendering --------------------------------------------------------------

def render_importance_text(per_exercise: dict,
                           partition: HypergraphPartition | None = None,
                           width: int = 5) -> str:
    """One row per exercise of per-joint importance, columns labeled by joint.

    Values are scaled to per-mille for compact fixed-width display.
    """
    partition = partition or default_partition()
    group_of = partition.group_of()
    header1 = "".join(f"{name[:width - 1]:>{width}s}" for name in JOINT_NAMES)
    header2 = "".join(f"{f'({i})':>{width}s}" for i in range(len(JOINT_NAMES)))
    header3 = "".join(f"{partition.group_names[group_of[i]][:width - 1]:>{width}s}"
                      for i in range(len(JOINT_NAMES)))
    lines = ["exercise        " + header1,
             "                " + header2,
             "group           " + header3]
    for ex, imp in per_exercise.items():
        imp = np.asarray(imp)
        cells = "".join(f"{1000 * v:{width}.0f}" for v in imp)
        lines.append(f"{ex:<16s}" + cells)
    lines.append("(values are importance x 1000; each row sums to ~1000)")
    return "\n".join(lines) + "\n"


def render_importance_image(per_exercise: dict, path,
                            partition: HypergraphPartition | None = None):
    """Heatmap figure: rows are exercises, columns the 25 joints colored by group."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    partition = partition or default_partition()
    group_of = partition.group_of()
    rows = list(per_exercise)
    data = np.array([np.asarray(per_exercise[r]) for r in rows])
    fig, ax = plt.subplots(figsize=(14, 1.2 + 0.6 * len(rows)))
    im = ax.imshow(data, aspect="auto", cmap="viridis")
    ax.set_yticks(range(len(rows)), rows)
    cmap = plt.get_cmap("tab10")
    labels = [f"{name} ({i})" for i, name in enumerate(JOINT_NAMES)]
    ax.set_xticks(range(len(labels)), labels, rotation=90, fontsize=7)
    for tick, gi in zip(ax.get_xticklabels(), group_of):
        tick.set_color(cmap(int(gi)))
    fig.colorbar(im, ax=ax, label="importance")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def export_analysis(path, maps: dict, importances: dict, contrasts: dict | None = None):
    """Structured JSON export of maps, importances, and optional contrasts."""
    doc = {
        "joint_names": list(JOINT_NAMES),
        "maps": {k: np.asarray(v).tolist() for k, v in maps.items()},
        "importances": {k: np.asarray(v).tolist() for k, v in importances.items()},
        "contrasts": {k: np.asarray(v).tolist() for k, v in (contrasts or {}).items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
