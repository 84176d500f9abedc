"""Evaluation protocols: scenario splits, accuracy, macro-F1, confusion matrices.

Confusion matrices are row-normalized by true-class counts; a class absent
from the test set renders as an all-zero row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataio import Corpus, LABELS, interpolate
from .model import ModelWeights, forward

NUM_CLASSES = len(LABELS)

# published Scenario 1 accuracies (%), shown as static references only
REFERENCE_ACCURACY = {
    "torso_rotation": {"ours": 73.17, "lstm_best": 64.44, "lstm_mean": 53.89, "gmm": 27.78},
    "flank_stretch": {"ours": 64.10, "lstm_best": 43.04, "lstm_mean": 31.64, "gmm": 25.32},
    "hiding_face": {"ours": 74.28, "lstm_best": 56.19, "lstm_mean": 49.10, "gmm": 33.33},
}


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitPlan:
    scenario: int
    train_indices: tuple
    test_indices: tuple
    train_class_counts: tuple
    test_class_counts: tuple

    def validate(self, corpus_size: int):
        tr, te = set(self.train_indices), set(self.test_indices)
        if tr & te:
            raise SplitError("train and test overlap")
        if tr | te != set(range(corpus_size)):
            raise SplitError("split does not cover the corpus")


def _class_counts(labels: np.ndarray) -> tuple:
    return tuple(int((labels == c).sum()) for c in range(NUM_CLASSES))


def _stratified_take(indices_by_class, fraction: float, rng) -> list:
    """Pick ~fraction of each class; largest-remainder rounding on the total."""
    total = sum(len(v) for v in indices_by_class.values())
    target = int(round(total * fraction))
    quotas = {}
    remainders = []
    for c, idxs in indices_by_class.items():
        exact = len(idxs) * fraction
        quotas[c] = int(exact)
        remainders.append((exact - int(exact), c))
    short = target - sum(quotas.values())
    for _, c in sorted(remainders, reverse=True)[:max(short, 0)]:
        quotas[c] += 1
    taken = []
    for c, idxs in indices_by_class.items():
        pool = np.array(idxs)
        rng.shuffle(pool)
        taken.extend(pool[: quotas[c]].tolist())
    return sorted(taken)


def make_split(corpus: Corpus, scenario: int, ratio: float = 0.2, seed: int = 0) -> SplitPlan:
    """Scenario 1: train group 3, test groups 1 and 2.
    Scenario 2: stratified split over all groups (test fraction = ratio).
    Scenario 3: test = group 1 plus a stratified 15% of groups 2 and 3.
    """
    labels = corpus.labels()
    groups = corpus.groups()
    n = len(corpus)
    rng = np.random.default_rng(seed)

    if scenario == 1:
        train = [i for i in range(n) if groups[i] == 3]
        test = [i for i in range(n) if groups[i] in (1, 2)]
        if not train:
            raise SplitError("scenario 1 requires group-3 (simulated) samples")
        if not test:
            raise SplitError("scenario 1 requires group-1/2 samples to test on")
    elif scenario == 2:
        by_class = {c: [i for i in range(n) if labels[i] == c] for c in range(NUM_CLASSES)}
        by_class = {c: v for c, v in by_class.items() if v}
        test = _stratified_take(by_class, ratio, rng)
        train = sorted(set(range(n)) - set(test))
    elif scenario == 3:
        patients = [i for i in range(n) if groups[i] == 1]
        healthy = [i for i in range(n) if groups[i] in (2, 3)]
        if not patients:
            raise SplitError("scenario 3 requires group-1 (patient) samples")
        if not healthy:
            raise SplitError("scenario 3 requires group-2/3 samples")
        by_class = {}
        for i in healthy:
            by_class.setdefault(int(labels[i]), []).append(i)
        held = _stratified_take(by_class, 0.15, rng)
        test = sorted(patients + held)
        train = sorted(set(healthy) - set(held))
    else:
        raise SplitError(f"unknown scenario {scenario!r}")

    plan = SplitPlan(scenario=scenario, train_indices=tuple(train), test_indices=tuple(test),
                     train_class_counts=_class_counts(labels[train]),
                     test_class_counts=_class_counts(labels[test]))
    if scenario == 2:
        plan.validate(n)
    return plan


# -- metrics ----------------------------------------------------------------

def confusion_matrix(true_labels, predicted) -> np.ndarray:
    """Row-normalized 4x4 matrix; absent true classes give all-zero rows."""
    true_labels = np.asarray(true_labels)
    predicted = np.asarray(predicted)
    m = np.zeros((NUM_CLASSES, NUM_CLASSES))
    for t, p in zip(true_labels, predicted):
        m[t, p] += 1.0
    sums = m.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        out = np.where(sums > 0, m / np.where(sums > 0, sums, 1.0), 0.0)
    return out


def macro_f1(true_labels, predicted) -> float:
    """Unweighted mean F1 over classes present in the test set."""
    true_labels = np.asarray(true_labels)
    predicted = np.asarray(predicted)
    scores = []
    for c in range(NUM_CLASSES):
        support = (true_labels == c).sum()
        if support == 0:
            continue
        tp = ((predicted == c) & (true_labels == c)).sum()
        fp = ((predicted == c) & (true_labels != c)).sum()
        fn = ((predicted != c) & (true_labels == c)).sum()
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


@dataclass(frozen=True)
class EvaluationReport:
    accuracy: float
    macro_f1: float
    confusion: np.ndarray                  # row-normalized
    class_frequencies: tuple               # per-class true counts in the test set
    predictions: tuple

    @property
    def absent_classes(self) -> tuple:
        return tuple(c for c, f in enumerate(self.class_frequencies) if f == 0)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "confusion": [[float(v) for v in row] for row in self.confusion],
            "class_frequencies": list(self.class_frequencies),
            "labels": list(LABELS),
            "absent_classes": list(self.absent_classes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = [f"accuracy: {self.accuracy * 100:.2f}%",
                 f"macro-F1: {self.macro_f1:.4f}",
                 "confusion (rows = true class, normalized):"]
        header = "            " + " ".join(f"{lab:>8s}" for lab in LABELS)
        lines.append(header)
        for c, row in enumerate(self.confusion):
            freq = self.class_frequencies[c]
            cells = " ".join(f"{v:8.2f}" for v in row)
            lines.append(f"{LABELS[c]:>9s}({freq:3d}) {cells}")
        return "\n".join(lines) + "\n"


REPORT_SCHEMA = {
    "type": "object",
    "required": ["accuracy", "macro_f1", "confusion", "class_frequencies",
                 "labels", "absent_classes"],
    "properties": {
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "macro_f1": {"type": "number", "minimum": 0, "maximum": 1},
        "confusion": {
            "type": "array", "minItems": NUM_CLASSES, "maxItems": NUM_CLASSES,
            "items": {"type": "array", "minItems": NUM_CLASSES, "maxItems": NUM_CLASSES,
                      "items": {"type": "number", "minimum": 0, "maximum": 1}},
        },
        "class_frequencies": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "labels": {"type": "array", "items": {"type": "string"}},
        "absent_classes": {"type": "array", "items": {"type": "integer"}},
    },
    "additionalProperties": False,
}


def report_from_predictions(true_labels, predicted) -> EvaluationReport:
    true_labels = np.asarray(true_labels)
    predicted = np.asarray(predicted)
    if len(true_labels) == 0:
        raise ValueError("empty test set")
    return EvaluationReport(
        accuracy=float((true_labels == predicted).mean()),
        macro_f1=macro_f1(true_labels, predicted),
        confusion=confusion_matrix(true_labels, predicted),
        class_frequencies=_class_counts(true_labels),
        predictions=tuple(int(p) for p in predicted),
    )


def evaluate(weights: ModelWeights, test_set: Corpus) -> EvaluationReport:
    if len(test_set) == 0:
        raise ValueError("empty test set")
    xs = np.stack([np.transpose(interpolate(s, weights.config.t_frames).frames, (2, 0, 1))
                   for s in test_set])
    logits, _ = forward(xs, weights, training=False)
    predicted = logits.data.argmax(axis=1)
    return report_from_predictions(test_set.labels(), predicted)


def compare_table(reports: dict) -> str:
    """Table-style comparison of local results against the static reference rows.

    reports: exercise name -> EvaluationReport (any subset of the exercises).
    """
    if not reports:
        raise ValueError("need at least one report")
    cols = ["local", "reference_ours", "lstm_best", "lstm_mean", "gmm"]
    lines = ["exercise         " + " ".join(f"{c:>15s}" for c in cols)]
    for ex, rep in reports.items():
        ref = REFERENCE_ACCURACY.get(ex, {})
        vals = [f"{rep.accuracy * 100:15.2f}"]
        for key in ("ours", "lstm_best", "lstm_mean", "gmm"):
            vals.append(f"{ref[key]:15.2f}" if key in ref else f"{'-':>15s}")
        lines.append(f"{ex:<17s}" + " ".join(vals))
    lines.append("(reference columns are published clinical-dataset results, not recomputed)")
    return "\n".join(lines) + "\n"
