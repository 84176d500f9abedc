"""Skeleton-sequence error classification for rehabilitation exercises.

A numpy-backed toolkit: minimal reverse-mode autodiff, the 25-joint
skeleton domain, a hypergraph self-attention classifier, synthetic motion
generation, scenario-based evaluation, and attention-derived joint
importance.
"""

from .tensor import Tensor
from .skeleton import default_topology, default_partition, spd, membership_matrix
from .dataio import SkeletonSequence, Corpus, load_corpus, save_corpus, interpolate
from .synthgen import MotionSpec, default_spec, generate, generate_corpus
from .model import (ModelConfig, ModelWeights, desk_config, full_scale_config,
                    init_weights, forward, predict, predict_proba,
                    save_weights, load_weights)
from .training import TrainConfig, TrainLog, cross_entropy, adam_step, train
from .evaluation import (SplitPlan, EvaluationReport, make_split, evaluate,
                         confusion_matrix, macro_f1, compare_table)
from .attention import (average_attention, joint_importance, importance_contrast,
                        attention_map_for_corpus, render_importance_text)

__version__ = "0.1.0"
