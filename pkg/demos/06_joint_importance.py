"""Which joints does a trained model attend to?

Averaging the attention maps over layers, heads, frames and sequences
gives one 25x25 map; its column sums score per-joint importance. On the
synthetic corpora the legs never move, so a trained model should place
its attention mass on the arms and torso. Differencing the maps of
correct and incorrect repetitions highlights the error-defining joints.
"""

import numpy as np

from rehabattn.attention import (attention_map_for_corpus, correct_incorrect_maps,
                                 group_mean_importance, importance_contrast,
                                 joint_importance, render_importance_image,
                                 render_importance_text)
from rehabattn.model import ModelConfig
from rehabattn.skeleton import JOINT_NAMES
from rehabattn.synthgen import generate_corpus
from rehabattn.training import TrainConfig, train

corpus = generate_corpus(4, "torso_rotation", noise_sigma=0.005, seed=7)
mc = ModelConfig(num_layers=2, channels=8, num_heads=2, t_frames=16)
weights, _ = train(corpus, mc, TrainConfig(epochs=150, batch_size=8, seed=7),
                   callback=lambda e, w, log: log.epochs[-1]["accuracy"] == 1.0)

amap = attention_map_for_corpus(weights, corpus)
imp = joint_importance(amap)
print("per-group mean importance:")
for name, value in sorted(group_mean_importance(imp).items(),
                          key=lambda kv: -kv[1]):
    print(f"  {name:<12s} {value:.4f}")

top = np.argsort(imp)[::-1][:5]
print("\ntop five joints:", [JOINT_NAMES[j] for j in top])

correct_map, incorrect_map = correct_incorrect_maps(weights, corpus)
contrast = importance_contrast(correct_map, incorrect_map)
moved = np.argsort(np.abs(contrast))[::-1][:3]
print("largest correct-vs-incorrect shifts:",
      [(JOINT_NAMES[j], round(float(contrast[j]), 4)) for j in moved])

print("\n" + render_importance_text({"torso_rotation": imp}))
render_importance_image({"torso_rotation": imp}, "/tmp/rehabattn_importance.png")
print("wrote heatmap to /tmp/rehabattn_importance.png")
