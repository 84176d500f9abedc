"""Train a small classifier end to end on synthetic data.

Uses a reduced model (2 layers, 8 channels, 16 frames) so the run takes
well under a minute, then saves and reloads the checkpoint to show the
round trip is exact.
"""

import numpy as np

from rehabattn.model import (ModelConfig, forward, init_weights, load_weights,
                             save_weights)
from rehabattn.synthgen import generate_corpus
from rehabattn.training import TrainConfig, train

corpus = generate_corpus(5, "torso_rotation", noise_sigma=0.005, seed=7)
mc = ModelConfig(num_layers=2, channels=8, num_heads=2, t_frames=16)
tc = TrainConfig(epochs=150, batch_size=10, seed=7)


def progress(epoch, weights, log):
    e = log.epochs[-1]
    if epoch % 10 == 0 or e["accuracy"] == 1.0:
        print(f"epoch {epoch:3d}  loss {e['loss']:.4f}  accuracy {e['accuracy']:.2f}")
    return e["accuracy"] == 1.0          # stop once the corpus is fit


weights, log = train(corpus, mc, tc, callback=progress)
print(f"\nstopped after {len(log.epochs)} epochs")

save_weights(weights, "/tmp/rehabattn_demo_model.json")
reloaded = load_weights("/tmp/rehabattn_demo_model.json")

from rehabattn.dataio import interpolate
x = np.stack([np.transpose(interpolate(s, mc.t_frames).frames, (2, 0, 1))
              for s in corpus])
a, _ = forward(x, weights)
b, _ = forward(x, reloaded)
print("reloaded checkpoint reproduces logits exactly:",
      bool(np.array_equal(a.data, b.data)))
