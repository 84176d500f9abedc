"""Tour of the reverse-mode autodiff core.

The whole model is built from a small Tensor type that wraps a float64
numpy array and records enough structure to backpropagate. This script
walks through the essentials: building a graph, calling backward, and
checking a gradient against finite differences by hand.
"""

import numpy as np

import rehabattn.tensor as T
from rehabattn.tensor import Tensor

rng = np.random.default_rng(0)

# A scalar chain: loss = sum((x * w + b)^2)
x = Tensor(rng.normal(size=(4, 3)), name="x")
w = T.parameter(rng.normal(size=(3, 2)), name="w")
b = T.parameter(np.zeros(2), name="b")

h = T.matmul(x, w) + b
loss = T.sum_reduce(T.mul(h, h))
loss.backward()

print("loss      :", loss.item())
print("dloss/dw  :\n", w.grad)
print("dloss/db  :", b.grad)

# Verify one entry of w.grad with central differences.
eps = 1e-6
orig = w.data[1, 0]
w.data[1, 0] = orig + eps
up = T.sum_reduce(T.mul(T.matmul(x, w) + b, T.matmul(x, w) + b)).item()
w.data[1, 0] = orig - eps
down = T.sum_reduce(T.mul(T.matmul(x, w) + b, T.matmul(x, w) + b)).item()
w.data[1, 0] = orig
numeric = (up - down) / (2 * eps)
print(f"\nw.grad[1,0] analytic {w.grad[1, 0]:.8f} vs numeric {numeric:.8f}")

# Gradients accumulate until zeroed, which is what an optimizer loop wants.
w.zero_grad()
T.sum_reduce(T.matmul(x, w)).backward()
T.sum_reduce(T.matmul(x, w)).backward()
print("\nafter two backwards without zeroing, grad doubles:")
print(w.grad / x.data.sum(axis=0)[:, None])

# The same machinery drives convolution, softmax, batch norm and the
# attention blocks; see rehabattn/tensor.py for the full op list.
sm = T.softmax(Tensor(rng.normal(size=(2, 5))), axis=-1)
print("\nsoftmax rows sum to:", sm.data.sum(axis=-1))
