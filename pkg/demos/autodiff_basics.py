"""
Reverse-mode autodiff from scratch
==================================

The tensor engine records every operation applied to a Tensor and, on
``backward()``, replays the tape in reverse to accumulate gradients.
This walk-through builds a tiny expression, checks the gradient by hand,
and shows the two rules that matter in practice: fan-out accumulation
and the single-use constraint on interior nodes.
"""

import numpy as np

from syngcn.tensor import Tensor, matmul, relu, sum_all

rng = np.random.default_rng(0)

# A leaf is any Tensor created with requires_grad=True.
w = Tensor(rng.uniform(-0.5, 1.0, size=(3, 2)), requires_grad=True)
x = Tensor(rng.uniform(0.0, 1.0, size=(2, 3)), requires_grad=True)

# loss = sum(relu(x @ w)); every op returns a fresh Tensor on the tape.
y = relu(matmul(x, w))
loss = sum_all(y)
loss.backward()

print("loss =", loss.item())
print("dloss/dw =\n", w.grad)

# Hand derivation: d sum(relu(z)) / dz is 1 where z > 0, so
# dloss/dw = x.T @ (z > 0).  The engine agrees to machine precision.
z = x.data @ w.data
by_hand = x.data.T @ (z > 0).astype(float)
print("max |engine - hand| =", np.abs(w.grad - by_hand).max())

# Fan-out: using a leaf twice adds both contributions into one gradient.
v = Tensor(np.array([1.0, 2.0]), requires_grad=True)
both = sum_all(v * v)  # d/dv (v.v) = 2v
both.backward()
print("fan-out gradient:", v.grad, "(expected 2*v =", 2 * v.data, ")")

# Gradients accumulate across backward calls until zero_grad(); that is
# what lets a training loop sum gradients over the records of a batch.
v.zero_grad()
first = sum_all(v * 3.0)
second = sum_all(v * 5.0)
first.backward()
second.backward()
print("accumulated over two calls:", v.grad, "(expected [8, 8])")

# Interior nodes are consumed on backward: rerunning backward through an
# already-traversed subgraph is an error rather than a silent wrong answer.
try:
    first.backward()
except RuntimeError as err:
    print("reusing a spent graph raises:", err)
