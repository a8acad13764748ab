"""
Percentile pooling versus max pooling
=====================================

After the graph convolution every token carries one score per emotion
class.  Pooling those token scores into a single sentence-level logit
with the column maximum lets a single corrupted token dictate the
prediction; a nearest-rank percentile (the median at p=50) shrugs such
outliers off.  The pooled value is an order statistic, so its gradient
flows to exactly one token per class.
"""

import numpy as np

from syngcn.layers import percentile_pool
from syngcn.tensor import Tensor, mul, sum_all

rng = np.random.default_rng(3)
np.set_printoptions(precision=3, suppress=True)

# 7 tokens x 3 classes of per-token evidence, mildly favoring class 0.
scores = rng.normal(0.0, 0.4, size=(7, 3))
scores[:, 0] += 0.8
clean = Tensor(scores.copy())

# One glitchy token now screams "class 2".
corrupted = scores.copy()
corrupted[4, 2] = 9.0
noisy = Tensor(corrupted)

for p, name in ((100, "max pooling   "), (50, "median pooling")):
    a = percentile_pool(clean, p).data
    b = percentile_pool(noisy, p).data
    print(f"{name} clean {a} -> argmax {a.argmax()}   noisy {b} -> argmax {b.argmax()}")

# Max pooling flipped to class 2 on one bad token; the median did not.

# Gradient routing: backward sends each class's gradient to the single
# token whose value was selected, leaving every other row untouched.
z = Tensor(corrupted, requires_grad=True)
pooled = percentile_pool(z, 50)
sum_all(mul(pooled, Tensor(np.ones(3)))).backward()
print("\nrows receiving gradient:", sorted(set(np.nonzero(z.grad)[0].tolist())))
print("gradient matrix:\n", z.grad)

# The nearest-rank definition keeps every pooled value an actual token
# score (no interpolation), so p=0 is the minimum and p=100 the maximum.
column = Tensor(np.array([[0.1], [0.4], [0.2], [0.9]]))
print("\np ->", {p: float(percentile_pool(column, p).data[0]) for p in (0, 25, 50, 75, 100)})
