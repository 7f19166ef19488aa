#!/usr/bin/env python3
"""Tour of the probability-simplex distances behind the explanation loss.

The fit minimizes a weighted squared Hellinger distance; total variation is
the replication metric the harness reports; KL is exposed for the pluggable
divergence hook. This script walks their values and the inequalities tying
them together.
"""

import numpy as np

from lipex import (
    ClassDistribution,
    hellinger,
    kl_divergence,
    softmax,
    squared_hellinger,
    total_variation,
)

p = ClassDistribution([0.7, 0.2, 0.1], ["cat", "dog", "fox"])
q = softmax([2.0, 0.5, -1.0], ["cat", "dog", "fox"])

print("p =", p)
print("q =", q, "(softmax of logits [2, 0.5, -1])")
print()
print(f"Hellinger(p, q)          = {hellinger(p, q):.4f}")
print(f"squared Hellinger(p, q)  = {squared_hellinger(p, q):.4f}")
print(f"total variation(p, q)    = {total_variation(p, q):.4f}")
print(f"KL(p || q)               = {kl_divergence(p, q):.4f} nats")
print()

# the sandwich bounds that make squared Hellinger a sound loss kernel
rng = np.random.default_rng(0)
print("On 5 random simplex pairs: H^2 <= TV <= sqrt(2) H and H^2 <= KL/2")
for _ in range(5):
    a = ClassDistribution(rng.dirichlet(np.ones(4)), list("wxyz"))
    b = ClassDistribution(rng.dirichlet(np.ones(4)), list("wxyz"))
    h2 = squared_hellinger(a, b)
    tv = total_variation(a, b)
    kl = kl_divergence(a, b)
    print(f"  H^2={h2:.4f} <= TV={tv:.4f} <= sqrt2*H={np.sqrt(2 * h2):.4f}"
          f"   and H^2 <= KL/2={kl / 2:.4f}")
