"""Temperature re-weighting: how T shapes the portfolio.

The actor emits one logit per asset (cash first); the portfolio is the
temperature softmax of those logits. T = 1 is the plain softmax; lowering T
concentrates weight on the best logits until the allocation is effectively
one-hot, which is how tiny speculative positions get squeezed out.
"""
import numpy as np

from earnmore import re_weight

logits = np.array([0.3, 1.2, 0.9, -0.5, 0.1])  # cash, then four stocks
labels = ["cash", "AAA", "BBB", "CCC", "DDD"]

print("logits: ", dict(zip(labels, logits)))
print(f"\n{'T':>6} | " + " | ".join(f"{l:>7}" for l in labels))
for t in (10.0, 5.0, 1.0, 0.5, 0.1, 0.05, 0.01):
    w = re_weight(logits, t)
    print(f"{t:>6} | " + " | ".join(f"{x:7.4f}" for x in w))

print("\nT = 1 recovers the plain softmax:")
e = np.exp(logits - logits.max())
print("  max |diff| =", np.max(np.abs(re_weight(logits, 1.0) - e / e.sum())))

print("\nweights always sum to 1 and preserve the logit order:")
for t in (3.0, 0.2):
    w = re_weight(logits, t)
    print(f"  T={t}: sum={w.sum():.12f}, "
          f"order preserved={np.array_equal(np.argsort(w), np.argsort(logits))}")

print("\noptional epsilon sparsification (off by default) zeroes dust and "
      "renormalizes:")
w = re_weight(logits, 0.1, sparsify_epsilon=1e-4)
print("  T=0.1 with eps=1e-4:", dict(zip(labels, np.round(w, 6))))
