"""
Priority masking under a fixed noise level
==========================================

With weight w the dense positions are masked w times as often as the rest,
while the overall masked fraction stays at sigma.
"""

import numpy as np

from densched.audit import marginal_report_masks, ratio_report_masks
from densched.sched import sample_soft_masks, solve_category_probs

n, d = 12, 3
ind = np.zeros(n, dtype=bool)
ind[:d] = True

# solve for the two category probabilities
for sigma, w in [(0.5, 2), (0.8, 5), (0.9, 0.1), (0.5, 1)]:
    p = solve_category_probs(n, d, sigma, w)
    print(f"sigma={sigma} w={w}: p_dense={p.p_dense:.3f} p_base={p.p_base:.3f} ({p.saturated.value})")

# sample and check what the masks actually do
rng = np.random.default_rng(0)
p = solve_category_probs(n, d, 0.5, 2)
masks = sample_soft_masks(ind, p, 100_000, rng=rng)
print(masks[:5])

marginal = marginal_report_masks(masks, ind, 0.5)
print(f"mask rate {marginal.empirical_rate:.4f} (target 0.5, z={marginal.z:.2f})")

ratio = ratio_report_masks(masks, ind, p)
print(f"dense/sparse ratio {ratio.w_hat:.3f}, 95% interval {ratio.ci[0]:.3f}..{ratio.ci[1]:.3f}")

# exact-count mode fixes the number of masked tokens per draw
exact = sample_soft_masks(ind, p, 10_000, mode="exact_count", rng=rng)
print("counts seen:", sorted(set(exact.sum(axis=1).tolist())))
