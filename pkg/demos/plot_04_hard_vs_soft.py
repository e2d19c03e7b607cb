"""
Hard masking and long masked runs
=================================

Masking every dense token first (the hard limit) leaves whole dense spans
blank. Soft priority masking keeps some of the span visible.
"""

import numpy as np

from densched.audit import run_length_report_masks
from densched.sched import DENSE_FIRST, SPARSE_FIRST, sample_hard_masks, sample_soft_masks, solve_category_probs

ind = np.zeros(32, dtype=bool)
ind[12:20] = True  # one contiguous dense span of length 8
rng = np.random.default_rng(3)

hard = sample_hard_masks(ind, 0.5, DENSE_FIRST, 1000, rng)
soft = sample_soft_masks(ind, solve_category_probs(32, 8, 0.5, 2), 1000, rng=rng)

print("hard:", "".join(map(str, hard[0])))
print("soft:", "".join(map(str, soft[0])))
for name, masks in (("hard dense_first", hard), ("soft w=2", soft)):
    r = run_length_report_masks(masks)
    print(f"{name:>16}: mean longest run {r.mean_max_run:.2f} +/- {r.se_max_run:.2f}, longest {r.max_run}")

# the complement of dense_first at sigma is sparse_first at 1 - sigma
flip = 1 - sample_hard_masks(ind, 0.3, DENSE_FIRST, 5, rng)
print(flip[:, 12:20].sum(axis=1), sample_hard_masks(ind, 0.7, SPARSE_FIRST, 5, rng)[:, 12:20].sum(axis=1))
