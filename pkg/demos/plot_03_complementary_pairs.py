"""
Complementary pairs
===================

Each sample yields a logical record (mask M, dense-heavy) and a syntactic
record (the complement, sparse-heavy). Together they cover every position.
"""


from densched.audit import symmetry_report
from densched.core import SchedulerConfig
from densched.dataset import training_records
from densched.extract import build_sample, extract_math_dense

answer = "He buys 3 * 4 = <<3*4=12>>12 eggs.\n#### 12"
sample = build_sample("eggs", "how many eggs", answer, "math", extract_math_dense(answer))
logical, syntactic = training_records(sample, SchedulerConfig(global_seed=1))

print(f"sigma={logical.sigma:.3f}")
for tok, c, m, mbar in zip(logical.tokens, logical.indicator, logical.mask, syntactic.mask):
    print(f"{tok!r:>10}  dense={c}  M={m}  M-bar={mbar}")
assert all(a + b == 1 for a, b in zip(logical.mask, syntactic.mask))

# w and 1/w are close but not identical as pair distributions; measure it
rep = symmetry_report(SchedulerConfig(weight=2), SchedulerConfig(weight=0.5), n=12, d=3, draws=50_000)
print(f"TV between w=2 and w=0.5 pair histograms: {rep.tv:.4f}")

# priority-only mode drops the sibling record
only = training_records(sample, SchedulerConfig(complement=False))
print(len(only), "record(s) without the complement")
