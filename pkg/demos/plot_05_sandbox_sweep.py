"""
A weight sweep in the sandbox
=============================

A templated toy language has pivot tokens (comparison outcomes, computed
results) that follow from nearby values. A count-based denoiser is trained on
masked records from each scheduler variant and scored on held-out masks.
"""

from densched.core import SchedulerConfig
from densched.sandbox import SyntheticSpec, gen_synthetic_corpus, run_experiment

spec = SyntheticSpec(n_samples=2000)
print(gen_synthetic_corpus(spec)[0].answer)

configs = [SchedulerConfig(weight=w) for w in (0.1, 0.5, 1.0, 2.0, 5.0)]
configs.append(SchedulerConfig(weight=2.0, complement=False))
table = run_experiment(spec, configs, seeds=range(3))
print(table.render())
