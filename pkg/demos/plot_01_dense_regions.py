"""
Finding information-dense regions
=================================

Rule sets mark the tokens that carry the reasoning: branch conditions and
returned values in code, calculator steps and final answers in math.
"""

from importlib import resources

from densched.dataset import load_sft_corpus
from densched.extract import annotate_corpus, build_sample, density_stats, extract_code_dense, import_annotations, load_rules

# a single answer, by hand
answer = "def clamp(x, lo, hi):\n    if x < lo:\n        return lo\n    return min(x, hi)"
spans = extract_code_dense(answer)
print([answer[s.start:s.end] for s in spans])

# spans map onto tokens: a token is dense if it shares a character with a span
sample = build_sample("demo", "clamp a value", answer, "code", spans)
for (text, _), c in zip(sample.tokens, sample.indicator):
    print(f"{c} {text}")

# the shipped fixture corpora, annotated with the bundled rules
data = resources.files("densched") / "data"
corpus = []
for domain in ("code", "math"):
    records = annotate_corpus(load_sft_corpus(data / f"{domain}_sft.jsonl"), {domain: load_rules(domain)})
    corpus += import_annotations(records)

for domain, st in density_stats(corpus).items():
    print(f"{domain}: {st.count} samples, mean dense fraction {st.rho:.3f}")
