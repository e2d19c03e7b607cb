import math
import statistics

import numpy as np
import pytest

from densched.core import SchedulerConfig, validate_sample
from densched.sandbox import (
    OraclePredictor,
    SyntheticSpec,
    ToyDenoiser,
    UniformPredictor,
    eval_by_category,
    gen_synthetic_corpus,
    make_records,
    run_experiment,
    train_toy_denoiser,
    vocabulary,
)

SMALL = SyntheticSpec(n_samples=300)


def test_corpus_deterministic_and_valid():
    a, b = gen_synthetic_corpus(SMALL), gen_synthetic_corpus(SMALL)
    assert a == b
    assert a != gen_synthetic_corpus(SyntheticSpec(n_samples=300, seed=1))
    assert all(validate_sample(s) == [] for s in a)


def test_corpus_density_and_range():
    vocab = set(vocabulary(SMALL))
    for s in gen_synthetic_corpus(SMALL):
        assert sum(s.indicator[:-1]) / (len(s.indicator) - 1) == 0.2
        for tok in s.surfaces:
            assert tok in vocab
            if tok.isdigit():
                assert 0 <= int(tok) <= 9


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(value_range=(5, 2))
    with pytest.raises(ValueError):
        SyntheticSpec(ops=("sqrt",))


def test_single_record_count_dominance():
    vocab = ["a", "b", "c", "x"]
    model = train_toy_denoiser([{"tokens": ["a", "x", "b"], "mask": [0, 1, 0]}], radius=1, vocab=vocab)
    assert model.predict(["a", "c", "b"], [0, 1, 0]) == ["x"]


def test_conditionals_sum_to_one():
    recs = make_records(gen_synthetic_corpus(SMALL), SchedulerConfig())
    model = train_toy_denoiser(recs, vocab=vocabulary(SMALL))
    for off in (-3, -1, 1, 3):
        for tok in ("if", "3", "="):
            assert model.conditional(off, tok).sum() == pytest.approx(1, abs=1e-9)
    p = model.predict_proba(recs[0]["tokens"], recs[0]["mask"])
    assert np.allclose(p.sum(axis=1), 1, atol=1e-9)


def test_large_alpha_is_uniform():
    recs = make_records(gen_synthetic_corpus(SMALL), SchedulerConfig())
    vocab = vocabulary(SMALL)
    p = train_toy_denoiser(recs, alpha=1e12, vocab=vocab).predict_proba(recs[0]["tokens"], recs[0]["mask"])
    assert np.allclose(p, 1 / len(vocab), atol=1e-6)


def test_doubled_corpus_same_argmax():
    recs = make_records(gen_synthetic_corpus(SMALL), SchedulerConfig())
    vocab = vocabulary(SMALL)
    once = train_toy_denoiser(recs, vocab=vocab)
    twice = train_toy_denoiser(recs + recs, vocab=vocab)
    assert np.array_equal(twice.counts, 2 * once.counts)
    test = make_records(gen_synthetic_corpus(SyntheticSpec(n_samples=100, seed=9)), SchedulerConfig())
    same = total = 0
    for r in test:
        a, b = once.predict(r["tokens"], r["mask"]), twice.predict(r["tokens"], r["mask"])
        same += sum(x == y for x, y in zip(a, b))
        total += len(a)
    # smoothing is not scale-free, so agreement is near-total rather than exact
    assert same / total > 0.99


def test_oracle_and_uniform_predictors():
    recs = make_records(gen_synthetic_corpus(SMALL), SchedulerConfig())
    acc = eval_by_category(OraclePredictor(), recs)
    assert (acc.dense, acc.sparse, acc.overall) == (1.0, 1.0, 1.0)
    vocab = vocabulary(SMALL)
    acc = eval_by_category(UniformPredictor(vocab, seed=0), recs)
    p = 1 / len(vocab)
    for rate, n in ((acc.dense, acc.n_dense), (acc.sparse, acc.n_sparse)):
        assert abs(rate - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_empty_category_is_none():
    acc = eval_by_category(OraclePredictor(), [{"tokens": ["a", "b"], "indicator": [0, 0], "mask": [1, 0]}])
    assert acc.dense is None and acc.sparse == 1.0


def test_syntactic_only_training():
    cfg = SchedulerConfig(weight=5.0)
    dense, sparse = [], []
    for seed in range(5):
        corpus = gen_synthetic_corpus(SyntheticSpec(n_samples=600, seed=seed))
        train = [r for r in make_records(corpus[120:], cfg) if r["role"] == "syntactic"]
        model = train_toy_denoiser(train, vocab=vocabulary(SMALL))
        acc = eval_by_category(model, make_records(corpus[:120], SchedulerConfig(weight=1.0, global_seed=99)))
        dense.append(acc.dense)
        sparse.append(acc.sparse)
    assert statistics.median(sparse) >= statistics.median(dense)


def test_experiment_rerun_identical():
    cfgs = [SchedulerConfig(weight=2.0)]
    a = run_experiment(SyntheticSpec(n_samples=200), cfgs, seeds=[0])
    b = run_experiment(SyntheticSpec(n_samples=200), cfgs, seeds=[0])
    assert a.to_dict() == b.to_dict()
    assert "w=2.0" in a.render()


def test_weight_sweep_table():
    ws = [0.1, 0.5, 1.0, 2.0, 5.0]
    table = run_experiment(SyntheticSpec(n_samples=150), [SchedulerConfig(weight=w) for w in ws], seeds=[0])
    assert list(table.medians) == [f"w={w}" for w in ws]
    assert len(table.rows) == 5


def test_denoiser_argument_checks():
    with pytest.raises(ValueError):
        ToyDenoiser(["a"], radius=0)
    with pytest.raises(ValueError):
        ToyDenoiser(["a"], alpha=0)
    with pytest.raises(ValueError):
        train_toy_denoiser([])
    with pytest.raises(ValueError):
        run_experiment(SMALL, [], seeds=[0])
