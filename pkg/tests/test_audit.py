import math

import numpy as np
import pytest

from conftest import layout
from densched.audit import (
    CompensatedSum,
    InsufficientSamplesError,
    MarginalAccumulator,
    RatioAccumulator,
    RunLengthAccumulator,
    complement_check,
    marginal_report,
    marginal_report_masks,
    ratio_report,
    ratio_report_masks,
    run_length_report,
    run_length_report_masks,
    run_lengths,
    symmetry_report,
    symmetry_report_records,
    tv_distance,
)
from densched.core import Hard, Mode, SchedulerConfig
from densched.dataset import training_records
from densched.extract import build_sample
from densched.sched import DENSE_FIRST, sample_hard_masks, sample_soft_masks, solve_category_probs


def masks_at(n, d, sigma, w, size, mode=Mode.BERNOULLI, seed=0):
    p = solve_category_probs(n, d, sigma, w)
    return sample_soft_masks(layout(n, d), p, size, mode, np.random.default_rng(seed)), p


def records(n_samples=300, **cfg):
    s = [build_sample(f"r{i}", "p", "if a < b: return a + b * c", "code", [(3, 8)]) for i in range(n_samples)]
    config = SchedulerConfig(**cfg)
    return [r.to_dict() for x in s for r in training_records(x, config)]


def test_compensated_sum():
    cs = CompensatedSum()
    for x in [1e16, 1.0, -1e16] * 1000:
        cs.add(x)
    assert cs.value == 1000.0


def test_marginal_bernoulli():
    m, _ = masks_at(12, 3, 0.5, 2, 100_000)
    rep = marginal_report_masks(m, layout(12, 3), 0.5)
    assert abs(rep.empirical_rate - 0.5) < 3 * rep.se and rep.within_3se


def test_marginal_exact_count():
    m, _ = masks_at(12, 3, 0.5, 2, 10_000, Mode.EXACT_COUNT)
    assert marginal_report_masks(m, layout(12, 3), 0.5).empirical_rate == 0.5


def test_marginal_uniform_per_category():
    m, _ = masks_at(12, 3, 0.5, 1, 100_000)
    rep = marginal_report_masks(m, layout(12, 3), 0.5)
    assert abs(rep.dense_rate - 0.5) < 3 * rep.dense_se
    assert abs(rep.sparse_rate - 0.5) < 3 * rep.sparse_se


def test_marginal_needs_samples():
    with pytest.raises(InsufficientSamplesError):
        marginal_report(records(10))


def test_marginal_records_mixed_sigma():
    rep = marginal_report(records(3000, global_seed=1))
    assert rep.n_masks == 3000 and rep.within_3se


def test_ratio_unsaturated():
    m, p = masks_at(12, 3, 0.5, 2, 100_000)
    rep = ratio_report_masks(m, layout(12, 3), p)
    assert 1.9 <= rep.w_hat <= 2.1 and rep.valid
    assert rep.expected_w == pytest.approx(2.0)
    assert rep.ci[0] < rep.w_hat < rep.ci[1]
    assert rep.within_3se


def test_ratio_uniform():
    m, p = masks_at(12, 3, 0.5, 1, 100_000)
    assert 0.95 <= ratio_report_masks(m, layout(12, 3), p).w_hat <= 1.05


def test_ratio_saturated_flagged():
    m, p = masks_at(10, 5, 0.8, 5, 20_000)
    rep = ratio_report_masks(m, layout(10, 5), p)
    assert rep.saturated and not rep.valid and rep.w_hat is not None
    assert rep.within_3se is None


def test_ratio_records_and_hard():
    rep = ratio_report(records(2000, weight=2.0, sigma_range=(0.3, 0.4)))
    assert rep.valid and abs(rep.w_hat / 2 - 1) < 0.1
    hard = ratio_report(records(50, weight="hard_dense"))
    assert hard.hard and not hard.valid


def test_ratio_empty_category():
    m = np.ones((10, 5), dtype=np.uint8)
    rep = ratio_report_masks(m, np.zeros(5, bool), solve_category_probs(5, 0, 0.5, 2))
    assert rep.w_hat is None and not rep.valid


def test_run_lengths_simple():
    mx, lengths = run_lengths(np.array([[1, 1, 1, 1], [1, 0, 1, 0], [0, 0, 0, 0], [0, 1, 1, 0]]))
    assert mx.tolist() == [4, 1, 0, 2]
    assert sorted(lengths.tolist()) == [1, 1, 2, 4]
    assert run_length_report_masks(np.ones((1, 9))).max_run == 9
    assert run_length_report_masks(np.tile([1, 0], (3, 8))).mean_max_run == 1


def test_run_length_hard_vs_soft():
    ind = np.zeros(32, bool)
    ind[10:18] = True
    rng = np.random.default_rng(0)
    hard = run_length_report_masks(sample_hard_masks(ind, 0.5, DENSE_FIRST, 1000, rng))
    soft = run_length_report_masks(sample_soft_masks(ind, solve_category_probs(32, 8, 0.5, 2), 1000, rng=rng))
    assert hard.mean_max_run > soft.mean_max_run
    assert hard.mean_max_run >= 8


def test_run_length_report_grouped():
    rep = run_length_report(records(20) + records(20, weight="hard_dense"))
    assert set(rep) == {"weight=2.0,mode=bernoulli", "weight=hard_dense,mode=bernoulli"}


def test_tv_distance():
    from collections import Counter

    assert tv_distance(Counter({1: 5}), Counter({1: 2})) == 0
    assert tv_distance(Counter({1: 1}), Counter({2: 1})) == 1
    with pytest.raises(ValueError):
        tv_distance(Counter(), Counter({1: 1}))


def test_symmetry_same_config():
    rep = symmetry_report(SchedulerConfig(), SchedulerConfig(), 8, 2, 100_000, seed=3)
    assert rep.tv < 0.01


def test_symmetry_w_reciprocal_is_measured():
    rep = symmetry_report(SchedulerConfig(weight=2), SchedulerConfig(weight=0.5), 12, 3, 20_000)
    assert 0 <= rep.tv <= 1 and rep.to_dict()["config_b"]["weight"] == 0.5


def test_symmetry_records_layout_mismatch():
    a = records(5)
    b = [dict(r, indicator=[0] * len(r["indicator"])) for r in a]
    with pytest.raises(ValueError):
        symmetry_report_records(a, b)
    assert symmetry_report_records(a, a).tv == 0


def test_complement_check():
    recs = records(20)
    assert complement_check(recs).violations == []
    bad = [dict(r) for r in recs]
    bad[7] = dict(bad[7], mask=list(bad[7]["mask"]))
    bad[7]["mask"][4] ^= 1
    rep = complement_check(bad)
    assert rep.violations == [f"{bad[7]['id']}: index 4 not complementary"] and not rep.ok
    skipped = complement_check(records(5, complement=False))
    assert skipped.ok and skipped.pairs_checked == 0 and skipped.note


def test_complement_check_orphans():
    recs = records(3)
    rep = complement_check(recs[:-1])
    assert rep.violations == [f"{recs[-2]['id']}: orphan logical record"]


def test_sharded_merge_matches_single_pass():
    recs = records(1500, global_seed=9, scope="per_block", block_size=4)
    logical = [r for r in recs if r["role"] == "logical"]
    for cls, finish in ((MarginalAccumulator, lambda a: a.result(1).to_dict()),
                        (RatioAccumulator, lambda a: a.result().to_dict()),
                        (RunLengthAccumulator, lambda a: a.result().to_dict())):
        whole = cls()
        for r in logical:
            whole.update(r)
        shards = [cls() for _ in range(7)]
        for k, r in enumerate(logical):
            shards[k % 7].update(r)
        merged = shards[0]
        for s in shards[1:]:
            merged.merge(s)
        a, b = finish(whole), finish(merged)
        assert a.keys() == b.keys()
        for key in a:
            if isinstance(a[key], float):
                assert a[key] == pytest.approx(b[key], abs=1e-12, rel=0)
            else:
                assert a[key] == b[key]


def test_hard_weight_records_skip_expected():
    rep = ratio_report(records(20, weight=Hard.SPARSE))
    assert rep.expected_w is None
    assert math.isfinite(rep.p_dense)
