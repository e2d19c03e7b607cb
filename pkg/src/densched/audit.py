"""Statistical checks over emitted records and over the samplers directly.

Each report is backed by an accumulator with ``update``/``merge``/``result``
so a record stream can be sharded and the partial results combined. Counts
are integers; float sums use Neumaier compensation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .core import Hard, Saturation, SchedulerConfig, block_ranges
from .sched import sample_config_masks, solve_category_probs

Z95 = 1.959963984540054


class InsufficientSamplesError(ValueError):
    pass


class CompensatedSum:
    """Neumaier summation; ``merge`` combines two partial sums."""

    __slots__ = ("total", "comp")

    def __init__(self, total=0.0, comp=0.0):
        self.total = total
        self.comp = comp

    def add(self, x: float):
        t = self.total + x
        if abs(self.total) >= abs(x):
            self.comp += (self.total - t) + x
        else:
            self.comp += (x - t) + self.total
        self.total = t

    def merge(self, other: CompensatedSum):
        self.add(other.total)
        self.comp += other.comp

    @property
    def value(self) -> float:
        return self.total + self.comp


# --- record adapters ---------------------------------------------------------


def _weight(rec) -> float | Hard:
    w = rec["weight"]
    return Hard(w) if isinstance(w, str) else float(w)


def _segments(rec):
    """Yield (start, end, sigma) for each independently scheduled range of a record."""
    n = len(rec["mask"])
    sigma = rec["sigma"]
    if isinstance(sigma, list):
        blocks = rec.get("blocks") or block_ranges(n, n)
        for (s, e), sg in zip(blocks, sigma):
            yield s, e, float(sg)
    else:
        yield 0, n, float(sigma)


def _logical(records):
    for rec in records:
        if rec.get("role", "logical") == "logical":
            yield rec


def _category_counts(masks, indicator):
    """Per-row (dense masked, sparse masked) counts of a binary (B, N) batch."""
    m = np.atleast_2d(np.asarray(masks, dtype=np.uint8))
    ind = np.asarray(indicator, dtype=bool)
    # AND with the indicator beats column indexing by a wide margin on big batches
    dense = np.count_nonzero(m & ind.astype(np.uint8), axis=1)
    return dense, np.count_nonzero(m, axis=1) - dense


# --- marginal ----------------------------------------------------------------


@dataclass
class MarginalReport:
    n_masks: int
    positions: int
    masked: int
    empirical_rate: float
    target_sigma: float
    se: float
    z: float
    dense_rate: float | None
    sparse_rate: float | None
    dense_se: float | None
    sparse_se: float | None

    @property
    def within_3se(self) -> bool:
        return abs(self.z) <= 3.0 if self.se > 0 else self.masked == round(self.target_sigma * self.positions)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["within_3se"] = self.within_3se
        return d


@dataclass
class MarginalAccumulator:
    n_masks: int = 0
    positions: int = 0
    masked: int = 0
    dense_pos: int = 0
    dense_masked: int = 0
    dense_target: CompensatedSum = field(default_factory=CompensatedSum)
    sparse_target: CompensatedSum = field(default_factory=CompensatedSum)
    target: CompensatedSum = field(default_factory=CompensatedSum)
    variance: CompensatedSum = field(default_factory=CompensatedSum)

    def update_masks(self, masks, indicator, sigma):
        """Add a (B, N) batch of masks drawn at one or per-row ``sigma``."""
        dense, sparse = _category_counts(masks, indicator)
        b, n = len(dense), len(indicator)
        d = int(np.count_nonzero(indicator))
        sig = np.broadcast_to(np.asarray(sigma, dtype=float), (b,))
        self.n_masks += b
        self.positions += b * n
        self.masked += int(dense.sum()) + int(sparse.sum())
        self.dense_pos += b * d
        self.dense_masked += int(dense.sum())
        # fsum is exactly rounded, so batching does not change the totals
        s_sum = math.fsum(sig)
        self.target.add(s_sum * n)
        self.variance.add(math.fsum(sig * (1.0 - sig)) * n)
        self.dense_target.add(s_sum * d)
        self.sparse_target.add(s_sum * (n - d))

    def update(self, rec):
        mask = np.asarray(rec["mask"], dtype=np.int64)
        ind = np.asarray(rec["indicator"], dtype=bool)
        self.n_masks += 1
        for s, e, sg in _segments(rec):
            n = e - s
            d = int(ind[s:e].sum())
            self.positions += n
            self.masked += int(mask[s:e].sum())
            self.dense_pos += d
            self.dense_masked += int(mask[s:e][ind[s:e]].sum())
            self.target.add(sg * n)
            self.variance.add(sg * (1.0 - sg) * n)
            self.dense_target.add(sg * d)
            self.sparse_target.add(sg * (n - d))

    def merge(self, other: MarginalAccumulator) -> MarginalAccumulator:
        for name in ("n_masks", "positions", "masked", "dense_pos", "dense_masked"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        for name in ("target", "variance", "dense_target", "sparse_target"):
            getattr(self, name).merge(getattr(other, name))
        return self

    def result(self, min_masks: int = 1000) -> MarginalReport:
        if self.n_masks < min_masks:
            raise InsufficientSamplesError(
                f"marginal report needs >= {min_masks} masks, got {self.n_masks}"
            )
        target = self.target.value
        var = self.variance.value
        se = math.sqrt(var) / self.positions
        z = (self.masked - target) / math.sqrt(var) if var > 0 else 0.0
        sparse_pos = self.positions - self.dense_pos
        sparse_masked = self.masked - self.dense_masked

        def rate_se(masked, pos, tgt):
            if pos == 0:
                return None, None
            s = tgt / pos
            return masked / pos, math.sqrt(s * (1 - s) / pos)

        dr, dse = rate_se(self.dense_masked, self.dense_pos, self.dense_target.value)
        sr, sse = rate_se(sparse_masked, sparse_pos, self.sparse_target.value)
        return MarginalReport(
            n_masks=self.n_masks,
            positions=self.positions,
            masked=self.masked,
            empirical_rate=self.masked / self.positions,
            target_sigma=target / self.positions,
            se=se,
            z=z,
            dense_rate=dr,
            sparse_rate=sr,
            dense_se=dse,
            sparse_se=sse,
        )


def marginal_report(records: Iterable[dict], min_masks: int = 1000) -> MarginalReport:
    """Empirical mask rate of logical records against their scheduled sigma.

    Standard errors are binomial, ``sqrt(sum N*s*(1-s)) / sum N``.
    """
    acc = MarginalAccumulator()
    for rec in _logical(records):
        acc.update(rec)
    return acc.result(min_masks)


def marginal_report_masks(masks, indicator, sigma, min_masks: int = 1000) -> MarginalReport:
    acc = MarginalAccumulator()
    acc.update_masks(masks, indicator, sigma)
    return acc.result(min_masks)


# --- ratio -------------------------------------------------------------------


@dataclass
class RatioReport:
    p_dense: float | None
    p_base: float | None
    w_hat: float | None
    ci: tuple[float, float] | None
    expected_w: float | None
    saturated: bool
    hard: bool
    valid: bool
    note: str = ""
    se_log: float | None = None

    @property
    def within_3se(self) -> bool | None:
        """Whether log(w_hat) sits within 3 SE of log(expected_w); None if untestable."""
        if not self.valid or not self.expected_w or self.se_log is None:
            return None
        return abs(math.log(self.w_hat / self.expected_w)) <= 3 * self.se_log

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci"] = list(self.ci) if self.ci else None
        d["within_3se"] = self.within_3se
        return d


@dataclass
class RatioAccumulator:
    dense_masked: int = 0
    dense_pos: int = 0
    sparse_masked: int = 0
    sparse_pos: int = 0
    exp_dense: CompensatedSum = field(default_factory=CompensatedSum)
    exp_sparse: CompensatedSum = field(default_factory=CompensatedSum)
    saturated: int = 0
    hard: int = 0

    def _add(self, mask, ind, n_rows=1):
        dense, sparse = _category_counts(mask, ind)
        self.dense_masked += int(dense.sum())
        self.sparse_masked += int(sparse.sum())
        self.dense_pos += n_rows * int(ind.sum())
        self.sparse_pos += n_rows * int((~ind).sum())

    def update(self, rec):
        mask = np.asarray(rec["mask"], dtype=np.int64)
        ind = np.asarray(rec["indicator"], dtype=bool)
        w = _weight(rec)
        for s, e, sg in _segments(rec):
            seg = ind[s:e]
            self._add(mask[s:e], seg)
            if isinstance(w, Hard):
                self.hard += 1
                continue
            p = solve_category_probs(e - s, int(seg.sum()), sg, w)
            if p.saturated is not Saturation.NONE:
                self.saturated += 1
            self.exp_dense.add(p.p_dense * p.d)
            self.exp_sparse.add(p.p_base * (p.n - p.d))

    def update_masks(self, masks, indicator, probs):
        masks = np.atleast_2d(np.asarray(masks))
        ind = np.asarray(indicator, dtype=bool)
        b = masks.shape[0]
        self._add(masks, ind, b)
        if probs.saturated is not Saturation.NONE:
            self.saturated += b
        self.exp_dense.add(probs.p_dense * probs.d * b)
        self.exp_sparse.add(probs.p_base * (probs.n - probs.d) * b)

    def merge(self, other: RatioAccumulator) -> RatioAccumulator:
        for name in ("dense_masked", "dense_pos", "sparse_masked", "sparse_pos", "saturated", "hard"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.exp_dense.merge(other.exp_dense)
        self.exp_sparse.merge(other.exp_sparse)
        return self

    def result(self) -> RatioReport:
        if self.dense_pos == 0 or self.sparse_pos == 0:
            return RatioReport(None, None, None, None, None, False, self.hard > 0, False,
                               "one category is empty; ratio undefined")
        pd = self.dense_masked / self.dense_pos
        pb = self.sparse_masked / self.sparse_pos
        expected = None
        if self.hard == 0 and self.exp_sparse.value > 0:
            expected = (self.exp_dense.value / self.dense_pos) / (self.exp_sparse.value / self.sparse_pos)
        saturated = self.saturated > 0
        if pb == 0:
            return RatioReport(pd, pb, None, None, expected, saturated, self.hard > 0, False,
                               "no sparse position masked; ratio undefined")
        w_hat = pd / pb
        ci = se_log = None
        if 0 < pd < 1 and pb < 1:
            # delta method on log(w_hat)
            se_log = math.sqrt((1 - pd) / (pd * self.dense_pos) + (1 - pb) / (pb * self.sparse_pos))
            ci = (w_hat * math.exp(-Z95 * se_log), w_hat * math.exp(Z95 * se_log))
        note = ""
        if saturated:
            note = "saturated draws present; ratio does not follow the w law"
        elif self.hard:
            note = "hard masking; no soft weight to compare against"
        valid = not saturated and not self.hard and pd > 0
        return RatioReport(pd, pb, w_hat, ci, expected, saturated, self.hard > 0, valid, note, se_log)


def ratio_report(records: Iterable[dict]) -> RatioReport:
    """Category-wise empirical masking rates of logical records and their ratio."""
    acc = RatioAccumulator()
    for rec in _logical(records):
        acc.update(rec)
    return acc.result()


def ratio_report_masks(masks, indicator, probs) -> RatioReport:
    acc = RatioAccumulator()
    acc.update_masks(masks, indicator, probs)
    return acc.result()


# --- run lengths -------------------------------------------------------------


def run_lengths(masks) -> tuple[np.ndarray, np.ndarray]:
    """Per-row maximum masked run, and the flat array of all run lengths."""
    m = np.atleast_2d(np.asarray(masks, dtype=np.int8))
    padded = np.pad(m, ((0, 0), (1, 1)))
    diff = np.diff(padded, axis=1)
    starts_r, starts_c = np.nonzero(diff == 1)
    _, ends_c = np.nonzero(diff == -1)
    lengths = ends_c - starts_c
    max_run = np.zeros(m.shape[0], dtype=np.int64)
    np.maximum.at(max_run, starts_r, lengths)
    return max_run, lengths


@dataclass
class RunLengthReport:
    n_masks: int
    mean_max_run: float
    se_max_run: float
    max_run: int
    mean_run: float
    max_run_distribution: dict
    run_distribution: dict

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunLengthAccumulator:
    n_masks: int = 0
    sum_max: int = 0
    sum_max_sq: int = 0
    max_run: int = 0
    max_hist: Counter = field(default_factory=Counter)
    run_hist: Counter = field(default_factory=Counter)

    def update_masks(self, masks):
        mx, lengths = run_lengths(masks)
        self.n_masks += len(mx)
        self.sum_max += int(mx.sum())
        self.sum_max_sq += int((mx * mx).sum())
        self.max_run = max(self.max_run, int(mx.max()) if len(mx) else 0)
        self.max_hist.update(Counter(mx.tolist()))
        self.run_hist.update(Counter(lengths.tolist()))

    def update(self, rec):
        self.update_masks([rec["mask"]])

    def merge(self, other: RunLengthAccumulator) -> RunLengthAccumulator:
        self.n_masks += other.n_masks
        self.sum_max += other.sum_max
        self.sum_max_sq += other.sum_max_sq
        self.max_run = max(self.max_run, other.max_run)
        self.max_hist.update(other.max_hist)
        self.run_hist.update(other.run_hist)
        return self

    def result(self) -> RunLengthReport:
        n = self.n_masks
        if n == 0:
            return RunLengthReport(0, 0.0, 0.0, 0, 0.0, {}, {})
        mean = self.sum_max / n
        var = max(self.sum_max_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
        runs = sum(self.run_hist.values())
        mean_run = sum(k * v for k, v in self.run_hist.items()) / runs if runs else 0.0
        return RunLengthReport(
            n_masks=n,
            mean_max_run=mean,
            se_max_run=math.sqrt(var / n),
            max_run=self.max_run,
            mean_run=mean_run,
            max_run_distribution=dict(sorted(self.max_hist.items())),
            run_distribution=dict(sorted(self.run_hist.items())),
        )


def run_length_report(records: Iterable[dict]) -> dict[str, RunLengthReport]:
    """Masked-run statistics of logical records, grouped by scheduler variant."""
    accs: dict[str, RunLengthAccumulator] = {}
    for rec in _logical(records):
        key = f"weight={rec.get('weight')},mode={rec.get('mode')}"
        accs.setdefault(key, RunLengthAccumulator()).update(rec)
    return {k: a.result() for k, a in sorted(accs.items())}


def run_length_report_masks(masks) -> RunLengthReport:
    acc = RunLengthAccumulator()
    acc.update_masks(masks)
    return acc.result()


# --- distribution comparison -------------------------------------------------


def category_count_histogram(masks, indicator) -> Counter:
    """Joint histogram of (dense masked count, sparse masked count)."""
    dense, sparse = _category_counts(masks, indicator)
    return Counter(zip(dense.tolist(), sparse.tolist()))


def marginal_count_histograms(masks, indicator) -> tuple[Counter, Counter]:
    """Separate dense-count and sparse-count histograms."""
    dense, sparse = _category_counts(masks, indicator)
    return Counter(dense.tolist()), Counter(sparse.tolist())


def tv_distance(a: Counter, b: Counter) -> float:
    na, nb = sum(a.values()), sum(b.values())
    if na == 0 or nb == 0:
        raise ValueError("cannot compare an empty histogram")
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0) / na - b.get(k, 0) / nb) for k in keys)


@dataclass
class SymmetryReport:
    tv: float
    draws: int
    n: int
    d: int
    config_a: dict
    config_b: dict

    def to_dict(self) -> dict:
        return asdict(self)


def _pooled_histogram(masks, indicator, with_complement=True) -> Counter:
    hist = category_count_histogram(masks, indicator)
    if with_complement:
        hist.update(category_count_histogram(1 - np.asarray(masks), indicator))
    return hist


def symmetry_report(
    config_a: SchedulerConfig, config_b: SchedulerConfig, n: int, d: int, draws: int = 100_000, seed: int = 0
) -> SymmetryReport:
    """TV distance between the pooled {M, M-bar} count histograms of two configs.

    Both configs are sampled over the same (N, D) layout; each contributes
    ``draws`` pairs.
    """
    if not 0 <= d <= n or n < 1:
        raise ValueError(f"invalid layout N={n}, D={d}")
    ind = np.zeros(n, dtype=bool)
    ind[:d] = True
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1))
    rng_a, rng_b = (np.random.default_rng(s) for s in ss.spawn(2))
    ma, _ = sample_config_masks(ind, config_a, draws, rng_a)
    mb, _ = sample_config_masks(ind, config_b, draws, rng_b)
    tv = tv_distance(_pooled_histogram(ma, ind), _pooled_histogram(mb, ind))
    return SymmetryReport(tv, draws, n, d, config_a.to_dict(), config_b.to_dict())


def symmetry_report_records(records_a: Iterable[dict], records_b: Iterable[dict]) -> SymmetryReport:
    """Same comparison over two emissions of one corpus (all roles pooled)."""
    ha, hb = Counter(), Counter()
    layouts_a, layouts_b = Counter(), Counter()
    for recs, hist, layouts in ((records_a, ha, layouts_a), (records_b, hb, layouts_b)):
        for rec in recs:
            ind = np.asarray(rec["indicator"], dtype=bool)
            mask = np.asarray(rec["mask"], dtype=np.int64)
            hist[(int(mask[ind].sum()), int(mask[~ind].sum()))] += 1
            layouts[(len(ind), int(ind.sum()))] += 1
    if layouts_a != layouts_b:
        raise ValueError("record sets do not share the same (N, D) layouts")
    n = sum(k[0] * v for k, v in layouts_a.items())
    d = sum(k[1] * v for k, v in layouts_a.items())
    return SymmetryReport(tv_distance(ha, hb), sum(ha.values()), n, d, {}, {})


# --- complement check --------------------------------------------------------


@dataclass
class ComplementReport:
    pairs_checked: int
    violations: list[str]
    note: str = ""

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def complement_check(records: Iterable[dict]) -> ComplementReport:
    """Verify every logical/syntactic sibling pair sums to one elementwise."""
    records = list(records)
    if not any(r.get("role") == "syntactic" for r in records):
        return ComplementReport(0, [], "no syntactic records; complement check skipped")
    violations = []
    pairs = 0
    pending = None
    for rec in records:
        role = rec.get("role")
        if role == "logical":
            if pending is not None:
                violations.append(f"{pending['id']}: orphan logical record")
            pending = rec
        elif role == "syntactic":
            if pending is None or pending["id"] != rec["id"]:
                violations.append(f"{rec['id']}: orphan syntactic record")
                if pending is not None:
                    violations.append(f"{pending['id']}: orphan logical record")
                pending = None
                continue
            pairs += 1
            a = np.asarray(pending["mask"])
            b = np.asarray(rec["mask"])
            if a.shape != b.shape:
                violations.append(f"{rec['id']}: sibling masks differ in length")
            else:
                for i in np.flatnonzero(a + b != 1):
                    violations.append(f"{rec['id']}: index {int(i)} not complementary")
            pending = None
        else:
            violations.append(f"{rec.get('id')}: unknown role {role!r}")
    if pending is not None:
        violations.append(f"{pending['id']}: orphan logical record")
    return ComplementReport(pairs, violations)
