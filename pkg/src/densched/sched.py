"""Priority masking with marginal conservation, plus complementary pairs.

Dense positions (``c_i = 1``) are masked ``w`` times as often as sparse ones,
with the sparse rate chosen so the expected masked fraction equals the
scheduler's ``sigma``. When ``w * p_base`` would exceed one the dense rate is
clamped and the sparse rate re-solved; the mirror clamp handles ``w < 1`` at
high ``sigma``.

Every sampler takes an explicit ``rng`` (anything accepted by
``numpy.random.default_rng``) and is a pure function of its inputs and that
state.
"""

from __future__ import annotations

import math

import numpy as np

from .core import (
    CategoryProbs,
    Hard,
    MaskPair,
    MaskVector,
    Mode,
    NoiseDraw,
    Saturation,
    SchedulerConfig,
    Scope,
    block_ranges,
    fnv1a_64,
)

DENSE_FIRST = "dense_first"
SPARSE_FIRST = "sparse_first"

# rows per chunk are chosen so one chunk holds about this many uniforms
_CHUNK_CELLS = 1 << 23


def solve_category_probs(n: int, d: int, sigma: float, w: float) -> CategoryProbs:
    """Solve ``(D*p_dense + (N-D)*p_base) / N = sigma`` with ``p_dense = w*p_base``.

    Both probabilities are clamped to 1 where needed, re-solving the other
    one so that conservation still holds exactly.
    """
    if isinstance(w, Hard):
        raise ValueError("hard weights have no soft probabilities; use sample_hard_mask")
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    if n < 1 or not 0 <= d <= n:
        raise ValueError(f"need N >= 1 and 0 <= D <= N, got N={n}, D={d}")
    if not w >= 0:
        raise ValueError(f"weight must be nonnegative, got {w}")
    rho = d / n

    # degenerate categories: the absent category's probability is unused
    if d == 0:
        return CategoryProbs(min(w * sigma, 1.0), sigma, rho, Saturation.NONE, sigma, n, d)
    if d == n:
        p_base = min(sigma / w, 1.0) if w > 0 else 1.0
        return CategoryProbs(sigma, p_base, rho, Saturation.NONE, sigma, n, d)

    p_base = sigma * n / (w * d + (n - d))
    p_dense = w * p_base
    saturated = Saturation.NONE
    if p_dense > 1.0:
        p_dense = 1.0
        p_base = (sigma * n - d) / (n - d)
        saturated = Saturation.DENSE_AT_ONE
    elif p_base > 1.0:
        p_base = 1.0
        p_dense = (sigma * n - (n - d)) / d
        saturated = Saturation.BASE_AT_ONE
    return CategoryProbs(p_dense, p_base, rho, saturated, sigma, n, d)


def draw_sigma(sigma_range, rng=None) -> NoiseDraw:
    lo, hi = sigma_range
    if not 0.0 < lo <= hi < 1.0:
        raise ValueError(f"invalid sigma range {sigma_range}")
    rng = np.random.default_rng(rng)
    u = float(rng.random())
    return NoiseDraw(t=u if hi > lo else 0.0, sigma=lo + (hi - lo) * u)


def stochastic_round(x, rng) -> np.ndarray:
    """floor(x) plus a Bernoulli draw on the fractional part; unbiased."""
    x = np.asarray(x, dtype=float)
    base = np.floor(x)
    return (base + (rng.random(x.shape) < (x - base))).astype(np.int64)


def sample_rng(global_seed: int, sample_id: str, draw: int = 0) -> np.random.Generator:
    """Per-sample generator derived from (seed, id, draw index) only."""
    seed = int(global_seed) & (2**64 - 1)
    h = fnv1a_64(str(sample_id).encode("utf-8"))
    words = [seed & 0xFFFFFFFF, seed >> 32, h & 0xFFFFFFFF, h >> 32, int(draw)]
    return np.random.default_rng(np.random.SeedSequence(words))


# --- row-vectorised kernels -------------------------------------------------


def _subset_rows(k: int, m: np.ndarray, rng) -> np.ndarray:
    """Boolean (rows, k) array with a uniform m[r]-subset set in each row."""
    rows = len(m)
    if k == 0:
        return np.zeros((rows, 0), dtype=bool)
    keys = rng.random((rows, k))
    ranks = keys.argsort(axis=1).argsort(axis=1)
    return ranks < m[:, None]


def _bernoulli_rows(ind, p_dense, p_base, rng):
    u = rng.random((len(p_dense), len(ind)))
    if np.all(p_dense == p_dense[0]) and np.all(p_base == p_base[0]):
        # shared probabilities: one comparison against a per-position threshold
        return u < np.where(ind, p_dense[0], p_base[0])
    return np.where(ind, u < p_dense[:, None], u < p_base[:, None])


def _fill_by_category(ind, n_dense_masked, n_sparse_masked, rng):
    dense_idx = np.flatnonzero(ind)
    sparse_idx = np.flatnonzero(~ind)
    out = np.zeros((len(n_dense_masked), len(ind)), dtype=bool)
    out[:, dense_idx] = _subset_rows(len(dense_idx), n_dense_masked, rng)
    out[:, sparse_idx] = _subset_rows(len(sparse_idx), n_sparse_masked, rng)
    return out


def _exact_rows(ind, sigma, p_dense, rng):
    n = len(ind)
    d = int(ind.sum())
    total = stochastic_round(sigma * n, rng)
    n_d = stochastic_round(p_dense * d, rng)
    n_d = np.clip(n_d, np.maximum(0, total - (n - d)), np.minimum(d, total))
    return _fill_by_category(ind, n_d, total - n_d, rng)


def _hard_rows(ind, sigma, dense_first, rng):
    n = len(ind)
    d = int(ind.sum())
    budget = stochastic_round(sigma * n, rng)
    if dense_first:
        n_d = np.minimum(budget, d)
        n_s = budget - n_d
    else:
        n_s = np.minimum(budget, n - d)
        n_d = budget - n_s
    return _fill_by_category(ind, n_d, n_s, rng)


def _chunks(size: int, n: int):
    step = max(1, _CHUNK_CELLS // max(n, 1))
    for start in range(0, size, step):
        yield min(step, size - start)


def _as_indicator(indicator) -> np.ndarray:
    ind = np.asarray(indicator)
    if ind.ndim != 1 or len(ind) == 0:
        raise ValueError("indicator must be a non-empty 1-d vector")
    if np.any((ind != 0) & (ind != 1)):
        raise ValueError("indicator must be binary")
    return ind.astype(bool)


def _check_probs(ind, probs: CategoryProbs):
    if probs.n != len(ind) or probs.d != int(ind.sum()):
        raise ValueError(
            f"probs solved for (N={probs.n}, D={probs.d}) but indicator has "
            f"(N={len(ind)}, D={int(ind.sum())})"
        )


# --- public samplers ---------------------------------------------------------


def sample_soft_masks(indicator, probs: CategoryProbs, size: int, mode=Mode.BERNOULLI, rng=None):
    """Batch of ``size`` soft priority masks as a (size, N) uint8 array."""
    ind = _as_indicator(indicator)
    _check_probs(ind, probs)
    mode = Mode(mode)
    rng = np.random.default_rng(rng)
    out = np.empty((size, len(ind)), dtype=np.uint8)
    at = 0
    for rows in _chunks(size, len(ind)):
        if mode is Mode.BERNOULLI:
            pd = np.full(rows, probs.p_dense)
            pb = np.full(rows, probs.p_base)
            out[at:at + rows] = _bernoulli_rows(ind, pd, pb, rng)
        else:
            out[at:at + rows] = _exact_rows(ind, np.full(rows, probs.sigma), np.full(rows, probs.p_dense), rng)
        at += rows
    return out


def sample_soft_mask(indicator, probs: CategoryProbs, mode=Mode.BERNOULLI, rng=None) -> MaskVector:
    return MaskVector(sample_soft_masks(indicator, probs, 1, mode, rng)[0])


def sample_hard_masks(indicator, sigma: float, direction: str, size: int, rng=None):
    ind = _as_indicator(indicator)
    if direction not in (DENSE_FIRST, SPARSE_FIRST):
        raise ValueError(f"direction must be {DENSE_FIRST!r} or {SPARSE_FIRST!r}")
    if not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    rng = np.random.default_rng(rng)
    out = [
        _hard_rows(ind, np.full(rows, sigma), direction == DENSE_FIRST, rng)
        for rows in _chunks(size, len(ind))
    ]
    return np.concatenate(out).astype(np.uint8) if out else np.zeros((0, len(ind)), np.uint8)


def sample_hard_mask(indicator, sigma: float, direction: str = DENSE_FIRST, rng=None) -> MaskVector:
    """Deterministic category-ordered masking up to a stochastically rounded budget."""
    return MaskVector(sample_hard_masks(indicator, sigma, direction, 1, rng)[0])


def complement(mask: MaskVector) -> MaskVector:
    return MaskVector(1 - mask.bits)


def _solve_rows(n, d, sigma, w):
    pd = np.empty(len(sigma))
    pb = np.empty(len(sigma))
    for i, s in enumerate(sigma):
        p = solve_category_probs(n, d, float(s), w)
        pd[i], pb[i] = p.p_dense, p.p_base
    return pd, pb


def sample_config_masks(indicator, config: SchedulerConfig, size: int, rng=None):
    """Draw ``size`` independent (sigma, M) pairs over one region per ``config``.

    Returns ``(masks, sigmas)``; masks is (size, N) uint8. This is the batched
    form of what :func:`make_pair` does for a single per-sequence draw.
    """
    ind = _as_indicator(indicator)
    rng = np.random.default_rng(rng)
    n, d = len(ind), int(ind.sum())
    lo, hi = config.sigma_range
    masks, sigmas = [], []
    for rows in _chunks(size, n):
        sigma = lo + (hi - lo) * rng.random(rows)
        if config.is_hard:
            m = _hard_rows(ind, sigma, config.weight is Hard.DENSE, rng)
        else:
            pd, pb = _solve_rows(n, d, sigma, config.weight)
            if config.mode is Mode.BERNOULLI:
                m = _bernoulli_rows(ind, pd, pb, rng)
            else:
                m = _exact_rows(ind, sigma, pd, rng)
        masks.append(m)
        sigmas.append(sigma)
    return np.concatenate(masks).astype(np.uint8), np.concatenate(sigmas)


def make_pair(sample, config: SchedulerConfig, draw: int = 0, rng=None) -> MaskPair:
    """Build the logical mask M (and M-bar when ``config.complement``) for a sample.

    The generator defaults to one derived from ``(config.global_seed,
    sample.id, draw)`` so results do not depend on processing order.
    """
    if rng is None:
        rng = sample_rng(config.global_seed, sample.id, draw)
    rng = np.random.default_rng(rng)
    ind = np.array(sample.indicator, dtype=bool)
    if len(ind) == 0:
        raise ValueError("sample has an empty maskable region")
    ind[-1] = config.eos_is_dense
    n = len(ind)
    if config.scope is Scope.PER_SEQUENCE:
        ranges = [(0, n)]
    else:
        ranges = block_ranges(n, config.block_size)

    bits = np.zeros(n, dtype=np.uint8)
    draws, probs = [], []
    lo, hi = config.sigma_range
    for start, end in ranges:
        block = ind[start:end]
        nd = draw_sigma((lo, hi), rng)
        if config.is_hard:
            direction = DENSE_FIRST if config.weight is Hard.DENSE else SPARSE_FIRST
            m = sample_hard_mask(block, nd.sigma, direction, rng)
            probs.append(None)
        else:
            p = solve_category_probs(end - start, int(block.sum()), nd.sigma, config.weight)
            m = sample_soft_mask(block, p, config.mode, rng)
            probs.append(p)
        bits[start:end] = m.bits
        draws.append(nd)
    logical = MaskVector(bits)
    return MaskPair(
        logical=logical,
        syntactic=complement(logical) if config.complement else None,
        draws=tuple(draws),
        weight=config.weight,
        probs=tuple(probs),
        blocks=tuple(ranges),
    )


def analytic_rate(probs: CategoryProbs) -> float:
    """Expected masked fraction implied by solved probabilities."""
    if probs.d == 0:
        return probs.p_base
    if probs.d == probs.n:
        return probs.p_dense
    return probs.rho * probs.p_dense + (1.0 - probs.rho) * probs.p_base


def binomial_se(sigma: float, n_positions: int) -> float:
    return math.sqrt(sigma * (1.0 - sigma) / n_positions)
