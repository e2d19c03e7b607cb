"""Corpus ingestion, partial-annotation mixing, block layout and record emission."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import partial
from pathlib import Path
from typing import Iterable, Iterator

import jsonschema
import numpy as np

from .core import (
    AnnotatedSample,
    Domain,
    Reject,
    SchedulerConfig,
    Scope,
    block_ranges,
    fnv1a_64,
    weight_label,
)
from .parallel import map_ordered
from .sched import make_pair

INPUT_SCHEMA = {
    "type": "object",
    "required": ["id", "prompt", "answer", "domain"],
    "properties": {
        "id": {"type": "string"},
        "prompt": {"type": "string"},
        "answer": {"type": "string"},
        "domain": {"enum": [d.value for d in Domain]},
        "spans": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        },
        "token_offsets": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        },
    },
}


def load_sft_corpus(path, schema=INPUT_SCHEMA, rejects: list | None = None) -> Iterator[dict]:
    """Stream JSON Lines records from ``path``.

    Lines that do not parse, or do not match ``schema`` (skip the check with
    ``schema=None``), go to ``rejects`` tagged with their 1-based line number.
    Blank lines are ignored. Opening the file happens eagerly so an unreadable
    path raises ``OSError`` at call time.
    """
    fh = open(path, encoding="utf-8")
    validator = jsonschema.Draft202012Validator(schema) if schema is not None else None
    return _iter_jsonl(fh, validator, rejects)


def _iter_jsonl(fh, validator, rejects):
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                if rejects is not None:
                    rejects.append(Reject(f"line {lineno}", (f"malformed JSON: {exc.msg}",), line))
                continue
            if validator is not None:
                errors = sorted(validator.iter_errors(rec), key=lambda e: list(e.path))
                if errors:
                    if rejects is not None:
                        reasons = tuple(e.message for e in errors)
                        rejects.append(Reject(f"line {lineno}", reasons, rec))
                    continue
            yield rec


def _n_keep(fraction, n: int) -> int:
    f = Fraction(repr(float(fraction)))
    if not 0 <= f <= 1:
        raise ValueError(f"mixing fraction must lie in [0, 1], got {fraction}")
    return math.floor(f * n)


def clear_annotations(sample: AnnotatedSample) -> AnnotatedSample:
    return replace(sample, dense_spans=(), indicator=(0,) * len(sample.indicator))


def mix_annotated(corpus: Iterable[AnnotatedSample], fraction, seed: int = 0) -> list[AnnotatedSample]:
    """Keep annotations on a seeded ``floor(f * n)`` subset, clear the rest, shuffle.

    ``fraction`` is either one number for the whole corpus or a mapping from
    domain name to fraction; domains missing from the mapping keep their
    annotations.
    """
    samples = list(corpus)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0x6D6978]))
    keep = np.zeros(len(samples), dtype=bool)
    if isinstance(fraction, dict):
        groups: dict[str, list[int]] = {}
        for i, s in enumerate(samples):
            groups.setdefault(Domain(s.domain).value, []).append(i)
        for dom in sorted(groups):
            idx = np.array(groups[dom])
            k = _n_keep(fraction.get(dom, 1.0), len(idx))
            keep[rng.choice(idx, size=k, replace=False)] = True
    else:
        k = _n_keep(fraction, len(samples))
        keep[rng.choice(len(samples), size=k, replace=False)] = True
    mixed = [s if keep[i] else clear_annotations(s) for i, s in enumerate(samples)]
    return [mixed[i] for i in rng.permutation(len(mixed))]


def layout_blocks(sample, block_size: int = 32) -> list[tuple[int, int]]:
    """Block ranges over the maskable region (answer tokens plus ``<eos>``)."""
    n = sample if isinstance(sample, int) else sample.n_maskable
    return block_ranges(n, block_size)


@dataclass(frozen=True)
class TrainingRecord:
    id: str
    role: str
    domain: str
    sigma: float | list
    t: float | list
    weight: float | str
    mode: str
    tokens: list
    indicator: list
    mask: list
    blocks: list

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "role": self.role,
            "domain": self.domain,
            "sigma": self.sigma,
            "t": self.t,
            "weight": self.weight,
            "mode": self.mode,
            "tokens": self.tokens,
            "indicator": self.indicator,
            "mask": self.mask,
            "blocks": self.blocks,
        }

    def dumps(self) -> str:
        return canonical_json(self.to_dict())


def canonical_json(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def training_records(sample: AnnotatedSample, config: SchedulerConfig) -> list[TrainingRecord]:
    """One logical record, plus its syntactic sibling when complementary."""
    pair = make_pair(sample, config)
    ind = list(sample.indicator)
    ind[-1] = int(config.eos_is_dense)
    if config.scope is Scope.PER_SEQUENCE:
        sigma, t = pair.draw.sigma, pair.draw.t
    else:
        sigma = [d.sigma for d in pair.draws]
        t = [d.t for d in pair.draws]
    common = dict(
        id=sample.id,
        domain=Domain(sample.domain).value,
        sigma=sigma,
        t=t,
        weight=weight_label(config.weight),
        mode=config.mode.value,
        tokens=sample.surfaces,
        indicator=ind,
        blocks=[list(b) for b in layout_blocks(sample, config.block_size)],
    )
    out = [TrainingRecord(role="logical", mask=pair.logical.bits.tolist(), **common)]
    if pair.syntactic is not None:
        out.append(TrainingRecord(role="syntactic", mask=pair.syntactic.bits.tolist(), **common))
    return out


def _schedule_lines(sample, config):
    try:
        return [r.dumps() for r in training_records(sample, config)]
    except ValueError as exc:
        return Reject(sample.id, (f"scheduling failed: {exc}",))


def emit_training_records(
    corpus: Iterable[AnnotatedSample],
    config: SchedulerConfig,
    out_path,
    jobs: int = 1,
    rejects: list | None = None,
) -> dict:
    """Write training records as JSON Lines and return the manifest.

    Siblings are adjacent lines sharing an id. The manifest is also written to
    ``<out_path>.manifest.json``. Its digest is 64-bit FNV-1a over the exact
    bytes written, so it depends only on (corpus, config).
    """
    samples = list(corpus)
    results = map_ordered(partial(_schedule_lines, config=config), samples, jobs)
    out_path = Path(out_path)
    digest = fnv1a_64(b"")
    roles: Counter = Counter()
    domains: Counter = Counter()
    n_rejects = 0
    annotated = sum(1 for s in samples if s.dense_spans)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for sample, lines in zip(samples, results):
            if isinstance(lines, Reject):
                n_rejects += 1
                if rejects is not None:
                    rejects.append(lines)
                continue
            for line in lines:
                data = (line + "\n").encode("utf-8")
                digest = fnv1a_64(data, digest)
                fh.write(line + "\n")
            roles["logical"] += 1
            if len(lines) > 1:
                roles["syntactic"] += 1
            domains[Domain(sample.domain).value] += len(lines)
    manifest = {
        "counts": {
            "samples": len(samples),
            "annotated_samples": annotated,
            "records": sum(roles.values()),
            "rejects": n_rejects,
            "role": dict(sorted(roles.items())),
            "domain": dict(sorted(domains.items())),
        },
        "config": config.to_dict(),
        "seed": config.global_seed,
        "digest": f"{digest:016x}",
    }
    manifest_path = out_path.with_name(out_path.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", "utf-8")
    return manifest


def read_records(path) -> Iterator[dict]:
    """Stream emitted training records back (no schema check)."""
    return load_sft_corpus(path, schema=None)
