"""Rule-based dense-span extraction and span-to-token alignment.

Rule files are JSON documents ``{domain, rules: [{id, kind, pattern, capture}]}``.
Supported kinds:

``line_prefix``
    ``pattern`` is a keyword. Lines starting with it (after indentation)
    capture the remainder, minus a trailing ``:``/``{`` and comment.
``delimited_expression``
    ``pattern`` is ``{"open": ..., "close": ...}``; captures the text between.
``answer_marker``
    ``pattern`` is a marker string; captures the rest of its line.
``regex``
    ``pattern`` is a regular expression compiled with ``re.MULTILINE``.

``capture`` is ``group`` (payload only) or ``whole_match``.
"""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .core import AnnotatedSample, Domain, Reject, TokenSpan, validate_sample
from .parallel import map_ordered

KINDS = ("line_prefix", "delimited_expression", "answer_marker", "regex")
CAPTURES = ("whole_match", "group")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class RuleError(ValueError):
    pass


class SpanError(ValueError):
    def __init__(self, message, span_id=None):
        super().__init__(message)
        self.span_id = span_id


class EmptyCorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Rule:
    id: str
    kind: str
    pattern: object
    capture: str = "group"


@dataclass(frozen=True)
class RuleSet:
    domain: Domain
    rules: tuple[Rule, ...]

    def __post_init__(self):
        object.__setattr__(self, "domain", Domain(self.domain))
        ids = [r.id for r in self.rules]
        if len(ids) != len(set(ids)):
            raise RuleError(f"duplicate rule ids in {ids}")
        # compile eagerly so a bad payload fails at load time
        object.__setattr__(self, "_matchers", tuple(_compile(r) for r in self.rules))

    def finditer(self, text: str) -> Iterator[tuple[str, int, int]]:
        for rule, matcher in zip(self.rules, self._matchers):
            for start, end in matcher(text):
                yield rule.id, start, end

    @classmethod
    def from_dict(cls, doc: dict) -> RuleSet:
        try:
            rules = tuple(
                Rule(r["id"], r["kind"], r["pattern"], r.get("capture", "group"))
                for r in doc["rules"]
            )
            return cls(doc["domain"], rules)
        except (KeyError, TypeError) as exc:
            raise RuleError(f"malformed rule document: {exc!r}") from exc

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.value,
            "rules": [
                {"id": r.id, "kind": r.kind, "pattern": r.pattern, "capture": r.capture}
                for r in self.rules
            ],
        }


def _compile(rule: Rule) -> Callable[[str], Iterable[tuple[int, int]]]:
    if rule.kind not in KINDS:
        raise RuleError(f"rule {rule.id!r}: unknown kind {rule.kind!r}")
    if rule.capture not in CAPTURES:
        raise RuleError(f"rule {rule.id!r}: unknown capture policy {rule.capture!r}")
    whole = rule.capture == "whole_match"

    if rule.kind == "line_prefix":
        if not isinstance(rule.pattern, str) or not rule.pattern.strip():
            raise RuleError(f"rule {rule.id!r}: line_prefix needs a keyword")
        kw = re.escape(rule.pattern.strip())
        rx = re.compile(
            rf"^[ \t]*(?P<kw>{kw})(?=[\s(])[ \t]*(?P<body>.*?)[ \t]*[:{{]?[ \t]*(?:#.*)?$",
            re.MULTILINE,
        )
        return partial(_iter_regex, rx, "kw" if whole else "body", "body")

    if rule.kind == "delimited_expression":
        p = rule.pattern
        if not (isinstance(p, dict) and p.get("open") and p.get("close")):
            raise RuleError(f"rule {rule.id!r}: delimited_expression needs open/close")
        rx = re.compile(re.escape(p["open"]) + r"(?P<body>.*?)" + re.escape(p["close"]), re.DOTALL)
        return partial(_iter_regex, rx, 0 if whole else "body", 0 if whole else "body")

    if rule.kind == "answer_marker":
        if not isinstance(rule.pattern, str) or not rule.pattern:
            raise RuleError(f"rule {rule.id!r}: answer_marker needs a marker string")
        rx = re.compile(re.escape(rule.pattern) + r"[ \t]*(?P<body>[^\n]*)")
        return partial(_iter_regex, rx, 0 if whole else "body", "body")

    try:
        rx = re.compile(rule.pattern, re.MULTILINE)
    except (re.error, TypeError) as exc:
        raise RuleError(f"rule {rule.id!r}: bad regex: {exc}") from exc
    if not whole and rx.groups < 1:
        raise RuleError(f"rule {rule.id!r}: capture=group needs a capturing group")
    return partial(_iter_regex, rx, 0 if whole else 1, 0 if whole else 1)


def _iter_regex(rx, start_group, end_group, text):
    for m in rx.finditer(text):
        start, end = m.start(start_group), m.end(end_group)
        if start < 0 or end < 0:
            continue
        # trim surrounding whitespace so spans hug the content
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if end > start:
            yield start, end


def load_rules(source) -> RuleSet:
    """Load a rule set from a path, or a bundled one by domain name."""
    if isinstance(source, RuleSet):
        return source
    if isinstance(source, Domain) or source in ("code", "math"):
        name = Domain(source).value
        text = resources.files("densched").joinpath("rules", f"{name}.json").read_text("utf-8")
    else:
        text = Path(source).read_text("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RuleError(f"rule file is not valid JSON: {exc}") from exc
    return RuleSet.from_dict(doc)


def merge_spans(pairs: Iterable[tuple[int, int]]) -> list[TokenSpan]:
    """Sort and merge overlapping ranges. Touching ranges stay separate; empty ones are dropped."""
    out: list[list[int]] = []
    for start, end in sorted(pairs):
        if end <= start:
            continue
        if out and start < out[-1][1]:
            out[-1][1] = max(out[-1][1], end)
        else:
            out.append([start, end])
    return [TokenSpan(s, e) for s, e in out]


def extract_dense(answer: str, rules: RuleSet) -> list[TokenSpan]:
    return merge_spans((s, e) for _, s, e in rules.finditer(answer))


def extract_code_dense(answer: str, rules: RuleSet | None = None) -> list[TokenSpan]:
    """Dense spans of a code answer: control-flow conditions, loop headers, returns."""
    rules = load_rules(rules or "code")
    if rules.domain is not Domain.CODE:
        raise RuleError(f"expected a code rule set, got {rules.domain.value}")
    return extract_dense(answer, rules)


def extract_math_dense(answer: str, rules: RuleSet | None = None) -> list[TokenSpan]:
    """Dense spans of a math answer: equation chains and the final-answer payload."""
    rules = load_rules(rules or "math")
    if rules.domain is not Domain.MATH:
        raise RuleError(f"expected a math rule set, got {rules.domain.value}")
    return extract_dense(answer, rules)


def tokenize(text: str) -> list[tuple[str, TokenSpan]]:
    """Reference splitter: word runs and single punctuation characters."""
    return [(m.group(), TokenSpan(m.start(), m.end())) for m in _TOKEN_RE.finditer(text)]


def spans_to_indicator(spans, token_offsets, eos_is_dense=False, text_length=None) -> np.ndarray:
    """Token ``i`` is dense iff it shares at least one character with a span.

    The returned vector has ``len(token_offsets) + 1`` entries; the last is the
    ``<eos>`` slot.
    """
    spans = [TokenSpan(*s) if not isinstance(s, TokenSpan) else s for s in spans]
    if text_length is not None:
        for i, s in enumerate(spans):
            if s.end > text_length:
                raise SpanError(f"span {i} {tuple(s)} out of bounds (length {text_length})", i)
    ind = np.zeros(len(token_offsets) + 1, dtype=np.uint8)
    if spans and len(token_offsets):
        order = sorted(spans)
        starts = np.array([tuple(t)[0] for t in token_offsets])
        ends = np.array([tuple(t)[1] for t in token_offsets])
        for s in order:
            # tokens are sorted and disjoint, so the overlapping ones are contiguous
            lo = np.searchsorted(ends, s.start, side="right")
            hi = np.searchsorted(starts, s.end, side="left")
            ind[lo:hi] = 1
    ind[-1] = 1 if eos_is_dense else 0
    return ind


def build_sample(
    id, prompt, answer, domain, spans=(), token_offsets=None, eos_is_dense=False
) -> AnnotatedSample:
    """Assemble a sample, tokenizing with the reference splitter when no offsets are given."""
    if token_offsets is None:
        tokens = tokenize(answer)
    else:
        offs = [TokenSpan(*o) for o in token_offsets]
        tokens = [(answer[o.start:o.end], o) for o in offs]
    spans = tuple(TokenSpan(*s) for s in spans)
    ind = spans_to_indicator(spans, [t[1] for t in tokens], eos_is_dense, len(answer))
    return AnnotatedSample(
        id=str(id),
        prompt=prompt,
        answer=answer,
        domain=Domain(domain),
        tokens=tuple(tokens),
        dense_spans=spans,
        indicator=tuple(int(c) for c in ind),
    )


def _record_problems(rec) -> list[str]:
    if not isinstance(rec, dict):
        return ["record is not an object"]
    problems = []
    for key in ("id", "prompt", "answer", "domain"):
        if not isinstance(rec.get(key), str):
            problems.append(f"missing or non-string field {key!r}")
    if isinstance(rec.get("domain"), str) and rec["domain"] not in [d.value for d in Domain]:
        problems.append("unknown domain")
    for key in ("spans", "token_offsets"):
        val = rec.get(key)
        if val is None:
            continue
        if not isinstance(val, list) or not all(
            isinstance(p, list) and len(p) == 2 and all(type(x) is int for x in p) for p in val
        ):
            problems.append(f"field {key!r} must be a list of [start, end] integer pairs")
    return problems


def import_annotations(
    records: Iterable[dict], rejects: list | None = None, eos_is_dense: bool = False
) -> Iterator[AnnotatedSample]:
    """Turn input-schema records into validated samples.

    Records that fail are appended to ``rejects`` (when given) as
    :class:`Reject` entries; nothing is dropped silently.
    """
    for k, rec in enumerate(records):
        where = str(rec.get("id", f"#{k}")) if isinstance(rec, dict) else f"#{k}"
        problems = _record_problems(rec)
        sample = None
        if not problems:
            try:
                sample = build_sample(
                    rec["id"],
                    rec["prompt"],
                    rec["answer"],
                    rec["domain"],
                    rec.get("spans") or (),
                    rec.get("token_offsets"),
                    eos_is_dense,
                )
            except SpanError:
                problems = ["span out of bounds"]
            except ValueError as exc:
                problems = [f"invalid span: {exc}"]
        if sample is not None:
            problems = validate_sample(sample)
        if problems:
            if rejects is not None:
                rejects.append(Reject(where, tuple(problems), rec))
            continue
        yield sample


def sample_to_record(sample: AnnotatedSample) -> dict:
    """Inverse of :func:`import_annotations` in the input schema's key order."""
    return {
        "id": sample.id,
        "prompt": sample.prompt,
        "answer": sample.answer,
        "domain": sample.domain.value,
        "spans": [[s.start, s.end] for s in sample.dense_spans],
        "token_offsets": [[o.start, o.end] for o in sample.offsets],
    }


def dumps_record(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False)


def annotate_record(rec: dict, rules_by_domain: dict, keep_spans: bool = False) -> dict:
    """Return a copy of ``rec`` with rule-extracted spans and reference offsets.

    With ``keep_spans`` existing spans pass through untouched.
    """
    out = dict(rec)
    answer = rec.get("answer")
    if not isinstance(answer, str):
        return out
    if not keep_spans:
        rules = rules_by_domain.get(rec.get("domain"))
        spans = extract_dense(answer, rules) if rules is not None else []
        out["spans"] = [[s.start, s.end] for s in spans]
    if out.get("token_offsets") is None:
        out["token_offsets"] = [[o.start, o.end] for _, o in tokenize(answer)]
    return out


def annotate_corpus(records, rules_by_domain, keep_spans=False, jobs=1) -> list[dict]:
    fn = partial(annotate_record, rules_by_domain=rules_by_domain, keep_spans=keep_spans)
    return map_ordered(fn, list(records), jobs)


@dataclass(frozen=True)
class DensityStats:
    domain: str
    count: int
    rho: float
    histogram: tuple[int, ...]
    bin_edges: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "count": self.count,
            "rho": self.rho,
            "histogram": list(self.histogram),
            "bin_edges": list(self.bin_edges),
        }


def sample_rho(sample: AnnotatedSample) -> float:
    return sum(sample.indicator) / len(sample.indicator)


def density_stats(corpus: Iterable[AnnotatedSample], bins: int = 20) -> dict[str, DensityStats]:
    """Mean per-sample dense fraction and a histogram, per domain."""
    by_domain: dict[str, list[float]] = defaultdict(list)
    for s in corpus:
        by_domain[Domain(s.domain).value].append(sample_rho(s))
    if not by_domain:
        raise EmptyCorpusError("density_stats needs at least one sample")
    edges = np.linspace(0.0, 1.0, bins + 1)
    out = {}
    for dom, rhos in sorted(by_domain.items()):
        hist, _ = np.histogram(rhos, bins=edges)
        out[dom] = DensityStats(
            dom, len(rhos), float(np.mean(rhos)), tuple(int(h) for h in hist), tuple(edges.tolist())
        )
    return out
