"""Command line entry point: ``densched extract|schedule|audit|sandbox``.

Exit codes: 0 success, 1 runtime or data failure (including a failed
invariant in ``audit``), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .audit import (
    InsufficientSamplesError,
    complement_check,
    marginal_report,
    ratio_report,
    run_length_report,
    symmetry_report_records,
)
from .core import Domain, SchedulerConfig
from .dataset import emit_training_records, load_sft_corpus, mix_annotated, read_records
from .extract import (
    RuleError,
    annotate_corpus,
    dumps_record,
    import_annotations,
    load_rules,
    sample_to_record,
)
from .sandbox import SyntheticSpec, run_experiment

SEED_ENV = "DENSCHED_SEED"


def _err(msg: str):
    print(f"densched: {msg}", file=sys.stderr)


def _write_rejects(path: Path, rejects) -> None:
    if rejects:
        with open(path, "w", encoding="utf-8") as fh:
            for r in rejects:
                fh.write(json.dumps(r.to_dict()) + "\n")


def cmd_extract(args) -> int:
    rejects = []
    records = list(load_sft_corpus(args.input, rejects=rejects))
    rules = load_rules(args.rules or args.domain)
    if rules.domain.value != args.domain:
        raise RuleError(f"--rules holds {rules.domain.value} rules but --domain is {args.domain}")
    annotated = annotate_corpus(
        records, {args.domain: rules}, keep_spans=args.import_spans, jobs=args.jobs
    )
    skipped = sum(1 for r in records if r.get("domain") != args.domain)
    n_ok = 0
    with open(args.output, "w", encoding="utf-8") as fh:
        for sample in import_annotations(annotated, rejects):
            fh.write(dumps_record(sample_to_record(sample)) + "\n")
            n_ok += 1
    _write_rejects(Path(str(args.output) + ".rejects.jsonl"), rejects)
    print(f"extract: {n_ok} samples written, {len(rejects)} rejected, "
          f"{skipped} outside domain {args.domain!r}", file=sys.stderr)
    return 0


def _parse_sigma(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    if not 0 < lo <= hi < 1:
        raise argparse.ArgumentTypeError("sigma range must satisfy 0 < LO <= HI < 1")
    return lo, hi


def _parse_mix(text: str):
    try:
        if "=" not in text:
            f = float(text)
            if not 0 <= f <= 1:
                raise ValueError
            return f
        out = {}
        for part in text.split(","):
            key, val = part.split("=")
            Domain(key.strip())
            out[key.strip()] = float(val)
            if not 0 <= out[key.strip()] <= 1:
                raise ValueError
        return out
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a fraction in [0, 1] or DOMAIN=F[,DOMAIN=F], got {text!r}"
        ) from None


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def cmd_schedule(args) -> int:
    seed = _seed(args)
    weight = {"dense": "hard_dense", "sparse": "hard_sparse"}[args.hard] if args.hard else args.weight
    config = SchedulerConfig(
        weight=weight,
        sigma_range=args.sigma,
        mode="exact_count" if args.mode == "exact" else "bernoulli",
        scope="per_block" if args.scope == "block" else "per_sequence",
        block_size=args.block_size,
        complement=not args.no_complement,
        eos_is_dense=args.eos_dense,
        global_seed=seed,
    )
    rejects = []
    samples = list(import_annotations(load_sft_corpus(args.input, rejects=rejects), rejects,
                                      eos_is_dense=args.eos_dense))
    mixed = mix_annotated(samples, args.mix_frac, seed)
    manifest = emit_training_records(mixed, config, args.output, jobs=args.jobs, rejects=rejects)
    _write_rejects(Path(str(args.output) + ".rejects.jsonl"), rejects)
    c = manifest["counts"]
    print(f"schedule: {c['records']} records from {c['samples']} samples "
          f"({c['annotated_samples']} annotated), {len(rejects)} rejected, digest {manifest['digest']}",
          file=sys.stderr)
    return 0


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _table(d: dict, indent: str = "") -> str:
    lines = []
    for k, v in d.items():
        if isinstance(v, dict) and v and all(not isinstance(x, (dict, list)) for x in v.values()) and len(v) > 8:
            v = f"{len(v)} entries"
        if isinstance(v, dict):
            lines.append(f"{indent}{k}:")
            lines.append(_table(v, indent + "  "))
        else:
            lines.append(f"{indent}{k:<22}{_fmt(v)}")
    return "\n".join(lines)


def cmd_audit(args) -> int:
    records = list(read_records(args.input))
    ok = True
    if args.report == "marginal":
        rep = marginal_report(records, min_masks=args.min_masks)
        ok = rep.within_3se
        doc = rep.to_dict()
    elif args.report == "ratio":
        rep = ratio_report(records)
        ok = rep.within_3se is not False
        doc = rep.to_dict()
    elif args.report == "runs":
        doc = {k: v.to_dict() for k, v in run_length_report(records).items()}
    elif args.report == "symmetry":
        if not args.against:
            print("audit: --report symmetry needs --against FILE", file=sys.stderr)
            return 2
        doc = symmetry_report_records(records, read_records(args.against)).to_dict()
    else:
        rep = complement_check(records)
        ok = rep.ok
        doc = rep.to_dict()
    print(_table(doc))
    out = args.json or f"{args.input}.{args.report}.json"
    Path(out).write_text(json.dumps(doc, indent=2, default=str) + "\n", "utf-8")
    if not ok:
        _err(f"audit {args.report}: invariant failed")
    return 0 if ok else 1


def cmd_sandbox(args) -> int:
    if args.configs:
        raw = json.loads(Path(args.configs).read_text("utf-8"))
        configs = [SchedulerConfig.from_dict(c) for c in raw]
    else:
        configs = [SchedulerConfig(weight=1.0), SchedulerConfig(weight=2.0)]
    spec = SyntheticSpec(n_samples=args.samples)
    table = run_experiment(spec, configs, seeds=list(range(args.seeds)))
    print(table.render())
    if args.json:
        Path(args.json).write_text(json.dumps(table.to_dict(), indent=2, default=float) + "\n", "utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="densched", description="Density-driven complementary priority masking for SFT corpora.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extract", help="annotate dense spans with rule sets or import them")
    e.add_argument("--domain", required=True, choices=["code", "math"])
    e.add_argument("--rules", help="rule file (defaults to the bundled set for --domain)")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--out", dest="output", required=True)
    e.add_argument("--import-spans", action="store_true", help="validate existing spans only")
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(func=cmd_extract)

    s = sub.add_parser("schedule", help="emit complementary priority-masked training records")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", dest="output", required=True)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--weight", type=float, default=2.0)
    g.add_argument("--hard", choices=["dense", "sparse"])
    s.add_argument("--sigma", type=_parse_sigma, default=(0.3, 0.8))
    s.add_argument("--mode", choices=["bernoulli", "exact"], default="bernoulli")
    s.add_argument("--scope", choices=["sequence", "block"], default="sequence")
    s.add_argument("--block-size", type=int, default=32)
    s.add_argument("--mix-frac", type=_parse_mix, default=0.1)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--no-complement", action="store_true")
    s.add_argument("--eos-dense", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_schedule)

    a = sub.add_parser("audit", help="statistical reports over emitted records")
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--report", required=True,
                   choices=["marginal", "ratio", "runs", "symmetry", "complement"])
    a.add_argument("--against", help="second emission for --report symmetry")
    a.add_argument("--json", help="where to write the JSON report")
    a.add_argument("--min-masks", type=int, default=1000)
    a.set_defaults(func=cmd_audit)

    b = sub.add_parser("sandbox", help="run the synthetic decoupling experiment")
    b.add_argument("--configs", help="JSON list of scheduler configs")
    b.add_argument("--seeds", type=int, default=5)
    b.add_argument("--samples", type=int, default=2000)
    b.add_argument("--json", help="where to write the JSON table")
    b.set_defaults(func=cmd_sandbox)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    if getattr(args, "block_size", 1) < 1:
        parser.error("--block-size must be >= 1")
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    except (OSError, InsufficientSamplesError, RuleError, ValueError) as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
