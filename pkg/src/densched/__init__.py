"""Information-density-driven complementary priority masking for diffusion-LM SFT data."""

from .core import (
    EOS,
    HARD_DENSE,
    HARD_SPARSE,
    AnnotatedSample,
    CategoryProbs,
    Domain,
    MaskPair,
    MaskVector,
    Mode,
    NoiseDraw,
    Reject,
    Saturation,
    SchedulerConfig,
    Scope,
    TokenSpan,
)
from .extract import (
    RuleSet,
    build_sample,
    density_stats,
    extract_code_dense,
    extract_dense,
    extract_math_dense,
    import_annotations,
    load_rules,
    spans_to_indicator,
)
from .sched import (
    complement,
    make_pair,
    sample_hard_mask,
    sample_soft_mask,
    solve_category_probs,
)
from .dataset import emit_training_records, layout_blocks, load_sft_corpus, mix_annotated, read_records
from .audit import (
    complement_check,
    marginal_report,
    ratio_report,
    run_length_report,
    symmetry_report,
    symmetry_report_records,
)

__version__ = "0.1.0"

__all__ = [
    "EOS",
    "HARD_DENSE",
    "HARD_SPARSE",
    "AnnotatedSample",
    "CategoryProbs",
    "Domain",
    "MaskPair",
    "MaskVector",
    "Mode",
    "NoiseDraw",
    "Reject",
    "Saturation",
    "SchedulerConfig",
    "Scope",
    "TokenSpan",
    "RuleSet",
    "build_sample",
    "density_stats",
    "extract_code_dense",
    "extract_dense",
    "extract_math_dense",
    "import_annotations",
    "load_rules",
    "spans_to_indicator",
    "complement",
    "make_pair",
    "sample_hard_mask",
    "sample_soft_mask",
    "solve_category_probs",
    "complement_check",
    "marginal_report",
    "ratio_report",
    "run_length_report",
    "symmetry_report",
    "symmetry_report_records",
    "emit_training_records",
    "layout_blocks",
    "load_sft_corpus",
    "mix_annotated",
    "read_records",
]
