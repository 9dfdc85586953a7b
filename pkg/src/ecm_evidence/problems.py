"""Problem definitions and catalog."""

from __future__ import annotations

from dataclasses import dataclass, field


class ProblemCode:
    DEGENERATE_BATCH = "degenerate_batch"
    JITTER_ESCALATED = "jitter_escalated"
    PROPOSAL_FALLBACK = "proposal_fallback"
    RANK_DEFICIENT = "rank_deficient"
    PADDED_BATCH = "padded_batch"
    NON_POSITIVE_SUM = "non_positive_sum"
    OVERFLOW = "overflow"
    MODEL_FAILED = "model_failed"
    DATASET_FAILED = "dataset_failed"
    ZERO_VARIANCE = "zero_variance"
    SHRINK_LIMIT = "shrink_limit"
    NOT_CONVERGED = "not_converged"
    ELPD_UNAVAILABLE = "elpd_unavailable"


@dataclass(frozen=True)
class Problem:
    code: str
    message: str
    context: dict[str, str] = field(default_factory=dict)
