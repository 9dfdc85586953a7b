"""Hint catalog for recorded problems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .problems import Problem, ProblemCode


@dataclass(frozen=True)
class Solution:
    code: str
    title: str
    hint: Callable[[Problem], str]


def _ctx(problem: Problem, key: str, default: str) -> str:
    return problem.context.get(key, default)


def _degenerate_batch_hint(problem: Problem) -> str:
    iteration = _ctx(problem, "iteration", "?")
    return f"Iteration {iteration} fell back to prior draws; widen the prior or raise --n-super."


def _jitter_hint(problem: Problem) -> str:
    return "Near-duplicate query points; a smaller --batch-size or fewer iterations keeps the kernel matrix well conditioned."


def _proposal_fallback_hint(problem: Problem) -> str:
    return "The surrogate put no mass on any midpoint; check that the prior covers the likelihood peak."


def _rank_deficient_hint(problem: Problem) -> str:
    rank = _ctx(problem, "rank", "?")
    return f"Only {rank} independent kernel features; fewer nodes than the batch size are expected."


def _padded_batch_hint(problem: Problem) -> str:
    nodes = _ctx(problem, "nodes", "?")
    return f"Recombination returned {nodes} nodes; the rest of the batch came from uncertainty resampling."


def _non_positive_sum_hint(problem: Problem) -> str:
    return "The quadrature sum vanished; run more iterations or enable all warp layers."


def _overflow_hint(problem: Problem) -> str:
    return "Likelihood values overflow without the scaling layer; keep scaling enabled."


def _model_failed_hint(problem: Problem) -> str:
    order = _ctx(problem, "model_order", "?")
    return f"Model with {order} RC pairs failed; rerun it alone with -vv to see the numerical cause."


def _dataset_failed_hint(problem: Problem) -> str:
    index = _ctx(problem, "index", "?")
    design = _ctx(problem, "design", "design row unknown")
    return f"Sweep dataset {index} ({design}) was skipped; the sweep summary lists it under problems."


def _zero_variance_hint(problem: Problem) -> str:
    return "A swept quantity did not vary; widen its sweep range or add datasets."


def _shrink_limit_hint(problem: Problem) -> str:
    limit = _ctx(problem, "max_shrink", "?")
    return f"Slice brackets shrank {limit} times without acceptance; start the chain nearer the posterior mode."


def _not_converged_hint(problem: Problem) -> str:
    iters = _ctx(problem, "max_iters", "?")
    return f"LEV still moved after {iters} iterations; raise --max-iters or --conv-tol."


def _elpd_unavailable_hint(problem: Problem) -> str:
    order = _ctx(problem, "model_order", "?")
    return f"Too few effective posterior samples for the {order}-pair model; raise --elpd-samples or --max-iters."


SOLUTIONS = [
    Solution(ProblemCode.DEGENERATE_BATCH, "Degenerate batch", _degenerate_batch_hint),
    Solution(ProblemCode.JITTER_ESCALATED, "Jitter escalated", _jitter_hint),
    Solution(ProblemCode.PROPOSAL_FALLBACK, "Proposal fell back to prior", _proposal_fallback_hint),
    Solution(ProblemCode.RANK_DEFICIENT, "Rank-deficient features", _rank_deficient_hint),
    Solution(ProblemCode.PADDED_BATCH, "Padded batch", _padded_batch_hint),
    Solution(ProblemCode.NON_POSITIVE_SUM, "Non-positive quadrature sum", _non_positive_sum_hint),
    Solution(ProblemCode.OVERFLOW, "Overflow", _overflow_hint),
    Solution(ProblemCode.MODEL_FAILED, "Model failed", _model_failed_hint),
    Solution(ProblemCode.DATASET_FAILED, "Dataset failed", _dataset_failed_hint),
    Solution(ProblemCode.ZERO_VARIANCE, "Zero-variance column", _zero_variance_hint),
    Solution(ProblemCode.SHRINK_LIMIT, "Shrink limit reached", _shrink_limit_hint),
    Solution(ProblemCode.NOT_CONVERGED, "Not converged", _not_converged_hint),
    Solution(ProblemCode.ELPD_UNAVAILABLE, "ELPD unavailable", _elpd_unavailable_hint),
]

_SOLUTIONS = {solution.code: solution for solution in SOLUTIONS}


def get_solution(code: str) -> Solution | None:
    return _SOLUTIONS.get(code)

