"""Text reports and CSV generation."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import asdict

import numpy as np

from .criteria import SELECTION_DIRECTIONS, CorrelationResult, CriteriaReport, ModelCriteria, SensitivityRecord
from .identifiability import IdentifiabilityReport, IdentityReport
from .problems import Problem
from .solutions import get_solution

LEARNING_CURVE_COLUMNS = ["iter", "n_evals", "wall_time_s", "lem", "lev"]
OVERLAY_COLUMNS = ["engine"] + LEARNING_CURVE_COLUMNS + ["oracle_lem"]
SENSITIVITY_COLUMNS = [
    "index",
    "m",
    "r_total",
    "r_prime",
    "tau_std",
    "log_sigma2",
    "js",
    "snr",
    "lem",
    "lev",
    "bic",
    "z_pred",
    "residual",
]
ABLATION_COLUMNS = ["log", "sqrt", "scaling", "status", "lem", "lev_standardized", "n_evals"]

_ROWS = (
    ("LEM", "lem"),
    ("LEV (std.)", "lev_standardized"),
    ("RMSE", "rmse"),
    ("BIC", "bic"),
    ("ELPD", "elpd"),
)


def _fmt(value, digits: int = 4) -> str:
    if value is None:
        return "-"
    value = float(value)
    if np.isnan(value):
        return "n/a"
    if np.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{digits}f}"


def _model_label(order: int) -> str:
    return f"{order} RC pair" if order == 1 else f"{order} RC pairs"


def _criteria_table_lines(report: CriteriaReport) -> list[str]:
    models = report.models
    labels = [_model_label(model.model_order) for model in models]
    cells = [["criterion"] + labels]
    for title, attr in _ROWS:
        winner = report.selected_by.get(attr)
        row = [title]
        for model in models:
            text = _fmt(getattr(model, attr)) if model.ok else "failed"
            if winner is not None and model.model_order == winner:
                text += " *"
            row.append(text)
        cells.append(row)
    widths = [max(len(row[col]) for row in cells) for col in range(len(cells[0]))]
    lines = ["Model comparison (* marks each criterion's winner):"]
    for row in cells:
        lines.append("  " + "  ".join(text.rjust(width) for text, width in zip(row, widths)))
    return lines


def _selection_lines(report: CriteriaReport) -> list[str]:
    lines = ["Selected by:"]
    for criterion, direction in SELECTION_DIRECTIONS.items():
        order = report.selected_by.get(criterion)
        chosen = _model_label(order) if order is not None else "none"
        lines.append(f"- {criterion.upper()} ({direction}): {chosen}")
    return lines


def _weight_lines(report: CriteriaReport) -> list[str]:
    if not report.evidence_weights:
        return ["Evidence weights: none"]
    lines = ["Evidence weights:"]
    for order, weight in sorted(report.evidence_weights.items()):
        lines.append(f"- {_model_label(order)}: {weight:.4g}")
    if report.bayes_factor is not None:
        log_bf, label = report.bayes_factor
        lines.append(f"- ln Bayes factor best vs runner-up: {log_bf:.3f} ({label})")
    return lines


def _failure_lines(models: list[ModelCriteria]) -> list[str]:
    failed = [model for model in models if not model.ok]
    lines = []
    if failed:
        lines = ["Failed models:"] + [f"- {_model_label(model.model_order)}: {model.error}" for model in failed]
    no_elpd = [model for model in models if model.ok and model.elpd_error]
    if no_elpd:
        lines.append("ELPD unavailable:")
        lines.extend(f"- {_model_label(model.model_order)}: {model.elpd_error}" for model in no_elpd)
    return lines


def _problem_report_lines(problems: list[Problem]) -> list[str]:
    if not problems:
        return ["Diagnostics: none"]
    counts = Counter(problem.code for problem in problems)
    first = {}
    for problem in problems:
        first.setdefault(problem.code, problem)
    lines = ["Diagnostics:"]
    for code, count in counts.items():
        suffix = f" (x{count})" if count > 1 else ""
        lines.append(f"- {code}: {first[code].message}{suffix}")
    return lines


def _solution_report_lines(problems: list[Problem]) -> list[str]:
    seen = set()
    hints = []
    for problem in problems:
        if problem.code in seen:
            continue
        seen.add(problem.code)
        solution = get_solution(problem.code)
        if solution is not None:
            hints.append(f"- {solution.title}: {solution.hint(problem)}")
    if not hints:
        return []
    return ["Hints:"] + hints


def diagnostic_report_lines(problems: list[Problem]) -> list[str]:
    return _problem_report_lines(problems) + _solution_report_lines(problems)


def build_select_report(report: CriteriaReport) -> list[str]:
    lines: list[str] = []
    lines.extend(_criteria_table_lines(report))
    lines.extend(_selection_lines(report))
    lines.extend(_weight_lines(report))
    lines.extend(_failure_lines(report.models))
    lines.extend(diagnostic_report_lines(report.problems))
    return lines


def identifiability_report_lines(report: IdentifiabilityReport) -> list[str]:
    lines = [f"Data points m: {report.m}", f"SNR: {_fmt(report.snr)}", f"ln sigma^2: {_fmt(report.log_sigma2)}"]
    if not report.js_pairs:
        lines.append("JS divergence: none (single RC pair)")
        return lines
    lines.append("JS divergence (ln 2 = 0.6931):")
    for key, value in report.js_pairs.items():
        noisy = report.js_noisy_pairs.get(key)
        extra = f", noisy {_fmt(noisy)}" if noisy is not None else ""
        lines.append(f"- pair {key}: {_fmt(value)} (delta ln tau {_fmt(report.delta_tau[key], 3)}{extra})")
    return lines


def identity_report_lines(report: IdentityReport) -> list[str]:
    lines = ["Hyperbolic secant identities:"]
    for check in report.checks:
        status = "ok" if check.passed else "differs"
        lines.append(f"- {check.name}: expected {check.expected:.10g}, numeric {check.numeric:.10g} ({status})")
    lines.append(f"- scaled integral with b={report.scale:g} matches {report.scaled_matches}")
    return lines


def correlation_report_lines(result: CorrelationResult, slope: float, intercept: float) -> list[str]:
    width = max(len(name) for name in result.columns) + 2
    lines = [f"Linear correlation matrix ({result.n_records} datasets):"]
    lines.append(" " * width + "".join(name.rjust(9) for name in result.columns))
    for name, row in zip(result.columns, result.matrix):
        lines.append(name.ljust(width) + "".join(f"{value:9.4f}" for value in row))
    if result.zero_variance:
        lines.append(f"Zero-variance columns: {', '.join(result.zero_variance)}")
    lines.append(f"BIC regression: LEM = {slope:.6g} x BIC + {intercept:.6g}")
    return lines


def ablation_report_lines(rows: list[dict]) -> list[str]:
    lines = ["Ablation of warp layers:"]
    for row in rows:
        layers = [name for name in ("log", "sqrt", "scaling") if row[name]]
        label = "+".join(layers) or "none"
        if row["status"] == "ok":
            outcome = f"LEM {_fmt(row['lem'])}, LEV (std.) {_fmt(row['lev_standardized'])}"
        else:
            outcome = row["status"]
        lines.append(f"- {label}: {outcome}")
    return lines


def _csv_value(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isnan(value):
            return "nan"
        return repr(value)
    return value


def write_rows_csv(rows: list[dict], columns: list[str], output) -> None:
    writer = csv.writer(output)
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_value(row.get(column)) for column in columns])


def write_learning_curve_csv(rows: list[dict], output) -> None:
    write_rows_csv(rows, LEARNING_CURVE_COLUMNS, output)


def write_overlay_csv(rows: list[dict], output) -> None:
    write_rows_csv(rows, OVERLAY_COLUMNS, output)


def write_sensitivity_csv(records: list[SensitivityRecord], output) -> None:
    write_rows_csv([asdict(record) for record in records], SENSITIVITY_COLUMNS, output)


def write_ablation_csv(rows: list[dict], output) -> None:
    write_rows_csv(rows, ABLATION_COLUMNS, output)


def criteria_report_to_dict(report: CriteriaReport) -> dict:
    return {
        "models": [asdict(model) for model in report.models],
        "selected_by": report.selected_by,
        "evidence_weights": {str(order): weight for order, weight in report.evidence_weights.items()},
        "bayes_factor": (
            None
            if report.bayes_factor is None
            else {"log_bayes_factor": report.bayes_factor[0], "label": report.bayes_factor[1]}
        ),
        "problems": [asdict(problem) for problem in report.problems],
    }
