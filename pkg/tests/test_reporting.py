import io

import numpy as np

from ecm_evidence.criteria import ModelCriteria, SensitivityRecord, build_report
from ecm_evidence.identifiability import sech_identities_check
from ecm_evidence.problems import Problem, ProblemCode
from ecm_evidence.reporting import (
    SENSITIVITY_COLUMNS,
    ablation_report_lines,
    build_select_report,
    criteria_report_to_dict,
    diagnostic_report_lines,
    identity_report_lines,
    write_learning_curve_csv,
    write_sensitivity_csv,
)


def _report(problems=None):
    models = [
        ModelCriteria(model_order=1, lem=-40.0, lev_standardized=-3.0, rmse=0.2, bic=90.0, elpd=-45.0),
        ModelCriteria(model_order=2, lem=12.0, lev_standardized=-2.0, rmse=0.01, bic=-25.0, elpd=10.0),
        ModelCriteria(model_order=3, error="CholeskyFailure: kernel matrix not positive definite"),
    ]
    return build_report(models, problems)


def test_select_report_marks_winners():
    lines = build_select_report(_report())
    bic_row = next(line for line in lines if line.strip().startswith("BIC"))
    assert "-25.0000 *" in bic_row
    assert "90.0000 *" not in bic_row
    assert "failed" in bic_row


def test_models_without_elpd_are_listed():
    models = [
        ModelCriteria(model_order=1, lem=-40.0, bic=90.0, elpd=np.nan, elpd_error="DegenerateWeights: too few"),
        ModelCriteria(model_order=2, lem=12.0, bic=-25.0, elpd=10.0),
    ]
    lines = build_select_report(build_report(models))
    start = lines.index("ELPD unavailable:")
    assert lines[start + 1] == "- 1 RC pair: DegenerateWeights: too few"
    assert "- ELPD (max): 2 RC pairs" in lines
    assert "- LEM (max): 2 RC pairs" in lines
    assert "- BIC (min): 2 RC pairs" in lines
    assert any(line.startswith("- ln Bayes factor") and "decisive" in line for line in lines)
    assert "- 3 RC pairs: CholeskyFailure: kernel matrix not positive definite" in lines
    assert lines[-1] == "Diagnostics: none"


def test_diagnostics_are_counted_and_hinted():
    problems = [
        Problem(ProblemCode.PADDED_BATCH, "batch padded", {"nodes": "7"}),
        Problem(ProblemCode.PADDED_BATCH, "batch padded", {"nodes": "9"}),
        Problem("unlisted", "no hint for this one"),
    ]
    lines = diagnostic_report_lines(problems)
    assert lines[:3] == ["Diagnostics:", "- padded_batch: batch padded (x2)", "- unlisted: no hint for this one"]
    assert lines[3] == "Hints:"
    assert lines[4:] == ["- Padded batch: Recombination returned 7 nodes; the rest of the batch came from uncertainty resampling."]



def test_failed_sweep_datasets_name_their_design_row():
    problem = Problem(ProblemCode.DATASET_FAILED, "ValueError: bad", {"index": "4", "design": "m=30, r_total=0.5"})
    lines = diagnostic_report_lines([problem])
    assert lines[-1] == (
        "- Dataset failed: Sweep dataset 4 (m=30, r_total=0.5) was skipped; the sweep summary lists it under problems."
    )

def test_report_dict_uses_string_keys():
    payload = criteria_report_to_dict(_report())
    assert set(payload["evidence_weights"]) == {"1", "2"}
    assert payload["bayes_factor"]["label"] == "decisive"
    assert payload["models"][2]["error"].startswith("CholeskyFailure")


def test_identity_lines_name_the_matching_scale():
    lines = identity_report_lines(sech_identities_check(scale=2.0))
    assert lines[0] == "Hyperbolic secant identities:"
    assert lines[-1] == "- scaled integral with b=2 matches pi*b"
    assert any(line.startswith("- scaled int") and "differs" in line for line in lines)


def test_ablation_lines():
    rows = [
        {"log": True, "sqrt": True, "scaling": True, "status": "ok", "lem": 1.5, "lev_standardized": -4.0},
        {"log": True, "sqrt": False, "scaling": False, "status": "overflow", "lem": np.nan, "lev_standardized": np.nan},
        {"log": False, "sqrt": False, "scaling": False, "status": "failed", "lem": np.nan, "lev_standardized": np.nan},
    ]
    assert ablation_report_lines(rows)[1:] == [
        "- log+sqrt+scaling: LEM 1.5000, LEV (std.) -4.0000",
        "- log: overflow",
        "- none: failed",
    ]


def test_learning_curve_csv():
    output = io.StringIO()
    write_learning_curve_csv([{"iter": 0, "n_evals": 10, "wall_time_s": 0.5, "lem": -1.25, "lev": np.nan}], output)
    header, row = output.getvalue().splitlines()
    assert header == "iter,n_evals,wall_time_s,lem,lev"
    assert row == "0,10,0.5,-1.25,nan"


def test_sensitivity_csv_columns():
    record = SensitivityRecord(index=0, m=30, r_total=0.1, r_prime=0.2, tau_std=0.3, log_sigma2=-4.0,
                               js=0.4, snr=5.0, lem=-2.0, lev=-6.0, bic=11.0)
    output = io.StringIO()
    write_sensitivity_csv([record], output)
    header, row = output.getvalue().splitlines()
    assert header.split(",") == SENSITIVITY_COLUMNS
    assert row.endswith(",11.0,nan,nan")
