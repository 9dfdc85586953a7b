"""CLI entry point for evidence-based selection of RC-pair circuit models."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.stats import qmc

from . import dataset as dataset_io
from .artifacts import write_json_atomic, write_manifest, write_text_atomic
from .basq_engine import BasqConfig, run
from .bayes_core import EcmLogLikelihood, default_prior, prior_from_dict, prior_to_dict
from .config import (
    CUSTOM_PRESET,
    AblationConfig,
    BenchmarkConfig,
    EngineOptions,
    GenerateConfig,
    IdentifyConfig,
    SelectConfig,
    SensitivityConfig,
    load_config_file,
    resolve,
)
from .constants import (
    ABLATION_CONFIGS,
    DEFAULT_SPAN_DECADES,
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_NUMERIC,
    EXIT_OK,
    LIKELIHOOD_FORMS,
    PRESETS,
    SWEEP_LOG_SIGMA2,
    SWEEP_M,
    SWEEP_R_PRIME,
    SWEEP_R_TOTAL,
    SWEEP_SECOND_PAIR,
    SWEEP_TAU_STD,
)
from .criteria import (
    ModelCriteria,
    SensitivityRecord,
    bic,
    bic_regression,
    build_report,
    correlation_matrix,
    evaluate_model,
    map_estimate,
)
from .errors import ConfigError, EcmEvidenceError, WarpOverflow
from .ess_baseline import EssConfig, default_schedule, elpd_checkpoints, run_ess
from .identifiability import NoisePrior, identify, js_divergence, sech_identities_check, snr_analytic
from .models import Dataset, EcmParams, GaussianPrior, NoiseSpec
from .oracle import importance_log_evidence
from .problems import Problem, ProblemCode
from .reporting import (
    ablation_report_lines,
    build_select_report,
    correlation_report_lines,
    criteria_report_to_dict,
    diagnostic_report_lines,
    identifiability_report_lines,
    identity_report_lines,
    write_ablation_csv,
    write_learning_curve_csv,
    write_overlay_csv,
    write_sensitivity_csv,
)
from .warp_stack import WarpConfig

logger = logging.getLogger(__name__)

_LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"

# raised from numerical code paths once the configuration has been accepted
_RUN_FAILURES = (ValueError, ArithmeticError, linalg.LinAlgError)


def _open_output(path_value: str | None, default_stream):
    if path_value is None:
        return default_stream, False
    if path_value == "-":
        return sys.stdout, False
    return open(path_value, "w", encoding="utf-8", newline=""), True


def _write_lines(lines: list[str], path_value: str | None, default_stream) -> None:
    stream, should_close = _open_output(path_value, default_stream)
    try:
        for line in lines:
            stream.write(f"{line}\n")
    finally:
        if should_close:
            stream.close()


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format=_LOG_FORMAT)


def _prior_for(engine: EngineOptions, model_order: int) -> GaussianPrior:
    """Configured prior for one model order; a mapping keyed by order is also accepted."""
    payload = engine.prior
    if payload is None:
        return default_prior(model_order)
    if "mean" not in payload:
        payload = payload.get(str(model_order))
        if payload is None:
            return default_prior(model_order)
    return prior_from_dict(payload, model_order)


def _basq_config(engine: EngineOptions, seed: int, **overrides) -> BasqConfig:
    config = BasqConfig(
        batch_size=engine.batch_size,
        max_iters=engine.max_iters,
        conv_tol=engine.conv_tol,
        n_super=engine.n_super,
        defensive_weight=engine.defensive_weight,
        uncertainty_ratio=engine.uncertainty_ratio,
        form=engine.form,
        workers=engine.workers,
        seed=seed,
    )
    return replace(config, **overrides) if overrides else config


def _load_dataset(path: str) -> Dataset:
    data = dataset_io.load(path)
    logger.info("loaded %s: m=%d", path, data.m)
    return data


def cmd_generate(config: GenerateConfig, seed: int, out_dir: Path) -> tuple[list[str], dict]:
    if config.preset == CUSTOM_PRESET:
        params = EcmParams.from_ratios(config.r_total, np.asarray(config.r), np.asarray(config.tau_std))
        data = dataset_io.generate(
            params,
            config.m,
            config.span_decades,
            NoiseSpec(config.log_sigma2),
            seed,
            freq_min_hz=config.freq_min_hz,
        )
    else:
        data = dataset_io.generate_preset(config.preset, seed, config.m, config.span_decades, config.freq_min_hz)
    path = out_dir / config.output
    dataset_io.save(data, path)
    outputs = [str(path)]
    if config.csv:
        csv_path = path.with_suffix(".csv")
        dataset_io.save_csv(data, csv_path)
        outputs.append(str(csv_path))
    lines = [
        f"Dataset: {path}",
        f"Preset: {config.preset}",
        f"True model: {data.meta.true_model} RC pairs, m={data.m}, ln sigma^2={data.meta.log_sigma2:.4g}",
    ]
    return lines, {"outputs": outputs}


def _failed_model(model_order: int, exc: Exception, problems: list[Problem]) -> ModelCriteria:
    logger.warning("model order %d failed: %s", model_order, exc)
    problems.append(Problem(ProblemCode.MODEL_FAILED, str(exc), {"model_order": str(model_order)}))
    return ModelCriteria(model_order=model_order, error=f"{type(exc).__name__}: {exc}")


def cmd_select(config: SelectConfig, seed: int, out_dir: Path) -> tuple[list[str], dict]:
    data = _load_dataset(config.dataset)
    problems: list[Problem] = []
    models: list[ModelCriteria] = []
    outputs = []
    priors = {}
    for order in config.model_orders:
        try:
            prior = _prior_for(config.engine, order)
            priors[str(order)] = prior_to_dict(prior)
            result = run(data, prior, order, _basq_config(config.engine, seed))
            problems.extend(result.problems)
            models.append(
                evaluate_model(
                    result,
                    data,
                    prior,
                    order,
                    form=config.engine.form,
                    n_samples=config.elpd_samples,
                    seed=seed,
                    problems=problems,
                )
            )
        except ConfigError:
            raise
        except (EcmEvidenceError, *_RUN_FAILURES) as exc:
            models.append(_failed_model(order, exc, problems))
            continue
        curve = out_dir / f"learning_curve_N{order}.csv"
        rows = result.history.rows()
        write_text_atomic(curve, lambda stream, rows=rows: write_learning_curve_csv(rows, stream))
        outputs.append(str(curve))
    report = build_report(models, problems)
    report_path = out_dir / "select_report.json"
    write_json_atomic(report_path, criteria_report_to_dict(report))
    outputs.append(str(report_path))
    lines = [f"Dataset: {config.dataset} (m={data.m})"]
    lines.extend(build_select_report(report))
    return lines, {"outputs": outputs, "priors": priors}


def cmd_identify(config: IdentifyConfig, seed: int, out_dir: Path) -> tuple[list[str], dict]:
    data = _load_dataset(config.dataset)
    noise_prior = None
    if config.noise_mu_sigma is not None:
        noise_prior = NoisePrior(config.noise_mu_sigma, config.noise_sigma_sigma)
    report = identify(data, n_is=config.n_is, seed=seed, noise_prior=noise_prior)
    identities = sech_identities_check()
    path = out_dir / "identify_report.json"
    write_json_atomic(path, {"identifiability": report, "identities": identities})
    lines = [f"Dataset: {config.dataset}"]
    lines.extend(identifiability_report_lines(report))
    lines.extend(identity_report_lines(identities))
    return lines, {"outputs": [str(path)]}


_SWEEP_NAMES = ("m", "r_total", "r_prime", "tau_std", "log_sigma2")


def _sweep_design(n: int, seed: int) -> np.ndarray:
    """Latin-hypercube rows of (m, r_total, r'_1, tau_std_1, ln sigma^2)."""
    bounds = np.array([SWEEP_M, SWEEP_R_TOTAL, SWEEP_R_PRIME, SWEEP_TAU_STD, SWEEP_LOG_SIGMA2], dtype=float)
    unit = qmc.LatinHypercube(d=len(bounds), seed=seed).random(n)
    design = qmc.scale(unit, bounds[:, 0], bounds[:, 1])
    design[:, 0] = np.round(design[:, 0])
    return design


def _sweep_one(args) -> tuple[int, SensitivityRecord | None, str | None]:
    index, row, child, config = args
    data_seed, js_seed, basq_seed = (int(state) for state in child.generate_state(3))
    m, r_total, r_prime, tau_std, log_sigma2 = row
    try:
        params = EcmParams(
            r_total=r_total,
            r_prime=[r_prime, SWEEP_SECOND_PAIR["r_prime"]],
            tau_std=[tau_std, SWEEP_SECOND_PAIR["tau_std"]],
        )
        noise = NoiseSpec(log_sigma2)
        data = dataset_io.generate(params, int(m), DEFAULT_SPAN_DECADES, noise, data_seed)
        if config.datasets_dir is not None:
            dataset_io.save(data, Path(config.datasets_dir) / f"sweep_{index:05d}.json")
        prior = _prior_for(config.engine, config.model_order)
        engine = replace(config.engine, workers=1)
        result = run(data, prior, config.model_order, _basq_config(engine, basq_seed))
        theta, _ = map_estimate(result.inputs, data, prior, config.model_order, engine.form, log_liks=result.log_liks)
        record = SensitivityRecord(
            index=index,
            m=int(m),
            r_total=float(r_total),
            r_prime=float(r_prime),
            tau_std=float(tau_std),
            log_sigma2=float(log_sigma2),
            js=js_divergence(params, data.std, (0, 1), n_is=config.n_is, seed=js_seed),
            snr=snr_analytic(params, data.std, noise),
            lem=result.estimate.lem,
            lev=result.estimate.lev,
            bic=bic(theta, data, config.model_order, engine.form),
        )
    except (EcmEvidenceError, *_RUN_FAILURES) as exc:
        return index, None, f"{type(exc).__name__}: {exc}"
    return index, record, None


def cmd_sensitivity(config: SensitivityConfig, seed: int, out_dir: Path) -> tuple[list[str], dict]:
    design = _sweep_design(config.n_datasets, seed)
    children = np.random.SeedSequence(seed).spawn(config.n_datasets)
    tasks = [(index, row, child, config) for index, (row, child) in enumerate(zip(design, children))]
    logger.info("sensitivity sweep: %d datasets, %d workers", config.n_datasets, config.engine.workers)
    if config.engine.workers > 1:
        with ProcessPoolExecutor(max_workers=config.engine.workers) as pool:
            outcomes = list(pool.map(_sweep_one, tasks))
    else:
        outcomes = [_sweep_one(task) for task in tasks]

    problems: list[Problem] = []
    records = []
    for index, record, error in sorted(outcomes, key=lambda item: item[0]):
        if record is None:
            row = ", ".join(f"{name}={value:.4g}" for name, value in zip(_SWEEP_NAMES, design[index]))
            logger.warning("dataset %d (%s) failed: %s", index, row, error)
            problems.append(Problem(ProblemCode.DATASET_FAILED, error, {"index": str(index), "design": row}))
            continue
        records.append(record)

    lines = [f"Datasets: {len(records)} of {config.n_datasets} succeeded"]
    if len(records) >= 3:
        correlation = correlation_matrix(records, problems=problems)
        slope, intercept, records = bic_regression(records)
        lines.extend(correlation_report_lines(correlation, slope, intercept))
        summary = {"correlation": correlation, "bic_slope": slope, "bic_intercept": intercept}
    else:
        lines.append("Correlation: not enough successful datasets")
        summary = {}
    csv_path = out_dir / "sensitivity.csv"
    write_text_atomic(csv_path, lambda stream: write_sensitivity_csv(records, stream))
    summary_path = out_dir / "sensitivity_summary.json"
    write_json_atomic(summary_path, {**summary, "problems": problems})
    lines.extend(diagnostic_report_lines(problems))
    ranges = {
        "m": SWEEP_M,
        "r_total": SWEEP_R_TOTAL,
        "r_prime": SWEEP_R_PRIME,
        "tau_std": SWEEP_TAU_STD,
        "log_sigma2": SWEEP_LOG_SIGMA2,
        "second_pair": SWEEP_SECOND_PAIR,
    }
    return lines, {"outputs": [str(csv_path), str(summary_path)], "sweep_ranges": ranges}


def cmd_benchmark(config: BenchmarkConfig, seed: int, out_dir: Path) -> tuple[list[str], dict]:
    data = _load_dataset(config.dataset)
    order = config.model_order
    prior = _prior_for(config.engine, order)
    engine = config.engine
    max_iters = config.budget // engine.batch_size - 1
    result = run(data, prior, order, _basq_config(engine, seed, max_iters=max_iters))
    basq_rows = [{**row, "engine": "basq"} for row in result.history.rows()]

    chain = run_ess(data, prior, order, EssConfig(n_samples=config.budget, seed=seed, form=engine.form))
    spread = {count for count in default_schedule(chain, config.checkpoints) if count <= config.budget}
    schedule = sorted({row["n_evals"] for row in basq_rows} | spread | {config.budget})
    ess_rows = [{**row, "engine": "ess"} for row in elpd_checkpoints(chain, data, order, schedule, engine.form)]

    _, start = map_estimate(result.inputs, data, prior, order, engine.form, log_liks=result.log_liks)
    oracle = importance_log_evidence(
        EcmLogLikelihood(data, order, engine.form),
        prior,
        n_samples=config.oracle_samples,
        seed=seed,
        center=start.vector,
        workers=engine.workers,
    )
    rows = [{**row, "oracle_lem": oracle.log_evidence} for row in basq_rows + ess_rows]
    path = out_dir / "benchmark.csv"
    write_text_atomic(path, lambda stream: write_overlay_csv(rows, stream))

    problems = result.problems + chain.problems
    basq_final = basq_rows[-1]
    lines = [
        f"Oracle LEM: {oracle.log_evidence:.4f} (ess {oracle.ess:.1f}, rel. error {oracle.rel_std_error:.3g})",
        f"BASQ: LEM {basq_final['lem']:.4f} after {basq_final['n_evals']} evaluations, {basq_final['wall_time_s']:.1f}s",
    ]
    if ess_rows:
        ess_final = ess_rows[-1]
        lines.append(
            f"ESS: ELPD {ess_final['lem']:.4f} after {ess_final['n_evals']} evaluations, "
            f"{ess_final['wall_time_s']:.1f}s"
        )
    else:
        lines.append("ESS: no checkpoint within the budget after burn-in")
    lines.extend(diagnostic_report_lines(problems))
    return lines, {"outputs": [str(path)], "prior": prior_to_dict(prior), "oracle_lem": oracle.log_evidence}


def cmd_ablation(config: AblationConfig, seed: int, out_dir: Path) -> tuple[list[str], dict]:
    data = _load_dataset(config.dataset)
    prior = _prior_for(config.engine, config.model_order)
    problems: list[Problem] = []
    rows = []
    for log, sqrt, scaling in ABLATION_CONFIGS:
        warp = WarpConfig(log=log, sqrt=sqrt, scaling=scaling)
        row = {"log": log, "sqrt": sqrt, "scaling": scaling, "lem": np.nan, "lev_standardized": np.nan, "n_evals": 0}
        try:
            result = run(data, prior, config.model_order, _basq_config(config.engine, seed, warp=warp))
        except WarpOverflow as exc:
            logger.warning("warp %s: %s", warp.label, exc)
            problems.append(Problem(ProblemCode.OVERFLOW, str(exc), {"warp": warp.label}))
            row["status"] = "overflow"
        except ConfigError:
            raise
        except (EcmEvidenceError, *_RUN_FAILURES) as exc:
            problems.append(Problem(ProblemCode.MODEL_FAILED, str(exc), {"warp": warp.label}))
            row["status"] = "failed"
        else:
            row.update(
                status="ok",
                lem=result.estimate.lem,
                lev_standardized=result.estimate.lev_standardized,
                n_evals=result.estimate.n_evals,
            )
        rows.append(row)
    path = out_dir / "ablation.csv"
    write_text_atomic(path, lambda stream: write_ablation_csv(rows, stream))
    lines = ablation_report_lines(rows)
    lines.extend(diagnostic_report_lines(problems))
    return lines, {"outputs": [str(path)], "prior": prior_to_dict(prior)}


def _add_global_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="Root random seed (default: 0)")
    parser.add_argument("--out-dir", default=".", help="Directory for output files (default: current)")
    parser.add_argument("--config", default=None, help="JSON file with option defaults for the command")
    parser.add_argument(
        "--report",
        default=None,
        help="Report output path (default: stderr; use '-' for stdout)",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--batch-size", type=int, help="Likelihood evaluations per iteration")
    parser.add_argument("--max-iters", type=int, help="Iteration cap of the quadrature loop")
    parser.add_argument("--conv-tol", type=float, help="LEV plateau tolerance")
    parser.add_argument("--n-super", type=int, help="Candidate supersample size")
    parser.add_argument("--defensive-weight", type=float, help="Prior share of the candidate proposal")
    parser.add_argument("--uncertainty-ratio", type=float, help="Resampling blend of evidence and prior (0..1)")
    parser.add_argument("--form", choices=LIKELIHOOD_FORMS, help="Likelihood residual form")
    parser.add_argument("--workers", type=int, help="Parallel likelihood or dataset workers")


def _add_dataset_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("dataset", nargs="?", default=None, help="Path to dataset JSON")


def _add_model_order_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model-order", type=int, help="Number of RC pairs to fit (default: 2)")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _add_global_flags(common)
    parser = argparse.ArgumentParser(
        description="Compare RC-pair equivalent circuit models by Bayesian-quadrature log evidence.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", parents=[common], help="Write a synthetic impedance dataset")
    generate.add_argument("--preset", choices=sorted(PRESETS) + [CUSTOM_PRESET], help="Scenario (default: easy)")
    generate.add_argument("--r-total", type=float, help="Standardized total resistance (custom)")
    generate.add_argument("--r", type=float, nargs="+", help="Resistance ratios r_i (custom)")
    generate.add_argument("--tau-std", type=float, nargs="+", help="Standardized log time constants (custom)")
    generate.add_argument("--log-sigma2", type=float, help="Log noise variance (custom)")
    generate.add_argument("--m", type=int, help="Number of frequencies")
    generate.add_argument("--span-decades", type=float, help="Frequency span in decades")
    generate.add_argument("--freq-min-hz", type=float, help="Lowest frequency in Hz")
    generate.add_argument("--output", help="Dataset file name inside --out-dir")
    generate.add_argument("--csv", action="store_true", default=None, help="Also write a Nyquist CSV")

    select = commands.add_parser("select", parents=[common], help="Run every model order and compare criteria")
    _add_dataset_flags(select)
    select.add_argument("--model-orders", type=int, nargs="+", help="RC-pair counts to compare (default: 1 2 3 4)")
    select.add_argument("--elpd-samples", type=int, help="Posterior samples for ELPD")
    _add_engine_flags(select)

    ident = commands.add_parser("identify", parents=[common], help="SNR and JS divergence of a synthetic dataset")
    _add_dataset_flags(ident)
    ident.add_argument("--n-is", type=int, help="Importance samples per JS estimate")
    ident.add_argument("--noise-mu-sigma", type=float, help="Mean of the ln sigma^2 prior for noisy JS")
    ident.add_argument("--noise-sigma-sigma", type=float, help="Std of the ln sigma^2 prior for noisy JS")

    sweep = commands.add_parser("sensitivity", parents=[common], help="Latin-hypercube sweep over 2-RC datasets")
    sweep.add_argument("--n-datasets", type=int, help="Number of generated datasets (default: 256)")
    _add_model_order_flag(sweep)
    sweep.add_argument("--n-is", type=int, help="Importance samples per JS estimate")
    sweep.add_argument("--datasets-dir", help="Also save every generated dataset here")
    _add_engine_flags(sweep)

    bench = commands.add_parser("benchmark", parents=[common], help="Learning curves of BASQ and ESS vs an oracle")
    _add_dataset_flags(bench)
    _add_model_order_flag(bench)
    bench.add_argument("--budget", type=int, help="Likelihood evaluations per engine (default: 2500)")
    bench.add_argument("--oracle-samples", type=int, help="Importance samples for the oracle")
    bench.add_argument("--checkpoints", type=int, help="Evenly spaced ESS checkpoints added to the BASQ ones")
    _add_engine_flags(bench)

    ablation = commands.add_parser("ablation", parents=[common], help="Run the six warp-layer configurations")
    _add_dataset_flags(ablation)
    _add_model_order_flag(ablation)
    _add_engine_flags(ablation)
    return parser


_COMMANDS = {
    "generate": (GenerateConfig, cmd_generate),
    "select": (SelectConfig, cmd_select),
    "identify": (IdentifyConfig, cmd_identify),
    "sensitivity": (SensitivityConfig, cmd_sensitivity),
    "benchmark": (BenchmarkConfig, cmd_benchmark),
    "ablation": (AblationConfig, cmd_ablation),
}

_GLOBAL_KEYS = ("command", "seed", "out_dir", "config", "report", "verbose")


def _flag_values(args: argparse.Namespace) -> dict:
    values = {key: value for key, value in vars(args).items() if key not in _GLOBAL_KEYS}
    for key in ("r", "tau_std", "model_orders"):
        if values.get(key) is not None:
            values[key] = tuple(values[key])
    return values


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    config_cls, command = _COMMANDS[args.command]
    out_dir = Path(args.out_dir)
    try:
        config = resolve(config_cls, load_config_file(args.config), _flag_values(args))
    except EcmEvidenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        lines, extra = command(config, args.seed, out_dir)
        write_manifest(out_dir, args.command, asdict(config), {"seed": args.seed, **extra})
    except EcmEvidenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except _RUN_FAILURES as exc:
        logger.debug("numeric failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_lines(lines, args.report, sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
