# Experiment runner: resolve a config, dispatch the experiment, emit artifacts

import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

from core import __version__
from core.baselines import ChainSource, langevin_run, run_baseline
from core.baselines.chains import ChainConfig
from core.config.config import output_root
from core.config.experiment import ExperimentConfig, load_experiment
from core.dft.training import BlrErrorEvaluator, KsdCheckpointEvaluator, draw_samples, train_dft
from core.metrics.ksd import ArraySampleSource, eval_protocol
from core.nn.checkpoint import save_net
from core.nn.net import Activation, init_net
from core.targets.analytic import make_target
from core.targets.blr import BlrPosterior, blr_accuracy, build_dataset, load_blr_csv, make_synthetic_blr
from core.utils.errors import ConfigValidationError, DftError, NumericError
from core.utils.monitor import host_info, process_rss_mb, worker_count
from core.utils.prng import Prng
from terminal.cli.artifacts import (
    RunManifest,
    emit_scatter_svg,
    git_describe,
    read_samples_csv,
    write_json,
    write_samples_csv,
)

logger = logging.getLogger(__name__)

SNAPSHOT = "config.snapshot"
ERROR_RECORD = "error.json"


@dataclass
class ExperimentOutcome:
    status: str = "completed"
    files: List[str] = field(default_factory=list)
    message: str = ""


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _progress(config: ExperimentConfig) -> bool:
    return bool(config["progress"]) and sys.stderr.isatty()


def _workers(config: ExperimentConfig) -> int:
    requested = config["eval.workers"]
    return worker_count() if requested == 0 else worker_count(requested)


def _build_nets(config: ExperimentConfig, dim: int, prng: Prng):
    width, layers = config["net.hidden_width"], config["net.hidden_layers"]
    slope = config["net.leaky_slope"]
    latent = config["net.latent_dim"] or 2 * dim
    sampler = init_net([latent] + [width] * layers + [dim], Activation(config["net.sampler_activation"], slope),
                       prng.child(0))
    score_net = init_net([dim] + [width] * layers + [dim], Activation(config["net.score_activation"], slope),
                         prng.child(1))
    return sampler, score_net


def _save_training(result, out_dir: Path, files: List[str]):
    for name, net in (("sampler.best.npz", result.best_sampler), ("sampler.final.npz", result.sampler),
                      ("score.best.npz", result.best_score_net), ("score.final.npz", result.score_net)):
        save_net(net, out_dir / name)
        files.append(name)
    result.trace.to_jsonl(out_dir / "trace.jsonl")
    files.append("trace.jsonl")


def _training_metrics(result) -> dict:
    return {
        "status": result.status,
        "best_iteration": result.best_iteration,
        "best_value": result.best_value,
        "checkpoints": len(result.trace.checkpoints()),
        "skipped_batches": sum(1 for r in result.trace.events() if r["event"] == "skipped"),
    }


def _scatter(points, target, out_dir: Path, files: List[str]):
    if target.dim == 2:
        emit_scatter_svg(points, target, out_dir / "scatter.svg")
        files.append("scatter.svg")


def run_train_dft(config: ExperimentConfig, out_dir: Path) -> ExperimentOutcome:
    outcome = ExperimentOutcome()
    target = make_target(config["target.name"], config["target.log_offset"])
    prng = Prng(config.seed)
    sampler, score_net = _build_nets(config, target.dim, prng.child(0))
    estimator = config.ksd_estimator()
    evaluator = KsdCheckpointEvaluator(target, estimator, config["eval.n_samples"], config["eval.n_repeats"],
                                       _workers(config))
    result = train_dft(target, sampler, score_net, config.dft_config(), prng.child(1), evaluator,
                       progress=_progress(config))
    _save_training(result, out_dir, outcome.files)

    points = draw_samples(result.best_sampler, config["eval.n_samples"], prng.child(2))
    write_samples_csv(points, out_dir / "samples.csv")
    outcome.files.append("samples.csv")
    report = evaluator(result.best_sampler, prng.child(3))
    metrics = {"experiment": "train_dft", "target": target.name, **_training_metrics(result),
               "ksd": report.to_json()}
    write_json(metrics, out_dir / "metrics.json")
    outcome.files.append("metrics.json")
    _scatter(points, target, out_dir, outcome.files)
    if result.aborted:
        outcome.status = "aborted"
        outcome.message = "training aborted after consecutive non-finite batches"
    return outcome


def run_mcmc(config: ExperimentConfig, out_dir: Path) -> ExperimentOutcome:
    outcome = ExperimentOutcome()
    target = make_target(config["target.name"], config["target.log_offset"])
    prng = Prng(config.seed)
    kind = config["chain.sampler"]
    init_points = read_samples_csv(config["chain.init_csv"]) if config["chain.init"] == "provided" else None
    chain_config = config.chain_config(init_points)
    batch = run_baseline(kind, target, chain_config, prng.child(0), progress=_progress(config))
    write_samples_csv(batch.points, out_dir / "samples.csv")
    outcome.files.append("samples.csv")

    if chain_config.init == "standard_normal":
        source = ChainSource(kind, target, chain_config)
        report = eval_protocol(config.ksd_estimator(), target, source, chain_config.n_particles,
                               config["eval.n_repeats"], prng.child(1), _workers(config))
    else:
        report = eval_protocol(config.ksd_estimator(), target, ArraySampleSource(batch.points), batch.n, 1,
                               prng.child(1))
    metrics = {"experiment": "run_mcmc", "target": target.name, "sampler": kind,
               "n_particles": batch.n, "n_steps": batch.iteration, "step_size": chain_config.step_size,
               "diagnostics": batch.diagnostics, "ksd": report.to_json()}
    write_json(metrics, out_dir / "metrics.json")
    outcome.files.append("metrics.json")
    _scatter(batch.points, target, out_dir, outcome.files)
    return outcome


def run_eval_ksd(config: ExperimentConfig, out_dir: Path) -> ExperimentOutcome:
    outcome = ExperimentOutcome()
    target = make_target(config["target.name"], config["target.log_offset"])
    prng = Prng(config.seed)
    points = read_samples_csv(config["eval.samples_csv"])
    estimator = config.ksd_estimator()
    n_samples, n_repeats = config["eval.n_samples"], config["eval.n_repeats"]
    report = eval_protocol(estimator, target, ArraySampleSource(points), n_samples, n_repeats, prng.child(0),
                           _workers(config))
    metrics = {"experiment": "eval_ksd", "target": target.name, "ksd": report.to_json()}
    shift = config["eval.control_shift"]
    if shift is not None:
        control = eval_protocol(estimator, target, ArraySampleSource(points + shift), n_samples, n_repeats,
                                prng.child(1), _workers(config))
        metrics["control"] = {"shift": shift, **control.to_json()}
    write_json(metrics, out_dir / "metrics.json")
    outcome.files.append("metrics.json")
    _scatter(points[:n_samples * n_repeats], target, out_dir, outcome.files)
    return outcome


def _blr_dataset(config: ExperimentConfig, prng: Prng):
    if config["data.csv"]:
        return load_blr_csv(config["data.csv"], config["data.label_column"], config["data.test_fraction"], prng)
    features, labels = make_synthetic_blr(config["data.synthetic_features"], config["data.synthetic_rows"],
                                          prng.child(0))
    return build_dataset(features, labels, config["data.test_fraction"], prng.child(1))


def run_blr(config: ExperimentConfig, out_dir: Path) -> ExperimentOutcome:
    outcome = ExperimentOutcome()
    prng = Prng(config.seed)
    dataset = _blr_dataset(config, prng.child(0))
    posterior = BlrPosterior(dataset, config["blr.minibatch_size"], config["blr.prior_shape"],
                             config["blr.prior_rate"])
    sampler, score_net = _build_nets(config, posterior.dim, prng.child(1))
    evaluator = BlrErrorEvaluator(posterior, config["blr.eval_samples"])
    result = train_dft(posterior, sampler, score_net, config.dft_config(), prng.child(2), evaluator,
                       progress=_progress(config))
    _save_training(result, out_dir, outcome.files)

    points = draw_samples(result.best_sampler, config["blr.eval_samples"], prng.child(3))
    write_samples_csv(points, out_dir / "samples.csv")
    outcome.files.append("samples.csv")
    metrics = {"experiment": "blr", **_training_metrics(result),
               "n_features": dataset.n_features, "n_train": int(dataset.train_index.size),
               "n_test": int(dataset.test_index.size), "dft_accuracy": blr_accuracy(posterior, points),
               "data_warnings": dataset.warnings}
    if config["blr.baseline_steps"]:
        chain_config = ChainConfig(config["blr.baseline_particles"], config["blr.baseline_steps"],
                                   config["blr.baseline_step_size"])
        baseline = langevin_run(posterior, chain_config, prng.child(4), progress=_progress(config))
        metrics["langevin_accuracy"] = blr_accuracy(posterior, baseline.points)
        metrics["langevin_diagnostics"] = baseline.diagnostics
    write_json(metrics, out_dir / "metrics.json")
    outcome.files.append("metrics.json")
    if result.aborted:
        outcome.status = "aborted"
        outcome.message = "training aborted after consecutive non-finite batches"
    return outcome


EXPERIMENTS = {
    "train_dft": run_train_dft,
    "run_mcmc": run_mcmc,
    "eval_ksd": run_eval_ksd,
    "blr": run_blr,
}


def _error_record(out_dir: Path, status: str, exc: Exception) -> Path:
    if isinstance(exc, DftError):
        error_type, details = exc.error_type, exc.details()
    else:
        error_type, details = type(exc).__name__, {}
    return write_json({"status": status, "error_type": error_type, "message": str(exc), "details": details},
                      out_dir / ERROR_RECORD)


def run(config_path, overrides: Iterable[str] = (), preset: Optional[str] = None, seed: Optional[int] = None,
        out=None) -> Tuple[int, Optional[RunManifest]]:
    """
    Run one experiment. Returns (exit status, manifest); the manifest is None
    only when the configuration itself is invalid.
    """
    try:
        config = load_experiment(config_path, overrides, preset, seed, out)
    except ConfigValidationError as exc:
        error_dir = Path(out) if out is not None else Path(output_root())
        error_dir.mkdir(parents=True, exist_ok=True)
        _error_record(error_dir, "invalid", exc)
        logger.error(str(exc))
        return 2, None

    out_dir = config.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / ERROR_RECORD).unlink(missing_ok=True)
    for warning in config.warnings:
        logger.warning(warning)
    manifest = RunManifest(config.snapshot(), __version__, git_describe(Path(__file__).parent), _utc_now(),
                           host=host_info())
    (out_dir / SNAPSHOT).write_text(config.snapshot())
    started = time.perf_counter()
    logger.info(f"Running {config.experiment} into {out_dir}")

    exit_code = 0
    files = [SNAPSHOT]
    try:
        outcome = EXPERIMENTS[config.experiment](config, out_dir)
        files += outcome.files
        manifest.status = outcome.status
        if outcome.status == "aborted":
            _error_record(out_dir, "aborted", NumericError(outcome.message))
            files.append(ERROR_RECORD)
            exit_code = 1
    except DftError as exc:
        manifest.status = "failed"
        _error_record(out_dir, "failed", exc)
        files.append(ERROR_RECORD)
        exit_code = 2 if isinstance(exc, ConfigValidationError) else 1
        logger.error(f"{config.experiment} failed: {exc}")
    except Exception as exc:
        manifest.status = "failed"
        _error_record(out_dir, "failed", exc)
        files.append(ERROR_RECORD)
        exit_code = 1
        logger.exception(f"{config.experiment} failed unexpectedly: {exc}")

    manifest.finished = _utc_now()
    manifest.wall_seconds = round(time.perf_counter() - started, 3)
    manifest.host["rss_mb"] = process_rss_mb()
    manifest.record(out_dir, files)
    manifest.write(out_dir)
    logger.info(f"{config.experiment} {manifest.status} in {manifest.wall_seconds}s")
    return exit_code, manifest


def run_sweep(config_path, seeds: Iterable[int], overrides: Iterable[str] = (), preset: Optional[str] = None,
              out=None, max_workers: Optional[int] = None) -> List[Tuple[int, Optional[RunManifest]]]:
    """One run per seed into <out>/seed<k>, results in seed order."""
    seeds = list(seeds)
    root = Path(out) if out is not None else Path(output_root()) / "sweep"
    workers = worker_count(max_workers or len(seeds))

    def one(seed):
        return run(config_path, overrides, preset, seed, root / f"seed{seed}")

    if workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, seeds))
    return [one(s) for s in seeds]


def summarize(manifest: RunManifest) -> str:
    names = ", ".join(f["name"] for f in manifest.files)
    return f"{manifest.status} ({manifest.wall_seconds}s): {names}"

