# Flat key=value experiment configuration: schema, parsing and validation

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from dotenv import dotenv_values

from core.config import config as defaults
from core.baselines.chains import INIT_MODES, ChainConfig
from core.dft.training import GRAD_MODES, SCORE_OBJECTIVES, DftConfig
from core.metrics.ksd import STATISTICS, KsdEstimator
from core.nn.net import ACTIVATIONS
from core.targets.analytic import TARGET_NAMES
from core.utils.errors import ConfigValidationError

logger = logging.getLogger(__name__)

EXPERIMENTS = ("train_dft", "run_mcmc", "eval_ksd", "blr")
CHAIN_SAMPLERS = ("langevin", "hmc", "svgd")
TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")


@dataclass(frozen=True)
class Field:
    key: str
    kind: str
    default: str
    doc: str
    choices: Tuple[str, ...] = ()
    minimum: Optional[float] = None
    strict: bool = False

    def parse(self, text: str) -> Any:
        text = text.strip()
        if self.kind == "str":
            value = text
        elif self.kind == "choice":
            if text not in self.choices:
                raise ValueError(f"expected one of {', '.join(self.choices)}, got {text!r}")
            value = text
        elif self.kind == "bool":
            if text.lower() in TRUE_WORDS:
                return True
            if text.lower() in FALSE_WORDS:
                return False
            raise ValueError(f"expected a boolean, got {text!r}")
        elif self.kind == "int":
            try:
                value = int(text)
            except ValueError:
                raise ValueError(f"expected an integer, got {text!r}")
        elif self.kind in ("float", "optional_float"):
            if self.kind == "optional_float" and text.lower() in ("", "none"):
                return None
            try:
                value = float(text)
            except ValueError:
                raise ValueError(f"expected a number, got {text!r}")
            if value != value or value in (float("inf"), float("-inf")):
                raise ValueError(f"expected a finite number, got {text!r}")
        else:
            raise ValueError(f"unknown field kind {self.kind}")
        if self.minimum is not None:
            if self.strict and not value > self.minimum:
                raise ValueError(f"must be > {self.minimum}, got {value}")
            if not self.strict and not value >= self.minimum:
                raise ValueError(f"must be >= {self.minimum}, got {value}")
        return value


SCHEMA = [
    Field("experiment", "choice", "train_dft", "Experiment to run", EXPERIMENTS),
    Field("seed", "int", "0", "Root seed of every random stream", minimum=0),
    Field("output_dir", "str", "", "Output directory; empty means <output root>/<experiment>-<target>-seed<seed>"),
    Field("progress", "bool", "true", "Show progress bars (never on a non-TTY stderr)"),
    Field("target.name", "choice", "gaussian", "Analytic 2D target", TARGET_NAMES),
    Field("target.log_offset", "float", "0.0", "Constant added to the target log-density"),
    Field("net.hidden_width", "int", str(defaults.HIDDEN_WIDTH), "Hidden units per layer", minimum=1),
    Field("net.hidden_layers", "int", str(defaults.HIDDEN_LAYERS), "Hidden layers per network", minimum=1),
    Field("net.sampler_activation", "choice", defaults.SAMPLER_ACTIVATION, "Sampler hidden activation", ACTIVATIONS),
    Field("net.score_activation", "choice", defaults.SCORE_ACTIVATION, "Score-net hidden activation", ACTIVATIONS),
    Field("net.leaky_slope", "float", str(defaults.LEAKY_SLOPE), "Negative slope of leaky_relu", minimum=0.0),
    Field("net.latent_dim", "int", "0", "Sampler input dimension; 0 means twice the target dimension", minimum=0),
    Field("dft.sigma", "float", str(defaults.SIGMA), "Perturbation noise level", minimum=0.0, strict=True),
    Field("dft.grad_mode", "choice", defaults.GRAD_MODE, "full or partial sampler gradient", GRAD_MODES),
    Field("dft.lambda1", "optional_float", "", "Weight of the pathwise term; empty means mode default", minimum=0.0),
    Field("dft.lambda2", "optional_float", "", "Weight of the score-parameter term; empty means 1", minimum=0.0),
    Field("dft.score_steps", "int", str(defaults.SCORE_STEPS), "Score updates per sampler update", minimum=1),
    Field("dft.batch_size", "int", str(defaults.BATCH_SIZE), "Mini-batch size of both phases", minimum=1),
    Field("dft.max_iter", "int", str(defaults.MAX_ITER), "Sampler iterations", minimum=0),
    Field("dft.sampler_lr", "float", str(defaults.SAMPLER_LR), "Sampler Adam learning rate", minimum=0.0, strict=True),
    Field("dft.score_lr", "float", str(defaults.SCORE_LR), "Score-net Adam learning rate", minimum=0.0, strict=True),
    Field("dft.eval_every", "int", str(defaults.EVAL_EVERY), "Iterations between checkpoints", minimum=1),
    Field("dft.score_objective", "choice", defaults.SCORE_OBJECTIVE, "Score-net objective", SCORE_OBJECTIVES),
    Field("ksd.c", "float", str(defaults.KSD_C), "IMQ kernel offset", minimum=0.0, strict=True),
    Field("ksd.beta", "float", str(defaults.KSD_BETA), "IMQ kernel exponent in (-1, 0)"),
    Field("ksd.statistic", "choice", defaults.KSD_STATISTIC, "KSD estimator", STATISTICS),
    Field("eval.n_samples", "int", str(defaults.EVAL_SAMPLES), "Samples per KSD repeat", minimum=1),
    Field("eval.n_repeats", "int", str(defaults.EVAL_REPEATS), "Independent KSD repeats", minimum=1),
    Field("eval.samples_csv", "str", "", "samples.csv to score (eval_ksd)"),
    Field("eval.control_shift", "optional_float", "", "Also score the samples shifted by this constant"),
    Field("eval.workers", "int", "1", "Worker threads for KSD repeats; 0 means one per physical core", minimum=0),
    Field("chain.sampler", "choice", defaults.CHAIN_SAMPLER, "Baseline for run_mcmc", CHAIN_SAMPLERS),
    Field("chain.n_particles", "int", str(defaults.CHAIN_PARTICLES), "Particles per run", minimum=1),
    Field("chain.n_steps", "int", str(defaults.CHAIN_STEPS), "Steps per run", minimum=0),
    Field("chain.step_size", "float", str(defaults.CHAIN_STEP_SIZE), "Step size", minimum=0.0, strict=True),
    Field("chain.leapfrog_steps", "int", str(defaults.HMC_LEAPFROG_STEPS), "HMC leapfrog steps", minimum=1),
    Field("chain.init", "choice", "standard_normal", "Particle initialization", INIT_MODES),
    Field("chain.init_csv", "str", "", "Initial points CSV for chain.init=provided"),
    Field("data.csv", "str", "", "BLR dataset CSV; empty means a seeded synthetic dataset"),
    Field("data.label_column", "str", "label", "Label column of the dataset CSV"),
    Field("data.test_fraction", "float", str(defaults.BLR_TEST_FRACTION), "Held-out fraction", minimum=0.0),
    Field("data.synthetic_features", "int", str(defaults.BLR_SYNTHETIC_FEATURES), "Synthetic features", minimum=1),
    Field("data.synthetic_rows", "int", str(defaults.BLR_SYNTHETIC_ROWS), "Synthetic rows", minimum=2),
    Field("blr.minibatch_size", "int", str(defaults.BLR_MINIBATCH), "Likelihood minibatch", minimum=1),
    Field("blr.prior_shape", "float", str(defaults.BLR_PRIOR_SHAPE), "Gamma prior shape", minimum=0.0, strict=True),
    Field("blr.prior_rate", "float", str(defaults.BLR_PRIOR_RATE), "Gamma prior rate", minimum=0.0, strict=True),
    Field("blr.eval_samples", "int", str(defaults.BLR_EVAL_SAMPLES), "Sampler draws per accuracy check", minimum=1),
    Field("blr.baseline_steps", "int", str(defaults.BLR_BASELINE_STEPS), "Langevin baseline steps; 0 skips it",
          minimum=0),
    Field("blr.baseline_step_size", "float", str(defaults.BLR_BASELINE_STEP_SIZE), "Langevin baseline step",
          minimum=0.0, strict=True),
    Field("blr.baseline_particles", "int", str(defaults.BLR_BASELINE_PARTICLES), "Langevin baseline particles",
          minimum=1),
]
FIELDS = {f.key: f for f in SCHEMA}


@dataclass
class ExperimentConfig:
    """Resolved configuration: textual values in schema order plus parsed values."""

    text: Dict[str, str]
    values: Dict[str, Any]
    preset: Optional[str] = None
    source: Optional[str] = None
    warnings: List[str] = field(default_factory=list)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def experiment(self) -> str:
        return self.values["experiment"]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def label(self) -> str:
        subject = "blr" if self.experiment == "blr" else self.values["target.name"]
        return f"{self.experiment}-{subject}-seed{self.seed}"

    def output_dir(self) -> Path:
        return Path(self.values["output_dir"] or Path(defaults.output_root()) / self.label)

    def dft_config(self, **changes) -> DftConfig:
        v = self.values
        settings = dict(
            sigma=v["dft.sigma"],
            grad_mode=v["dft.grad_mode"],
            lambda1=v["dft.lambda1"],
            lambda2=v["dft.lambda2"],
            score_steps_per_sampler_step=v["dft.score_steps"],
            batch_size=v["dft.batch_size"],
            max_iter=v["dft.max_iter"],
            sampler_lr=v["dft.sampler_lr"],
            score_lr=v["dft.score_lr"],
            eval_every=v["dft.eval_every"],
            eval_samples=v["eval.n_samples"],
            eval_repeats=v["eval.n_repeats"],
            score_objective=v["dft.score_objective"],
            latent_dim=v["net.latent_dim"],
        )
        settings.update(changes)
        return DftConfig(**settings)

    def chain_config(self, init_points=None) -> ChainConfig:
        v = self.values
        n_particles = v["chain.n_particles"] if init_points is None else len(init_points)
        return ChainConfig(n_particles, v["chain.n_steps"], v["chain.step_size"], v["chain.leapfrog_steps"],
                           v["chain.init"], init_points)

    def ksd_estimator(self) -> KsdEstimator:
        return KsdEstimator(self.values["ksd.c"], self.values["ksd.beta"], self.values["ksd.statistic"])

    def snapshot(self) -> str:
        lines = [f"# resolved {self.experiment} configuration"]
        lines += [f"{key}={self.text[key]}" for key in FIELDS]
        return "\n".join(lines) + "\n"


def _apply(pairs: Iterable[Tuple[str, Optional[str]]], origin: str, text: Dict[str, str], violations: List[str]):
    for key, value in pairs:
        if key not in FIELDS:
            violations.append(f"{origin}: unknown key {key!r}")
        elif value is None:
            violations.append(f"{origin}: key {key!r} has no value")
        else:
            text[key] = value.strip()


def _split_override(item: str):
    key, sep, value = item.partition("=")
    if not sep:
        return key.strip(), None
    return key.strip(), value


def _cross_checks(values: Dict[str, Any]) -> List[str]:
    """Checks spanning several keys; keys that failed to parse are skipped."""
    problems = []
    values = dict(values)
    values.setdefault("experiment", None)
    if "ksd.beta" in values and not -1.0 < values["ksd.beta"] < 0.0:
        problems.append(f"ksd.beta: must lie in (-1, 0), got {values['ksd.beta']}")
    if values.get("data.test_fraction", 0.0) >= 1.0:
        problems.append("data.test_fraction: must be < 1")
    if values["experiment"] == "eval_ksd" and not values.get("eval.samples_csv", "x"):
        problems.append("eval.samples_csv: required by experiment eval_ksd")
    if values.get("chain.init") == "provided" and not values.get("chain.init_csv", "x"):
        problems.append("chain.init_csv: required when chain.init=provided")
    if values["experiment"] == "blr" and values.get("data.test_fraction") == 0.0:
        problems.append("data.test_fraction: blr needs a non-empty test split")
    return problems


def load_experiment(config_path=None, overrides: Iterable[str] = (), preset: Optional[str] = None,
                    seed: Optional[int] = None, out=None) -> ExperimentConfig:
    """
    Resolve defaults < preset < config file < overrides < seed/out flags.
    Every problem found is reported in one ConfigValidationError.
    """
    violations: List[str] = []
    text = {f.key: f.default for f in SCHEMA}

    if preset is not None:
        if preset not in defaults.PRESETS:
            violations.append(f"preset: unknown preset {preset!r}, expected one of {', '.join(defaults.PRESETS)}")
        else:
            text.update(defaults.PRESETS[preset])

    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            violations.append(f"config: file not found: {path}")
        else:
            _apply(dotenv_values(path, interpolate=False).items(), str(path), text, violations)

    _apply((_split_override(item) for item in overrides), "--set", text, violations)
    if seed is not None:
        text["seed"] = str(seed)
    if out is not None:
        text["output_dir"] = str(out)

    values: Dict[str, Any] = {}
    for key, spec in FIELDS.items():
        try:
            values[key] = spec.parse(text[key])
        except ValueError as exc:
            violations.append(f"{key}: {exc}")
    violations.extend(_cross_checks(values))
    if violations:
        raise ConfigValidationError(violations)

    resolved = ExperimentConfig(text, values, preset, str(config_path) if config_path else None)
    if values["dft.grad_mode"] == "partial" and values["dft.lambda1"]:
        resolved.warnings.append("dft.lambda1 is ignored in partial gradient mode")
    logger.debug(f"Resolved {resolved.experiment} config with seed {resolved.seed}")
    return resolved


def describe_schema() -> str:
    rows = []
    for spec in SCHEMA:
        choices = f" [{'|'.join(spec.choices)}]" if spec.choices else ""
        rows.append(f"{spec.key}={spec.default}\n    {spec.doc}{choices}")
    return "\n".join(rows)
