# Baseline dispatch and repeat-per-chain sample source

from dataclasses import replace

from core.baselines.chains import ChainConfig, SampleBatch, hmc_run, langevin_run
from core.baselines.svgd import svgd_run
from core.targets.analytic import TargetDistribution
from core.utils.errors import ConfigurationError
from core.utils.prng import Prng

BASELINES = {
    "langevin": langevin_run,
    "hmc": hmc_run,
    "svgd": svgd_run,
}


def run_baseline(kind: str, target: TargetDistribution, config: ChainConfig, prng: Prng,
                 progress: bool = False) -> SampleBatch:
    try:
        run = BASELINES[kind]
    except KeyError:
        raise ConfigurationError(f"unknown sampler {kind!r}, expected one of {tuple(BASELINES)}")
    return run(target, config, prng, progress=progress)


class ChainSource:
    """Each repeat is a fresh, independent run with n particles."""

    available = None

    def __init__(self, kind: str, target: TargetDistribution, config: ChainConfig):
        if kind not in BASELINES:
            raise ConfigurationError(f"unknown sampler {kind!r}, expected one of {tuple(BASELINES)}")
        if config.init != "standard_normal":
            raise ConfigurationError("a chain source re-initializes every repeat; use init=standard_normal")
        self.kind = kind
        self.target = target
        self.config = config

    def draw(self, n, prng, repeat):
        return run_baseline(self.kind, self.target, replace(self.config, n_particles=n), prng).points
