from core.baselines.chains import (
    ChainConfig,
    SampleBatch,
    acceptance_probability,
    hmc_run,
    langevin_run,
    langevin_step,
    leapfrog,
)
from core.baselines.runner import BASELINES, ChainSource, run_baseline
from core.baselines.svgd import median_bandwidth, svgd_direction, svgd_run, svgd_step
