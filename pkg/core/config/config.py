# DFT Toolkit Core Configuration
# Defaults shared by the experiment schema, presets and the run surface

import os

# Output settings
DEFAULT_OUTPUT_ROOT = "runs"
OUTPUT_ROOT_ENV = "DFT_OUTPUT_ROOT"
WORKERS_ENV = "DFT_WORKERS"
CONFIG_SNAPSHOT = "config.snapshot"

# Network settings (a four-layer MLP: three hidden layers)
HIDDEN_WIDTH = 400
HIDDEN_LAYERS = 3
SAMPLER_ACTIVATION = "elu"
SCORE_ACTIVATION = "gelu"
LEAKY_SLOPE = 0.2

# DFT training settings
SIGMA = 0.1
GRAD_MODE = "full"
SCORE_STEPS = 2
BATCH_SIZE = 1000
MAX_ITER = 20000
SAMPLER_LR = 1e-4
SCORE_LR = 2e-4
EVAL_EVERY = 1000
SCORE_OBJECTIVE = "dsm"

# KSD evaluation settings
KSD_C = 1.0
KSD_BETA = -0.5
KSD_STATISTIC = "u_statistic"
EVAL_SAMPLES = 500
EVAL_REPEATS = 20

# Particle baseline settings
CHAIN_SAMPLER = "langevin"
CHAIN_PARTICLES = 500
CHAIN_STEPS = 500
CHAIN_STEP_SIZE = 0.01
HMC_LEAPFROG_STEPS = 5

# Bayesian logistic regression settings
BLR_MINIBATCH = 500
BLR_PRIOR_SHAPE = 1.0
BLR_PRIOR_RATE = 0.01
BLR_TEST_FRACTION = 0.2
BLR_EVAL_SAMPLES = 100
BLR_SYNTHETIC_FEATURES = 10
BLR_SYNTHETIC_ROWS = 2000
BLR_BASELINE_STEPS = 1000
BLR_BASELINE_STEP_SIZE = 1e-3
BLR_BASELINE_PARTICLES = 100

# Named presets, applied over schema defaults and under the config file
PRESETS = {
    # sized for 20k iterations on a single CPU core
    "desk": {
        "dft.batch_size": "1000",
        "dft.max_iter": "20000",
        "dft.sampler_lr": "2e-4",
        "dft.score_lr": "4e-4",
        "net.hidden_width": "48",
    },
    "paper": {
        "dft.batch_size": "5000",
        "dft.sampler_lr": "2e-5",
        "dft.score_lr": "2e-5",
        "net.hidden_width": "400",
    },
}


def output_root():
    return os.getenv(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT
