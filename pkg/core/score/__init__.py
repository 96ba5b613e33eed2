from core.score.matching import (
    MAX_EXACT_DIVERGENCE_DIM,
    NoiseModel,
    PerturbedBatch,
    conditional_score,
    dsm_loss_and_grad,
    dsm_step,
    perturb,
    perturb_with,
    sm_loss,
    sm_loss_and_grad,
    sm_step,
)
