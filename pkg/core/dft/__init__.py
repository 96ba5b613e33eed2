from core.dft.trace import TrainTrace
from core.dft.training import (
    BlrErrorEvaluator,
    DftConfig,
    KsdCheckpointEvaluator,
    SurrogateGradient,
    TrainResult,
    draw_samples,
    sampler_grad,
    surrogate_gradient,
    train_dft,
)
from core.dft.verify import (
    Grad2Report,
    Lemma1Report,
    LinearGaussianSampler,
    verify_grad2_identity,
    verify_lemma1,
)
