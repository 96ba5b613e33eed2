from core.metrics.ksd import (
    ArraySampleSource,
    CallableSampleSource,
    KsdEstimator,
    KsdReport,
    SampleSource,
    eval_protocol,
    ksd,
    ksd_squared,
    stein_kernel,
    stein_matrix,
)
