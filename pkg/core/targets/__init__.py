from core.targets.analytic import (
    TARGET_NAMES,
    DonutTarget,
    FunnelTarget,
    GaussianTarget,
    Mog2Target,
    RosenbrockTarget,
    SquiggleTarget,
    TargetDistribution,
    make_target,
)
from core.targets.blr import (
    BlrDataset,
    BlrPosterior,
    blr_accuracy,
    blr_score,
    build_dataset,
    load_blr_csv,
    make_synthetic_blr,
    write_blr_csv,
)
