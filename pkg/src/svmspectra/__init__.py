"""Synthetic overlap/imbalance benchmarks, RBF SVM training, spectral
support-vector reduction, and covert-overfitting analysis."""

__version__ = "0.1.0"

from .backbone import (  # noqa: F401
    MAJORITY,
    MINORITY,
    BackboneSpec,
    IntervalSet,
    LabeledDataset,
    ambiguous_region,
    bayes_f1,
    class_support,
    generate,
    majority_count,
)
from .svm import (  # noqa: F401
    DecisionValue,
    RbfKernel,
    SvmModel,
    TrainConfig,
    decision,
    decision_values,
    kernel_matrix,
    load_model,
    predict,
    save_model,
    train,
)
from .selection import (  # noqa: F401
    AnnealConfig,
    ParamPoint,
    anneal_select,
    cross_val_f1,
)
from .spectral import (  # noqa: F401
    ProjectionCoeffs,
    ReducedModel,
    ReductionSeries,
    build_series,
    essential_rank,
    essential_set,
    hyperplane_cosine,
    reduce,
)
from .analysis import (  # noqa: F401
    EvalResult,
    IndependenceModel,
    LabelChangeMatrix,
    PerformanceSurface,
    SufficiencyReport,
    detect_breakpoint,
    evaluate,
    fit_independence,
    label_changes,
    localization,
    predict_performance,
    sufficiency,
    sweep,
)
