"""Training binarized step-activation networks with mixed-integer programming."""

from .core import (
    BdnnParams,
    Dataset,
    Metrics,
    NetworkSpec,
    ThresholdMode,
    WeightDomain,
    binary_step,
    compute_metrics,
    dataset_loss,
    empirical_loss,
    forward,
    predict,
    predict_many,
)
from .data import DataError, MinMaxTransform, SplitSpec, load_csv, minmax_scale, split, synthetic_random
from .model import (
    BuildOptions,
    MilpModel,
    ModelBuildError,
    UnsupportedNormError,
    big_m_first_layer,
    big_m_layer,
    build_exact,
    build_fixed,
    build_partitioned,
    build_robust,
    objective_value,
)
from .datasplit import (
    DatasplitResult,
    EpochRecord,
    Partition,
    kmeans,
    select_split_cell,
    train_datasplit,
)
from .localsearch import (
    FixationState,
    LocalSearchResult,
    build_h1,
    build_h2,
    local_search,
)
from .robust import (
    AttackConfig,
    Norm,
    UncertaintySpec,
    certify_first_layer,
    dual_norm,
    random_attack,
    robust_eval,
)
from .solver import (
    SolveResult,
    SolverConfig,
    SolverStatus,
    export_mps,
    kernel_name,
    solve,
    solve_lp,
)

__version__ = "0.1.0"
