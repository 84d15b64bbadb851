"""Projection of Bell-experiment data onto the no-signalling affine hull and
projection-invariant Bell expressions for (n, m, 2) scenarios."""
from .bell import (
    BellExpression,
    CanonicalForm,
    Evaluation,
    InvarianceReport,
    builtin,
    canonicalize,
    evaluate,
    invariance_check,
    local_bound,
)
from .constraints import (
    ConstraintSystem,
    RankError,
    Residual,
    SparseRow,
    build_constraint_system,
    kernel_basis,
    residual,
)
from .correlators import (
    CorrelatorTable,
    SettingwiseCorrelators,
    UmcCoefficientVector,
    parity,
    probabilities_from_correlators,
    settingwise_correlators,
    umc,
    umc_coefficient_vector,
)
from .data import (
    CountTable,
    SignallingReport,
    frequencies,
    generate_drift_counts,
    load_counts,
    load_grid222,
    signalling_report,
    write_counts,
)
from .projection import (
    ConvergenceError,
    MLResult,
    SettingsWeights,
    build_pipeline_maps,
    estimate_ml,
    project_direct,
    project_l2,
    project_nonneg,
    project_weighted,
    project_weighted_direct,
)
from .scenario import (
    BehaviorVector,
    Scenario,
    ScenarioError,
    decode_index,
    deterministic_behavior,
    encode_index,
    uniform_behavior,
)

__version__ = "0.1.0"
