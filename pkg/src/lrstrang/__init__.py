"""Low-rank Strang splitting for stiff matrix differential equations
``X' = A X + X A^T + G(t, X)``."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateBasisError,
    DimensionError,
    LowRankError,
    MatrixMarketError,
    NonFiniteInputError,
    NonlinearityBlowup,
    OrderUndefinedError,
)
from .integrators import (
    SCHEMES,
    BugWorkspace,
    IntegrationResult,
    SchemeConfig,
    bug2_midpoint_step,
    bug_augmented_step,
    integrate,
    phi_A_flow,
    strang_fullrank_step,
    strang_lowrank_step,
)
from .linalg_core import OperatorHandle, as_operator, expm_action, orth, svd_full
from .lowrank import (
    LowRankFactor,
    Truncation,
    TruncationMode,
    densify,
    factored_distance,
    factored_sum,
    load_factor,
    save_factor,
    svd_truncate,
)
from .problems import (
    GridSpec,
    Nonlinearity,
    ProblemSpec,
    build_laplacian_1d,
    cubic_problem,
    heat_source_problem,
    load_operator,
    lyapunov_random_problem,
    make_problem,
)

__all__ = [
    "SCHEMES",
    "BugWorkspace",
    "ConfigError",
    "DegenerateBasisError",
    "DimensionError",
    "GridSpec",
    "IntegrationResult",
    "LowRankError",
    "LowRankFactor",
    "MatrixMarketError",
    "NonFiniteInputError",
    "Nonlinearity",
    "NonlinearityBlowup",
    "OperatorHandle",
    "OrderUndefinedError",
    "ProblemSpec",
    "SchemeConfig",
    "Truncation",
    "TruncationMode",
    "as_operator",
    "bug2_midpoint_step",
    "bug_augmented_step",
    "build_laplacian_1d",
    "cubic_problem",
    "densify",
    "expm_action",
    "factored_distance",
    "factored_sum",
    "heat_source_problem",
    "integrate",
    "load_factor",
    "load_operator",
    "lyapunov_random_problem",
    "make_problem",
    "orth",
    "phi_A_flow",
    "save_factor",
    "strang_fullrank_step",
    "strang_lowrank_step",
    "svd_full",
    "svd_truncate",
]
