"""D-optimal designs for multinomial logit models.

The package covers baseline-category, cumulative, adjacent-categories and
continuation-ratio logit links with proportional, non-proportional or partial
proportional odds. It builds Fisher information matrices, decides which
support sets give nonsingular information, and searches for locally
D-optimal and EW D-optimal designs with the lift-one (approximate) and
exchange (exact) algorithms.
"""

from .analytic import (
    ThreePointProblem,
    UniformVerdict,
    solve_three_point,
    three_point_coefficients,
    uniform_minimal_verdict,
)
from .errors import (
    DesignSpaceError,
    InfeasibleDesignError,
    OptDesignError,
    SingularDesignError,
    UnsupportedModelError,
)
from .fisher import (
    DesignApprox,
    DesignExact,
    FisherMatrix,
    RankReport,
    analyze_rank,
    fisher_at_point,
    fisher_huh,
    fisher_total,
    subspace_intersection_dim,
)
from .model import (
    LinkKind,
    ModelSpec,
    OddsStructure,
    ParameterVector,
    PredictorSpec,
    build_model_matrix,
    compute_pi,
    compute_u,
)
from .optimize import (
    OptimizerConfig,
    PriorSample,
    bayesian_objective,
    efficiency,
    equivalence_check,
    ew_lift_one,
    exchange,
    grid_search,
    lift_one,
)

__version__ = "0.1.0"

__all__ = [
    "ThreePointProblem", "UniformVerdict", "solve_three_point", "three_point_coefficients",
    "uniform_minimal_verdict", "DesignSpaceError", "InfeasibleDesignError", "OptDesignError",
    "SingularDesignError", "UnsupportedModelError", "DesignApprox", "DesignExact",
    "FisherMatrix", "RankReport", "analyze_rank", "fisher_at_point", "fisher_huh",
    "fisher_total", "subspace_intersection_dim", "LinkKind", "ModelSpec", "OddsStructure",
    "ParameterVector", "PredictorSpec", "build_model_matrix", "compute_pi", "compute_u",
    "OptimizerConfig", "PriorSample", "bayesian_objective", "efficiency",
    "equivalence_check", "ew_lift_one", "exchange", "grid_search", "lift_one",
]
