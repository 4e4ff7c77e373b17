# Physics-informed polynomial chaos expansions
# Constrained PCE fitting (KKT / SULM), D-optimal sampling, KL random fields

__version__ = "0.1.0"

from pc2.errors import Pc2Error
from pc2.basis import (
    PolynomialFamily,
    MarginalKind,
    Marginal,
    DeterministicInterval,
    UniformRandom,
    GaussianRandom,
    InputSpec,
    MultiIndexSet,
    BasisSpec,
    DesignMatrix,
    eval_univariate,
    univariate_table,
    germ_map,
    gen_multi_indices,
    build_design_matrix,
)
from pc2.constraints import (
    ConstraintTag,
    LinearOperator,
    OperatorBuilder,
    ConstraintBlock,
    ConstraintSet,
    apply_operator_row,
    apply_operator_rows,
    assemble,
)
from pc2.solvers import (
    SolverMethod,
    SolverConfig,
    AdaptivityConfig,
    Pc2Model,
    FitDiagnostics,
    FitResult,
    FitProblem,
    GramFactor,
    fit,
    fit_ols,
    fit_kkt,
    fit_sulm,
    fit_adaptive,
    predict,
    predict_derivative,
)
from pc2.sampling import (
    SamplingStrategy,
    SamplePlan,
    PointPlan,
    sample_random,
    sample_facet,
    d_optimal_select,
    plan_points,
)
from pc2.randomfield import (
    Kernel,
    KLField,
    kl_decompose,
    realize,
    field_derivatives,
)
from pc2.finite_difference import (
    FDHeatSettings,
    HeatBoundary,
    HeatSolution,
    BeamSolution,
    fd_heat,
    fd_beam,
)
from pc2.metrics import (
    MetricReport,
    MomentFields,
    metrics,
    moment_fields,
    monte_carlo_moments,
)
from pc2.problems import ProblemDef, PROBLEMS, get_problem
from pc2.config import RunConfig, ConfigParser, parse_config
from pc2.model_io import ModelReader, ModelWriter, read_model, write_model
from pc2.report_writer import ReportWriter, write_report

__all__ = [
    # Version
    "__version__",
    # Errors
    "Pc2Error",
    # Inputs and basis
    "PolynomialFamily",
    "MarginalKind",
    "Marginal",
    "DeterministicInterval",
    "UniformRandom",
    "GaussianRandom",
    "InputSpec",
    "MultiIndexSet",
    "BasisSpec",
    "DesignMatrix",
    "eval_univariate",
    "univariate_table",
    "germ_map",
    "gen_multi_indices",
    "build_design_matrix",
    # Constraints
    "ConstraintTag",
    "LinearOperator",
    "OperatorBuilder",
    "ConstraintBlock",
    "ConstraintSet",
    "apply_operator_row",
    "apply_operator_rows",
    "assemble",
    # Solvers
    "SolverMethod",
    "SolverConfig",
    "AdaptivityConfig",
    "Pc2Model",
    "FitDiagnostics",
    "FitResult",
    "FitProblem",
    "GramFactor",
    "fit",
    "fit_ols",
    "fit_kkt",
    "fit_sulm",
    "fit_adaptive",
    "predict",
    "predict_derivative",
    # Sampling
    "SamplingStrategy",
    "SamplePlan",
    "PointPlan",
    "sample_random",
    "sample_facet",
    "d_optimal_select",
    "plan_points",
    # Random fields
    "Kernel",
    "KLField",
    "kl_decompose",
    "realize",
    "field_derivatives",
    # Finite-difference references
    "FDHeatSettings",
    "HeatBoundary",
    "HeatSolution",
    "BeamSolution",
    "fd_heat",
    "fd_beam",
    # Metrics and moments
    "MetricReport",
    "MomentFields",
    "metrics",
    "moment_fields",
    "monte_carlo_moments",
    # Problems
    "ProblemDef",
    "PROBLEMS",
    "get_problem",
    # Configuration and I/O
    "RunConfig",
    "ConfigParser",
    "parse_config",
    "ModelReader",
    "ModelWriter",
    "read_model",
    "write_model",
    "ReportWriter",
    "write_report",
]
