"""boxtune: Bayesian-optimization autotuner for black-box mixed search spaces.

Gaussian-process surrogate over real/integer/ordinal/categorical/permutation
parameters, known constraints handled by an exact chain-of-trees enumeration
of the feasible set, and hidden constraints learned online by a random-forest
feasibility classifier.
"""
from .acquisition import (
    AcquisitionContext,
    SpaceExhausted,
    acquisition_value,
    expected_improvement,
    optimize_acquisition,
)
from .bench import Benchmark, builtin, brute_force_optimum
from .constraints import (
    ChainOfTrees,
    ConstraintError,
    build_cot,
    cot_contains,
    cot_count,
    cot_sample_leaf_uniform,
    cot_sample_path_biased,
    eval_constraint,
    parse_constraint,
)
from .engine import (
    BudgetSpec,
    EngineOptions,
    EvaluationRecord,
    TuningRun,
    best_feasible,
    run_bo_loop,
    run_doe,
)
from .feasibility import (
    FeasibilityModel,
    ThresholdSpec,
    rf_fit,
    rf_predict_proba,
    sample_feasibility_threshold,
)
from .interface import (
    ExternalEvaluator,
    ProtocolError,
    ResultsWriter,
    Scenario,
    ScenarioError,
    evaluate_external,
    load_scenario,
    make_evaluator,
    read_results,
    write_results,
)
from .space import (
    Parameter,
    SearchSpace,
    SpaceError,
    neighbors,
    sample_uniform,
    transform_value,
)
from .surrogate import (
    GPHyperparameters,
    GPModel,
    LengthscalePrior,
    SurrogateError,
    distance,
    gp_fit,
    gp_predict,
    kernel,
    log_marginal_posterior,
)

__version__ = "0.1.0"
