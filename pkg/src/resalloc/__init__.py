"""Dual first-order methods for convex resource allocation.

A Center must buy at least ``C`` units of a product from ``n`` producers with
increasing, strongly convex production costs. The package solves the dual
price problem with projected subgradient, composite gradient and accelerated
composite gradient methods, reconstructs primal production plans by
averaging, and checks the a-priori convergence bounds at run time.
"""

from .errors import InvalidInputError, UnsupportedInstanceError
from .model import (
    CallableCost,
    CostFunction,
    QuadraticCost,
    ScalarInstance,
    SeparableCost,
    VectorInstance,
    best_response,
    best_response_vector,
    dual_value,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    primal_value,
    save_instance,
    validate,
)
from .prox import WaterFillResult, composite_step, vector_prox, water_fill
from .solvers import (
    IterationRecord,
    RunResult,
    SolverConfig,
    accelerated_solve,
    accelerated_solve_vector,
    alpha_sequence,
    composite_solve,
    composite_solve_vector,
    solve,
    subgradient_lambda,
    subgradient_solve,
)
from .certificates import (
    Certificate,
    equilibrium,
    measure,
    p_max_bound,
    theorem1_requirements,
    theorem2_bounds,
    theorem3_bounds,
    vector_theorem_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "CallableCost",
    "Certificate",
    "CostFunction",
    "InvalidInputError",
    "IterationRecord",
    "QuadraticCost",
    "RunResult",
    "ScalarInstance",
    "SeparableCost",
    "SolverConfig",
    "UnsupportedInstanceError",
    "VectorInstance",
    "WaterFillResult",
    "accelerated_solve",
    "accelerated_solve_vector",
    "alpha_sequence",
    "best_response",
    "best_response_vector",
    "composite_solve",
    "composite_solve_vector",
    "composite_step",
    "dual_value",
    "equilibrium",
    "instance_from_dict",
    "instance_to_dict",
    "load_instance",
    "measure",
    "p_max_bound",
    "primal_value",
    "save_instance",
    "solve",
    "subgradient_lambda",
    "subgradient_solve",
    "theorem1_requirements",
    "theorem2_bounds",
    "theorem3_bounds",
    "validate",
    "vector_prox",
    "vector_theorem_bounds",
    "water_fill",
]
