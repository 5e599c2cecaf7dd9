"""Numerical p-Yamabe solver on weighted graphs with p -> 1 continuation and 1-Yamabe certificate checks."""

import types as _types

from .calculus import (
    flux,
    grad_p_energy,
    integrate_edge,
    integrate_vertex,
    one_laplacian_interval,
    p_laplacian,
    p_laplacian_field,
    sgn_interval,
    w1p_norm,
)
from .continuation import (
    LimitCertificate,
    PSchedule,
    check_lemma4_bounds,
    extract_limit_data,
    rescale_to_hat,
    run_continuation,
)
from .errors import (
    BoundViolation,
    ContinuationError,
    ConvergenceError,
    DegenerateInputError,
    DomainError,
    GraphLoadError,
    ParameterError,
    YamabeError,
)
from .graph import EdgeField, ProblemData, WeightedGraph, graph_from_dict, load_graph, save_graph
from .interval import Interval
from .solver import (
    BoundReport,
    PSolution,
    SolverConfig,
    check_lemma2_bounds,
    check_lemma3_bounds,
    compute_lambda,
    el_residual,
    eval_I,
    grad_I,
    minimize_I,
    project_to_gamma,
)
from .verifier import (
    CertificateReport,
    InclusionReport,
    a_minus_interval,
    a_plus_interval,
    brute_force_search,
    default_grid,
    verify_certificate,
    verify_inclusion,
)

__version__ = "0.1.0"
__all__ = [name for name, obj in globals().items()
           if not name.startswith("_") and not isinstance(obj, _types.ModuleType)]
