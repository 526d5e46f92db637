"""Safe simultaneous screening of inactive features and samples for sparse
SVMs with smoothed hinge loss, plus the benchmark harness around it."""

from .backend import NUMBA_ENABLED, backend_name
from .boundary import (
    GridRow,
    GridSpec,
    alpha_max,
    beta_max,
    build_grid,
    closed_form_reference,
    log_fracs,
)
from .data import (
    Dataset,
    LibsvmFormatError,
    SparseVec,
    SynthSpec,
    generate_synthetic,
    load_libsvm,
    parse_libsvm,
    save_libsvm,
    serialize_libsvm,
)
from .estimation import (
    Ball,
    ScreeningState,
    check_containment,
    dual_ball,
    primal_ball,
)
from .harness import (
    MODES,
    Metrics,
    PathResult,
    RunRecord,
    compute_metrics,
    read_records,
    run_path,
    write_records,
)
from .objective import (
    GapReport,
    Params,
    SolutionPair,
    dual_gradient,
    dual_objective,
    duality_gap,
    margins,
    primal_at_zero,
    primal_objective,
    recover_primal,
    smoothed_loss,
    soft_threshold,
)
from .screening import (
    ORDERS,
    SifsReport,
    apply_ifs,
    apply_iss,
    ifs_scores,
    iss_bounds,
    screen_once,
    sifs,
)
from .solver import (
    NonConvergenceError,
    ScaledProblem,
    SolveResult,
    SolverConfig,
    build_scaled,
    extend_and_recover,
    solve_full,
    solve_scaled,
)
from .verification import (
    CertificationReport,
    OracleSolution,
    certify,
    oracle_solve,
    projected_gradient_solve,
)

__version__ = "0.1.0"
