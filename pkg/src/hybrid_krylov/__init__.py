"""Matrix-free hybrid Krylov projection methods for ill-posed inverse problems.

The pieces compose in layers: operators (matrix-free forward maps),
testproblems (synthetic deblurring / tomography instances), krylov
(incremental factorizations), projected (small regularized subproblems),
paramselect (per-iteration lambda rules), hybrid (iteration drivers),
direct (dense oracles), nonlinear (Gauss-Newton and variable projection),
cli (experiment runner).
"""

from .operators import (
    BlurOperator,
    DenseMatrixMap,
    DiagonalMap,
    FirstDifferenceInverse,
    IdentityMap,
    LinearMap,
    ProductMap,
    TomoOperator,
    adjoint_mismatch,
    build_gaussian_psf,
    build_tomo,
    estimate_norm,
    to_dense,
)
from .testproblems import (
    Image,
    TestProblem,
    add_noise,
    deblur_phantom,
    estimate_noise_level,
    estimate_noise_sigma,
    make_deblur_problem,
    make_tomo_problem,
    shepp_logan,
)
from .krylov import (
    ArnoldiFactorization,
    FlexArnoldiFactorization,
    FlexGKBFactorization,
    GKBFactorization,
    arnoldi_init,
    arnoldi_step,
    flex_arnoldi_init,
    flex_arnoldi_step,
    flex_gkb_init,
    flex_gkb_step,
    gkb_init,
    gkb_step,
)
from .projected import (
    ProjectedProblem,
    ProjectedSolve,
    build_lsmr_projected,
    filter_factors,
    lift_solution,
    small_svd,
    solve_projected_tikhonov,
    solve_projected_tsvd,
)
from .paramselect import (
    DiscrepancyNotAttainable,
    QuadratureBounds,
    RuleConfig,
    lambda_grid,
    quadrature_bounds,
    rule_dp,
    rule_gcv,
    rule_lcurve,
    rule_optimal,
    rule_reginska_fixed_point,
    rule_upre,
    select_lambda,
)
from .hybrid import (
    GMRES_PLAIN,
    HYBRID_GMRES,
    HYBRID_LSMR,
    HYBRID_LSQR,
    IDENTITY,
    LSQR_PLAIN,
    RFACTOR,
    WEIGHTED_RFACTOR,
    HybridOptions,
    IterationRecord,
    RunLog,
    check_stopping,
    run_flexible_lp,
    run_hybrid,
    run_plain,
    run_priorconditioned,
    theorem_equivalence_check,
)
from .direct import (
    DenseSVD,
    FullRuleTable,
    dense_svd,
    full_rule_eval,
    tikhonov_direct,
    tsvd_direct,
)
from .nonlinear import (
    BlurWidthModel,
    ExpDecayModel,
    LinearResidualModel,
    NonlinearModel,
    SeparableModel,
    alternating_baseline,
    fd_jacobian_check,
    gauss_newton_hybrid,
    varpro_hybrid,
)

__version__ = "0.1.0"
