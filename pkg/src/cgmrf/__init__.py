"""Constrained Gaussian Markov random fields.

Simulation, likelihood evaluation, and posterior inference for GMRFs under
sparse hard constraints A x = b and soft observations y ~ N(B x, sigma2 I),
via an orthonormal change of basis that makes the constraints axis-aligned.
Includes the classical conditioning-by-kriging baseline, an SPDE/FEM Matern
construction for constrained Gaussian-process regression, and a benchmark
CLI (`cgmrf bench ...`).
"""

from .basis import (ConstraintBasis, ConstraintSet, build_basis_blocked,
                    build_basis_svd, find_blocks, identity_basis, transform)
from .bessel import kv_int
from .errors import (CgmrfError, ConvergenceFailure, DegenerateTriangle,
                     DenseConstraintGram, DimensionMismatch, IllConditioned,
                     IntrinsicNotSamplable, InvalidDomain, NotPositiveDefinite,
                     OverlappingConstraintRows, PointOutsideDomain,
                     RankAssumptionViolated, RankDeficient, SchemaMismatch,
                     UnsupportedAlpha, UnsupportedNu)
from .gmrf import Gmrf, log_density, make_rng, sample
from .hard import (ConditionalGmrf, conditional, krige_sample, loglik_standard,
                   loglik_transformed, oracle_conditional, sample_conditional)
from .policy import DEFAULT_POLICY, NumericPolicy
from .soft import (PosteriorGmrf, SoftObservations, loglik_soft, posterior,
                   sample_posterior)
from .sparse_linalg import (CholFactor, NullSpaceBasis, cholesky,
                            log_pseudo_det, pseudo_solve, svd_small,
                            tri_solve, triple_product)
from .spde import (Mesh, SpdeModel, assemble, build_mesh, build_precision,
                   derivative_matrix, divergence_constraints, divfree_kernel,
                   divfree_kernel_baseline, matern_cov, matern_variance,
                   obs_matrix)

__version__ = "0.1.0"

__all__ = [
    "Gmrf", "sample", "log_density", "make_rng",
    "ConstraintSet", "ConstraintBasis", "find_blocks", "build_basis_svd",
    "build_basis_blocked", "identity_basis", "transform",
    "ConditionalGmrf", "oracle_conditional", "krige_sample",
    "loglik_standard", "loglik_transformed", "conditional", "sample_conditional",
    "SoftObservations", "PosteriorGmrf", "posterior", "loglik_soft",
    "sample_posterior",
    "CholFactor", "NullSpaceBasis", "cholesky", "tri_solve", "svd_small",
    "pseudo_solve", "log_pseudo_det", "triple_product",
    "Mesh", "SpdeModel", "build_mesh", "assemble", "build_precision",
    "obs_matrix", "derivative_matrix", "divergence_constraints",
    "matern_cov", "matern_variance", "divfree_kernel", "divfree_kernel_baseline",
    "kv_int",
    "NumericPolicy", "DEFAULT_POLICY",
    "CgmrfError", "NotPositiveDefinite", "DimensionMismatch",
    "ConvergenceFailure", "RankDeficient", "RankAssumptionViolated",
    "IntrinsicNotSamplable", "DenseConstraintGram", "PointOutsideDomain",
    "UnsupportedAlpha", "UnsupportedNu", "IllConditioned", "InvalidDomain",
    "DegenerateTriangle", "OverlappingConstraintRows", "SchemaMismatch",
]
