"""Exception types shared across the package."""


class CgmrfError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(CgmrfError):
    """A factorization hit a zero or negative pivot.

    Typically raised when an intrinsic (rank-deficient) precision is passed
    where a proper one is required.
    """


class DimensionMismatch(CgmrfError):
    """Operands have incompatible shapes."""


class ConvergenceFailure(CgmrfError):
    """An iterative kernel (SVD) failed to converge."""


class RankDeficient(CgmrfError):
    """A constraint matrix (or one of its blocks) does not have full row rank."""


class RankAssumptionViolated(CgmrfError):
    """The rank structure required for the transformed-basis results does not hold."""


class IntrinsicNotSamplable(CgmrfError):
    """Unconditioned intrinsic fields have no proper distribution to sample from."""


class DenseConstraintGram(CgmrfError):
    """The dense k-by-k constraint Gram matrix A Q^-1 A^T is singular."""


class InvalidDomain(CgmrfError):
    """Mesh domain or resolution is unusable."""


class DegenerateTriangle(CgmrfError):
    """A mesh triangle has zero area."""


class PointOutsideDomain(CgmrfError):
    """A query location falls outside the meshed rectangle."""


class UnsupportedAlpha(CgmrfError):
    """Requested SPDE exponent is outside the implemented set."""


class UnsupportedNu(CgmrfError):
    """Requested Matern smoothness is outside the implemented set."""


class IllConditioned(CgmrfError):
    """A dense covariance has a significantly negative eigenvalue."""


class SchemaMismatch(CgmrfError):
    """A results CSV does not carry the expected columns."""


class OverlappingConstraintRows(UserWarning):
    """Constraint thinning produced rows whose supports overlap.

    Emitted as a warning: the blocked basis construction then degrades to a
    single-block (full SVD) build, which is still correct.
    """
