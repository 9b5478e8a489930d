"""Central numeric policy: every tolerance used by the numeric kernels."""

from dataclasses import dataclass


@dataclass(frozen=True)
class NumericPolicy:
    """Tolerances shared by all modules.

    pivot_tol       relative pivot threshold for Cholesky positive-definiteness
    residual_tol    relative residual accepted from pseudo-inverse solves
    drop_tol        absolute magnitude below which sparse products drop entries
    rank_tol        relative singular-value threshold for rank decisions
    orth_tol        max-norm tolerance for orthonormality checks
    dense_block_cap largest dense block (rows) accepted by the small SVD kernel
    """

    pivot_tol: float = 1e-12
    residual_tol: float = 1e-8
    drop_tol: float = 1e-14
    rank_tol: float = 1e-10
    orth_tol: float = 1e-10
    dense_block_cap: int = 2048


DEFAULT_POLICY = NumericPolicy()
