"""Diagonal operators over interval groups and the operator factory."""

from .operators import (
    DiagonalOperator,
    alpha,
    apply_diagonal,
    certify_alpha_sum,
    find_lacunary,
    validate_lacunary,
)
from .factory import build_noncompact_operator, toy_biorthogonal_system
