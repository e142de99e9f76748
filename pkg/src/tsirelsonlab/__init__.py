from .core import (
    Interval,
    ParameterSchedule,
    RationalVector,
    Regime,
    make_vector,
    minimal_paper_schedule,
    validate_schedule,
)
from .engine import NormCertificate, norm, norm_bruteforce, norm_mixed
from .jamesification import JVector, jnorm, lift_certificate
from .normset import FamilySpec, Leaf, Node, check_membership, evaluate
from .diagonal import DiagonalOperator, alpha, apply_diagonal, build_noncompact_operator
