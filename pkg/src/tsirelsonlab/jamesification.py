"""The Jamesified norm over interval leaves and its certificate lift.

Vectors of the Jamesified space are written against the basis (t_n).
Its norming set D₀ has the leaves ``±χ_I`` for finite intervals I and
the same plain operations as the mixed Tsirelson family.

"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from . import exceptions
from .core import (
    PAPER_CONDITIONS,
    ParameterSchedule,
    RationalVector,
    check_budget,
    flat_vector,
    fraction_to_str,
    hull,
    make_vector,
    validate_schedule,
)
from .engine import NormCertificate, norm, norm_mixed
from .normset import (
    ZERO,
    ChiLeaf,
    FamilySpec,
    FunctionalTree,
    Leaf,
    Node,
    check_membership,
    evaluate,
    negate,
    restrict_functional,
)

log = logging.getLogger(__name__)


class JVector(RationalVector):
    """A finitely supported vector against the basis (t_n)."""

    basis = "t"


def as_jvector(x: RationalVector) -> JVector:
    return JVector(x.coords)


def jnorm(x: RationalVector, s: ParameterSchedule, J: Optional[int] = None) -> NormCertificate:
    """The exact Jamesified norm with a D₀ certificate.

    The interval-leaf DP lets a leaf on a slot take the best subinterval
    sum, which is the largest prefix-sum difference over the slot.
    """
    fam = FamilySpec.jamesified(s, J)
    return norm(as_jvector(x), fam)


@dataclass
class BlockPairSystem:
    """Successive pairs (y_k, y_k*) with ran y_k = ran y_k* and y_k*(y_k) = 1.

    ``parent`` is an optional functional Φ with Φ(y_k) = 1 for every k,
    whose restrictions to the hull of consecutive ranges lift the
    interval leaves ``χ_I`` of length at least two.
    """

    pairs: Sequence[tuple[RationalVector, FunctionalTree]]
    parent: Optional[FunctionalTree] = None

    def __post_init__(self):
        self.pairs = tuple(self.pairs)
        previous = None
        for k, (y, ystar) in enumerate(self.pairs, start=1):
            if not y or ystar is ZERO:
                raise exceptions.PreconditionFailed(f"pair {k} is zero")
            if y.range != ystar.range:
                raise exceptions.PreconditionFailed(
                    f"pair {k}: ran y_k = {y.range} but ran y_k* = {ystar.range}"
                )
            if evaluate(ystar, y) != 1:
                raise exceptions.PreconditionFailed(
                    f"pair {k}: y_k*(y_k) = {evaluate(ystar, y)} instead of 1"
                )
            if previous is not None and not previous.precedes(y.range):
                raise exceptions.PreconditionFailed(f"pair {k} is not successive")
            previous = y.range
        if self.parent is not None:
            for k, (y, _) in enumerate(self.pairs, start=1):
                if evaluate(self.parent, y) != 1:
                    raise exceptions.PreconditionFailed(
                        f"parent functional does not norm y_{k}"
                    )

    def __len__(self):
        return len(self.pairs)

    def vector(self, mu: Sequence[Fraction]) -> RationalVector:
        """Σ μ_k y_k."""
        total = RationalVector()
        for coefficient, (y, _) in zip(mu, self.pairs):
            total = total + y.scale(coefficient)
        return total


def lift_certificate(
    g: FunctionalTree, sys: BlockPairSystem, family: Optional[FamilySpec] = None
) -> FunctionalTree:
    """Carry a D₀ functional g to f with f(Σμ_k y_k) = g(Σμ_k t_k).

    Unit leaves and one-point intervals become ±y_k*, longer intervals
    become the parent restricted to the hull of their ranges, and
    operations are copied node by node.
    """
    if g is not ZERO and any(k < 1 or k > len(sys) for k in g.support):
        raise exceptions.InvalidTree(
            f"support of g leaves 1..{len(sys)}: {sorted(g.support)}"
        )
    if family is not None:
        report = check_membership(g, family)
        if not report.ok:
            raise exceptions.InvalidTree(f"g is not in D₀: {report}")

    def pair_range(k):
        return sys.pairs[k - 1][0].range

    def lift(node):
        if node is ZERO:
            return ZERO
        if isinstance(node, Leaf):
            ystar = sys.pairs[node.index - 1][1]
            return ystar if node.sign > 0 else negate(ystar)
        if isinstance(node, ChiLeaf):
            if len(node.interval) == 1:
                return lift(Leaf(node.interval.lo, node.sign))
            if sys.parent is None:
                raise exceptions.InvalidTree(
                    f"interval leaf {node.interval} needs a parent functional"
                )
            window = hull([pair_range(node.interval.lo), pair_range(node.interval.hi)])
            lifted = restrict_functional(sys.parent, window)
            return lifted if node.sign > 0 else negate(lifted)
        children = tuple(lift(child) for child in node.children)
        lifted = Node(node.op, node.factor, children)
        if node.window is not None:
            lo, hi = node.window.lo, min(node.window.hi, len(sys))
            if lo > hi:
                return ZERO
            lifted = restrict_functional(lifted, hull([pair_range(lo), pair_range(hi)]))
        return lifted

    return lift(g)


@dataclass
class LiftReport:
    ok: bool
    mismatches: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def verify_lift(g: FunctionalTree, f: FunctionalTree, sys: BlockPairSystem) -> LiftReport:
    """Compare g(t_k) with f(y_k) for every k.

    Both sides are linear in μ, so agreement on every basis vector is
    agreement for all scalar tuples.
    """
    mismatches = []
    for k, (y, _) in enumerate(sys.pairs, start=1):
        left = evaluate(g, make_vector([(k, 1)]))
        right = evaluate(f, y)
        if left != right:
            mismatches.append((k, left, right))
    return LiftReport(ok=not mismatches, mismatches=mismatches)


def alternating_vector(N: int) -> JVector:
    """(1/N)Σ_{k≤N} (−1)^{k+1} t_k."""
    return make_vector(
        ((k, Fraction((-1) ** (k + 1), N)) for k in range(1, N + 1)), cls=JVector
    )


@dataclass
class JamesExamples:
    j: int
    v_half: JVector
    v_alt: JVector
    half_norm: NormCertificate
    alt_norm: NormCertificate
    flat_norm: NormCertificate
    bound: Fraction
    bound_asserted: bool

    @property
    def ratio(self) -> Fraction:
        """The unconditionality gap ‖v_half‖ / ‖v_alt‖."""
        return self.half_norm.value / self.alt_norm.value

    def to_json(self) -> dict:
        return {
            "j": self.j,
            "v_half": fraction_to_str(self.half_norm.value),
            "v_alt": fraction_to_str(self.alt_norm.value),
            "flat": fraction_to_str(self.flat_norm.value),
            "ratio": fraction_to_str(self.ratio),
            "bound": fraction_to_str(self.bound),
            "bound_asserted": self.bound_asserted,
        }


def james_basis_examples(
    j: int, s: ParameterSchedule, J: Optional[int] = None
) -> JamesExamples:
    """The two vectors showing that (t_n) is not unconditional.

    v_half = (1/2p_j)Σ_{k≤p_j} t_{2k−1} has norm 1/2, while the
    alternating v_alt has the norm of the flat average in T₀. The bound
    4/m_j on v_alt is asserted only when the schedule's growth
    conditions hold.
    """
    p = s.p(j)
    check_budget(2 * p, f"2·p_{j}")
    v_half = make_vector(
        ((2 * k - 1, Fraction(1, 2 * p)) for k in range(1, p + 1)), cls=JVector
    )
    v_alt = alternating_vector(2 * p)
    half_norm = jnorm(v_half, s, J)
    if half_norm.value != Fraction(1, 2):
        raise exceptions.AuditFailure(f"‖v_half‖ = {half_norm.value}, expected 1/2")
    alt_norm = jnorm(v_alt, s, J)
    flat = flat_vector(range(1, 2 * p + 1), Fraction(1, 2 * p))
    flat_norm = norm_mixed(flat, FamilySpec.t0(s, J))
    if flat_norm.value != alt_norm.value:
        raise exceptions.AuditFailure(
            f"alternating norm {alt_norm.value} differs from the flat norm {flat_norm.value}"
        )
    bound = Fraction(4, s.weight(j))
    try:
        asserted = validate_schedule(s, j).holds(*PAPER_CONDITIONS)
    except exceptions.PreconditionFailed:
        asserted = False
    if asserted and alt_norm.value > bound:
        raise exceptions.AuditFailure(f"‖v_alt‖ = {alt_norm.value} exceeds 4/m_{j}")
    if not asserted:
        log.warning(f"Bound 4/m_{j} not asserted: schedule growth conditions fail")
    return JamesExamples(
        j=j,
        v_half=v_half,
        v_alt=v_alt,
        half_norm=half_norm,
        alt_norm=alt_norm,
        flat_norm=flat_norm,
        bound=bound,
        bound_asserted=asserted,
    )
