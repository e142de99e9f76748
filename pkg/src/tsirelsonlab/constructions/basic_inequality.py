"""Reduction of a functional's action on an R.I.S. to the auxiliary space.

Given f, an R.I.S. (x_k) and scalars (λ_k), the reducer builds g in W′
(or W′ without one special operation) such that

    |f(Σ_{k∈I} λ_k x_k)| ≤ C·(g(Σ_{k∈I}|λ_k|e_k) + ε·Σ_{k∈I}|λ_k|)

by walking the tree of f. At each node the weight of f is compared
with the weights m_{j_k} attached to the blocks:

* a special functional of the excluded index collapses to the unit
  leaf at the largest |λ_k|
* a weight below every m_{j_k} keeps the node, splitting the blocks
  between the children and the blocks met by several children
* a weight between m_{j_{k0}} and m_{j_{k0+1}} collapses to e_{k0}*
* a weight above every m_{j_{k+1}} gives zero

"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from .. import exceptions
from ..core import Interval, RationalVector, as_fraction, fraction_to_str, make_vector
from ..normset import (
    ZERO,
    FactorSource,
    FamilySpec,
    FunctionalTree,
    Leaf,
    Node,
    OpKind,
    OpTag,
    SizeSource,
    check_membership,
    evaluate,
    tree_to_json,
)
from .averages import RisData

log = logging.getLogger(__name__)


SPECIAL_HIT = "special-hit"
SPLIT = "split"
WEIGHT_WINDOW = "weight-window"
NEGLIGIBLE = "negligible"
UNIT = "unit"


@dataclass
class BasicInequalityAudit:
    lhs: Fraction
    rhs: Fraction
    cases: Counter = field(default_factory=Counter)
    membership: Optional[object] = None
    weight_preserved: bool = True

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    def to_json(self) -> dict:
        return {
            "lhs": fraction_to_str(self.lhs),
            "rhs": fraction_to_str(self.rhs),
            "holds": self.holds,
            "cases": dict(self.cases),
            "membership": None if self.membership is None else self.membership.to_json(),
            "weight_preserved": self.weight_preserved,
        }


def _as_lambdas(lam: Union[Sequence, Mapping], count: int) -> dict:
    if isinstance(lam, Mapping):
        values = {int(k): as_fraction(v) for k, v in lam.items()}
    else:
        values = {k: as_fraction(v) for k, v in enumerate(lam, start=1)}
    if any(k < 1 or k > count for k in values):
        raise exceptions.PreconditionFailed(f"λ is indexed outside 1..{count}")
    return values


def auxiliary_tag(tag: OpTag) -> OpTag:
    """The W′ operation with the same weight as *tag*."""
    if tag.kind is OpKind.SPECIAL:
        return OpTag(tag.j, size=SizeSource.FOUR_N_ODD, factor=FactorSource.INV_M_EVEN)
    if tag.kind is OpKind.PLAIN and tag.size is SizeSource.N_J:
        return OpTag(tag.j, size=SizeSource.FOUR_N_J)
    raise exceptions.InvalidTree(f"operation {tag} has no counterpart in W′")


def weighted_combination(ris: RisData, lam: Mapping[int, Fraction], I: Interval) -> RationalVector:
    """Σ_{k∈I} λ_k x_k."""
    total = RationalVector()
    for k in I:
        total = total + ris.blocks[k - 1].scale(lam.get(k, Fraction(0)))
    return total


class _Reducer:
    def __init__(self, ris: RisData, lam: dict, j0: Optional[int], fam: FamilySpec):
        self.ris = ris
        self.lam = lam
        self.j0 = j0
        self.fam = fam
        self.weights = [fam.schedule.weight(j) for j in ris.js]
        self.ranges = [x.range for x in ris.blocks]
        self.cases = Counter()

    def block_of(self, r: int, I: Interval) -> Optional[int]:
        for k in I:
            if r in self.ranges[k - 1]:
                return k
        return None

    def reduce(self, f: FunctionalTree, I: Interval) -> FunctionalTree:
        if f is ZERO:
            return ZERO
        if isinstance(f, Leaf):
            self.cases[UNIT] += 1
            k = self.block_of(f.index, I)
            return ZERO if k is None else Leaf(k)
        if not isinstance(f, Node):
            raise exceptions.InvalidTree(f"cannot reduce the tree node {f!r}")
        w = f.weight
        if f.op.kind is OpKind.SPECIAL and self.j0 is not None and f.op.j == self.j0:
            return self.special_hit(f, I)
        below = [k for k in I if self.weights[k - 1] <= w]
        if not below:
            return self.split(f, I)
        k0 = max(below)
        if k0 < len(self.weights) and self.weights[k0] <= w:
            self.cases[NEGLIGIBLE] += 1
            return ZERO
        self.cases[WEIGHT_WINDOW] += 1
        return Leaf(k0)

    def special_hit(self, f: Node, I: Interval) -> FunctionalTree:
        self.cases[SPECIAL_HIT] += 1
        magnitudes = {k: abs(self.lam.get(k, Fraction(0))) for k in I}
        k0 = max(I, key=lambda k: (magnitudes[k], -k))
        C, eps = self.ris.C, self.ris.eps
        bound = C * (magnitudes[k0] + eps * sum(magnitudes.values()))
        value = abs(evaluate(f, weighted_combination(self.ris, self.lam, I)))
        if value > bound:
            raise exceptions.Inapplicable(
                f"special functional of index {self.j0} acts by {value} on {I}, "
                f"above the assumed bound {bound}"
            )
        return Leaf(k0)

    def split(self, f: Node, I: Interval) -> FunctionalTree:
        self.cases[SPLIT] += 1
        children = list(f.effective_children)
        ranges = [child.range for child in children]
        members = {position: [] for position in range(len(children))}
        shared = []
        for k in I:
            hits = [
                position
                for position, E in enumerate(ranges)
                if E is not None and E.intersection(self.ranges[k - 1]) is not None
            ]
            if len(hits) == 1:
                members[hits[0]].append(k)
            elif len(hits) > 1:
                shared.append(k)
        pieces = []
        for position, child in enumerate(children):
            ks = members[position]
            if not ks:
                continue
            g = self.reduce(child, Interval(min(ks), max(ks)))
            if g is not ZERO:
                pieces.append((g.range.lo, g))
        pieces.extend((k, Leaf(k)) for k in shared)
        if not pieces:
            return ZERO
        pieces.sort(key=lambda item: item[0])
        tag = auxiliary_tag(f.op)
        return Node(op=tag, factor=f.factor, children=tuple(g for _, g in pieces))


def reduce_basic_inequality(
    f: FunctionalTree,
    ris: RisData,
    lam: Union[Sequence, Mapping],
    I: Interval,
    j0: Optional[int] = None,
    *,
    fam: FamilySpec,
    check_input: bool = True,
) -> tuple[FunctionalTree, BasicInequalityAudit]:
    """Construct g and assert the basic inequality exactly.

    With *j0* the special functionals of that index are assumed to act
    on Σλ_k x_k by at most C(max|λ_k| + εΣ|λ_k|); each one met in the
    tree is checked against that assumption and ``Inapplicable`` is
    raised if it fails.
    """
    if check_input:
        report = check_membership(f, fam)
        if not report.ok:
            raise exceptions.InvalidTree(f"f is not a member of {fam.name}: {report}")
    if I.lo < 1 or I.hi > len(ris):
        raise exceptions.PreconditionFailed(f"interval {I} leaves 1..{len(ris)}")
    lam = _as_lambdas(lam, len(ris))
    reducer = _Reducer(ris, lam, j0, fam)
    g = reducer.reduce(f, I)
    auxiliary = (
        FamilySpec.w_prime(fam.schedule)
        if j0 is None
        else FamilySpec.w_prime_j0(fam.schedule, j0)
    )
    membership = check_membership(g, auxiliary)
    if not membership.ok:
        raise exceptions.AuditFailure(f"reduced functional left {auxiliary.name}: {membership}")
    magnitudes = make_vector((k, abs(lam.get(k, 0))) for k in I)
    total = sum((abs(lam.get(k, Fraction(0))) for k in I), Fraction(0))
    lhs = abs(evaluate(f, weighted_combination(ris, lam, I)))
    rhs = ris.C * (evaluate(g, magnitudes) + ris.eps * total)
    preserved = not isinstance(g, Node) or (isinstance(f, Node) and g.weight == f.weight)
    audit = BasicInequalityAudit(
        lhs=lhs,
        rhs=rhs,
        cases=reducer.cases,
        membership=membership,
        weight_preserved=preserved,
    )
    if not audit.holds:
        raise exceptions.AuditFailure(
            f"basic inequality fails: {lhs} > {rhs} (g = {tree_to_json(g)})"
        )
    log.debug(f"Basic inequality {lhs} ≤ {rhs} with cases {dict(reducer.cases)}")
    return g, audit
