"""Special sequences, special functionals and the tree-like property.

A special sequence for the index j is a successive sequence
f_1 < f_2 < … of at most n_{2j+1} functionals where f_1 comes from an
(A_{n_{2k}}, 1/m_{2k}) operation with k odd and m_{2k} > n_{2j+1}², and
each later weight index is dictated by the coding of the functionals
before it.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .. import exceptions
from ..core import Interval
from ..normset import (
    FactorSource,
    FamilySpec,
    FunctionalTree,
    Leaf,
    Node,
    OpKind,
    SizeSource,
    check_membership,
    coefficients,
)
from .coding import CodingRegistry, in_omega1

log = logging.getLogger(__name__)


NONEMPTY = "nonempty"
LENGTH = "length"
SUCCESSIVE = "successive"
MEMBERSHIP = "membership"
SHAPE = "shape"
FIRST_WEIGHT = "first-weight"
CODING = "coding"


@dataclass
class SpecialSequenceReport:
    ok: bool = True
    failures: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    relaxed: bool = False

    def fail(self, clause: str, detail: str) -> None:
        self.ok = False
        if clause not in self.failures:
            self.failures.append(clause)
            self.details[clause] = detail

    def __bool__(self):
        return self.ok

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "relaxed": self.relaxed,
            "failures": {clause: self.details[clause] for clause in self.failures},
        }


def _is_plain_weight_node(f) -> bool:
    return (
        isinstance(f, Node)
        and f.window is None
        and f.op.kind is OpKind.PLAIN
        and f.op.size is SizeSource.N_J
        and f.op.factor is FactorSource.INV_M_J
    )


def first_weight_threshold(fam: FamilySpec, j: int) -> int:
    """n_{2j+1}²: m_{2k} must exceed it (√m_{2k} > n_{2j+1})."""
    return fam.schedule.size(2 * j + 1) ** 2


def verify_special_sequence(
    fs: Sequence[FunctionalTree],
    j: int,
    reg: Optional[CodingRegistry],
    fam: FamilySpec,
    *,
    relaxed_threshold: Optional[int] = None,
    check_members: bool = True,
) -> SpecialSequenceReport:
    """Check every clause of the special-sequence definition.

    Each violated clause is named in the report. A relaxed threshold
    (argument or family default) replaces n_{2j+1}² for the first
    weight and stamps the report ``relaxed``.
    """
    s = fam.schedule
    report = SpecialSequenceReport()
    fs = list(fs)
    if not fs:
        report.fail(NONEMPTY, "empty sequence")
        return report
    if not s.has_size(2 * j + 1):
        report.fail(LENGTH, f"n_{2 * j + 1} is not defined")
        return report
    if len(fs) > s.size(2 * j + 1):
        report.fail(LENGTH, f"{len(fs)} functionals exceed n_{2 * j + 1}")
    ranges = [getattr(f, "range", None) for f in fs]
    if any(r is None for r in ranges):
        report.fail(SUCCESSIVE, "zero functional in the sequence")
        return report
    for i, (left, right) in enumerate(zip(ranges, ranges[1:]), start=1):
        if not left.precedes(right):
            report.fail(SUCCESSIVE, f"f_{i} and f_{i + 1} overlap: {left}, {right}")
    if check_members:
        for i, f in enumerate(fs, start=1):
            membership = check_membership(f, fam)
            if not membership.ok:
                report.fail(MEMBERSHIP, f"f_{i}: {membership}")
    for i, f in enumerate(fs, start=1):
        if not _is_plain_weight_node(f):
            report.fail(SHAPE, f"f_{i} is not the result of a plain operation")
    if SHAPE in report.failures:
        return report
    # First weight
    first = fs[0].op.j
    threshold = first_weight_threshold(fam, j)
    relaxed = relaxed_threshold if relaxed_threshold is not None else fam.relaxed_threshold
    if first % 2 or not in_omega1(first // 2):
        report.fail(FIRST_WEIGHT, f"f_1 has weight index {first}, not 2k with k odd")
    elif not s.has_weight(first):
        report.fail(FIRST_WEIGHT, f"m_{first} is not defined")
    elif not s.weight(first) > threshold:
        if relaxed is not None and s.weight(first) > relaxed:
            report.relaxed = True
            log.warning(
                f"Special sequence for j={j} uses the relaxed threshold {relaxed}"
            )
        else:
            report.fail(FIRST_WEIGHT, f"m_{first} does not exceed {threshold}")
    if SUCCESSIVE in report.failures:
        return report
    # Coding
    if len(fs) > 1 and reg is None:
        report.fail(CODING, "no coding registry to check successor weights")
        return report
    for i in range(1, len(fs)):
        expected = reg.lookup(fs[:i])
        actual = fs[i]
        if expected is None:
            report.fail(CODING, f"σ(f_1..f_{i}) has not been assigned")
        elif actual.op.j != expected or actual.factor != Fraction(1, s.weight(expected)):
            report.fail(
                CODING,
                f"f_{i + 1} has weight index {actual.op.j}, σ gives {expected}",
            )
    return report


def smallest_first_index(
    fam: FamilySpec, j: int, relaxed_threshold: Optional[int] = None
) -> int:
    """The smallest 2k, k odd, whose weight clears the first-weight threshold."""
    s = fam.schedule
    threshold = first_weight_threshold(fam, j)
    if relaxed_threshold is not None:
        threshold = min(threshold, relaxed_threshold)
    for k in range(1, len(s.m) // 2 + 1, 2):
        if s.weight(2 * k) > threshold:
            return 2 * k
    raise exceptions.Refusal(f"no m_2k with k odd exceeds {threshold}")


def build_special_sequence(
    groups: Sequence[Sequence],
    j: int,
    reg: CodingRegistry,
    fam: FamilySpec,
    *,
    first_index: Optional[int] = None,
    relaxed_threshold: Optional[int] = None,
) -> list[Node]:
    """Build f_1 < f_2 < … from successive groups of children.

    Integers in a group stand for unit leaves. The first weight index
    defaults to the smallest admissible 2k; later ones come from σ.
    """
    s = fam.schedule
    if not groups:
        raise exceptions.PreconditionFailed("no groups to build from")
    if len(groups) > s.size(2 * j + 1):
        raise exceptions.PreconditionFailed(
            f"{len(groups)} groups exceed n_{2 * j + 1} = {s.size(2 * j + 1)}"
        )
    if first_index is None:
        first_index = smallest_first_index(fam, j, relaxed_threshold)
    sequence = []
    for position, group in enumerate(groups):
        children = [Leaf(c) if isinstance(c, int) else c for c in group]
        index = first_index if position == 0 else reg.sigma(sequence)
        op = fam.lookup(index)
        if len(children) > op.size:
            raise exceptions.PreconditionFailed(
                f"group {position + 1} has {len(children)} children, n_{index} = {op.size}"
            )
        sequence.append(Node.of(op, children))
    log.debug(f"Built special sequence of length {len(sequence)} for j={j}")
    return sequence


def special_functional(
    fs: Sequence[FunctionalTree], j: int, fam: FamilySpec, window: Optional[Interval] = None
) -> Node:
    """The 2j+1 special functional (1/m_{2j})(f_1 + … + f_d), optionally restricted."""
    return Node.of(fam.lookup(j, OpKind.SPECIAL), fs, window=window)


@dataclass
class TreeLikeReport:
    kappa: int
    pairs_checked: int


def check_tree_like(phi: Sequence[Node], psi: Sequence[Node]) -> TreeLikeReport:
    """Check that two special sequences branch like a tree.

    κ is the first position where they differ (one past the shorter
    length when one extends the other). After κ, and across positions
    i < l, the weights of the two sequences must be distinct.
    """
    phi, psi = list(phi), list(psi)
    shorter = min(len(phi), len(psi))
    kappa = shorter + 1
    for i in range(shorter):
        if coefficients(phi[i]) != coefficients(psi[i]):
            kappa = i + 1
            break
    weights_phi = [f.op.weight_index for f in phi]
    weights_psi = [f.op.weight_index for f in psi]
    checked = 0
    for i in range(kappa, shorter):
        checked += 1
        if weights_phi[i] == weights_psi[i]:
            raise exceptions.RegistryCorruption(
                f"weights agree at position {i + 1} after the branch point {kappa}"
            )
    for first, second in ((weights_phi, weights_psi), (weights_psi, weights_phi)):
        for i, left in enumerate(first):
            for right in second[i + 1 :]:
                checked += 1
                if left == right:
                    raise exceptions.RegistryCorruption(
                        f"weight {left} repeats across positions of the two sequences"
                    )
    return TreeLikeReport(kappa=kappa, pairs_checked=checked)
