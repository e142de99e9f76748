"""Certificates that sums of the functionals φ_j lie in the norming set.

For successive sets F_j with #F_j = p_j the functionals
φ_j = (1/m_j)Σ_{i∈F_j} e_i* generate a c₀ spreading model because, for
s ≤ j_1 < … < j_s, the sum φ_{j_1} + … + φ_{j_s} is itself a single
(1/m_{j_1}) functional: each later F_{j_k} splits into p_{j_1}
successive pieces ψ_l^k, each a nested tree of the operations
j_1, …, j_k − 1.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import prod
from typing import Optional, Sequence

from .. import exceptions
from ..core import (
    ParameterSchedule,
    budget,
    check_budget,
    flat_vector,
    fraction_to_str,
    paper_weight,
)
from ..normset import (
    ZERO,
    FamilySpec,
    FunctionalTree,
    Leaf,
    MembershipReport,
    Node,
    check_membership,
    evaluate,
    tree_to_json,
)

log = logging.getLogger(__name__)


ORDER = "s_le_j1"
INCREASING = "increasing"
CARDINALITY = "cardinality"
SUCCESSIVE = "successive"
DIVISIBILITY = "divisibility"
FACTOR = "factor"
SIZE = "size"
MEMBERSHIP = "membership"
BRANCHES = "branches"


@dataclass
class SpreadingCertificate:
    s: int
    js: tuple
    f_sets: Optional[tuple]
    tree: Optional[Node]
    membership: Optional[MembershipReport]
    clauses: dict = field(default_factory=dict)
    branch_actions: tuple = ()
    symbolic: bool = False
    schedule: Optional[ParameterSchedule] = None

    @property
    def ok(self) -> bool:
        return all(self.clauses.values())

    def to_json(self) -> dict:
        data = {
            "s": self.s,
            "js": list(self.js),
            "symbolic": self.symbolic,
            "clauses": dict(self.clauses),
            "branch_actions": [fraction_to_str(v) for v in self.branch_actions],
        }
        if self.schedule is not None:
            data["schedule"] = self.schedule.to_json()
        if self.tree is not None:
            data["tree"] = tree_to_json(self.tree)
        if self.f_sets is not None:
            data["f_sets"] = [[f[0], f[-1]] for f in self.f_sets]
        return data


def consecutive_f_sets(js: Sequence[int], sched: ParameterSchedule, start: int = 1) -> tuple:
    """Successive sets F_{j_k} of p_{j_k} consecutive integers."""
    sizes = [sched.p(j) for j in js]
    check_budget(sum(sizes), "spreading support")
    sets, lo = [], start
    for size in sizes:
        sets.append(tuple(range(lo, lo + size)))
        lo += size
    return tuple(sets)


def nested_sum(items: Sequence[FunctionalTree], levels: Sequence[int], fam: FamilySpec):
    """(1/(m_{levels[0]}⋯)) Σ items as a nested tree of the listed operations.

    Each level splits the items evenly among the operation's slots; zero
    items are dropped and an empty subtree becomes ``ZERO``.
    """
    if not levels:
        if len(items) != 1:
            raise exceptions.InvalidTree(f"{len(items)} items left for a single slot")
        return items[0]
    op = fam.lookup(levels[0])
    width = len(items) // op.size
    children = [
        nested_sum(items[c * width : (c + 1) * width], levels[1:], fam)
        for c in range(op.size)
    ]
    children = [child for child in children if child is not ZERO]
    return Node.of(op, children) if children else ZERO


def _check_arithmetic(s: int, js: Sequence[int], sched: ParameterSchedule) -> dict:
    clauses = {}
    j1 = js[0]
    clauses[ORDER] = s <= j1
    clauses[INCREASING] = all(a < b for a, b in zip(js, js[1:]))
    clauses[DIVISIBILITY] = all(
        sched.p(j) == sched.p(j1) * prod(sched.size(i) for i in range(j1, j))
        for j in js[1:]
    )
    clauses[FACTOR] = all(
        sched.weight(j1) * prod(sched.weight(i) for i in range(j1, j)) == sched.weight(j)
        for j in js[1:]
    )
    clauses[SIZE] = s * sched.p(j1) <= sched.size(j1)
    return clauses


def _expected_actions(js: Sequence[int], sched: ParameterSchedule) -> tuple:
    """φ((1/p_{j_k})Σ_{F_{j_k}} e_i) computed from the decomposition."""
    j1 = js[0]
    actions = [Fraction(1, sched.weight(j1))]
    for j in js[1:]:
        pieces = sched.p(j1)
        piece = prod(sched.size(i) for i in range(j1, j))
        factor = Fraction(1, prod(sched.weight(i) for i in range(j1, j)))
        actions.append(Fraction(pieces * piece, sched.p(j)) * factor / sched.weight(j1))
    return tuple(actions)


def certify_c0_spreading(
    s: int,
    js: Sequence[int],
    f_sets: Optional[Sequence[Sequence[int]]],
    sched: ParameterSchedule,
    *,
    symbolic: bool = False,
) -> SpreadingCertificate:
    """Assemble φ = Σ_k φ_{j_k} as one (1/m_{j_1}) tree and check it.

    In symbolic mode no tree is built; the cardinality, divisibility,
    factor and size identities and the branch actions are checked in
    exact integer arithmetic, which is what paper-scale schedules
    allow. A violated precondition raises ``PreconditionFailed`` naming
    its clause.
    """
    js = tuple(js)
    if len(js) != s or s < 1:
        raise exceptions.PreconditionFailed(f"{len(js)} indices given for s={s}")
    if not all(sched.has_size(j) for j in js) or not sched.has_weight(js[-1]):
        raise exceptions.PreconditionFailed(f"schedule does not reach index {js[-1]}")
    clauses = _check_arithmetic(s, js, sched)
    failed = [name for name, holds in clauses.items() if not holds]
    if failed:
        raise exceptions.PreconditionFailed(f"clause {failed[0]} fails for s={s}, js={js}")
    expected = _expected_actions(js, sched)
    if symbolic:
        clauses[BRANCHES] = all(v == Fraction(1, sched.weight(j)) for v, j in zip(expected, js))
        log.info(f"Symbolic spreading certificate for js={js}: {clauses}")
        return SpreadingCertificate(
            s=s,
            js=js,
            f_sets=None,
            tree=None,
            membership=None,
            clauses=clauses,
            branch_actions=expected,
            symbolic=True,
            schedule=sched,
        )
    if f_sets is None:
        f_sets = consecutive_f_sets(js, sched)
    f_sets = tuple(tuple(sorted(f)) for f in f_sets)
    if len(f_sets) != s:
        raise exceptions.PreconditionFailed(f"clause {CARDINALITY}: {len(f_sets)} sets for s={s}")
    for j, f in zip(js, f_sets):
        if len(f) != sched.p(j):
            raise exceptions.PreconditionFailed(
                f"clause {CARDINALITY}: #F_{j} = {len(f)}, p_{j} = {sched.p(j)}"
            )
    clauses[CARDINALITY] = True
    if any(not f or left[-1] >= f[0] for left, f in zip(f_sets, f_sets[1:])):
        raise exceptions.PreconditionFailed(f"clause {SUCCESSIVE}: the sets F_j overlap")
    clauses[SUCCESSIVE] = True
    check_budget(sum(len(f) for f in f_sets), "spreading support")
    fam = FamilySpec.t0(sched)
    j1 = js[0]
    children = [Leaf(i) for i in f_sets[0]]
    for j, f in zip(js[1:], f_sets[1:]):
        levels = list(range(j1, j))
        width = len(f) // sched.p(j1)
        for l in range(sched.p(j1)):
            pieces = [Leaf(i) for i in f[l * width : (l + 1) * width]]
            children.append(nested_sum(pieces, levels, fam))
    tree = Node.of(fam.lookup(j1), children)
    membership = check_membership(tree, fam)
    clauses[MEMBERSHIP] = membership.ok
    actions = tuple(
        evaluate(tree, flat_vector(f, Fraction(1, len(f)))) for f in f_sets
    )
    clauses[BRANCHES] = all(v == Fraction(1, sched.weight(j)) for v, j in zip(actions, js))
    if actions != expected:
        raise exceptions.AuditFailure(
            f"branch actions {actions} disagree with the decomposition {expected}"
        )
    cert = SpreadingCertificate(
        s=s,
        js=js,
        f_sets=f_sets,
        tree=tree,
        membership=membership,
        clauses=clauses,
        branch_actions=actions,
        schedule=sched,
    )
    log.info(f"Spreading certificate for js={js}: ok={cert.ok}")
    return cert


def spreading_toy_schedule(J: int, n1: int = 1) -> ParameterSchedule:
    """Weights m_j of the paper schedule with the smallest n_j ≥ j·p_j."""
    m = tuple(paper_weight(j) for j in range(1, J + 1))
    n = [max(n1, 1)]
    for j in range(2, J + 1):
        p = prod(n)
        n.append(max(j * p, n[-1] + 1))
    return ParameterSchedule(m=m, n=tuple(n))


def smallest_spreading_instance(
    s: int = 2, max_index: int = 6, max_n1: int = 4
) -> SpreadingCertificate:
    """Search small toy schedules for the certificate of least total support.

    Runs over n_1 ≤ max_n1 and consecutive indices j_1, …, j_1 + s − 1
    with j_1 ≥ s; ties go to the smaller n_1, then the smaller j_1.
    """
    best = None
    for n1 in range(1, max_n1 + 1):
        sched = spreading_toy_schedule(max_index, n1)
        for j1 in range(max(s, 1), max_index - s + 2):
            js = tuple(range(j1, j1 + s))
            total = sum(sched.p(j) for j in js)
            if total > budget():
                continue
            if best is not None and total >= best[0]:
                continue
            try:
                cert = certify_c0_spreading(s, js, None, sched)
            except exceptions.PreconditionFailed:
                continue
            if cert.ok:
                best = (total, cert, sched)
    if best is None:
        raise exceptions.Refusal(f"no spreading instance with s={s} up to index {max_index}")
    log.debug(f"Smallest spreading instance has support {best[0]}")
    return best[1]
