"""Diagonal operators D_j x = (1/m_j)Σ_i I_i^j x and their estimates.

A :py:class:`DiagonalOperator` carries the interval groups of every j it
uses, a lacunary index list M = (j_1 < j_2 < …) and multipliers λ_k, and
stands for Σ_k λ_k D_{j_k}. Norms are exact norms of a computable
surrogate family, and every report names that family.

Example usage:

.. code-block:: python

    s = coding_schedule(12)
    D = DiagonalOperator({4: [Interval(1, 1), Interval(3, 3)]}, s)
    y = apply_diagonal(D, flat_vector(range(1, 5), 1))
    report = alpha(4, D, flat_vector(range(1, 5), 1), FamilySpec.mixed(s))

"""

import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from math import prod
from typing import Mapping, Optional, Sequence

from .. import exceptions
from ..constructions.basic_inequality import auxiliary_tag
from ..constructions.spreading import nested_sum
from ..core import (
    ConditionResult,
    Interval,
    ParameterSchedule,
    RationalVector,
    Regime,
    as_fraction,
    check_budget,
    fraction_to_str,
    hull,
    paper_weight,
    unit_vector,
)
from ..engine import NormCertificate, norm
from ..normset import (
    ZERO,
    FamilySpec,
    FunctionalTree,
    Ground,
    Leaf,
    MembershipReport,
    Node,
    check_membership,
    evaluate,
    restrict_functional,
    tree_to_json,
)

log = logging.getLogger(__name__)


# Lacunary conditions, in reporting order
INCREASING = "increasing"
SIZE_GROWTH = "size_growth"
SUPPORT_GROWTH = "support_growth"
SPARSE_INDICES = "sparse_indices"
LACUNARY_CONDITIONS = (INCREASING, SIZE_GROWTH, SUPPORT_GROWTH, SPARSE_INDICES)

# Upper-bound modes
GENERATOR_AUDIT = "generator-audit"
REDUCTION_AUDIT = "reduction-audit"
EXACT_QUOTIENT = "exact-quotient"


@dataclass(frozen=True, eq=False)
class DiagonalOperator:
    """Σ_k λ_k D_{j_k} over successive interval groups.

    ``groups`` maps j to its intervals I_1^j < I_2^j < …, and every
    interval of a smaller j precedes the intervals of a larger one.
    ``M`` defaults to the sorted group indices and ``lam`` (keyed by
    the position k in ``M``) to all ones.
    """

    groups: Mapping[int, tuple]
    schedule: ParameterSchedule
    M: tuple = ()
    lam: Optional[Mapping[int, Fraction]] = None

    def __post_init__(self):
        groups = {}
        for j, intervals in self.groups.items():
            intervals = tuple(sorted(intervals))
            if not intervals:
                raise exceptions.PreconditionFailed(f"group {j} has no intervals")
            self.schedule.weight(int(j))
            groups[int(j)] = intervals
        ordered = [I for j in sorted(groups) for I in groups[j]]
        for left, right in zip(ordered, ordered[1:]):
            if not left.precedes(right):
                raise exceptions.PreconditionFailed(
                    f"intervals {left} and {right} are not successive"
                )
        M = tuple(int(j) for j in self.M) if self.M else tuple(sorted(groups))
        if any(a >= b for a, b in zip(M, M[1:])):
            raise exceptions.PreconditionFailed(f"M = {M} is not strictly increasing")
        missing = [j for j in M if j not in groups]
        if missing:
            raise exceptions.PreconditionFailed(f"no intervals for j in {missing}")
        if self.lam is None:
            lam = {k: Fraction(1) for k in range(1, len(M) + 1)}
        else:
            lam = {int(k): as_fraction(v) for k, v in self.lam.items()}
        if any(k < 1 or k > len(M) for k in lam):
            raise exceptions.PreconditionFailed(f"λ is indexed outside 1..{len(M)}")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "lam", lam)

    def intervals(self, j: int) -> tuple:
        if j not in self.groups:
            raise exceptions.PreconditionFailed(f"the operator has no intervals for j={j}")
        return self.groups[j]

    def cover(self, k: int) -> Interval:
        """I^k, the hull of the intervals of j_k."""
        return hull(self.intervals(self.M[k - 1]))

    def component(self, j: int, x: RationalVector) -> RationalVector:
        """D_j x."""
        total = x.scale(0)
        for I in self.intervals(j):
            total = total + x.restrict(I)
        return total.scale(Fraction(1, self.schedule.weight(j)))

    def with_multipliers(self, lam: Mapping[int, Fraction]) -> "DiagonalOperator":
        return replace(self, lam=dict(lam))

    @property
    def sup(self) -> Fraction:
        return max((abs(v) for v in self.lam.values()), default=Fraction(0))

    def to_json(self) -> dict:
        return {
            "groups": {
                str(j): [I.to_json() for I in intervals]
                for j, intervals in self.groups.items()
            },
            "lambda": {str(k): fraction_to_str(v) for k, v in self.lam.items()},
            "M": list(self.M),
            "schedule": self.schedule.to_json(),
        }

    @classmethod
    def from_json(
        cls, data: Mapping, schedule: Optional[ParameterSchedule] = None
    ) -> "DiagonalOperator":
        if "schedule" in data:
            schedule = ParameterSchedule.from_json(data["schedule"])
        if schedule is None:
            raise exceptions.PreconditionFailed("operator JSON names no schedule")
        groups = {
            int(j): tuple(Interval.from_json(I) for I in intervals)
            for j, intervals in data["groups"].items()
        }
        lam = data.get("lambda")
        return cls(
            groups=groups,
            schedule=schedule,
            M=tuple(int(j) for j in data.get("M", ())),
            lam=None if lam is None else {int(k): as_fraction(v) for k, v in lam.items()},
        )


def apply_diagonal(D: DiagonalOperator, x: RationalVector) -> RationalVector:
    """The exact image Σ_k λ_k D_{j_k} x."""
    total = x.scale(0)
    for k, j in enumerate(D.M, start=1):
        lam = D.lam.get(k, Fraction(0))
        if lam:
            total = total + D.component(j, x).scale(lam)
    return total


def _require_same_schedule(D: DiagonalOperator, fam: FamilySpec) -> None:
    if D.schedule != fam.schedule:
        raise exceptions.PreconditionFailed(
            f"the operator and family {fam.name} use different schedules"
        )


@dataclass
class AlphaReport:
    j: int
    value: Fraction
    tree: FunctionalTree
    pieces: tuple
    image_norm: Fraction
    norm: Fraction
    family: str

    def to_json(self) -> dict:
        return {
            "j": self.j,
            "alpha": fraction_to_str(self.value),
            "image_norm": fraction_to_str(self.image_norm),
            "norm": fraction_to_str(self.norm),
            "family": self.family,
            "certificate": tree_to_json(self.tree),
        }


def alpha(j: int, D: DiagonalOperator, x: RationalVector, fam: FamilySpec) -> AlphaReport:
    """α_j(x) = (1/m_j)Σ_i ‖I_i^j x‖ with the certificate (1/m_j)Σ_i φ_i.

    φ_i is the optimal functional of I_i^j x, so the certificate acts on
    x by α_j(x) and ‖D_j x‖ ≤ α_j(x) ≤ ‖x‖ is asserted exactly.
    """
    _require_same_schedule(D, fam)
    intervals = D.intervals(j)
    op = fam.lookup(j)
    if len(intervals) > op.size:
        raise exceptions.Refusal(
            f"{len(intervals)} intervals exceed n_{j} = {op.size}; "
            f"the certificate would leave {fam.name}"
        )
    pieces = tuple(norm(x.restrict(I), fam) for I in intervals)
    value = op.factor * sum((c.value for c in pieces), Fraction(0))
    children = [c.tree for c in pieces if c.tree is not ZERO]
    tree = Node.of(op, children) if children else ZERO
    if evaluate(tree, x) != value or not check_membership(tree, fam).ok:
        raise exceptions.AuditFailure(f"α_{j} certificate does not act by {value}")
    image = norm(D.component(j, x), fam).value
    total = norm(x, fam).value
    if not image <= value <= total:
        raise exceptions.AuditFailure(
            f"sandwich fails for j={j}: ‖D_j x‖ = {image}, α = {value}, ‖x‖ = {total}"
        )
    log.debug(f"α_{j}(x) = {value} in {fam.name}")
    return AlphaReport(
        j=j,
        value=value,
        tree=tree,
        pieces=pieces,
        image_norm=image,
        norm=total,
        family=fam.name,
    )


@dataclass
class AlphaSumCertificate:
    js: tuple
    alphas: tuple
    tree: FunctionalTree
    membership: MembershipReport
    value: Fraction
    norm: Fraction

    @property
    def ok(self) -> bool:
        return self.membership.ok and self.value <= self.norm

    def to_json(self) -> dict:
        return {
            "L": list(self.js),
            "alphas": {str(r.j): fraction_to_str(r.value) for r in self.alphas},
            "sum": fraction_to_str(self.value),
            "norm": fraction_to_str(self.norm),
            "membership": self.membership.to_json(),
            "certificate": tree_to_json(self.tree),
        }


def certify_alpha_sum(
    L: Sequence[int], D: DiagonalOperator, x: RationalVector, fam: FamilySpec
) -> AlphaSumCertificate:
    """Certify Σ_{j∈L} α_j(x) ≤ ‖x‖ for #L ≤ min L.

    The functionals (1/m_{j_k})Σ_i φ_i^k are merged into a single
    (1/m_{j_1}) functional: the pieces of each later j_k are grouped
    into p_{j_1} nested trees of the operations j_1, …, j_k − 1, which
    needs the weights to telescope and at most p_{j_k} intervals per
    group.
    """
    js = tuple(sorted(set(int(j) for j in L)))
    if not js:
        raise exceptions.PreconditionFailed("L is empty")
    if len(js) > js[0]:
        raise exceptions.PreconditionFailed(f"#L = {len(js)} exceeds min L = {js[0]}")
    s = fam.schedule
    j1 = js[0]
    for j in js[1:]:
        if s.weight(j1) * prod(s.weight(i) for i in range(j1, j)) != s.weight(j):
            raise exceptions.Inapplicable(f"the weights m_{j1}, …, m_{j} do not telescope")
    check_budget(s.p(js[-1]), "α-sum certificate slots")
    reports = tuple(alpha(j, D, x, fam) for j in js)
    top = fam.lookup(j1)
    children = [c.tree for c in reports[0].pieces if c.tree is not ZERO]
    for j, report in zip(js[1:], reports[1:]):
        items = [c.tree for c in report.pieces]
        slots = s.p(j)
        if len(items) > slots:
            raise exceptions.Inapplicable(f"group {j} has more than p_{j} = {slots} intervals")
        items += [ZERO] * (slots - len(items))
        width = slots // s.p(j1)
        levels = list(range(j1, j))
        for l in range(s.p(j1)):
            piece = nested_sum(items[l * width : (l + 1) * width], levels, fam)
            if piece is not ZERO:
                children.append(piece)
    if len(children) > top.size:
        raise exceptions.Inapplicable(
            f"{len(children)} pieces exceed n_{j1} = {top.size}"
        )
    tree = Node.of(top, children) if children else ZERO
    membership = check_membership(tree, fam)
    value = sum((r.value for r in reports), Fraction(0))
    action = evaluate(tree, x)
    if not membership.ok or action != value:
        raise exceptions.AuditFailure(
            f"assembled functional acts by {action} instead of {value}: {membership}"
        )
    total = reports[0].norm
    if value > total:
        raise exceptions.AuditFailure(f"Σα = {value} exceeds ‖x‖ = {total}")
    log.info(f"Certified Σ_{{j∈{js}}} α_j(x) = {value} ≤ {total}")
    return AlphaSumCertificate(
        js=js, alphas=reports, tree=tree, membership=membership, value=value, norm=total
    )


# Lacunary index lists


@dataclass(frozen=True)
class LacunaryReport:
    M: tuple
    conditions: dict

    @property
    def flags(self) -> dict:
        return {name: result.holds for name, result in self.conditions.items()}

    @property
    def ok(self) -> bool:
        return all(self.flags.values())

    def to_json(self) -> dict:
        return {
            "M": list(self.M),
            "ok": self.ok,
            "conditions": {
                name: result.to_json() for name, result in self.conditions.items()
            },
        }


def _condition(name: str, rows) -> ConditionResult:
    """Rows (k, lhs, rhs) hold when lhs ≥ rhs; undefined sides fail."""
    margins, failures = {}, []
    for k, lhs, rhs in rows:
        if lhs is None or rhs is None:
            failures.append(k)
            continue
        margins[k] = lhs - rhs
        if lhs < rhs:
            failures.append(k)
    return ConditionResult(
        name=name, holds=not failures, margins=margins, failures=tuple(failures)
    )


def validate_lacunary(
    M: Sequence[int], D: Optional[DiagonalOperator], s: ParameterSchedule
) -> LacunaryReport:
    """Check, for every listed k,

    * m_{j_{k+1}} ≥ 2^{k+1}·n_{j_k+1}
    * m_{j_{k+1}} ≥ 2^k·max I_{p_{j_k}}^{j_k}
    * j_k > n_{2k}

    by exact integer comparison. Quantities the schedule or the
    operator does not define make their condition fail.
    """
    M = tuple(int(j) for j in M)

    def m(j):
        return s.weight(j) if s.has_weight(j) else None

    def scaled(c, v):
        return None if v is None else c * v

    def n(j):
        return s.size(j) if s.has_size(j) else None

    def last(j):
        if D is None or j not in D.groups:
            return None
        return D.groups[j][-1].hi

    growth, support, sparse = [], [], []
    for k, j in enumerate(M, start=1):
        sparse.append((k, j, None if n(2 * k) is None else n(2 * k) + 1))
        if k < len(M):
            nxt = m(M[k])
            growth.append((k, nxt, scaled(2 ** (k + 1), n(j + 1))))
            support.append((k, nxt, scaled(2**k, last(j))))
    increasing = all(a < b for a, b in zip(M, M[1:]))
    conditions = {
        INCREASING: ConditionResult(name=INCREASING, holds=increasing),
        SIZE_GROWTH: _condition(SIZE_GROWTH, growth),
        SUPPORT_GROWTH: _condition(SUPPORT_GROWTH, support),
        SPARSE_INDICES: _condition(SPARSE_INDICES, sparse),
    }
    report = LacunaryReport(M=M, conditions=conditions)
    log.info(f"Lacunary check of M={M}: {report.flags}")
    return report


def find_lacunary(D: DiagonalOperator, s: ParameterSchedule, count: int) -> tuple:
    """The lexicographically least lacunary M of length *count* among D's groups.

    Each j_k is the least group index meeting its conditions against
    j_{k−1}; a smaller j_{k−1} only weakens the conditions on j_k, so
    the greedy choice is minimal.
    """
    if count < 1:
        raise exceptions.PreconditionFailed("count must be at least 1")
    candidates = sorted(D.groups)
    M = []
    for k in range(1, count + 1):
        if not s.has_size(2 * k):
            raise exceptions.Refusal(f"j_{k} must exceed n_{2 * k}, which is not defined")
        floor = max(s.size(2 * k), M[-1] if M else 0)
        need = 0
        if M:
            previous = M[-1]
            if not s.has_size(previous + 1):
                raise exceptions.Refusal(f"n_{previous + 1} is not defined")
            need = max(
                2**k * s.size(previous + 1), 2 ** (k - 1) * D.groups[previous][-1].hi
            )
        choice = next(
            (j for j in candidates if j > floor and s.has_weight(j) and s.weight(j) >= need),
            None,
        )
        if choice is None:
            raise exceptions.Refusal(
                f"no group index j_{k} > {floor} with m_j ≥ {need}"
            )
        M.append(choice)
    log.info(f"Least lacunary M of length {count}: {M}")
    return tuple(M)


# Constants of the operator bound


@dataclass(frozen=True)
class Enclosure:
    lo: Fraction
    hi: Fraction
    terms: int

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    def __contains__(self, value) -> bool:
        return self.lo <= as_fraction(value) <= self.hi

    def to_json(self) -> dict:
        return {
            "lo": fraction_to_str(self.lo),
            "hi": fraction_to_str(self.hi),
            "width": fraction_to_str(self.width),
            "terms": self.terms,
        }


def _require_paper_weights(s: ParameterSchedule) -> None:
    for j in range(1, len(s.m) + 1):
        if s.weight(j) != paper_weight(j):
            raise exceptions.Refusal(
                f"the C₁ tail bound needs paper weights; m_{j} = {s.weight(j)} differs"
            )


def c1_enclosure(s: ParameterSchedule, tail_index: int) -> Enclosure:
    """C₁ = Σ_i (i+1)/m_{2i} enclosed by its first *tail_index* terms.

    With paper weights consecutive terms shrink by a factor of at least
    3/16, so the tail after term N is at most 2(N+2)/m_{2N+2}.
    """
    N = int(tail_index)
    if N < 0:
        raise exceptions.PreconditionFailed("tail index must be nonnegative")
    _require_paper_weights(s)
    check_budget(2 ** (2 * N), f"bit length of m_{2 * N + 2}")
    lo = sum((Fraction(i + 1, paper_weight(2 * i)) for i in range(1, N + 1)), Fraction(0))
    tail = Fraction(2 * (N + 2), paper_weight(2 * N + 2))
    return Enclosure(lo=lo, hi=lo + tail, terms=N)


def operator_bound_constant(s: ParameterSchedule, tail_index: int) -> Enclosure:
    """C₀ = 3 + C₁, the bound ‖Σλ_k D_{j_k}‖ ≤ C₀·sup|λ_k|."""
    c1 = c1_enclosure(s, tail_index)
    return Enclosure(lo=3 + c1.lo, hi=3 + c1.hi, terms=c1.terms)


# Reduction of the action of a functional to W′


@dataclass(frozen=True)
class DiagonalActionRow:
    k: int
    lhs: Fraction
    alpha: Fraction
    g_value: Fraction
    rhs: Fraction
    image_norm: Fraction
    excepted: bool

    @property
    def holds(self) -> bool:
        return self.excepted or self.lhs <= self.rhs

    @property
    def bound(self) -> Fraction:
        """A bound of |f(D_{j_k}x)| valid for every row."""
        return self.image_norm if self.excepted else self.rhs

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "lhs": fraction_to_str(self.lhs),
            "rhs": fraction_to_str(self.rhs),
            "alpha": fraction_to_str(self.alpha),
            "g": fraction_to_str(self.g_value),
            "excepted": self.excepted,
        }


@dataclass
class DiagonalReductionAudit:
    k0: int
    exceptions: frozenset
    rows: tuple
    membership: MembershipReport
    norm: Fraction
    family: str

    @property
    def holds(self) -> bool:
        return all(row.holds for row in self.rows)

    @property
    def total_bound(self) -> Fraction:
        return sum((row.bound for row in self.rows), Fraction(0))

    def to_json(self) -> dict:
        return {
            "holds": self.holds,
            "k0": self.k0,
            "exceptions": sorted(self.exceptions),
            "family": self.family,
            "norm": fraction_to_str(self.norm),
            "rows": [row.to_json() for row in self.rows],
            "membership": self.membership.to_json(),
        }


class _DiagonalReducer:
    def __init__(self, D: DiagonalOperator):
        self.covers = [D.cover(k) for k in range(1, len(D.M) + 1)]
        self.weights = [D.schedule.weight(j) for j in D.M]

    def crossover(self, w: Fraction) -> int:
        """k0 with m_{j_{k0}} ≤ w < m_{j_{k0+1}}, or 0."""
        return max((k for k, m in enumerate(self.weights, start=1) if m <= w), default=0)

    def touching(self, children: Sequence, k: int) -> list:
        cover = self.covers[k - 1]
        return [
            position
            for position, child in enumerate(children)
            if child.range is not None and child.range.intersection(cover) is not None
        ]

    def reduce(self, f: FunctionalTree, ks: tuple) -> tuple:
        if f is ZERO or not ks:
            return ZERO, frozenset()
        if isinstance(f, Leaf):
            k = next((k for k in ks if f.index in self.covers[k - 1]), None)
            return (ZERO if k is None else Leaf(k)), frozenset()
        if not isinstance(f, Node):
            raise exceptions.InvalidTree(f"cannot reduce the tree node {f!r}")
        k0 = self.crossover(f.weight)
        children = list(f.effective_children)
        touching = {k: self.touching(children, k) for k in ks}
        pieces = []
        for position, child in enumerate(children):
            own = tuple(k for k in ks if touching[k] == [position])
            if not own:
                continue
            g, excepted = self.reduce(child, own)
            pieces.extend(Leaf(k) for k in sorted(excepted))
            if g is not ZERO:
                pieces.append(g)
        pieces.extend(Leaf(k) for k in ks if len(touching[k]) > 1)
        excepted = frozenset(k for k in (k0, k0 + 1) if k in ks)
        if not pieces:
            return ZERO, excepted
        pieces.sort(key=lambda g: g.range.lo)
        g = Node(op=auxiliary_tag(f.op), factor=f.factor, children=tuple(pieces))
        if k0 + 2 > g.range.hi:
            return ZERO, excepted
        return restrict_functional(g, Interval(k0 + 2, g.range.hi)), excepted


def _require_lacunary(D: DiagonalOperator) -> None:
    report = validate_lacunary(D.M, D, D.schedule)
    if not report.ok:
        failing = [name for name, holds in report.flags.items() if not holds]
        raise exceptions.Inapplicable(f"M = {D.M} is not lacunary: {', '.join(failing)}")


def reduce_diagonal_action(
    f: FunctionalTree,
    D: DiagonalOperator,
    x: RationalVector,
    fam: FamilySpec,
    *,
    check_input: bool = True,
) -> tuple[FunctionalTree, DiagonalReductionAudit]:
    """Build g ∈ W′ with |f(D_{j_k}x)| ≤ α_{j_k}(x)g(e_k) + 2^{−k}‖x‖.

    The inequality is asserted for every k except k0 and k0 + 1, where
    m_{j_{k0}} ≤ w(f) < m_{j_{k0+1}}; g vanishes on both. α and ‖x‖ are
    taken in the relaxed surrogate of *fam*.
    """
    if fam.ground is not Ground.UNIT:
        raise exceptions.UnsupportedFamily("the diagonal reducer needs unit leaves")
    _require_same_schedule(D, fam)
    if check_input:
        report = check_membership(f, fam)
        if not report.ok:
            raise exceptions.InvalidTree(f"f is not a member of {fam.name}: {report}")
    _require_lacunary(D)
    reducer = _DiagonalReducer(D)
    ks = tuple(range(1, len(D.M) + 1))
    g, excepted = reducer.reduce(f, ks)
    auxiliary = FamilySpec.w_prime(D.schedule)
    membership = check_membership(g, auxiliary)
    if not membership.ok:
        raise exceptions.AuditFailure(f"reduced functional left {auxiliary.name}: {membership}")
    surrogate = fam.relaxed()
    total = norm(x, surrogate).value
    rows = []
    for k, j in enumerate(D.M, start=1):
        report = alpha(j, D, x, surrogate)
        g_value = evaluate(g, unit_vector(k))
        rows.append(
            DiagonalActionRow(
                k=k,
                lhs=abs(evaluate(f, D.component(j, x))),
                alpha=report.value,
                g_value=g_value,
                rhs=report.value * g_value + total / 2**k,
                image_norm=report.image_norm,
                excepted=k in excepted,
            )
        )
    audit = DiagonalReductionAudit(
        k0=reducer.crossover(f.weight) if isinstance(f, Node) else 0,
        exceptions=excepted,
        rows=tuple(rows),
        membership=membership,
        norm=total,
        family=surrogate.name,
    )
    if not audit.holds:
        bad = [row.k for row in rows if not row.holds]
        raise exceptions.AuditFailure(f"diagonal reduction fails at k = {bad}")
    log.debug(f"Diagonal reduction with exceptions {sorted(excepted)}")
    return g, audit


@dataclass(frozen=True)
class WeightLemmaAudit:
    k: int
    case: str
    lhs: Fraction
    bound: Fraction

    @property
    def holds(self) -> bool:
        return self.lhs <= self.bound

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "case": self.case,
            "lhs": fraction_to_str(self.lhs),
            "bound": fraction_to_str(self.bound),
        }


def audit_weight_lemma(
    phi: Node, k: int, D: DiagonalOperator, x: RationalVector, fam: FamilySpec
) -> WeightLemmaAudit:
    """Check |φ(D_{j_k}x)| against the bound for light or heavy φ.

    Heavy, w(φ) ≥ m_{j_{k+1}}: bound 2^{−k}‖x‖. Light, w(φ) ≤ m_{j_{k−1}}:
    bound α_{j_k}(x)/w(φ) + 2^{−k}‖x‖.
    """
    if not isinstance(phi, Node):
        raise exceptions.PreconditionFailed("φ must have a top operation")
    if not 1 <= k <= len(D.M):
        raise exceptions.PreconditionFailed(f"k={k} is outside 1..{len(D.M)}")
    report = check_membership(phi, fam)
    if not report.ok:
        raise exceptions.InvalidTree(f"φ is not a member of {fam.name}: {report}")
    _require_same_schedule(D, fam)
    _require_lacunary(D)
    surrogate = fam.relaxed()
    j = D.M[k - 1]
    w = phi.weight
    total = norm(x, surrogate).value
    lhs = abs(evaluate(phi, D.component(j, x)))
    if k < len(D.M) and w >= D.schedule.weight(D.M[k]):
        case, bound = "heavy", total / 2**k
    elif k > 1 and w <= D.schedule.weight(D.M[k - 2]):
        case = "light"
        bound = alpha(j, D, x, surrogate).value / w + total / 2**k
    else:
        raise exceptions.Inapplicable(f"w(φ) = {w} lies strictly between the neighbours of j_{k}")
    audit = WeightLemmaAudit(k=k, case=case, lhs=lhs, bound=bound)
    if not audit.holds:
        raise exceptions.AuditFailure(f"{case} weight bound fails at k={k}: {lhs} > {bound}")
    return audit


@dataclass(frozen=True)
class C1Audit:
    lhs: Fraction
    rhs: Fraction
    constant: Fraction
    mode: str
    asserted: bool

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    def to_json(self) -> dict:
        return {
            "lhs": fraction_to_str(self.lhs),
            "rhs": fraction_to_str(self.rhs),
            "constant": fraction_to_str(self.constant),
            "mode": self.mode,
            "asserted": self.asserted,
            "holds": self.holds,
        }


def audit_c1_bound(
    g: FunctionalTree,
    D: DiagonalOperator,
    x: RationalVector,
    fam: FamilySpec,
    tail_index: int = 3,
) -> C1Audit:
    """Compare Σ_k α_{j_k}(x)|g(e_k)| with C₁‖x‖ for g ∈ W′.

    Schedules without paper weights use the partial sum of C₁ over the
    weights they define. The bound is asserted only on paper-minimal
    schedules with a lacunary M; elsewhere a failure is logged.
    """
    auxiliary = FamilySpec.w_prime(D.schedule)
    report = check_membership(g, auxiliary)
    if not report.ok:
        raise exceptions.InvalidTree(f"g is not a member of {auxiliary.name}: {report}")
    _require_same_schedule(D, fam)
    surrogate = fam.relaxed()
    lhs = sum(
        (
            alpha(j, D, x, surrogate).value * abs(evaluate(g, unit_vector(k)))
            for k, j in enumerate(D.M, start=1)
        ),
        Fraction(0),
    )
    s = D.schedule
    try:
        constant, mode = c1_enclosure(s, tail_index).hi, "paper-enclosure"
    except exceptions.Refusal:
        constant = sum(
            (Fraction(i + 1, s.weight(2 * i)) for i in range(1, len(s.m) // 2 + 1)),
            Fraction(0),
        )
        mode = "partial-sum"
    asserted = (
        s.regime is Regime.PAPER_MINIMAL
        and validate_lacunary(D.M, D, s).ok
    )
    audit = C1Audit(
        lhs=lhs,
        rhs=constant * norm(x, surrogate).value,
        constant=constant,
        mode=mode,
        asserted=asserted,
    )
    if not audit.holds:
        if asserted:
            raise exceptions.AuditFailure(f"Σα|g| = {lhs} exceeds C₁‖x‖ = {audit.rhs}")
        log.warning(f"C₁ bound not met at toy scale: {lhs} > {audit.rhs} ({mode})")
    return audit


# Witnesses of non-compactness and of the ℓ∞ embedding


@dataclass
class Witness:
    j: int
    vector: RationalVector
    norm: NormCertificate
    image: NormCertificate
    bound: Fraction

    @property
    def estimates_ok(self) -> bool:
        return self.norm.value <= self.bound and self.image.value >= Fraction(1, 2)

    def to_json(self) -> dict:
        return {
            "j": self.j,
            "vector": self.vector.to_json(),
            "norm": fraction_to_str(self.norm.value),
            "image_norm": fraction_to_str(self.image.value),
            "bound": fraction_to_str(self.bound),
            "estimates_ok": self.estimates_ok,
        }


@dataclass
class NoncompactWitnesses:
    operator: DiagonalOperator
    witnesses: dict
    separation: Optional[Fraction]
    c: Fraction
    family: str

    @property
    def estimates_ok(self) -> bool:
        return all(w.estimates_ok for w in self.witnesses.values())

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "c": fraction_to_str(self.c),
            "operator": self.operator.to_json(),
            "separation": None if self.separation is None else fraction_to_str(self.separation),
            "estimates_ok": self.estimates_ok,
            "witnesses": {str(j): w.to_json() for j, w in self.witnesses.items()},
        }


def noncompact_witnesses(
    systems: Mapping[int, Sequence[RationalVector]], c, fam: FamilySpec
) -> NoncompactWitnesses:
    """x_j = (m_j/2p)Σ_k (−1)^{k+1} y_k^j for block systems (y_k^j)_{k≤2p}.

    D_j is built on the ranges of the odd blocks. D_l x_j = 0 for l ≠ j
    is asserted; the estimates ‖x_j‖ ≤ 4c and ‖D_j x_j‖ ≥ 1/2 are
    reported and a failure is logged.
    """
    c = as_fraction(c)
    s = fam.schedule
    surrogate = fam.relaxed()
    groups, previous = {}, None
    for j in sorted(systems):
        ys = list(systems[j])
        if not ys or len(ys) % 2:
            raise exceptions.PreconditionFailed(f"system {j} needs an even number of blocks")
        for y in ys:
            if not y or (previous is not None and not previous.precedes(y.range)):
                raise exceptions.PreconditionFailed(f"the blocks of system {j} are not successive")
            previous = y.range
        groups[int(j)] = tuple(y.range for y in ys[0::2])
    D = DiagonalOperator(groups, s)
    witnesses = {}
    for j in sorted(groups):
        ys = list(systems[j])
        x = ys[0].scale(0)
        for position, y in enumerate(ys):
            x = x + y.scale((-1) ** position)
        x = x.scale(Fraction(s.weight(j), len(ys)))
        for l in groups:
            if l != j and D.component(l, x):
                raise exceptions.AuditFailure(f"D_{l} x_{j} does not vanish")
        witness = Witness(
            j=j,
            vector=x,
            norm=norm(x, surrogate),
            image=norm(D.component(j, x), surrogate),
            bound=4 * c,
        )
        if not witness.estimates_ok:
            log.warning(
                f"Witness estimates fail for j={j} in {surrogate.name}: "
                f"‖x‖ = {witness.norm.value}, ‖D_j x‖ = {witness.image.value}"
            )
        witnesses[j] = witness
    separation = None
    images = {j: apply_diagonal(D, w.vector) for j, w in witnesses.items()}
    order = sorted(images)
    for a, i in enumerate(order):
        for j in order[a + 1 :]:
            gap = norm(images[i] - images[j], surrogate).value
            separation = gap if separation is None else min(separation, gap)
    return NoncompactWitnesses(
        operator=D, witnesses=witnesses, separation=separation, c=c, family=surrogate.name
    )


@dataclass(frozen=True)
class EmbeddingRow:
    lam: dict
    sup: Fraction
    lower: Fraction
    upper_observed: Fraction
    upper_certified: Optional[Fraction]
    estimates_ok: bool
    c: Fraction

    @property
    def holds(self) -> bool:
        if self.lower > self.upper_observed:
            return False
        if self.upper_certified is not None and self.upper_observed > self.upper_certified:
            return False
        return not self.estimates_ok or self.lower >= self.sup / (8 * self.c)

    def to_json(self) -> dict:
        certified = self.upper_certified
        return {
            "lambda": {str(k): fraction_to_str(v) for k, v in self.lam.items()},
            "sup": fraction_to_str(self.sup),
            "lower": fraction_to_str(self.lower),
            "upper_observed": fraction_to_str(self.upper_observed),
            "upper_certified": None if certified is None else fraction_to_str(certified),
            "estimates_ok": self.estimates_ok,
            "holds": self.holds,
        }


@dataclass
class EmbeddingReport:
    rows: tuple
    family: str
    upper_mode: str
    c0: Optional[Enclosure] = None
    lower_mode: str = EXACT_QUOTIENT

    @property
    def holds(self) -> bool:
        return all(row.holds for row in self.rows)

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "lower_mode": self.lower_mode,
            "upper_mode": self.upper_mode,
            "c0": None if self.c0 is None else self.c0.to_json(),
            "holds": self.holds,
            "rows": [row.to_json() for row in self.rows],
        }


def linfty_embedding_check(
    samples: Sequence[Mapping[int, Fraction]],
    witnesses: NoncompactWitnesses,
    fam: FamilySpec,
    generators: Sequence[FunctionalTree] = (),
) -> EmbeddingReport:
    """Bound ‖Σλ_k D_{j_k}‖ from both sides for each sample λ.

    The lower bound is ‖T x_{j_m}‖/‖x_{j_m}‖ at the largest |λ_m|.
    Upper values are |f(Tx)|/‖x‖ over the generators plus the norming
    functional of T x_{j_m}; on unit-leaf families with a lacunary M
    each one is also bounded through the diagonal reduction.
    """
    D = witnesses.operator
    surrogate = fam.relaxed()
    certify = fam.ground is Ground.UNIT and validate_lacunary(D.M, D, D.schedule).ok
    try:
        c0 = operator_bound_constant(D.schedule, 3)
    except exceptions.Refusal:
        c0 = None
    vectors = [witnesses.witnesses[j].vector for j in D.M]
    norms = [witnesses.witnesses[j].norm.value for j in D.M]
    rows = []
    for lam in samples:
        T = D.with_multipliers(lam)
        sup = T.sup
        if sup == 0:
            rows.append(
                EmbeddingRow(
                    lam=dict(T.lam),
                    sup=sup,
                    lower=Fraction(0),
                    upper_observed=Fraction(0),
                    upper_certified=Fraction(0) if certify else None,
                    estimates_ok=witnesses.estimates_ok,
                    c=witnesses.c,
                )
            )
            continue
        m = min(T.lam, key=lambda k: (-abs(T.lam[k]), k))
        best = norm(apply_diagonal(T, vectors[m - 1]), surrogate)
        lower = best.value / norms[m - 1]
        observed, certified = Fraction(0), Fraction(0)
        for f in list(generators) + [best.tree]:
            for x, size in zip(vectors, norms):
                observed = max(observed, abs(evaluate(f, apply_diagonal(T, x))) / size)
                if certify:
                    audit = reduce_diagonal_action(f, D, x, surrogate)[1]
                    certified = max(certified, sup * audit.total_bound / size)
        rows.append(
            EmbeddingRow(
                lam=dict(T.lam),
                sup=sup,
                lower=lower,
                upper_observed=observed,
                upper_certified=certified if certify else None,
                estimates_ok=witnesses.estimates_ok,
                c=witnesses.c,
            )
        )
    report = EmbeddingReport(
        rows=tuple(rows),
        family=surrogate.name,
        upper_mode=REDUCTION_AUDIT if certify else GENERATOR_AUDIT,
        c0=c0,
    )
    log.info(f"ℓ∞ embedding check over {len(rows)} samples: holds={report.holds}")
    return report
