"""ℓ₁ᵏ averages, rapidly increasing sequences, exact pairs and dependent sequences.

Norms that quantify over a family with special operations are handled
in two ways. Lower bounds always come from certificates built in the
plain part of the family, which lies inside the full family. Upper
bounds are computed in the relaxed surrogate, where special operations
act like plain ones and so dominate the true family. Every report names
the mode it was checked in.

Example usage:

.. code-block:: python

    fam = FamilySpec.mixed(coding_schedule(8))
    avg = find_l1k_average([unit_vector(i) for i in range(1, 4)], 3, 8, fam)
    ris = select_ris([(avg, 1)], 8, Fraction(1, 4), fam)
    assert validate_ris(ris, fam).ok

"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .. import exceptions
from ..core import Interval, RationalVector, as_fraction, check_budget, fraction_to_str
from ..engine import NormCertificate, norm, weighted_norms
from ..normset import (
    FamilySpec,
    Ground,
    Node,
    check_membership,
    evaluate,
    restrict_functional,
    tree_to_json,
)
from .coding import CodingRegistry
from .special import (
    SpecialSequenceReport,
    smallest_first_index,
    special_functional,
    verify_special_sequence,
)

log = logging.getLogger(__name__)


SURROGATE_DP = "surrogate-dp"
AVERAGE_BOOKKEEPING = "average-bookkeeping"


def _lower(x: RationalVector, fam: FamilySpec) -> NormCertificate:
    return norm(x, fam.plain_part())


def _upper(x: RationalVector, fam: FamilySpec) -> Fraction:
    return norm(x, fam.relaxed()).value


def _require_unit_ground(fam: FamilySpec) -> None:
    if fam.ground is not Ground.UNIT:
        raise exceptions.UnsupportedFamily(f"{fam.name} does not have unit leaves")


def _require_successive(blocks: Sequence[RationalVector], what: str = "blocks") -> None:
    for position, (left, right) in enumerate(zip(blocks, blocks[1:]), start=1):
        if not left or not right:
            raise exceptions.PreconditionFailed(f"{what} contain a zero vector")
        if not left.range.precedes(right.range):
            raise exceptions.PreconditionFailed(
                f"{what} {position} and {position + 1} are not successive"
            )


def _total(vectors: Sequence[RationalVector]) -> RationalVector:
    result = RationalVector()
    for vector in vectors:
        result = result + vector
    return result


# Averages


@dataclass
class L1Average:
    """x = (1/k)Σ x_i with successive parts, ‖x_i‖ ≤ C and ‖x‖ ≥ 1."""

    vector: RationalVector
    parts: tuple
    k: int
    C: Fraction
    norm: NormCertificate

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "C": fraction_to_str(self.C),
            "vector": self.vector.to_json(),
            "norm": fraction_to_str(self.norm.value),
        }


def _check_average(avg: L1Average, fam: FamilySpec) -> list[str]:
    problems = []
    if len(avg.parts) != avg.k:
        problems.append(f"{len(avg.parts)} parts for k={avg.k}")
    try:
        _require_successive(list(avg.parts), "parts")
    except exceptions.PreconditionFailed as exc:
        problems.append(str(exc))
    if _total(avg.parts).scale(Fraction(1, avg.k)) != avg.vector:
        problems.append("vector is not the mean of its parts")
    for position, part in enumerate(avg.parts, start=1):
        if _upper(part, fam) > avg.C:
            problems.append(f"part {position} has norm above {avg.C}")
    if _lower(avg.vector, fam).value < 1:
        problems.append("average has norm below 1")
    return problems


def find_l1k_average(
    blocks: Sequence[RationalVector], k: int, C, fam: FamilySpec
) -> L1Average:
    """Search for a C-ℓ₁ᵏ average made of successive sums of *blocks*.

    The doubling argument: group the current vectors k at a time. A
    group y_1 < … < y_k with C·‖Σy_i‖ ≥ k·max‖y_i‖ scales to an average
    of norm exactly 1. Otherwise the group sums become the next
    generation. The search refuses once fewer than k vectors remain; it
    never claims that no average exists.
    """
    C = as_fraction(C)
    if C < 2:
        raise exceptions.PreconditionFailed(f"C={C} must be at least 2")
    if k < 1:
        raise exceptions.PreconditionFailed(f"k={k} must be positive")
    blocks = [b for b in blocks]
    if not blocks:
        raise exceptions.Refusal("no blocks to average")
    _require_unit_ground(fam)
    _require_successive(blocks)
    if any(not b for b in blocks):
        raise exceptions.PreconditionFailed("blocks contain a zero vector")
    check_budget(sum(len(b) for b in blocks), "total block support")
    current = blocks
    generation = 0
    while len(current) >= k:
        for start in range(0, len(current) - k + 1, k):
            group = current[start : start + k]
            total = _total(group)
            lower = _lower(total, fam)
            largest = max(_upper(y, fam) for y in group)
            if C * lower.value >= k * largest:
                scale = Fraction(k) / lower.value
                parts = tuple(y.scale(scale) for y in group)
                vector = total.scale(scale / k)
                log.debug(
                    f"C-ℓ₁^{k} average found in generation {generation} "
                    f"(group {start // k + 1})"
                )
                return L1Average(
                    vector=vector,
                    parts=parts,
                    k=k,
                    C=C,
                    norm=_lower(vector, fam),
                )
        current = [
            _total(current[start : start + k])
            for start in range(0, len(current) - k + 1, k)
        ]
        generation += 1
    raise exceptions.Refusal(
        f"no C-ℓ₁^{k} average with C={C} found among {len(blocks)} blocks"
    )


# Rapidly increasing sequences


@dataclass
class RisData:
    """Blocks x_1 < x_2 < … with constant C, ε and indices j_1 < j_2 < …

    ``mode`` says how condition (b) was certified. ``positions`` are the
    indices of the chosen blocks in the input, ``averages`` the ℓ₁
    averages behind them in bookkeeping mode.
    """

    blocks: tuple
    C: Fraction
    eps: Fraction
    js: tuple
    mode: str
    positions: tuple = ()
    averages: tuple = ()
    tags: tuple = ()

    def __len__(self):
        return len(self.blocks)

    def to_json(self) -> dict:
        return {
            "C": fraction_to_str(self.C),
            "eps": fraction_to_str(self.eps),
            "js": list(self.js),
            "mode": self.mode,
            "blocks": [b.to_json() for b in self.blocks],
        }


def _growth_ok(fam: FamilySpec, js: Sequence[int], previous, j: int, eps) -> bool:
    s = fam.schedule
    if not s.has_weight(j):
        return False
    if previous is None:
        return Fraction(1, s.weight(j)) <= eps
    if js and j <= js[-1]:
        return False
    return Fraction(len(previous), s.weight(j)) <= eps


def _bookkeeping_constant(avg: L1Average, l: int, fam: FamilySpec) -> Fraction:
    s = fam.schedule
    return avg.C * (1 + Fraction(2 * s.size(2 * l - 1), s.size(2 * l)))


def select_ris(
    candidates: Sequence[tuple[L1Average, int]],
    C,
    eps,
    fam: FamilySpec,
    length: Optional[int] = None,
) -> RisData:
    """Greedy R.I.S. subsequence of tagged C-ℓ₁ averages.

    A candidate ``(avg, l)`` is a C-ℓ₁^{n_{2l}} average and is given the
    index j = 2l. Condition (b) follows from the interval estimate for
    averages, so the constant of the result is the largest
    C(1 + 2n_{2l−1}/n_{2l}) over the chosen candidates.
    """
    C, eps = as_fraction(C), as_fraction(eps)
    s = fam.schedule
    js, chosen, tags, positions = [], [], [], []
    for position, (avg, l) in enumerate(candidates):
        if not s.has_size(2 * l):
            raise exceptions.PreconditionFailed(f"n_{2 * l} is not defined")
        if avg.k != s.size(2 * l):
            raise exceptions.PreconditionFailed(
                f"candidate {position + 1} averages {avg.k} parts, n_{2 * l} = {s.size(2 * l)}"
            )
        if avg.C > C:
            raise exceptions.PreconditionFailed(
                f"candidate {position + 1} has constant {avg.C} above {C}"
            )
        previous = chosen[-1].vector if chosen else None
        if _growth_ok(fam, js, previous, 2 * l, eps):
            js.append(2 * l)
            chosen.append(avg)
            tags.append(l)
            positions.append(position)
            if length is not None and len(chosen) == length:
                break
    if not chosen or (length is not None and len(chosen) < length):
        raise exceptions.Refusal(
            f"only {len(chosen)} candidates satisfy the growth condition for ε={eps}"
        )
    constant = max(_bookkeeping_constant(a, l, fam) for a, l in zip(chosen, tags))
    log.debug(f"Selected R.I.S. of length {len(chosen)} with constant {constant}")
    return RisData(
        blocks=tuple(a.vector for a in chosen),
        C=constant,
        eps=eps,
        js=tuple(js),
        mode=AVERAGE_BOOKKEEPING,
        positions=tuple(positions),
        averages=tuple(chosen),
        tags=tuple(tags),
    )


def _low_weight_failures(x: RationalVector, j: int, C: Fraction, fam: FamilySpec) -> list:
    """Operations of weight index below j acting on x by more than C/m_i."""
    surrogate = fam.relaxed()
    ops = [op for op in surrogate.operations if op.weight_index < j]
    if not ops:
        return []
    values = weighted_norms(x, surrogate, ops)
    return [op.tag for op in ops if values[op.tag] > C * op.factor]


def ris_from_blocks(
    blocks: Sequence[RationalVector],
    C,
    eps,
    fam: FamilySpec,
    length: Optional[int] = None,
    start: int = 1,
) -> RisData:
    """Greedy R.I.S. selection with condition (b) checked exactly.

    Each block gets the smallest index allowed by the growth condition;
    a block whose norm exceeds C, or on which a low-weight operation of
    the relaxed surrogate acts too strongly, is skipped.
    """
    C, eps = as_fraction(C), as_fraction(eps)
    _require_unit_ground(fam)
    s = fam.schedule
    js, chosen, positions = [], [], []
    for position, x in enumerate(blocks):
        if not x:
            continue
        if chosen and not chosen[-1].range.precedes(x.range):
            continue
        if _upper(x, fam) > C:
            log.debug(f"Block {position + 1} skipped: norm above {C}")
            continue
        previous = chosen[-1] if chosen else None
        first = js[-1] + 1 if js else start
        j = next(
            (
                j
                for j in range(first, len(s.m) + 1)
                if _growth_ok(fam, js, previous, j, eps)
            ),
            None,
        )
        if j is None:
            log.debug(f"Block {position + 1} skipped: no weight index left")
            break
        if _low_weight_failures(x, j, C, fam):
            log.debug(f"Block {position + 1} skipped: low weights act too strongly")
            continue
        js.append(j)
        chosen.append(x)
        positions.append(position)
        if length is not None and len(chosen) == length:
            break
    if not chosen or (length is not None and len(chosen) < length):
        raise exceptions.Refusal(
            f"only {len(chosen)} of {len(blocks)} blocks form a ({C}, {eps}) R.I.S."
        )
    return RisData(
        blocks=tuple(chosen),
        C=C,
        eps=eps,
        js=tuple(js),
        mode=SURROGATE_DP,
        positions=tuple(positions),
    )


@dataclass
class RisReport:
    ok: bool
    mode: str
    failures: list = field(default_factory=list)

    def __bool__(self):
        return self.ok

    def to_json(self) -> dict:
        return {"ok": self.ok, "mode": self.mode, "failures": list(self.failures)}


def validate_ris(ris: RisData, fam: FamilySpec) -> RisReport:
    """Re-check the R.I.S. conditions from scratch in the recorded mode."""
    s = fam.schedule
    failures = []
    blocks = list(ris.blocks)
    if len(ris.js) != len(blocks):
        failures.append(f"{len(ris.js)} indices for {len(blocks)} blocks")
        return RisReport(ok=False, mode=ris.mode, failures=failures)
    try:
        _require_successive(blocks)
    except exceptions.PreconditionFailed as exc:
        failures.append(str(exc))
    if any(b >= a for a, b in zip(ris.js[1:], ris.js)):
        failures.append("indices j_k are not strictly increasing")
    if not all(s.has_weight(j) for j in ris.js):
        failures.append("an index j_k has no weight")
        return RisReport(ok=False, mode=ris.mode, failures=failures)
    if Fraction(1, s.weight(ris.js[0])) > ris.eps:
        failures.append(f"1/m_{ris.js[0]} exceeds ε")
    for k in range(1, len(blocks)):
        if Fraction(len(blocks[k - 1]), s.weight(ris.js[k])) > ris.eps:
            failures.append(f"#supp x_{k}/m_{ris.js[k]} exceeds ε")
    for k, x in enumerate(blocks, start=1):
        if _upper(x, fam) > ris.C:
            failures.append(f"‖x_{k}‖ exceeds {ris.C}")
    if ris.mode == SURROGATE_DP:
        for k, (x, j) in enumerate(zip(blocks, ris.js), start=1):
            for tag in _low_weight_failures(x, j, ris.C, fam):
                failures.append(f"x_{k}: operation {tag} acts above C/w")
    elif ris.mode == AVERAGE_BOOKKEEPING:
        if len(ris.averages) != len(blocks) or len(ris.tags) != len(blocks):
            failures.append("bookkeeping mode needs the averages and their tags")
        else:
            for k, (avg, l, j) in enumerate(zip(ris.averages, ris.tags, ris.js), start=1):
                if avg.vector != blocks[k - 1]:
                    failures.append(f"x_{k} is not its recorded average")
                if j != 2 * l or avg.k != s.size(2 * l):
                    failures.append(f"x_{k} is not an ℓ₁^{{n_{j}}} average")
                for problem in _check_average(avg, fam):
                    failures.append(f"x_{k}: {problem}")
                if _bookkeeping_constant(avg, l, fam) > ris.C:
                    failures.append(f"x_{k}: interval estimate exceeds {ris.C}")
    else:
        failures.append(f"unknown checking mode {ris.mode!r}")
    if failures:
        log.info(f"R.I.S. rejected: {failures[0]}")
    return RisReport(ok=not failures, mode=ris.mode, failures=failures)


# Exact pairs


@dataclass
class ExactPairReport:
    clauses: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    mode: str = SURROGATE_DP
    relaxed: bool = False

    @property
    def ok(self) -> bool:
        """Clauses (ii) and (iii), the ones enforced exactly."""
        return bool(self.clauses.get("ii")) and bool(self.clauses.get("iii"))

    def to_json(self) -> dict:
        return {
            "clauses": dict(self.clauses),
            "details": dict(self.details),
            "mode": self.mode,
            "relaxed": self.relaxed,
        }


def verify_exact_pair(
    x: RationalVector, phi: Node, j: int, C, fam: FamilySpec
) -> ExactPairReport:
    """Check that (x, φ) is a (C, 2j) exact pair.

    Clause (iii), φ(x) = 1 with ran x = ran φ, and clause (ii),
    membership with w(φ) = m_{2j}, are exact. Clause (i) bounds every
    weight's action in the relaxed surrogate and is informational.
    """
    C = as_fraction(C)
    s = fam.schedule
    report = ExactPairReport()
    action = evaluate(phi, x)
    report.clauses["iii"] = action == 1 and x.range == phi.range
    if not report.clauses["iii"]:
        report.details["iii"] = f"φ(x) = {action}, ran x = {x.range}, ran φ = {phi.range}"
    membership = check_membership(phi, fam)
    weight = s.weight(2 * j)
    report.clauses["ii"] = membership.ok and phi.weight == weight
    if not report.clauses["ii"]:
        report.details["ii"] = f"{membership}; w(φ) = {phi.weight}, m_{2 * j} = {weight}"
    surrogate = fam.relaxed()
    problems = []
    if _upper(x, fam) > C:
        problems.append(f"‖x‖ exceeds {C}")
    values = weighted_norms(x, surrogate)
    for op in surrogate.operations:
        w = op.weight
        if w < weight and values[op.tag] > 3 * C / w:
            problems.append(f"{op.tag} acts above 3C/{w}")
        elif w > weight and values[op.tag] > C / weight**2:
            problems.append(f"{op.tag} acts above C/m_{2 * j}²")
    report.clauses["i"] = not problems
    if problems:
        report.details["i"] = "; ".join(problems)
        log.warning(f"Exact pair clause (i) not confirmed: {problems[0]}")
    return report


@dataclass
class ExactPair:
    x: RationalVector
    phi: Node
    j: int
    C: Fraction
    theta: Fraction
    ris: RisData
    stars: tuple
    report: ExactPairReport

    @property
    def weight_index(self) -> int:
        return 2 * self.j

    def to_json(self) -> dict:
        return {
            "j": self.j,
            "C": fraction_to_str(self.C),
            "theta": fraction_to_str(self.theta),
            "x": self.x.to_json(),
            "phi": tree_to_json(self.phi),
            "report": self.report.to_json(),
        }


def make_exact_pair(
    blocks: Sequence[RationalVector],
    j: int,
    fam: FamilySpec,
    reg: Optional[CodingRegistry] = None,
    *,
    C=3,
    eps=None,
    pieces: Optional[int] = None,
    normalize: bool = True,
) -> ExactPair:
    """Build x = θ(m_{2j}/n)Σx_k and φ = (1/m_{2j})Σx_k* from an R.I.S.

    Each block is paired with its norming functional from the plain part
    of the family and cut down to the range of that functional. The
    blocks then go through R.I.S. selection with constant *C* and
    ε = 1/(2m_{2j}³) unless given. With ``pieces`` below n_{2j} the pair
    is stamped relaxed. θ = n/Σx_k*(x_k) makes φ(x) = 1 and must lie in
    [1/6, 1]. A (C, ε) R.I.S. gives a (2C, 2j) pair.
    """
    s = fam.schedule
    _require_unit_ground(fam)
    if not s.has_size(2 * j):
        raise exceptions.PreconditionFailed(f"n_{2 * j} is not defined")
    full = s.size(2 * j)
    pieces = full if pieces is None else pieces
    if pieces < 1 or pieces > full:
        raise exceptions.PreconditionFailed(f"pieces={pieces} must be in 1..{full}")
    check_budget(pieces, f"n_{2 * j} R.I.S. members")
    weight = s.weight(2 * j)
    eps = Fraction(1, 2 * weight**3) if eps is None else as_fraction(eps)
    C = as_fraction(C)
    op = fam.lookup(2 * j)
    prepared, stars = [], []
    for z in blocks:
        if not z:
            continue
        cert = _lower(z, fam)
        if normalize:
            z = z.scale(1 / cert.value)
            cert = _lower(z, fam)
        elif cert.value < 1:
            raise exceptions.PreconditionFailed(f"block {z} has norm below 1")
        prepared.append(z.restrict(cert.tree.range))
        stars.append(cert.tree)
    ris = ris_from_blocks(prepared, C, eps, fam, length=pieces)
    chosen_stars = tuple(stars[p] for p in ris.positions)
    actions = [evaluate(f, x) for f, x in zip(chosen_stars, ris.blocks)]
    theta = Fraction(pieces) / sum(actions)
    if not Fraction(1, 6) <= theta <= 1:
        raise exceptions.Refusal(f"θ = {theta} is outside [1/6, 1]")
    x = _total(ris.blocks).scale(theta * weight / pieces)
    phi = Node.of(op, chosen_stars)
    report = verify_exact_pair(x, phi, j, 2 * C, fam)
    report.relaxed = pieces < full
    if report.relaxed:
        log.warning(f"Exact pair for 2j={2 * j} uses {pieces} of n_{2 * j} = {full} pieces")
    if not report.ok:
        raise exceptions.AuditFailure(
            f"constructed pair fails exact clauses: {report.details}"
        )
    return ExactPair(
        x=x,
        phi=phi,
        j=j,
        C=2 * C,
        theta=theta,
        ris=ris,
        stars=chosen_stars,
        report=report,
    )


# Dependent sequences


@dataclass
class DependentSequence:
    """Exact pairs (x_k, x_k*) whose functionals form a special sequence."""

    pairs: tuple
    j: int
    report: SpecialSequenceReport

    @property
    def weights(self) -> tuple:
        return tuple(p.weight_index for p in self.pairs)

    @property
    def vectors(self) -> tuple:
        return tuple(p.x for p in self.pairs)

    @property
    def functionals(self) -> tuple:
        return tuple(p.phi for p in self.pairs)

    def to_json(self) -> dict:
        return {
            "j": self.j,
            "weights": list(self.weights),
            "pairs": [p.to_json() for p in self.pairs],
            "special": self.report.to_json(),
        }


def make_dependent_sequence(
    Z: Sequence[RationalVector],
    W: Sequence[RationalVector],
    j: int,
    reg: CodingRegistry,
    fam: FamilySpec,
    length: int = 2,
    pieces: Optional[int] = None,
    *,
    C=3,
    eps=None,
    relaxed_threshold: Optional[int] = None,
) -> DependentSequence:
    """Alternate exact pairs from Z and W, weights chained through σ.

    The first functional takes the smallest admissible first weight
    2k; each later one takes m_{σ(x_1*, …, x_k*)}. Each pair uses only
    the blocks lying after the previous pair.
    """
    s = fam.schedule
    if not s.has_size(2 * j + 1):
        raise exceptions.PreconditionFailed(f"n_{2 * j + 1} is not defined")
    if length < 1 or length > s.size(2 * j + 1):
        raise exceptions.PreconditionFailed(
            f"length {length} must be in 1..n_{2 * j + 1} = {s.size(2 * j + 1)}"
        )
    index = smallest_first_index(fam, j, relaxed_threshold)
    pairs = []
    for k in range(length):
        source = Z if k % 2 == 0 else W
        after = pairs[-1].x.range.hi if pairs else 0
        available = [b for b in source if b and b.range.lo > after]
        if k > 0:
            index = reg.sigma([p.phi for p in pairs])
        pair_pieces = None if pieces is None else min(pieces, s.size(index))
        pairs.append(
            make_exact_pair(
                available, index // 2, fam, reg, C=C, eps=eps, pieces=pair_pieces
            )
        )
        log.debug(f"Dependent sequence member {k + 1} has weight index {index}")
    report = verify_special_sequence(
        [p.phi for p in pairs], j, reg, fam, relaxed_threshold=relaxed_threshold
    )
    if not report.ok:
        raise exceptions.AuditFailure(
            f"dependent sequence fails the special-sequence check: {report.failures}"
        )
    return DependentSequence(pairs=tuple(pairs), j=j, report=report)


@dataclass
class SpecialActionReport:
    bound: Fraction
    largest: Fraction
    checked: int
    violations: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "bound": fraction_to_str(self.bound),
            "largest": fraction_to_str(self.largest),
            "checked": self.checked,
            "holds": self.holds,
        }


def special_action_audit(dep: DependentSequence, fam: FamilySpec) -> SpecialActionReport:
    """|Φ(Σ_{k∈I}(−1)^{k+1}x_k)| ≤ C over all subintervals I.

    Φ runs over the special functional of the sequence and its
    restrictions to the ranges starting at each x_t*. Informational.
    """
    n = len(dep.pairs)
    C = max(p.C for p in dep.pairs)
    phi = special_functional(list(dep.functionals), dep.j, fam)
    functionals = [phi]
    for p in dep.pairs[1:]:
        functionals.append(restrict_functional(phi, Interval(p.phi.range.lo, phi.range.hi)))
    largest = Fraction(0)
    violations, checked = [], 0
    for lo in range(1, n + 1):
        for hi in range(lo, n + 1):
            v = _total(
                [dep.pairs[k - 1].x.scale((-1) ** (k + 1)) for k in range(lo, hi + 1)]
            )
            for f in functionals:
                checked += 1
                value = abs(evaluate(f, v))
                largest = max(largest, value)
                if value > C:
                    violations.append((lo, hi, value))
    if violations:
        log.warning(f"Special action exceeds {C} on {len(violations)} intervals")
    return SpecialActionReport(bound=C, largest=largest, checked=checked, violations=violations)
