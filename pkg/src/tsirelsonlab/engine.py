"""Exact norms of mixed Tsirelson type spaces.

The norm of a finitely supported vector is computed by a dynamic
program over the intervals of its compressed support. Each interval
keeps its best value together with the choice that produced it, so
the optimal functional can be rebuilt as a certificate tree.

Example usage:

.. code-block:: python

    fam = FamilySpec.mixed(ParameterSchedule(m=(2,), n=(2,)))
    cert = norm_mixed(make_vector([(1, 1), (2, 1), (3, 1)]), fam)
    cert.value  # Fraction(1, 1)
    cert.verify()

"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from . import exceptions
from .core import (
    PAPER_CONDITIONS,
    Interval,
    ParameterSchedule,
    RationalVector,
    Regime,
    budget,
    check_budget,
    flat_vector,
    fraction_to_str,
    integer_log,
    schedule_prod,
    validate_schedule,
)
from .normset import (
    T0,
    T0_PRIME,
    W_PRIME,
    W_PRIME_J0,
    ZERO,
    ChiLeaf,
    FamilySpec,
    FunctionalTree,
    Ground,
    Leaf,
    Node,
    Operation,
    OpKind,
    check_membership,
    coefficients,
    evaluate,
    random_tree,
    tree_to_json,
)

log = logging.getLogger(__name__)


BRUTEFORCE_SUPPORT_CAP = 8
MODIFIED_SUPPORT_CAP = 12


@dataclass
class NormCertificate:
    """A norm value with the functional that attains it."""

    value: Fraction
    tree: FunctionalTree
    family: FamilySpec
    vector: Optional[RationalVector] = None

    def verify(self, x: Optional[RationalVector] = None) -> bool:
        """Re-evaluate the tree and re-check its membership."""
        x = self.vector if x is None else x
        if x is None:
            raise exceptions.PreconditionFailed("no vector to verify against")
        if evaluate(self.tree, x) != self.value:
            return False
        return check_membership(self.tree, self.family).ok

    def require(self, x: Optional[RationalVector] = None) -> "NormCertificate":
        if not self.verify(x):
            raise exceptions.AuditFailure(
                f"certificate for value {self.value} does not re-verify"
            )
        return self

    def to_json(self) -> dict:
        return {
            "value": fraction_to_str(self.value),
            "family": self.family.name,
            "certificate": tree_to_json(self.tree),
        }


class _IntervalSolver:
    """Interval dynamic program over the compressed support of *x*.

    ``value[a][c]`` is the norm of the restriction of x to the support
    points ``a..c``. Children of an operation are taken on proper
    subintervals: a single child equal to the whole interval is
    dominated, and skipped points are covered by restriction.
    """

    def __init__(self, x: RationalVector, fam: FamilySpec):
        self.x = x
        self.fam = fam
        self.index = x.support
        self.values = [v for _, v in x.coords]
        self.size = len(self.values)
        self.ops = sorted(fam.operations, key=lambda op: op.factor, reverse=True)
        self.intervals = fam.ground is Ground.INTERVAL
        magnitudes = [abs(v) for v in self.values]
        self.flat = (
            not self.intervals and self.size > 1 and len(set(magnitudes)) == 1
        )
        self.abs_prefix = [Fraction(0)]
        self.prefix = [Fraction(0)]
        for value in self.values:
            self.abs_prefix.append(self.abs_prefix[-1] + abs(value))
            self.prefix.append(self.prefix[-1] + value)
        self.pieces = min(fam.max_size, self.size)
        self.table = {}
        self.choice = {}
        self.leaves = {}
        self.first_row = None

    def key(self, a: int, c: int):
        return c - a if self.flat else (a, c)

    def value(self, a: int, c: int) -> Fraction:
        return self.table[self.key(a, c)]

    def solve(self) -> "_IntervalSolver":
        N = self.size
        check_budget(N * N, "the interval table")
        log.debug(
            f"Interval DP over {N} points, {len(self.ops)} operations, "
            f"flat={self.flat}"
        )
        starts = [0] if self.flat else range(N - 1, -1, -1)
        for a in starts:
            self._solve_row(a)
        return self

    def _solve_row(self, a: int) -> None:
        N, K = self.size, self.pieces
        value = self.value
        # S[t][c]: best sum over exactly t successive pieces of a..c
        S = [None] + [[None] * N for _ in range(K)]
        best_abs, best_pos = Fraction(-1), a
        high, high_at = self.prefix[a], a
        low, low_at = self.prefix[a], a
        for c in range(a, N):
            length = c - a + 1
            running = None
            best_t = [None] * (K + 1)
            for t in range(2, min(K, length) + 1):
                best = None
                previous = S[t - 1]
                for cut in range(a + t - 2, c):
                    candidate = previous[cut] + value(cut + 1, c)
                    if best is None or candidate > best:
                        best = candidate
                S[t][c] = best
                if running is None or best > running[0]:
                    running = (best, t)
                best_t[t] = running
            # Leaf candidates
            if self.intervals:
                point = self.prefix[c + 1]
                if point > high:
                    high, high_at = point, c + 1
                if point < low:
                    low, low_at = point, c + 1
                leaf_value = high - low
                leaf = (low_at, high_at)
            else:
                if abs(self.values[c]) > best_abs:
                    best_abs, best_pos = abs(self.values[c]), c
                leaf_value = best_abs
                leaf = best_pos
            best_value, best_choice = leaf_value, None
            ell1 = self.abs_prefix[c + 1] - self.abs_prefix[a]
            for op in self.ops:
                if op.factor * ell1 <= best_value:
                    break
                top = min(op.size, length, K)
                if top < 2 or best_t[top] is None:
                    continue
                candidate = op.factor * best_t[top][0]
                if candidate > best_value:
                    best_value, best_choice = candidate, (op, best_t[top][1])
            key = self.key(a, c)
            self.table[key] = best_value
            self.choice[key] = best_choice
            self.leaves[key] = leaf
            S[1][c] = best_value
        if a == 0:
            self.first_row = S

    def partition(self, a: int, c: int, t: int) -> list[tuple[int, int]]:
        """An optimal split of ``a..c`` into exactly *t* pieces."""
        value = self.value
        best = {(1, cut): value(a, cut) for cut in range(a, c + 1)}
        parent = {}
        for tt in range(2, t + 1):
            for end in range(a + tt - 1, c + 1):
                chosen = None
                for cut in range(a + tt - 2, end):
                    candidate = best[(tt - 1, cut)] + value(cut + 1, end)
                    if chosen is None or candidate > chosen[0]:
                        chosen = (candidate, cut)
                best[(tt, end)] = chosen[0]
                parent[(tt, end)] = chosen[1]
        pieces = []
        end = c
        for tt in range(t, 1, -1):
            cut = parent[(tt, end)]
            pieces.append((cut + 1, end))
            end = cut
        pieces.append((a, end))
        return list(reversed(pieces))

    def leaf_tree(self, a: int, c: int) -> FunctionalTree:
        leaf = self.leaves[self.key(a, c)]
        if self.intervals:
            low_at, high_at = leaf
            if low_at < high_at:
                first, last, sign = low_at, high_at - 1, 1
            else:
                first, last, sign = high_at, low_at - 1, -1
            return ChiLeaf(Interval(self.index[first], self.index[last]), sign)
        position = a + leaf if self.flat else leaf
        sign = 1 if self.values[position] > 0 else -1
        return Leaf(self.index[position], sign)

    def tree(self, a: int, c: int) -> FunctionalTree:
        choice = self.choice[self.key(a, c)]
        if choice is None:
            return self.leaf_tree(a, c)
        op, t = choice
        children = [self.tree(lo, hi) for lo, hi in self.partition(a, c, t)]
        return Node.of(op, children)

    def weighted(self, ops: Iterable[Operation]) -> dict:
        """Per operation, the best action of functionals with that top operation."""
        N = self.size
        whole = self.value(0, N - 1)
        results = {}
        for op in ops:
            best = whole
            for t in range(2, min(op.size, N, self.pieces) + 1):
                best = max(best, self.first_row[t][N - 1])
            results[op.tag] = op.factor * best
        return results


def _zero_certificate(x: RationalVector, fam: FamilySpec) -> Optional[NormCertificate]:
    if not x:
        return NormCertificate(Fraction(0), ZERO, fam, x)
    return None


def _interval_dp(x: RationalVector, fam: FamilySpec) -> NormCertificate:
    trivial = _zero_certificate(x, fam)
    if trivial is not None:
        return trivial
    solver = _IntervalSolver(x, fam).solve()
    N = solver.size
    cert = NormCertificate(solver.value(0, N - 1), solver.tree(0, N - 1), fam, x)
    log.debug(f"Norm {cert.value} over {fam.name}")
    return cert


def _require_plain(fam: FamilySpec, what: str) -> None:
    if fam.has_special:
        raise exceptions.UnsupportedFamily(
            f"{what} cannot handle special operations; use the relaxed family"
        )
    if fam.has_modified:
        raise exceptions.UnsupportedFamily(
            f"{what} cannot handle modified operations; use norm_modified"
        )


def norm_mixed(x: RationalVector, fam: FamilySpec) -> NormCertificate:
    """Exact norm over a unit-leaf family with plain operations."""
    _require_plain(fam, "norm_mixed")
    if fam.ground is not Ground.UNIT:
        raise exceptions.UnsupportedFamily("norm_mixed needs unit leaves")
    return _interval_dp(x, fam)


def norm(x: RationalVector, fam: FamilySpec) -> NormCertificate:
    """Exact norm over unit-leaf or interval-leaf plain families."""
    _require_plain(fam, "norm")
    return _interval_dp(x, fam)


def weighted_norms(
    x: RationalVector, fam: FamilySpec, ops: Optional[Sequence[Operation]] = None
) -> dict:
    """Map each operation's tag to sup{f(x): f has that top operation}."""
    _require_plain(fam, "weighted_norms")
    ops = list(fam.operations if ops is None else ops)
    if not x:
        return {op.tag: Fraction(0) for op in ops}
    return _IntervalSolver(x, fam).solve().weighted(ops)


# Oracles


def _successive_blocks(positions: Sequence[int]) -> list[tuple[int, ...]]:
    """All ways of cutting sorted positions into consecutive runs."""
    count = len(positions)
    splits = []
    for gaps in range(1 << max(count - 1, 0)):
        blocks, current = [], 1 << positions[0]
        for i in range(1, count):
            if gaps >> (i - 1) & 1:
                blocks.append(current)
                current = 0
            current |= 1 << positions[i]
        blocks.append(current)
        splits.append(tuple(blocks))
    return splits


def _set_partitions(mask: int) -> list[tuple[int, ...]]:
    if mask == 0:
        return [()]
    low = mask & -mask
    rest = mask ^ low
    partitions = []
    sub = rest
    while True:
        block = sub | low
        for tail in _set_partitions(mask ^ block):
            partitions.append((block,) + tail)
        if sub == 0:
            break
        sub = (sub - 1) & rest
    return partitions


def norm_bruteforce(x: RationalVector, fam: FamilySpec, depth: int) -> Fraction:
    """Best action over every member tree of order at most *depth*.

    Exhaustive over subsets of the support, all child counts (including
    single children) and all block decompositions. Used as an
    independent oracle for the interval DP.
    """
    if fam.ground is not Ground.UNIT or fam.has_special:
        raise exceptions.UnsupportedFamily("brute force needs plain unit-leaf families")
    count = len(x)
    if count > BRUTEFORCE_SUPPORT_CAP:
        raise exceptions.Refusal(
            f"brute force is limited to {BRUTEFORCE_SUPPORT_CAP} support points"
        )
    if count == 0:
        return Fraction(0)
    if depth < 1:
        raise exceptions.PreconditionFailed("depth must be at least 1")
    magnitudes = [abs(v) for _, v in x.coords]
    masks = range(1, 1 << count)
    decompositions = {}
    for mask in masks:
        positions = [i for i in range(count) if mask >> i & 1]
        decompositions[mask] = {
            OpKind.PLAIN: _successive_blocks(positions),
            OpKind.MODIFIED: _set_partitions(mask) if fam.has_modified else [],
        }
    level = {
        mask: magnitudes[mask.bit_length() - 1] if mask & (mask - 1) == 0 else None
        for mask in masks
    }
    for _ in range(2, depth + 1):
        following = dict(level)
        for mask in masks:
            for op in fam.operations:
                behaviour = OpKind.MODIFIED if op.kind is OpKind.MODIFIED else OpKind.PLAIN
                for blocks in decompositions[mask][behaviour]:
                    if len(blocks) > op.size:
                        continue
                    parts = [level[block] for block in blocks]
                    if any(part is None for part in parts):
                        continue
                    candidate = op.factor * sum(parts, Fraction(0))
                    if following[mask] is None or candidate > following[mask]:
                        following[mask] = candidate
        level = following
    return max(v for v in level.values() if v is not None)


def norm_modified(x: RationalVector, fam: FamilySpec) -> Fraction:
    """Exact norm of the modified space: children need disjoint supports only."""
    if fam.ground is not Ground.UNIT or fam.has_special:
        raise exceptions.UnsupportedFamily("norm_modified needs a unit-leaf family")
    count = len(x)
    if count > MODIFIED_SUPPORT_CAP:
        raise exceptions.Refusal(
            f"modified norms are limited to {MODIFIED_SUPPORT_CAP} support points"
        )
    if count == 0:
        return Fraction(0)
    magnitudes = [abs(v) for _, v in x.coords]
    ops = sorted(
        ((op.factor, op.size) for op in fam.operations), reverse=True
    )

    def members(mask):
        return [magnitudes[i] for i in range(count) if mask >> i & 1]

    def blocks_with_low(mask):
        low = mask & -mask
        rest = mask ^ low
        sub = rest
        while True:
            yield sub | low
            if sub == 0:
                return
            sub = (sub - 1) & rest

    @lru_cache(maxsize=None)
    def value(mask):
        points = members(mask)
        best = max(points)
        ell1 = sum(points, Fraction(0))
        for factor, size in ops:
            if factor * ell1 <= best:
                break
            pieces = min(size, len(points))
            if pieces < 2:
                continue
            split = max(
                value(block) + at_most(mask ^ block, pieces - 1)
                for block in blocks_with_low(mask)
                if block != mask
            )
            best = max(best, factor * split)
        return best

    @lru_cache(maxsize=None)
    def at_most(mask, pieces):
        best = value(mask)
        if pieces < 2:
            return best
        for block in blocks_with_low(mask):
            if block != mask:
                best = max(best, value(block) + at_most(mask ^ block, pieces - 1))
        return best

    return value((1 << count) - 1)


# Lemma-level checks


@dataclass
class SupportCardinalityReport:
    holds: bool
    support_size: int
    bound: int
    q: tuple[int, int]
    exponent: Optional[int] = None
    lq_bound: Optional[int] = None
    lq_holds: Optional[bool] = None

    def __bool__(self):
        return self.holds

    def to_json(self) -> dict:
        return {
            "holds": self.holds,
            "support_size": self.support_size,
            "bound": str(self.bound),
            "q": {"m_base": str(self.q[0]), "n_arg": str(self.q[1])},
            "exponent": self.exponent,
            "lq_bound": None if self.lq_bound is None else str(self.lq_bound),
            "lq_holds": self.lq_holds,
        }


def support_cardinality_check(
    t: FunctionalTree, fam: FamilySpec, j: int
) -> SupportCardinalityReport:
    """Whether a functional of K_M(j−2) with large coordinates has #supp ≤ n_{j−1}.

    Every coordinate must exceed 1/m_j in absolute value. The exponent
    q = log_{m_{j−2}} n_{j−2} is kept as the pair (m_{j−2}, n_{j−2});
    when m_j is an exact power of m_{j−2} the bound m_j^q is reported
    exactly.
    """
    s = fam.schedule
    if j < 3:
        raise exceptions.Inapplicable(f"j={j}: the support bound starts at j=3")
    if not s.has_weight(j) or not s.has_size(j - 1):
        raise exceptions.Inapplicable(f"schedule does not reach index {j}")
    sub = fam.restricted(j - 2)
    report = check_membership(t, sub)
    if not report.ok:
        raise exceptions.Inapplicable(f"not a member of K_M({j - 2}): {report}")
    threshold = Fraction(1, s.weight(j))
    coords = coefficients(t)
    small = [n for n, c in coords.items() if abs(c) <= threshold]
    if small:
        raise exceptions.Inapplicable(
            f"coordinates at {small} do not exceed 1/m_{j} = {threshold}"
        )
    m_base, n_arg = s.weight(j - 2), s.size(j - 2)
    exponent = integer_log(s.weight(j), m_base)
    lq_bound = n_arg**exponent if exponent is not None else None
    result = SupportCardinalityReport(
        holds=len(coords) <= s.size(j - 1),
        support_size=len(coords),
        bound=s.size(j - 1),
        q=(m_base, n_arg),
        exponent=exponent,
        lq_bound=lq_bound,
        lq_holds=None if lq_bound is None else len(coords) < lq_bound,
    )
    log.info(f"Support bound at j={j}: {result.support_size} <= {result.bound}: {result.holds}")
    return result


@dataclass
class SparsityProfile:
    """Bounds M_ε on #{n: |f(e_n)| > ε} for every f in a family."""

    entries: dict
    method: str
    family: str
    samples: int = 0
    sources: dict = field(default_factory=dict)

    def bound(self, eps: Fraction) -> int:
        return self.entries[Fraction(eps)]

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "method": self.method,
            "samples": self.samples,
            "entries": {fraction_to_str(e): str(m) for e, m in sorted(self.entries.items())},
            "sources": {fraction_to_str(e): src for e, src in sorted(self.sources.items())},
        }


SPARSITY_FAMILIES = (T0, T0_PRIME, W_PRIME, W_PRIME_J0)


def _threshold_indices(fam: FamilySpec, eps: Fraction) -> list[int]:
    s = fam.schedule
    matches = []
    if eps.numerator == 1:
        matches = [j for j in range(1, len(s.m) + 1) if s.weight(j) == eps.denominator]
    if not matches:
        raise exceptions.Refusal(f"threshold {eps} is not of the form 1/m_j")
    return matches


def _growth_holds(s: ParameterSchedule, j: int) -> bool:
    try:
        return validate_schedule(s, j).holds(*PAPER_CONDITIONS)
    except exceptions.PreconditionFailed:
        return False


def _catalogued_bound(fam: FamilySpec, eps: Fraction) -> Optional[int]:
    """The closed-form bound at *eps*, or None where none applies.

    The formulas depend on the growth conditions of the schedule, so
    they are only used at indices where those conditions hold.
    """
    s = fam.schedule
    bounds = []
    for j in _threshold_indices(fam, eps):
        if not _growth_holds(s, j):
            continue
        if fam.name == T0_PRIME:
            if s.has_size(j):
                bounds.append(s.size(j) ** 2)
        elif fam.name == W_PRIME:
            if j % 2 == 0 and s.has_size(j - 1):
                bounds.append((4 * s.size(j - 1)) ** 4)
        elif fam.name == W_PRIME_J0:
            if j == 2 * fam.j0 + 1:
                bounds.append((4 * s.size(2 * fam.j0)) ** 2)
    return min(bounds) if bounds else None


def exact_sparsity_bound(fam: FamilySpec, eps: Fraction) -> int:
    """max #{n: |f(e_n)| > ε} over the members f of a unit-leaf family.

    A node with operation (A_k, 1/w) has at most k children, each of
    which contributes at most the count at threshold ε·w; a leaf
    contributes one coordinate below threshold 1. Nesting full nodes
    attains the maximum, so the value is exact.
    """
    eps = Fraction(eps)
    if fam.ground is not Ground.UNIT:
        raise exceptions.UnsupportedFamily(f"family {fam.name} does not have unit leaves")
    if not 0 < eps:
        raise exceptions.PreconditionFailed(f"threshold {eps} must be positive")
    ops = sorted({(op.size, op.weight) for op in fam.operations})
    if any(w < 2 for _, w in ops):
        raise exceptions.Refusal(f"family {fam.name} has an operation of weight 1")
    memo = {}

    def count(delta: Fraction) -> int:
        if delta >= 1:
            return 0
        if delta not in memo:
            memo[delta] = max(
                [1] + [size * count(delta * w) for size, w in ops if delta * w < 1]
            )
        return memo[delta]

    value = count(eps)
    check_budget(value.bit_length(), f"the sparsity count at {eps}")
    return value


def sparsity_profile(
    fam: FamilySpec,
    thresholds: Sequence[Fraction],
    *,
    samples: int = 200,
    rng=None,
    window: int = 30,
    depth: int = 3,
) -> SparsityProfile:
    """Sparsity bounds M_ε, falsification-tested on random trees.

    Closed-form bounds are used where the schedule's growth conditions
    hold and are checked against the exact count; everywhere else the
    exact count is the bound.
    """
    if fam.name not in SPARSITY_FAMILIES:
        raise exceptions.Refusal(f"family {fam.name} has no catalogued sparsity bounds")
    raw, sources = {}, {}
    for eps in thresholds:
        eps = Fraction(eps)
        _threshold_indices(fam, eps)
        exact = exact_sparsity_bound(fam, eps)
        catalogued = _catalogued_bound(fam, eps)
        if catalogued is None:
            raw[eps], sources[eps] = exact, "exact"
            continue
        if exact > catalogued:
            raise exceptions.AuditFailure(
                f"{fam.name}: members reach {exact} coordinates above {eps}, "
                f"over the closed-form bound {catalogued}"
            )
        raw[eps], sources[eps] = catalogued, "catalogued"
    # Smaller thresholds never get smaller bounds
    entries = {}
    running = 0
    for eps in sorted(raw, reverse=True):
        running = max(running, raw[eps])
        entries[eps] = running
    rng = np.random.default_rng(0) if rng is None else rng
    for _ in range(samples):
        tree = random_tree(fam, rng, 1, window, depth=depth)
        coords = coefficients(tree)
        for eps, bound in entries.items():
            count = sum(1 for c in coords.values() if abs(c) > eps)
            if count > bound:
                raise exceptions.AuditFailure(
                    f"{fam.name}: {count} coordinates above {eps} exceed {bound} "
                    f"for tree {tree_to_json(tree)}"
                )
    log.info(f"Sparsity profile for {fam.name} survived {samples} random trees")
    method = "+".join(sorted(set(sources.values())) + ["falsified"])
    return SparsityProfile(
        entries=entries, method=method, family=fam.name, samples=samples, sources=sources
    )


@dataclass
class DualBoundReport:
    q: tuple[int, int]
    base: Optional[int]
    comparisons: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "q": {"m_base": str(self.q[0]), "n_arg": str(self.q[1])},
            "base": self.base,
            "comparisons": [
                {"i": i, "increasing": outcome} for i, outcome in self.comparisons
            ],
        }


def dual_bound(s: ParameterSchedule, k: int) -> DualBoundReport:
    """q = log_{m_k} n_k and whether log_{m_i} n_i increases for i < k.

    Each comparison is decided exactly with integer logarithms of the
    weights over a common base; undecidable or over-budget comparisons
    are reported as None.
    """
    if not (s.has_weight(k) and s.has_size(k)):
        raise exceptions.PreconditionFailed(f"schedule does not reach index {k}")
    base = None
    for candidate in sorted({s.weight(i) for i in range(1, k + 1)}):
        if candidate >= 2 and all(
            integer_log(s.weight(i), candidate) for i in range(1, k + 1)
        ):
            base = candidate
            break
    if base is None and all(integer_log(s.weight(i), 2) for i in range(1, k + 1)):
        base = 2
    report = DualBoundReport(q=(s.weight(k), s.size(k)), base=base)
    limit = budget()
    for i in range(1, k):
        outcome = None
        if base is not None:
            a, b = integer_log(s.weight(i), base), integer_log(s.weight(i + 1), base)
            lhs_bits = s.size(i).bit_length() * b
            rhs_bits = s.size(i + 1).bit_length() * a
            if max(lhs_bits, rhs_bits) <= limit:
                outcome = s.size(i) ** b < s.size(i + 1) ** a
        report.comparisons.append((i, outcome))
    return report


# Lemma chains

LEMMA_4MJ = "lemma-4mj"
AUX_EVEN = "aux-even"
AUX_ODD = "aux-odd"
SUPPORT_BOUND = "support-bound"
DEPENDENT_AVERAGE = "dependent-average"
LEMMA_KINDS = (LEMMA_4MJ, AUX_EVEN, AUX_ODD, SUPPORT_BOUND, DEPENDENT_AVERAGE)
KIND_ALIASES = {"lemma-4/m_j": LEMMA_4MJ, "lemma-4/mj": LEMMA_4MJ}


@dataclass(frozen=True)
class AuditStep:
    name: str
    lhs: Fraction
    rhs: Fraction
    relation: str = "<="

    @property
    def holds(self) -> bool:
        return self.lhs == self.rhs if self.relation == "==" else self.lhs <= self.rhs

    @property
    def margin(self) -> Fraction:
        return Fraction(self.rhs) - Fraction(self.lhs)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "relation": self.relation,
            "lhs": fraction_to_str(self.lhs),
            "rhs": fraction_to_str(self.rhs),
            "holds": self.holds,
            "margin": fraction_to_str(self.margin),
        }


@dataclass
class AuditReport:
    kind: str
    j: int
    steps: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(step.holds for step in self.steps)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "j": self.j,
            "passed": self.passed,
            "steps": [step.to_json() for step in self.steps],
        }


def _lemma_4mj(s: ParameterSchedule, j: int) -> list[AuditStep]:
    if j < 3:
        raise exceptions.PreconditionFailed("the 4/m_j chain needs j >= 3")
    m, p = s.weight, s.p
    shifted = sum(
        m(j - k + 1) * schedule_prod(s, j - k, j - 1) for k in range(1, j)
    )
    halving = sum(
        (
            Fraction(schedule_prod(s, j - k - 1, j - 1), 2 ** (j - k + 1))
            for k in range(1, j - 1)
        ),
        Fraction(0),
    ) + m(2) * p(j)
    geometric = (
        sum((Fraction(1, 2 ** (j - k + 1)) for k in range(1, j - 1)), Fraction(0))
        * p(j)
        + 2 * p(j)
    )
    return [
        AuditStep("weights below the size gaps", Fraction(shifted), halving),
        AuditStep("partial products below p_j", halving, geometric),
        AuditStep("geometric sum", geometric, Fraction(3 * p(j))),
    ]


def _aux_even(s: ParameterSchedule, j: int) -> list[AuditStep]:
    if j < 2:
        raise exceptions.PreconditionFailed("the even auxiliary chain needs j >= 2")
    m, n = s.weight, s.size
    return [
        AuditStep("m_2j = m_2j-2^4", Fraction(m(2 * j)), Fraction(m(2 * j - 2) ** 4), "=="),
        AuditStep(
            "(4n_2j-1)^5 m_2j <= n_2j",
            Fraction((4 * n(2 * j - 1)) ** 5 * m(2 * j)),
            Fraction(n(2 * j)),
        ),
    ]


def _aux_odd(s: ParameterSchedule, j: int) -> list[AuditStep]:
    if j < 1:
        raise exceptions.PreconditionFailed("the odd auxiliary chain needs j >= 1")
    m, n = s.weight, s.size
    return [
        AuditStep("m_2j+1 = m_2j^2", Fraction(m(2 * j + 1)), Fraction(m(2 * j) ** 2), "=="),
        AuditStep(
            "(4n_2j)^3 m_2j+1 <= n_2j+1",
            Fraction((4 * n(2 * j)) ** 3 * m(2 * j + 1)),
            Fraction(n(2 * j + 1)),
        ),
    ]


def _support_bound(s: ParameterSchedule, j: int) -> list[AuditStep]:
    if j < 3:
        raise exceptions.PreconditionFailed("the support bound chain needs j >= 3")
    m, n = s.weight, s.size
    exponent = integer_log(m(j), m(j - 2))
    steps = [
        AuditStep(
            "m_j is a power of m_j-2",
            Fraction(0 if exponent is None else 1),
            Fraction(1),
            "==",
        )
    ]
    if exponent is not None:
        steps.append(
            AuditStep(
                "n_j-2^r <= n_j-1",
                Fraction(n(j - 2) ** exponent),
                Fraction(n(j - 1)),
            )
        )
    return steps


def _dependent_average(s: ParameterSchedule, j: int) -> list[AuditStep]:
    if j < 1:
        raise exceptions.PreconditionFailed("the dependent average chain needs j >= 1")
    m, n = s.weight, s.size
    return [
        AuditStep(
            "3 m_2j+1 <= n_2j+1^2",
            Fraction(3 * m(2 * j + 1)),
            Fraction(n(2 * j + 1) ** 2),
        )
    ]


_CHAINS = {
    LEMMA_4MJ: _lemma_4mj,
    AUX_EVEN: _aux_even,
    AUX_ODD: _aux_odd,
    SUPPORT_BOUND: _support_bound,
    DEPENDENT_AVERAGE: _dependent_average,
}


def audit_lemma_chain(kind: str, s: ParameterSchedule, j: int) -> AuditReport:
    """Re-evaluate the closing arithmetic of a lemma exactly.

    Only paper-minimal schedules are audited; toy schedules need not
    satisfy these chains and are refused.
    """
    kind = KIND_ALIASES.get(kind, kind)
    if kind not in _CHAINS:
        raise exceptions.PreconditionFailed(f"unknown lemma chain {kind!r}")
    if s.regime is not Regime.PAPER_MINIMAL:
        raise exceptions.Refusal(
            f"the {kind} chain is only audited on paper-minimal schedules"
        )
    report = AuditReport(kind=kind, j=j, steps=_CHAINS[kind](s, j))
    log.info(f"Lemma chain {kind} at j={j}: passed={report.passed}")
    return report


# Profiles


@dataclass
class BiorthogonalityProfile:
    j: int
    vector: RationalVector
    norm: NormCertificate
    weighted: dict
    checks: dict

    @property
    def lower_bound_holds(self) -> bool:
        return self.norm.value >= 1


def biorthogonality_profile(fam: FamilySpec, j: int) -> BiorthogonalityProfile:
    """Norms of y_j = (m_j/n_j)Σ_{l≤n_j} e_l, overall and per operation.

    Per operation i the computed ‖y_j‖_i is compared with 2/m_i (i < j)
    and m_j/m_i (i > j). The certificate (1/m_j)Σ e_l* forces ‖y_j‖ ≥ 1.
    """
    _require_plain(fam, "biorthogonality_profile")
    s = fam.schedule
    op = fam.lookup(j)
    check_budget(op.size, f"n_{j}")
    y = flat_vector(range(1, op.size + 1), Fraction(op.weight, op.size))
    cert = norm_mixed(y, fam)
    lower = Node.of(op, [Leaf(i) for i in range(1, op.size + 1)])
    if evaluate(lower, y) != 1 or cert.value < 1:
        raise exceptions.AuditFailure(f"‖y_{j}‖ fell below 1")
    weighted = weighted_norms(y, fam)
    checks = {}
    for other in fam.operations:
        i = other.tag.j
        if i < j:
            checks[i] = weighted[other.tag] <= Fraction(2, s.weight(i))
        elif i > j:
            checks[i] = weighted[other.tag] <= Fraction(s.weight(j), s.weight(i))
    return BiorthogonalityProfile(j=j, vector=y, norm=cert, weighted=weighted, checks=checks)


@dataclass
class AverageProfile:
    j: int
    value: Fraction
    lower: Fraction
    upper: Fraction
    lower_holds: bool
    upper_holds: bool
    upper_asserted: bool


def average_profile(fam: FamilySpec, j: int) -> AverageProfile:
    """Exact ‖(1/p_j)Σ_{l≤p_j} e_l‖ against the bounds 1/m_j and 4/m_j.

    The upper bound is only asserted when the schedule satisfies the
    growth conditions the bound depends on.
    """
    s = fam.schedule
    p = s.p(j)
    check_budget(p, f"p_{j}")
    x = flat_vector(range(1, p + 1), Fraction(1, p))
    value = norm_mixed(x, fam).value
    lower, upper = Fraction(1, s.weight(j)), Fraction(4, s.weight(j))
    try:
        asserted = validate_schedule(s, j).holds(*PAPER_CONDITIONS)
    except exceptions.PreconditionFailed:
        asserted = False
    profile = AverageProfile(
        j=j,
        value=value,
        lower=lower,
        upper=upper,
        lower_holds=value >= lower,
        upper_holds=value <= upper,
        upper_asserted=asserted,
    )
    if asserted and not profile.upper_holds:
        raise exceptions.AuditFailure(f"average at j={j} exceeds 4/m_j")
    return profile
