"""Functionals given by tree analyses over a declared norming-set family.

A family is a ground set (unit leaves ``±e_k*`` or interval leaves
``±χ_I``) closed under a list of ``(A_n, θ)`` operations taken from a
:py:class:`~tsirelsonlab.core.ParameterSchedule`. A functional is
always carried together with its tree, so its weight and order are
those of the declared tree.

Example usage:

.. code-block:: python

    fam = FamilySpec.mixed(ParameterSchedule(m=(2, 4), n=(2, 4)))
    f = Node.of(fam.lookup(1), [Leaf(1), Leaf(2)])
    assert check_membership(f, fam).ok
    evaluate(f, make_vector([(1, 1), (2, 1)]))  # Fraction(1, 1)

"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Any, Mapping, Optional, Sequence, Union

import numpy as np

from . import exceptions
from .core import (
    Interval,
    ParameterSchedule,
    RationalVector,
    _monotone_images,
    as_fraction,
    fraction_to_str,
    hull,
    minimal_paper_schedule,
)

log = logging.getLogger(__name__)


class Ground(str, Enum):
    UNIT = "unit"
    INTERVAL = "interval"


class OpKind(str, Enum):
    PLAIN = "plain"
    SPECIAL = "special"
    MODIFIED = "modified"


class SizeSource(str, Enum):
    """Where an operation's admissibility size comes from."""

    N_J = "n_j"
    FOUR_N_J = "4n_j"
    N_NEXT = "n_j+1"
    N_ODD = "n_2j+1"
    FOUR_N_ODD = "4n_2j+1"


class FactorSource(str, Enum):
    """Where an operation's factor comes from.

    The square root √m_{2j+1} of a special operation is stored as the
    integer m_{2j}.
    """

    INV_M_J = "1/m_j"
    INV_SQRT_M_ODD = "1/sqrt(m_2j+1)"
    INV_M_EVEN = "1/m_2j"


DEFAULT_SOURCES = {
    OpKind.PLAIN: (SizeSource.N_J, FactorSource.INV_M_J),
    OpKind.MODIFIED: (SizeSource.N_J, FactorSource.INV_M_J),
    OpKind.SPECIAL: (SizeSource.N_ODD, FactorSource.INV_SQRT_M_ODD),
}


@dataclass(frozen=True, order=True)
class OpTag:
    """The identity of an operation: index, kind and parameter sources."""

    j: int
    kind: OpKind = OpKind.PLAIN
    size: SizeSource = SizeSource.N_J
    factor: FactorSource = FactorSource.INV_M_J

    @classmethod
    def default(cls, j: int, kind: OpKind = OpKind.PLAIN) -> "OpTag":
        kind = OpKind(kind)
        size, factor = DEFAULT_SOURCES[kind]
        return cls(j=j, kind=kind, size=size, factor=factor)

    @property
    def weight_index(self) -> int:
        """The index i with factor 1/m_i."""
        if self.factor is FactorSource.INV_M_J:
            return self.j
        return 2 * self.j

    def to_json(self) -> dict:
        return {
            "j": self.j,
            "kind": self.kind.value,
            "size": self.size.value,
            "factor": self.factor.value,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "OpTag":
        kind = OpKind(data.get("kind", OpKind.PLAIN.value))
        size, factor = DEFAULT_SOURCES[kind]
        return cls(
            j=int(data["j"]),
            kind=kind,
            size=SizeSource(data.get("size", size.value)),
            factor=FactorSource(data.get("factor", factor.value)),
        )

    def __str__(self):
        return f"({self.kind.value} j={self.j}, A_{self.size.value}, {self.factor.value})"


def _size_from(tag: OpTag, s: ParameterSchedule) -> int:
    j = tag.j
    if tag.size is SizeSource.N_J:
        return s.size(j)
    if tag.size is SizeSource.FOUR_N_J:
        return 4 * s.size(j)
    if tag.size is SizeSource.N_NEXT:
        return s.size(j + 1)
    if tag.size is SizeSource.N_ODD:
        return s.size(2 * j + 1)
    return 4 * s.size(2 * j + 1)


@dataclass(frozen=True)
class Operation:
    """An ``(A_size, factor)`` operation resolved against a schedule.

    ``kind`` is the behaviour used for validation; it differs from
    ``tag.kind`` only in relaxed families.
    """

    tag: OpTag
    size: int
    factor: Fraction
    kind: OpKind

    @classmethod
    def from_tag(cls, tag: OpTag, s: ParameterSchedule) -> "Operation":
        return cls(
            tag=tag,
            size=_size_from(tag, s),
            factor=Fraction(1, s.weight(tag.weight_index)),
            kind=tag.kind,
        )

    @property
    def weight(self) -> int:
        return self.factor.denominator

    @property
    def weight_index(self) -> int:
        return self.tag.weight_index


# Catalogued family names
MIXED = "mixed"
T0 = "T0"
T0_PRIME = "T0'"
W_PRIME = "W'"
W_PRIME_J0 = "W'_j0"
MODIFIED = "modified"
JAMESIFIED = "jamesified"
KD = "kd"
CATALOG = (MIXED, T0, T0_PRIME, W_PRIME, W_PRIME_J0, MODIFIED, JAMESIFIED, KD)


def _default_J(s: ParameterSchedule, J: Optional[int], shift: int = 0) -> int:
    limit = min(len(s.m), len(s.n) - shift)
    if J is None:
        J = limit
    if J < 1 or J > limit:
        raise exceptions.PreconditionFailed(
            f"J={J} is outside the schedule (at most {limit})"
        )
    return J


def _paired_indices(s: ParameterSchedule, exclude: Optional[int] = None) -> list[int]:
    return [
        j
        for j in range(1, len(s.m) // 2 + 1)
        if s.has_size(2 * j + 1) and j != exclude
    ]


@dataclass(frozen=True, eq=False)
class FamilySpec:
    """A norming-set family: ground set, operations and schedule.

    ``registry`` is the coding registry that validates special
    operations, ``relaxed_threshold`` replaces the first-weight
    threshold of special sequences at toy scale.
    """

    name: str
    ground: Ground
    operations: tuple[Operation, ...]
    schedule: ParameterSchedule
    j0: Optional[int] = None
    registry: Any = None
    relaxed_threshold: Optional[int] = None

    @cached_property
    def _by_tag(self) -> dict:
        return {op.tag: op for op in self.operations}

    @cached_property
    def _by_key(self) -> dict:
        keyed = {}
        for op in self.operations:
            keyed.setdefault((op.tag.j, op.tag.kind), []).append(op)
        return keyed

    def resolve(self, tag: OpTag) -> Optional[Operation]:
        return self._by_tag.get(tag)

    def lookup(self, j: int, kind: OpKind = OpKind.PLAIN) -> Operation:
        """The unique operation with index *j* and *kind*."""
        candidates = self._by_key.get((j, OpKind(kind)), [])
        if len(candidates) != 1:
            raise exceptions.PreconditionFailed(
                f"family {self.name} has {len(candidates)} {OpKind(kind).value} "
                f"operations with index {j}"
            )
        return candidates[0]

    @property
    def has_special(self) -> bool:
        return any(op.kind is OpKind.SPECIAL for op in self.operations)

    @property
    def has_modified(self) -> bool:
        return any(op.kind is OpKind.MODIFIED for op in self.operations)

    @property
    def max_size(self) -> int:
        return max((op.size for op in self.operations), default=0)

    def relaxed(self) -> "FamilySpec":
        """The computable surrogate with special operations made plain."""
        ops = tuple(
            Operation(op.tag, op.size, op.factor, OpKind.PLAIN)
            if op.kind is OpKind.SPECIAL
            else op
            for op in self.operations
        )
        return FamilySpec(
            name=f"{self.name}-relaxed" if self.has_special else self.name,
            ground=self.ground,
            operations=ops,
            schedule=self.schedule,
            j0=self.j0,
        )

    def plain_part(self) -> "FamilySpec":
        """The sub-family without special operations; its members lie in self."""
        ops = tuple(op for op in self.operations if op.tag.kind is not OpKind.SPECIAL)
        return FamilySpec(
            name=f"{self.name}-plain" if self.has_special else self.name,
            ground=self.ground,
            operations=ops,
            schedule=self.schedule,
            j0=self.j0,
        )

    def restricted(self, max_index: int) -> "FamilySpec":
        """The sub-family with operations of weight index at most *max_index*."""
        ops = tuple(op for op in self.operations if op.weight_index <= max_index)
        return FamilySpec(
            name=f"{self.name}({max_index})",
            ground=self.ground,
            operations=ops,
            schedule=self.schedule,
            j0=self.j0,
            registry=self.registry,
            relaxed_threshold=self.relaxed_threshold,
        )

    @classmethod
    def _build(cls, name, ground, tags, s, **kwargs) -> "FamilySpec":
        ops = tuple(Operation.from_tag(tag, s) for tag in tags)
        return cls(name=name, ground=Ground(ground), operations=ops, schedule=s, **kwargs)

    @classmethod
    def mixed(cls, s: ParameterSchedule, J: Optional[int] = None, name=MIXED):
        """K[(m_j, n_j)]_{j≤J} over unit leaves."""
        J = _default_J(s, J)
        tags = [OpTag(j) for j in range(1, J + 1)]
        return cls._build(name, Ground.UNIT, tags, s)

    @classmethod
    def t0(cls, s: ParameterSchedule, J: Optional[int] = None):
        return cls.mixed(s, J, name=T0)

    @classmethod
    def t0_prime(cls, s: ParameterSchedule, J: Optional[int] = None):
        """Operations (A_{n_{j+1}}, 1/m_j)."""
        J = _default_J(s, J, shift=1)
        tags = [OpTag(j, size=SizeSource.N_NEXT) for j in range(1, J + 1)]
        return cls._build(T0_PRIME, Ground.UNIT, tags, s)

    @classmethod
    def w_prime(cls, s: ParameterSchedule, J: Optional[int] = None, j0=None):
        """Operations (A_{4n_i}, 1/m_i) and (A_{4n_{2j+1}}, 1/m_{2j})."""
        J = _default_J(s, J)
        tags = [OpTag(i, size=SizeSource.FOUR_N_J) for i in range(1, J + 1)]
        tags += [
            OpTag(j, size=SizeSource.FOUR_N_ODD, factor=FactorSource.INV_M_EVEN)
            for j in _paired_indices(s, exclude=j0)
        ]
        name = W_PRIME if j0 is None else W_PRIME_J0
        return cls._build(name, Ground.UNIT, tags, s, j0=j0)

    @classmethod
    def w_prime_j0(cls, s: ParameterSchedule, j0: int, J: Optional[int] = None):
        """W′ without the (A_{4n_{2j0+1}}, 1/m_{2j0}) operation."""
        if j0 < 1:
            raise exceptions.PreconditionFailed(f"j0={j0} must be positive")
        return cls.w_prime(s, J, j0=j0)

    @classmethod
    def modified(cls, s: ParameterSchedule, J: Optional[int] = None):
        """K_M: children need only disjoint supports."""
        J = _default_J(s, J)
        tags = [OpTag.default(j, OpKind.MODIFIED) for j in range(1, J + 1)]
        return cls._build(MODIFIED, Ground.UNIT, tags, s)

    @classmethod
    def jamesified(cls, s: ParameterSchedule, J: Optional[int] = None):
        """D₀: interval leaves ±χ_I closed under the plain operations."""
        J = _default_J(s, J)
        tags = [OpTag(j) for j in range(1, J + 1)]
        return cls._build(JAMESIFIED, Ground.INTERVAL, tags, s)

    @classmethod
    def kd(
        cls,
        s: ParameterSchedule,
        registry=None,
        J: Optional[int] = None,
        relaxed_threshold: Optional[int] = None,
    ):
        """Plain operations plus the special operations (A_{n_{2j+1}}, 1/m_{2j})."""
        J = _default_J(s, J)
        tags = [OpTag(j) for j in range(1, J + 1)]
        tags += [OpTag.default(j, OpKind.SPECIAL) for j in _paired_indices(s)]
        return cls._build(
            KD,
            Ground.UNIT,
            tags,
            s,
            registry=registry,
            relaxed_threshold=relaxed_threshold,
        )

    def to_json(self) -> dict:
        data = {
            "catalog": self.name,
            "schedule": self.schedule.to_json(),
            "J": max(
                (
                    op.tag.j
                    for op in self.operations
                    if op.tag.factor is FactorSource.INV_M_J
                ),
                default=0,
            ),
        }
        if self.j0 is not None:
            data["j0"] = self.j0
        return data


def family_from_json(data: Mapping, registry=None) -> FamilySpec:
    """Build a catalogued family from its JSON description.

    ``schedule`` is either a schedule object or the string ``"paper"``
    for the paper-minimal schedule with ``J + 2`` weights.
    """
    catalog = data.get("catalog", MIXED)
    J = data.get("J")
    J = None if J is None else int(J)
    raw = data.get("schedule", "paper")
    if raw == "paper":
        s = minimal_paper_schedule(max(3, (J or 3) + 2))
    else:
        s = ParameterSchedule.from_json(raw)
    if catalog in (MIXED, T0):
        return FamilySpec.mixed(s, J, name=catalog)
    if catalog == T0_PRIME:
        return FamilySpec.t0_prime(s, J)
    if catalog == W_PRIME:
        return FamilySpec.w_prime(s, J)
    if catalog == W_PRIME_J0:
        return FamilySpec.w_prime_j0(s, int(data["j0"]), J)
    if catalog == MODIFIED:
        return FamilySpec.modified(s, J)
    if catalog == JAMESIFIED:
        return FamilySpec.jamesified(s, J)
    if catalog == KD:
        threshold = data.get("relaxed_threshold")
        return FamilySpec.kd(
            s,
            registry=registry,
            J=J,
            relaxed_threshold=None if threshold is None else int(threshold),
        )
    raise exceptions.UnsupportedFamily(f"unknown family catalog {catalog!r}")


# Functional trees


class ZeroFunctional:
    """The zero functional, result of an empty restriction."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    support = frozenset()
    range = None
    order = 0
    weight = None

    def __repr__(self):
        return "ZERO"


ZERO = ZeroFunctional()


@dataclass(frozen=True)
class Leaf:
    """The unit functional ``sign·e_index*``."""

    index: int
    sign: int = 1

    @cached_property
    def support(self) -> frozenset:
        return frozenset((self.index,))

    @property
    def range(self) -> Interval:
        return Interval(self.index, self.index)

    order = 1
    weight = None


@dataclass(frozen=True)
class ChiLeaf:
    """The interval functional ``sign·χ_I``."""

    interval: Interval
    sign: int = 1

    @cached_property
    def support(self) -> frozenset:
        return frozenset(self.interval)

    @property
    def range(self) -> Interval:
        return self.interval

    order = 1
    weight = None


@dataclass(frozen=True)
class Node:
    """``factor·(f_1 + … + f_d)`` produced by the operation ``op``.

    ``window`` is set on restricted special functionals ``E·f``, whose
    children stay intact so the coded sequence remains checkable.
    """

    op: OpTag
    factor: Fraction
    children: tuple
    window: Optional[Interval] = None

    @classmethod
    def of(cls, op: Operation, children: Sequence, window=None) -> "Node":
        return cls(op=op.tag, factor=op.factor, children=tuple(children), window=window)

    @cached_property
    def effective_children(self) -> tuple:
        if self.window is None:
            return self.children
        kept = (restrict_functional(child, self.window) for child in self.children)
        return tuple(child for child in kept if child is not ZERO)

    @cached_property
    def support(self) -> frozenset:
        points = frozenset()
        for child in self.effective_children:
            points = points | child.support
        return points

    @cached_property
    def range(self) -> Optional[Interval]:
        if not self.support:
            return None
        return Interval(min(self.support), max(self.support))

    @cached_property
    def order(self) -> int:
        return 1 + max((child.order for child in self.children), default=0)

    @property
    def weight(self) -> Fraction:
        return 1 / self.factor


FunctionalTree = Union[Leaf, ChiLeaf, Node, ZeroFunctional]


def evaluate(t: FunctionalTree, x: RationalVector) -> Fraction:
    """The exact action f(x) of the functional with tree *t*."""
    if t is ZERO:
        return Fraction(0)
    if isinstance(t, Leaf):
        return t.sign * x[t.index]
    if isinstance(t, ChiLeaf):
        total = sum((v for i, v in x.coords if i in t.interval), Fraction(0))
        return t.sign * total
    if t.window is not None:
        x = x.restrict(t.window)
    return t.factor * sum((evaluate(child, x) for child in t.children), Fraction(0))


def coefficients(t: FunctionalTree) -> dict[int, Fraction]:
    """The coordinates f(e_n) of the functional, keyed by n."""
    if t is ZERO:
        return {}
    if isinstance(t, Leaf):
        return {t.index: Fraction(t.sign)}
    if isinstance(t, ChiLeaf):
        return {i: Fraction(t.sign) for i in t.interval}
    total = {}
    for child in t.effective_children:
        for index, value in coefficients(child).items():
            total[index] = total.get(index, Fraction(0)) + t.factor * value
    return {i: v for i, v in total.items() if v != 0}


def negate(t: FunctionalTree) -> FunctionalTree:
    if t is ZERO:
        return ZERO
    if isinstance(t, Leaf):
        return Leaf(t.index, -t.sign)
    if isinstance(t, ChiLeaf):
        return ChiLeaf(t.interval, -t.sign)
    return Node(t.op, t.factor, tuple(negate(c) for c in t.children), t.window)


def restrict_functional(t: FunctionalTree, E: Interval) -> FunctionalTree:
    """The tree of the restriction E·f, or ``ZERO`` if it vanishes."""
    if t is ZERO:
        return ZERO
    if isinstance(t, Leaf):
        return t if t.index in E else ZERO
    if isinstance(t, ChiLeaf):
        part = t.interval.intersection(E)
        return ZERO if part is None else ChiLeaf(part, t.sign)
    if t.op.kind is OpKind.SPECIAL or t.window is not None:
        window = E if t.window is None else t.window.intersection(E)
        if window is None or not any(i in window for i in t.support):
            return ZERO
        return Node(t.op, t.factor, t.children, window)
    children = tuple(
        child
        for child in (restrict_functional(c, E) for c in t.children)
        if child is not ZERO
    )
    if not children:
        return ZERO
    return Node(t.op, t.factor, children)


def spread(
    t: FunctionalTree, mapping: Mapping[int, int], fam: Optional[FamilySpec] = None
) -> FunctionalTree:
    """Re-index the leaves of *t* through a strictly increasing map.

    Interval leaves must map onto intervals. Special and restricted
    nodes are refused since their coding depends on the exact indices.
    With *fam* the result is re-checked for membership.
    """
    images = _monotone_images(sorted(t.support), mapping)

    def remap(node):
        if node is ZERO:
            return ZERO
        if isinstance(node, Leaf):
            return Leaf(images[node.index], node.sign)
        if isinstance(node, ChiLeaf):
            lo, hi = images[node.interval.lo], images[node.interval.hi]
            if hi - lo != node.interval.hi - node.interval.lo:
                raise exceptions.PreconditionFailed(
                    f"interval {node.interval} does not map onto an interval"
                )
            return ChiLeaf(Interval(lo, hi), node.sign)
        if node.op.kind is OpKind.SPECIAL or node.window is not None:
            raise exceptions.PreconditionFailed(
                "special or restricted functionals cannot be spread"
            )
        return Node(node.op, node.factor, tuple(remap(c) for c in node.children))

    result = remap(t)
    if fam is not None:
        report = check_membership(result, fam)
        if not report.ok:
            raise exceptions.InvalidTree(f"spread tree left the family: {report}")
    return result


# Membership


@dataclass(frozen=True)
class Violation:
    path: tuple[int, ...]
    rule: str
    detail: str

    def __str__(self):
        where = "/".join(str(p) for p in self.path) or "root"
        return f"{where}: {self.rule}: {self.detail}"


@dataclass
class MembershipReport:
    ok: bool
    weight: Optional[Fraction] = None
    order: Optional[int] = None
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return f"member (weight {self.weight}, order {self.order})"
        return "; ".join(str(v) for v in self.violations)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "weight": None if self.weight is None else fraction_to_str(self.weight),
            "order": self.order,
            "violations": [str(v) for v in self.violations],
        }


def _check(t, fam: FamilySpec, path: tuple, violations: list) -> None:
    def fail(rule, detail):
        violations.append(Violation(path, rule, detail))

    if t is ZERO:
        return
    if isinstance(t, Leaf):
        if t.sign not in (1, -1):
            fail("sign", f"leaf sign {t.sign}")
        if t.index < 1:
            fail("index", f"leaf index {t.index}")
        return
    if isinstance(t, ChiLeaf):
        if fam.ground is not Ground.INTERVAL:
            fail("ground", "interval leaf in a unit-leaf family")
        if t.sign not in (1, -1):
            fail("sign", f"leaf sign {t.sign}")
        return
    if not isinstance(t, Node):
        fail("type", f"unexpected tree node {t!r}")
        return
    op = fam.resolve(t.op)
    if op is None:
        fail("operation", f"{t.op} is not an operation of {fam.name}")
        return
    if t.factor != op.factor:
        fail("factor", f"factor {t.factor} differs from {op.factor}")
    if not t.children:
        fail("empty", "operation applied to no functionals")
        return
    if len(t.children) > op.size:
        fail("size", f"{len(t.children)} children exceed the bound {op.size}")
    if any(child is ZERO for child in t.children):
        fail("zero", "zero functional used as a child")
    live = [child for child in t.children if child is not ZERO]
    if op.kind is OpKind.MODIFIED:
        seen = set()
        for child in live:
            if seen & child.support:
                fail("disjoint", "children supports overlap")
                break
            seen |= child.support
    else:
        for left, right in zip(live, live[1:]):
            if left.range is None or right.range is None:
                continue
            if not left.range.precedes(right.range):
                fail("successive", f"ranges {left.range} and {right.range} overlap")
                break
    if op.kind is OpKind.SPECIAL:
        from .constructions.special import verify_special_sequence

        report = verify_special_sequence(
            list(t.children), t.op.j, fam.registry, fam, check_members=False
        )
        for clause in report.failures:
            fail(f"special:{clause}", report.details.get(clause, ""))
    for position, child in enumerate(t.children):
        _check(child, fam, path + (position,), violations)


def check_membership(t: FunctionalTree, fam: FamilySpec) -> MembershipReport:
    """Verify every node of *t* against the family."""
    violations = []
    _check(t, fam, (), violations)
    if violations:
        log.debug(f"Tree rejected by {fam.name}: {violations[0]}")
        return MembershipReport(ok=False, violations=violations)
    weight = t.weight if isinstance(t, Node) else None
    return MembershipReport(ok=True, weight=weight, order=t.order)


# Random generation


def random_tree(
    fam: FamilySpec,
    rng,
    lo: int,
    hi: int,
    depth: int = 3,
    leaf_probability: float = 0.3,
    operations: Optional[Sequence[Operation]] = None,
) -> FunctionalTree:
    """A random membership-valid tree supported in ``[lo, hi]``.

    Special operations are never drawn. *rng* is a
    :py:class:`numpy.random.Generator`.
    """
    if operations is None:
        operations = [op for op in fam.operations if op.kind is not OpKind.SPECIAL]
    operations = list(operations)

    def leaf(a, b):
        sign = 1 if rng.random() < 0.5 else -1
        if fam.ground is Ground.INTERVAL:
            x, y = sorted(int(v) for v in rng.integers(a, b + 1, size=2))
            return ChiLeaf(Interval(x, y), sign)
        return Leaf(int(rng.integers(a, b + 1)), sign)

    def build(a, b, level):
        if level <= 1 or not operations or rng.random() < leaf_probability:
            return leaf(a, b)
        op = operations[int(rng.integers(len(operations)))]
        width = b - a + 1
        count = int(rng.integers(1, min(op.size, width) + 1))
        if op.kind is OpKind.MODIFIED:
            points = [int(p) for p in rng.permutation(np.arange(a, b + 1))[:count]]
            children = [build(p, p, level - 1) for p in sorted(points)]
            return Node.of(op, children)
        cuts = []
        if count > 1:
            picks = rng.choice(np.arange(a + 1, b + 1), size=count - 1, replace=False)
            cuts = sorted(int(c) for c in picks)
        bounds = [a] + cuts + [b + 1]
        children = [
            build(bounds[i], bounds[i + 1] - 1, level - 1) for i in range(count)
        ]
        return Node.of(op, children)

    return build(lo, hi, depth)


# JSON


def tree_to_json(t: FunctionalTree) -> dict:
    if t is ZERO:
        return {"zero": True}
    if isinstance(t, Leaf):
        return {"leaf": {"sign": t.sign, "index": t.index}}
    if isinstance(t, ChiLeaf):
        return {"chi": {"sign": t.sign, "lo": t.interval.lo, "hi": t.interval.hi}}
    data = {
        "op": t.op.to_json(),
        "factor": fraction_to_str(t.factor),
        "children": [tree_to_json(c) for c in t.children],
    }
    if t.window is not None:
        data["window"] = t.window.to_json()
    return data


def tree_from_json(data: Mapping, fam: Optional[FamilySpec] = None) -> FunctionalTree:
    """Parse a tree. Nodes without a factor take it from *fam*."""
    if data.get("zero"):
        return ZERO
    if "leaf" in data:
        leaf = data["leaf"]
        return Leaf(int(leaf["index"]), int(leaf.get("sign", 1)))
    if "chi" in data:
        chi = data["chi"]
        return ChiLeaf(Interval(int(chi["lo"]), int(chi["hi"])), int(chi.get("sign", 1)))
    if "op" not in data:
        raise exceptions.InvalidTree(f"unrecognized tree node {dict(data)!r}")
    tag = OpTag.from_json(data["op"])
    if "factor" in data:
        factor = as_fraction(data["factor"])
    elif fam is not None and fam.resolve(tag) is not None:
        factor = fam.resolve(tag).factor
    else:
        raise exceptions.InvalidTree(f"node {tag} has no factor and no family to supply one")
    children = tuple(tree_from_json(c, fam) for c in data.get("children", []))
    window = data.get("window")
    return Node(
        op=tag,
        factor=factor,
        children=children,
        window=None if window is None else Interval.from_json(window),
    )


def tree_hull(trees: Sequence[FunctionalTree]) -> Optional[Interval]:
    ranges = [t.range for t in trees if t is not ZERO and t.range is not None]
    return hull(ranges) if ranges else None
