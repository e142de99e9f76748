"""Exact vectors, intervals and parameter schedules.

Everything here is immutable and uses exact arithmetic: rationals are
:py:class:`fractions.Fraction` in canonical form and schedule entries
are Python integers of arbitrary size.

Example usage:

.. code-block:: python

    x = make_vector([(1, 1), (3, Fraction(-1, 2))])
    ell1, sup = elementary_norms(x)
    sched = minimal_paper_schedule(5)
    report = validate_schedule(sched, horizon=3)
    assert report.all_hold

"""

import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from math import prod
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

from . import exceptions

log = logging.getLogger(__name__)


DEFAULT_BUDGET = 10**6
BUDGET_ENV = "TSLAB_BUDGET"

Rational = Union[int, Fraction, str]


def budget() -> int:
    """The size budget for materialized objects.

    Read from the ``TSLAB_BUDGET`` environment variable on every call,
    falling back to ``DEFAULT_BUDGET``.
    """
    raw = os.environ.get(BUDGET_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_BUDGET
    try:
        value = int(raw)
    except ValueError:
        raise exceptions.PreconditionFailed(
            f"{BUDGET_ENV} must be a positive integer, got {raw!r}"
        )
    if value <= 0:
        raise exceptions.PreconditionFailed(
            f"{BUDGET_ENV} must be a positive integer, got {raw!r}"
        )
    return value


def check_budget(size: int, what: str) -> None:
    """Raise ``BudgetExceeded`` if *size* is over the current budget."""
    limit = budget()
    if size > limit:
        raise exceptions.BudgetExceeded(
            f"{what} needs {size} which exceeds the budget of {limit} "
            f"(set {BUDGET_ENV} to raise it)"
        )


def as_fraction(value: Rational) -> Fraction:
    """Convert ints, fractions and "num/den" strings to a Fraction.

    Floats are refused: no norm path may touch binary floating point.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise exceptions.PreconditionFailed(
                f"not an exact rational: {value!r}"
            ) from exc
    if isinstance(value, float):
        raise exceptions.PreconditionFailed(
            f"floating point value {value!r} given where an exact rational is required"
        )
    raise TypeError(f"cannot interpret {value!r} as a rational")


def fraction_to_str(value: Fraction) -> str:
    """Render a rational as "num/den" (integers get denominator 1)."""
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def integer_log(value: int, base: int) -> Optional[int]:
    """The exponent r with ``base**r == value``, or None if there is none."""
    if base < 2 or value < 1:
        return None
    exponent = 0
    while value % base == 0:
        value //= base
        exponent += 1
    return exponent if value == 1 else None


@dataclass(frozen=True, order=True)
class Interval:
    """A finite interval ``[lo, hi]`` of positive integers."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo < 1 or self.hi < self.lo:
            raise exceptions.PreconditionFailed(
                f"invalid interval [{self.lo}, {self.hi}]"
            )

    def __contains__(self, index: int) -> bool:
        return self.lo <= index <= self.hi

    def __len__(self) -> int:
        return self.hi - self.lo + 1

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.lo, self.hi + 1))

    def intersection(self, other: "Interval") -> Optional["Interval"]:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else None

    def precedes(self, other: "Interval") -> bool:
        """Whether every point of this interval is below *other*."""
        return self.hi < other.lo

    def to_json(self) -> list:
        return [self.lo, self.hi]

    @classmethod
    def from_json(cls, data: Sequence[int]) -> "Interval":
        lo, hi = data
        return cls(int(lo), int(hi))

    def __str__(self):
        return f"[{self.lo}, {self.hi}]"


def hull(intervals: Iterable[Interval]) -> Interval:
    """Smallest interval containing all the given intervals."""
    intervals = list(intervals)
    if not intervals:
        raise exceptions.PreconditionFailed("hull of no intervals")
    return Interval(min(i.lo for i in intervals), max(i.hi for i in intervals))


@dataclass(frozen=True)
class RationalVector:
    """A finitely supported vector with exact rational coordinates.

    ``coords`` is a tuple of ``(index, value)`` pairs with strictly
    increasing indices and no zero values, so equal vectors compare
    equal. Build instances with :py:func:`make_vector`.
    """

    coords: tuple = ()

    basis = "e"

    def __post_init__(self):
        previous = 0
        for index, value in self.coords:
            if not isinstance(value, Fraction):
                raise TypeError(f"coordinate {index} is not a Fraction")
            if index <= previous:
                raise exceptions.PreconditionFailed(
                    "coordinates must have increasing positive indices"
                )
            if value == 0:
                raise exceptions.PreconditionFailed(
                    f"coordinate {index} is stored as zero"
                )
            previous = index

    @cached_property
    def _lookup(self) -> dict:
        return dict(self.coords)

    @cached_property
    def support(self) -> tuple[int, ...]:
        return tuple(index for index, _ in self.coords)

    @cached_property
    def range(self) -> Optional[Interval]:
        if not self.coords:
            return None
        return Interval(self.coords[0][0], self.coords[-1][0])

    def __getitem__(self, index: int) -> Fraction:
        return self._lookup.get(index, Fraction(0))

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def __bool__(self) -> bool:
        return bool(self.coords)

    def items(self):
        return self.coords

    def _new(self, mapping: Mapping[int, Fraction]):
        return type(self)(
            tuple((i, v) for i, v in sorted(mapping.items()) if v != 0)
        )

    def __add__(self, other: "RationalVector"):
        if not isinstance(other, RationalVector):
            return NotImplemented
        total = dict(self.coords)
        for index, value in other.coords:
            total[index] = total.get(index, Fraction(0)) + value
        return self._new(total)

    def __neg__(self):
        return type(self)(tuple((i, -v) for i, v in self.coords))

    def __sub__(self, other: "RationalVector"):
        if not isinstance(other, RationalVector):
            return NotImplemented
        return self + (-other)

    def scale(self, factor: Rational):
        factor = as_fraction(factor)
        if factor == 0:
            return type(self)()
        return type(self)(tuple((i, v * factor) for i, v in self.coords))

    def __mul__(self, factor):
        if isinstance(factor, (int, Fraction, str)) and not isinstance(factor, bool):
            return self.scale(factor)
        return NotImplemented

    __rmul__ = __mul__

    def restrict(self, where: Union[Interval, Iterable[int], None]):
        """The vector ``E x`` for an interval or index set ``E``."""
        if where is None:
            return type(self)()
        if isinstance(where, Interval):
            return type(self)(tuple((i, v) for i, v in self.coords if i in where))
        keep = set(where)
        return type(self)(tuple((i, v) for i, v in self.coords if i in keep))

    def spread(self, mapping: Mapping[int, int]):
        """Re-index the support through a strictly increasing map."""
        images = _monotone_images(self.support, mapping)
        return type(self)(tuple((images[i], v) for i, v in self.coords))

    def to_json(self) -> dict:
        data = {"coords": [[i, fraction_to_str(v)] for i, v in self.coords]}
        if self.basis != "e":
            data["basis"] = self.basis
        return data

    @classmethod
    def from_json(cls, data: Mapping) -> "RationalVector":
        return make_vector(
            ((int(i), as_fraction(v)) for i, v in data.get("coords", [])),
            cls=cls,
        )

    def __str__(self):
        if not self.coords:
            return "0"
        terms = [f"{fraction_to_str(v)}·{self.basis}{i}" for i, v in self.coords]
        return " + ".join(terms)


def _monotone_images(support: Sequence[int], mapping: Mapping[int, int]) -> dict:
    images = {}
    previous = 0
    for index in sorted(support):
        if index not in mapping:
            raise exceptions.NonMonotoneMap(f"index {index} has no image")
        image = int(mapping[index])
        if image <= previous:
            raise exceptions.NonMonotoneMap(
                f"map is not strictly increasing at {index} -> {image}"
            )
        images[index] = image
        previous = image
    return images


def make_vector(entries: Iterable[tuple[int, Rational]], cls=RationalVector):
    """Build a canonical vector from ``(index, value)`` pairs.

    Zero values are dropped and the support is sorted. Repeated indices
    raise :py:class:`~tsirelsonlab.exceptions.DuplicateIndex`.
    """
    seen = {}
    for index, value in entries:
        index = int(index)
        if index < 1:
            raise exceptions.PreconditionFailed(f"index {index} is not positive")
        if index in seen:
            raise exceptions.DuplicateIndex(f"index {index} given twice")
        seen[index] = as_fraction(value)
    return cls(tuple((i, v) for i, v in sorted(seen.items()) if v != 0))


def unit_vector(index: int, value: Rational = 1, cls=RationalVector):
    return make_vector([(index, value)], cls=cls)


def flat_vector(indices: Iterable[int], value: Rational, cls=RationalVector):
    """``value`` times the sum of the unit vectors at *indices*."""
    return make_vector(((i, value) for i in indices), cls=cls)


def elementary_norms(x: RationalVector) -> tuple[Fraction, Fraction]:
    """The ℓ₁ and sup norms of *x*.

    Returns
    =======
    ell1
      Sum of absolute values of the coordinates.
    sup
      Largest absolute coordinate, zero for the empty vector.
    """
    values = [abs(v) for _, v in x.coords]
    return sum(values, Fraction(0)), max(values, default=Fraction(0))


class Regime(str, Enum):
    """How a schedule relates to the growth conditions of the construction."""

    PAPER_MINIMAL = "paper-minimal"
    TOY_RELAXED = "toy-relaxed"


@dataclass(frozen=True, eq=False)
class ParameterSchedule:
    """The weight sequence (m_j) and size sequence (n_j), 1-indexed.

    ``p(j)`` is the product n_1⋯n_{j-1} with ``p(1) == 1``.
    """

    m: tuple[int, ...]
    n: tuple[int, ...]
    regime: Regime = Regime.TOY_RELAXED

    def __post_init__(self):
        m = tuple(int(v) for v in self.m)
        n = tuple(int(v) for v in self.n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "regime", Regime(self.regime))
        if any(v <= 0 for v in m + n):
            raise exceptions.PreconditionFailed("schedule entries must be positive")
        if any(a > b for a, b in zip(m, m[1:])):
            raise exceptions.PreconditionFailed("weights m_j must be nondecreasing")
        if any(a >= b for a, b in zip(n, n[1:])):
            raise exceptions.PreconditionFailed(
                "sizes n_j must be strictly increasing"
            )

    def __eq__(self, other):
        if not isinstance(other, ParameterSchedule):
            return NotImplemented
        return (self.m, self.n, self.regime) == (other.m, other.n, other.regime)

    def __hash__(self):
        return hash((len(self.m), len(self.n), self.regime))

    def has_weight(self, j: int) -> bool:
        return 1 <= j <= len(self.m)

    def has_size(self, j: int) -> bool:
        return 1 <= j <= len(self.n)

    def weight(self, j: int) -> int:
        """m_j."""
        if not self.has_weight(j):
            raise exceptions.PreconditionFailed(
                f"m_{j} is not defined (schedule has {len(self.m)} weights)"
            )
        return self.m[j - 1]

    def size(self, j: int) -> int:
        """n_j."""
        if not self.has_size(j):
            raise exceptions.PreconditionFailed(
                f"n_{j} is not defined (schedule has {len(self.n)} sizes)"
            )
        return self.n[j - 1]

    @cached_property
    def _prefix_products(self) -> tuple[int, ...]:
        products = [1]
        for value in self.n:
            products.append(products[-1] * value)
        return tuple(products)

    def p(self, j: int) -> int:
        """p_j = n_1⋯n_{j-1}, the empty product being 1."""
        if j < 1 or j - 1 > len(self.n):
            raise exceptions.PreconditionFailed(f"p_{j} needs n_1..n_{j - 1}")
        return self._prefix_products[j - 1]

    def to_json(self) -> dict:
        return {
            "m": [str(v) for v in self.m],
            "n": [str(v) for v in self.n],
            "regime": self.regime.value,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ParameterSchedule":
        return cls(
            m=tuple(int(v) for v in data["m"]),
            n=tuple(int(v) for v in data["n"]),
            regime=Regime(data.get("regime", Regime.TOY_RELAXED.value)),
        )


def paper_weight(j: int) -> int:
    """m_j of the paper-minimal schedule: 2, 2, 4, 16, 256, ..."""
    if j < 1:
        raise exceptions.PreconditionFailed(f"no weight with index {j}")
    return 2 if j <= 2 else 2 ** (2 ** (j - 2))


def minimal_paper_schedule(J: int, n1: Optional[int] = None) -> ParameterSchedule:
    """The schedule with every growth inequality taken as an equality.

    m_1 = m_2 = 2, m_j = m_{j-1}², n_1 = 8·m_3 (or *n1* if larger) and
    n_j = (4 n_{j-1})⁵ m_j. Entries whose bit length would exceed the
    budget are refused.
    """
    if J < 3:
        raise exceptions.PreconditionFailed(
            f"J={J}: at least three weights are needed since n_1 depends on m_3"
        )
    m = tuple(paper_weight(j) for j in range(1, J + 1))
    lower = 8 * m[2]
    if n1 is None:
        n1 = lower
    elif n1 < lower:
        raise exceptions.PreconditionFailed(f"n_1={n1} is below 8·m_3={lower}")
    n = [int(n1)]
    limit = budget()
    for j in range(2, J + 1):
        bits = 5 * ((4 * n[-1]).bit_length()) + m[j - 1].bit_length()
        if bits > limit:
            raise exceptions.BudgetExceeded(
                f"n_{j} would need about {bits} bits, over the budget of {limit}"
            )
        n.append((4 * n[-1]) ** 5 * m[j - 1])
    log.debug(f"Built paper-minimal schedule with J={J}")
    return ParameterSchedule(m=m, n=tuple(n), regime=Regime.PAPER_MINIMAL)


# Names of the schedule conditions, in reporting order
M_START = "m1_eq_m2_eq_2"
M_SQUARE = "m_square"
N1_LOWER = "n1_lower"
N_GROWTH = "n_growth"
N_VS_M_SHIFT = "n_vs_m_shift"
N_VS_P = "n_vs_p"
MONOTONE = "monotone"
PAPER_CONDITIONS = (M_START, M_SQUARE, N1_LOWER, N_GROWTH, N_VS_M_SHIFT, N_VS_P)


@dataclass(frozen=True)
class ConditionResult:
    """Outcome of one schedule condition.

    ``margins`` maps each checked index j to lhs − rhs of the
    inequality (or equality) at j; a condition holds when every margin
    is acceptable.
    """

    name: str
    holds: bool
    margins: dict = field(default_factory=dict)
    failures: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "holds": self.holds,
            "failures": list(self.failures),
            "margins": {str(j): str(v) for j, v in self.margins.items()},
        }


@dataclass(frozen=True)
class ScheduleReport:
    horizon: int
    conditions: dict

    @property
    def flags(self) -> dict:
        return {name: result.holds for name, result in self.conditions.items()}

    @property
    def all_hold(self) -> bool:
        return all(self.flags.values())

    def holds(self, *names: str) -> bool:
        return all(self.conditions[name].holds for name in names)

    def require(self, *names: str, purpose: str = "this check") -> None:
        """Refuse unless every named condition holds."""
        failing = [name for name in names if not self.conditions[name].holds]
        if failing:
            raise exceptions.Refusal(
                f"{purpose} needs schedule conditions {', '.join(failing)}, "
                "which fail for this schedule"
            )

    def to_json(self) -> dict:
        return {
            "horizon": self.horizon,
            "all_hold": self.all_hold,
            "conditions": {
                name: result.to_json() for name, result in self.conditions.items()
            },
        }


def _inequality(name, pairs, equality=False) -> ConditionResult:
    margins = {}
    failures = []
    for j, lhs, rhs in pairs:
        margins[j] = lhs - rhs
        ok = lhs == rhs if equality else lhs >= rhs
        if not ok:
            failures.append(j)
    return ConditionResult(
        name=name, holds=not failures, margins=margins, failures=tuple(failures)
    )


def validate_schedule(s: ParameterSchedule, horizon: int) -> ScheduleReport:
    """Check the growth conditions of the construction up to *horizon*.

    Every condition is decided by exact integer comparison. Toy
    schedules simply report failures.
    """
    if horizon < 1:
        raise exceptions.PreconditionFailed("horizon must be at least 1")
    if len(s.m) < horizon + 2 or len(s.n) < horizon:
        raise exceptions.PreconditionFailed(
            f"horizon {horizon} needs m_1..m_{horizon + 2} and n_1..n_{horizon}"
        )
    m, n = s.weight, s.size
    conditions = {}
    start = _inequality(M_START, [(1, m(1), 2), (2, m(2), 2)], equality=True)
    conditions[M_START] = start
    conditions[M_SQUARE] = _inequality(
        M_SQUARE,
        [(j, m(j), m(j - 1) ** 2) for j in range(3, horizon + 3)],
        equality=True,
    )
    conditions[N1_LOWER] = _inequality(N1_LOWER, [(1, n(1), 8 * m(3))])
    conditions[N_GROWTH] = _inequality(
        N_GROWTH,
        [(j, n(j), (4 * n(j - 1)) ** 5 * m(j)) for j in range(2, horizon + 1)],
    )
    conditions[N_VS_M_SHIFT] = _inequality(
        N_VS_M_SHIFT,
        [(j, n(j), 2 ** (j + 2) * m(j + 2)) for j in range(1, horizon + 1)],
    )
    conditions[N_VS_P] = _inequality(
        N_VS_P, [(j, n(j), j * s.p(j)) for j in range(1, horizon + 1)]
    )
    monotone = all(a <= b for a, b in zip(s.m, s.m[1:])) and all(
        a < b for a, b in zip(s.n, s.n[1:])
    )
    conditions[MONOTONE] = ConditionResult(name=MONOTONE, holds=monotone)
    report = ScheduleReport(horizon=horizon, conditions=conditions)
    log.info(f"Validated schedule up to {horizon}: {report.flags}")
    return report


def paper_schedule_for_horizon(horizon: int) -> ParameterSchedule:
    """The shortest paper-minimal schedule that ``validate_schedule`` accepts."""
    return minimal_paper_schedule(max(horizon + 2, 3))


def schedule_prod(s: ParameterSchedule, lo: int, hi: int) -> int:
    """n_lo⋯n_hi, the empty product being 1."""
    return prod(s.size(i) for i in range(lo, hi + 1))
