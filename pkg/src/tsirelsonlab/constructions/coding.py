"""The injective coding function σ and its registry.

σ sends a finite successive sequence of functionals with rational
coordinates to an even weight index 2t with t in Ω₂ (the even
numbers), large enough that m_{2t} dominates the sequence:

    m_{2t} > max{1/|φ_i(e_l)|} · max supp φ_d

Assignments are first-fit: the smallest unused admissible value.

Example usage:

.. code-block:: python

    registry = CodingRegistry(coding_schedule(64))
    value = registry.sigma([f1, f2])
    assert registry.sigma([f1, f2]) == value

"""

import hashlib
import json
import logging
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence, Union

from .. import exceptions
from ..core import ParameterSchedule, RationalVector, fraction_to_str
from ..normset import coefficients

log = logging.getLogger(__name__)


OMEGA_1 = "odd"
OMEGA_2 = "even"


def in_omega1(k: int) -> bool:
    return k >= 1 and k % 2 == 1


def in_omega2(k: int) -> bool:
    return k >= 2 and k % 2 == 0


def coding_schedule(length: int) -> ParameterSchedule:
    """A slowly growing toy schedule m_j = 2^j, n_j = j + 1.

    Long enough schedules of this shape make room for thousands of
    coded sequences.
    """
    return ParameterSchedule(
        m=tuple(2**j for j in range(1, length + 1)),
        n=tuple(j + 1 for j in range(1, length + 1)),
    )


def _as_coordinates(item) -> dict:
    if isinstance(item, RationalVector):
        return dict(item.coords)
    if isinstance(item, Mapping):
        return {int(i): Fraction(v) for i, v in item.items()}
    return coefficients(item)


def canonical_sequence(seq: Sequence) -> tuple:
    """The sequence as a tuple of sorted coordinate tuples.

    Checks that it belongs to Q_s: nonzero, rational and successive.
    """
    canonical = []
    previous = 0
    for position, item in enumerate(seq, start=1):
        coords = {i: v for i, v in _as_coordinates(item).items() if v != 0}
        if not coords:
            raise exceptions.PreconditionFailed(f"functional {position} is zero")
        if min(coords) <= previous:
            raise exceptions.PreconditionFailed(
                f"functional {position} does not follow its predecessor"
            )
        previous = max(coords)
        canonical.append(tuple(sorted(coords.items())))
    if not canonical:
        raise exceptions.PreconditionFailed("cannot code the empty sequence")
    return tuple(canonical)


def sequence_key(canonical: tuple) -> str:
    return "|".join(
        ",".join(f"{i}:{fraction_to_str(v)}" for i, v in coords) for coords in canonical
    )


def sequence_digest(canonical: tuple) -> str:
    return hashlib.sha256(sequence_key(canonical).encode()).hexdigest()


def growth_witness(canonical: tuple) -> Fraction:
    """max{1/|φ_i(e_l)|} · max supp φ_d."""
    smallest = min(abs(v) for coords in canonical for _, v in coords)
    return Fraction(canonical[-1][-1][0]) / smallest


@dataclass(frozen=True)
class Assignment:
    digest: str
    value: int
    witness: Fraction

    def to_json(self) -> list:
        return [self.digest, self.value, fraction_to_str(self.witness)]


class CodingRegistry:
    """First-fit assignments of σ, guarded by a lock for single writers."""

    def __init__(self, schedule: ParameterSchedule, assignments: Sequence[Assignment] = ()):
        self.schedule = schedule
        self._lock = threading.Lock()
        self._by_digest = {}
        self._used = set()
        self._order = []
        for assignment in assignments:
            self._record(assignment)

    def _record(self, assignment: Assignment) -> None:
        self._by_digest[assignment.digest] = assignment
        self._used.add(assignment.value)
        self._order.append(assignment)

    def __len__(self):
        return len(self._order)

    def __iter__(self):
        return iter(list(self._order))

    def lookup(self, seq: Sequence) -> Union[int, None]:
        """The value already assigned to *seq*, if any."""
        found = self._by_digest.get(sequence_digest(canonical_sequence(seq)))
        return None if found is None else found.value

    def sigma(self, seq: Sequence) -> int:
        """σ(seq), assigning the smallest admissible unused value if new."""
        canonical = canonical_sequence(seq)
        digest = sequence_digest(canonical)
        with self._lock:
            if digest in self._by_digest:
                return self._by_digest[digest].value
            witness = growth_witness(canonical)
            value = self._first_fit(witness)
            self._record(Assignment(digest=digest, value=value, witness=witness))
        log.debug(f"σ assigned {value} (growth witness {witness})")
        return value

    def _first_fit(self, witness: Fraction) -> int:
        m = self.schedule.m
        for t in range(2, len(m) // 2 + 1, 2):
            value = 2 * t
            if value not in self._used and m[value - 1] > witness:
                return value
        raise exceptions.Refusal(
            f"schedule too short: σ needs an unused m_2t > {witness} with t even"
        )

    def audit(self) -> None:
        """Re-check injectivity and growth of every assignment."""
        seen = {}
        for assignment in self._order:
            value = assignment.value
            if value in seen:
                raise exceptions.RegistryCorruption(
                    f"value {value} assigned twice ({seen[value][:12]}, "
                    f"{assignment.digest[:12]})"
                )
            seen[value] = assignment.digest
            if value % 4 != 0 or not self.schedule.has_weight(value):
                raise exceptions.RegistryCorruption(f"value {value} is not 2t, t even")
            if not self.schedule.weight(value) > assignment.witness:
                raise exceptions.RegistryCorruption(
                    f"m_{value} does not exceed the growth witness {assignment.witness}"
                )
        log.info(f"Registry audit passed for {len(self._order)} assignments")

    def to_json(self) -> dict:
        return {
            "header": {"omega1": OMEGA_1, "omega2": OMEGA_2},
            "entries": [assignment.to_json() for assignment in self._order],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def from_json(cls, data, schedule: ParameterSchedule) -> "CodingRegistry":
        entries = data["entries"] if isinstance(data, Mapping) else data
        assignments = [
            Assignment(digest=digest, value=int(value), witness=Fraction(witness))
            for digest, value, witness in entries
        ]
        return cls(schedule, assignments)


def sigma(reg: CodingRegistry, seq: Sequence) -> int:
    return reg.sigma(seq)
