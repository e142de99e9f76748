from fractions import Fraction

import pytest

from tsirelsonlab import exceptions
from tsirelsonlab.constructions.averages import RisData, ris_from_blocks
from tsirelsonlab.constructions.basic_inequality import (
    NEGLIGIBLE,
    SPECIAL_HIT,
    SPLIT,
    UNIT,
    WEIGHT_WINDOW,
    auxiliary_tag,
    reduce_basic_inequality,
    weighted_combination,
)
from tsirelsonlab.constructions.coding import CodingRegistry, coding_schedule
from tsirelsonlab.constructions.special import build_special_sequence, special_functional
from tsirelsonlab.core import Interval, make_vector, unit_vector
from tsirelsonlab.normset import (
    FamilySpec,
    Leaf,
    Node,
    OpKind,
    OpTag,
    SizeSource,
    check_membership,
)


@pytest.fixture()
def fam():
    return FamilySpec.mixed(coding_schedule(12))


@pytest.fixture()
def ris(fam):
    # Weights attached to the blocks: m_7, m_8, m_9
    blocks = [make_vector([(i, 1)]) for i in (1, 2, 3)]
    return ris_from_blocks(blocks, 2, Fraction(1, 128), fam)


LAMBDAS = [1, -2, 3]


def test_weighted_combination(ris):
    lam = dict(enumerate(map(Fraction, LAMBDAS), start=1))
    assert weighted_combination(ris, lam, Interval(2, 3)) == make_vector([(2, -2), (3, 3)])


def test_small_weights_split(fam, ris):
    f = Node.of(fam.lookup(1), [Leaf(1), Leaf(2)])
    g, audit = reduce_basic_inequality(f, ris, LAMBDAS, Interval(1, 3), fam=fam)
    assert g == Node(op=OpTag(1, size=SizeSource.FOUR_N_J), factor=Fraction(1, 2), children=(Leaf(1), Leaf(2)))
    assert audit.lhs == Fraction(1, 2)
    # 2·((1/2)(1 + 2) + (1/128)·6)
    assert audit.rhs == Fraction(99, 32)
    assert audit.cases[SPLIT] == 1
    assert audit.cases[UNIT] == 2
    assert audit.weight_preserved
    assert audit.to_json()["holds"] is True


def test_weight_between_blocks_collapses(fam, ris):
    f = Node.of(fam.lookup(7), [Leaf(1), Leaf(2)])
    g, audit = reduce_basic_inequality(f, ris, LAMBDAS, Interval(1, 3), fam=fam)
    assert g == Leaf(1)
    assert audit.cases[WEIGHT_WINDOW] == 1
    assert audit.lhs == Fraction(1, 128)


def test_heavy_weight_is_negligible(fam, ris):
    f = Node.of(fam.lookup(8), [Leaf(1)])
    g, audit = reduce_basic_inequality(f, ris, LAMBDAS, Interval(1, 1), fam=fam)
    assert audit.cases[NEGLIGIBLE] == 1
    assert audit.lhs == Fraction(1, 256)
    assert audit.rhs == Fraction(1, 64)
    assert audit.holds


def test_reduction_preconditions(fam, ris):
    f = Node.of(fam.lookup(1), [Leaf(1), Leaf(2), Leaf(3)])
    with pytest.raises(exceptions.InvalidTree):
        reduce_basic_inequality(f, ris, LAMBDAS, Interval(1, 3), fam=fam)
    f = Node.of(fam.lookup(1), [Leaf(1)])
    with pytest.raises(exceptions.PreconditionFailed):
        reduce_basic_inequality(f, ris, LAMBDAS, Interval(1, 4), fam=fam)
    with pytest.raises(exceptions.PreconditionFailed):
        reduce_basic_inequality(f, ris, {5: 1}, Interval(1, 3), fam=fam)


def test_auxiliary_tag(fam):
    assert auxiliary_tag(fam.lookup(3).tag) == OpTag(3, size=SizeSource.FOUR_N_J)
    special = FamilySpec.kd(coding_schedule(12)).lookup(1, OpKind.SPECIAL)
    assert auxiliary_tag(special.tag).size is SizeSource.FOUR_N_ODD
    modified = FamilySpec.modified(coding_schedule(12)).lookup(1, OpKind.MODIFIED)
    with pytest.raises(exceptions.InvalidTree):
        auxiliary_tag(modified.tag)


@pytest.fixture()
def kd_family():
    registry = CodingRegistry(coding_schedule(24))
    return FamilySpec.kd(registry.schedule, registry)


@pytest.fixture()
def special(kd_family):
    # (1/4)((1/64)(e_1* + e_2*) + (1/256)e_3*)
    seq = build_special_sequence([[1, 2], [3]], 1, kd_family.registry, kd_family)
    return special_functional(seq, 1, kd_family)


def test_excluded_special_functional_collapses(kd_family, special):
    ris = RisData(
        blocks=tuple(unit_vector(k) for k in range(1, 5)),
        C=Fraction(2),
        eps=Fraction(1, 128),
        js=(7, 8, 9, 10),
        mode="given",
    )
    f = Node.of(kd_family.lookup(1), [special, Leaf(4)])
    g, audit = reduce_basic_inequality(
        f, ris, [1, -2, 3, 1], Interval(1, 4), j0=1, fam=kd_family
    )
    expected = Node(
        op=OpTag(1, size=SizeSource.FOUR_N_J), factor=Fraction(1, 2), children=(Leaf(3), Leaf(4))
    )
    assert g == expected
    assert audit.cases[SPECIAL_HIT] == 1
    assert audit.cases[SPLIT] == 1
    assert audit.membership.ok
    assert check_membership(g, FamilySpec.w_prime_j0(kd_family.schedule, 1)).ok
    assert audit.lhs == Fraction(1023, 2048)
    # 2·((1/2)(3 + 1) + (1/128)·7)
    assert audit.rhs == Fraction(263, 64)
    assert audit.weight_preserved


def test_excluded_special_functional_acting_strongly(kd_family, special):
    ris = RisData(
        blocks=(make_vector([(1, 256), (2, 256)]), make_vector([(3, 1024)])),
        C=Fraction(1),
        eps=Fraction(1, 128),
        js=(7, 8),
        mode="given",
    )
    # special acts by 3 > 1·(1 + 2/128)
    with pytest.raises(exceptions.Inapplicable):
        reduce_basic_inequality(special, ris, [1, 1], Interval(1, 2), j0=1, fam=kd_family)
