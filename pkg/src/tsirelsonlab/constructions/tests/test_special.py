from fractions import Fraction

import pytest

from tsirelsonlab import exceptions
from tsirelsonlab.constructions.coding import CodingRegistry, coding_schedule
from tsirelsonlab.constructions.special import (
    CODING,
    FIRST_WEIGHT,
    NONEMPTY,
    SHAPE,
    SUCCESSIVE,
    build_special_sequence,
    check_tree_like,
    first_weight_threshold,
    smallest_first_index,
    special_functional,
    verify_special_sequence,
)
from tsirelsonlab.normset import FamilySpec, Leaf, Node, OpKind, check_membership, coefficients


@pytest.fixture()
def registry():
    return CodingRegistry(coding_schedule(24))


@pytest.fixture()
def fam(registry):
    return FamilySpec.kd(registry.schedule, registry)


def test_first_index(fam):
    # n_3 = 4, so m_2k must exceed 16 with k odd
    assert first_weight_threshold(fam, 1) == 16
    assert smallest_first_index(fam, 1) == 6
    assert smallest_first_index(fam, 1, relaxed_threshold=2) == 2


def test_build_special_sequence(fam, registry):
    seq = build_special_sequence([[1, 2], [3]], 1, registry, fam)
    assert [f.op.j for f in seq] == [6, 8]
    assert seq[1].factor == Fraction(1, 256)
    report = verify_special_sequence(seq, 1, registry, fam)
    assert report.ok
    assert not report.relaxed


def test_build_rejects_too_many_groups(fam, registry):
    with pytest.raises(exceptions.PreconditionFailed):
        build_special_sequence([[1], [2], [3], [4], [5]], 1, registry, fam)
    with pytest.raises(exceptions.PreconditionFailed):
        build_special_sequence([], 1, registry, fam)


def test_wrong_successor_weight(fam, registry):
    seq = build_special_sequence([[1, 2], [3]], 1, registry, fam)
    forged = [seq[0], Node.of(fam.lookup(4), [Leaf(3)])]
    report = verify_special_sequence(forged, 1, registry, fam)
    assert report.failures == [CODING]


def test_unassigned_successor(fam, registry):
    first = Node.of(fam.lookup(6), [Leaf(1)])
    report = verify_special_sequence([first, Node.of(fam.lookup(8), [Leaf(2)])], 1, registry, fam)
    assert report.failures == [CODING]
    assert "not been assigned" in report.details[CODING]


@pytest.mark.parametrize("index", [2, 4])
def test_first_weight_clause(fam, registry, index):
    report = verify_special_sequence([Node.of(fam.lookup(index), [Leaf(1)])], 1, registry, fam)
    assert report.failures == [FIRST_WEIGHT]


def test_relaxed_first_weight(fam, registry):
    report = verify_special_sequence(
        [Node.of(fam.lookup(2), [Leaf(1)])], 1, registry, fam, relaxed_threshold=2
    )
    assert report.ok
    assert report.relaxed


def test_structural_clauses(fam, registry):
    assert verify_special_sequence([], 1, registry, fam).failures == [NONEMPTY]
    f = Node.of(fam.lookup(6), [Leaf(3)])
    g = Node.of(fam.lookup(6), [Leaf(2)])
    assert SUCCESSIVE in verify_special_sequence([f, g], 1, registry, fam).failures
    assert verify_special_sequence([Leaf(1)], 1, registry, fam).failures == [SHAPE]


def test_special_functional(fam, registry):
    seq = build_special_sequence([[1, 2], [3]], 1, registry, fam)
    phi = special_functional(seq, 1, fam)
    assert phi.op.kind is OpKind.SPECIAL
    assert coefficients(phi) == {
        1: Fraction(1, 256),
        2: Fraction(1, 256),
        3: Fraction(1, 1024),
    }
    assert check_membership(phi, fam).ok


def test_tree_like_branches(fam, registry):
    phi = build_special_sequence([[1, 2], [3], [4]], 1, registry, fam)
    psi = build_special_sequence([[1, 2], [3, 4], [5]], 1, registry, fam)
    report = check_tree_like(phi, psi)
    assert report.kappa == 2
    assert report.pairs_checked > 0
    assert check_tree_like(phi, phi[:2]).kappa == 3


def test_tree_like_detects_repeated_weights(fam):
    phi = [Node.of(fam.lookup(6), [Leaf(1)]), Node.of(fam.lookup(8), [Leaf(2)])]
    psi = [Node.of(fam.lookup(6), [Leaf(1), Leaf(2)]), Node.of(fam.lookup(8), [Leaf(3)])]
    with pytest.raises(exceptions.RegistryCorruption):
        check_tree_like(phi, psi)
