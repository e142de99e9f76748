from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tsirelsonlab import exceptions
from tsirelsonlab.core import Interval, ParameterSchedule, make_vector
from tsirelsonlab.normset import (
    ZERO,
    ChiLeaf,
    FamilySpec,
    Ground,
    Leaf,
    Node,
    OpKind,
    check_membership,
    coefficients,
    evaluate,
    family_from_json,
    negate,
    random_tree,
    restrict_functional,
    spread,
    tree_from_json,
    tree_to_json,
)

coordinates = st.dictionaries(
    st.integers(min_value=1, max_value=12),
    st.fractions(min_value=-2, max_value=2, max_denominator=4),
    max_size=6,
)


@pytest.fixture()
def schedule():
    return ParameterSchedule(m=(2, 4, 8, 16, 32), n=(2, 4, 5, 6, 7))


@pytest.fixture()
def fam(schedule):
    return FamilySpec.mixed(schedule)


@pytest.fixture()
def tree(fam):
    # (1/4)[e1* + (1/2)(e2* - e3*) + e5*]
    inner = Node.of(fam.lookup(1), [Leaf(2), Leaf(3, -1)])
    return Node.of(fam.lookup(2), [Leaf(1), inner, Leaf(5)])


def test_lookup(fam):
    op = fam.lookup(2)
    assert op.size == 4
    assert op.factor == Fraction(1, 4)
    assert op.weight == 4
    with pytest.raises(exceptions.PreconditionFailed):
        fam.lookup(9)
    with pytest.raises(exceptions.PreconditionFailed):
        fam.lookup(1, OpKind.SPECIAL)


def test_evaluate(tree):
    x = make_vector([(1, 4), (2, 2), (3, -2), (5, 4), (9, 100)])
    # (1/4)(4 + (1/2)(2 + 2) + 4)
    assert evaluate(tree, x) == Fraction(5, 2)
    assert evaluate(ZERO, x) == 0


def test_coefficients(tree):
    assert coefficients(tree) == {
        1: Fraction(1, 4),
        2: Fraction(1, 8),
        3: Fraction(-1, 8),
        5: Fraction(1, 4),
    }
    assert coefficients(ChiLeaf(Interval(2, 3), -1)) == {2: -1, 3: -1}


def test_tree_shape(tree):
    assert tree.order == 3
    assert tree.weight == 4
    assert tree.range == Interval(1, 5)
    assert tree.support == frozenset({1, 2, 3, 5})


def test_membership(tree, fam):
    report = check_membership(tree, fam)
    assert report.ok
    assert report.weight == 4
    assert report.order == 3


def test_membership_violations(fam):
    op = fam.lookup(1)
    too_many = Node.of(op, [Leaf(1), Leaf(2), Leaf(3)])
    assert [v.rule for v in check_membership(too_many, fam).violations] == ["size"]
    overlapping = Node.of(op, [Leaf(3), Leaf(2)])
    assert not check_membership(overlapping, fam).ok
    wrong_factor = Node(op=op.tag, factor=Fraction(1, 3), children=(Leaf(1),))
    assert check_membership(wrong_factor, fam).violations[0].rule == "factor"
    interval_leaf = Node.of(op, [ChiLeaf(Interval(1, 2))])
    assert check_membership(interval_leaf, fam).violations[0].rule == "ground"
    report = check_membership(Node.of(op, []), fam)
    assert not report
    assert "empty" in str(report)


def test_modified_children_need_disjoint_supports(schedule):
    fam = FamilySpec.modified(schedule)
    op = fam.lookup(2, OpKind.MODIFIED)
    interleaved = Node.of(op, [Leaf(3), Leaf(1), Leaf(2)])
    assert check_membership(interleaved, fam).ok
    inner = Node.of(fam.lookup(1, OpKind.MODIFIED), [Leaf(1), Leaf(4)])
    overlapping = Node.of(op, [inner, Leaf(4)])
    assert check_membership(overlapping, fam).violations[0].rule == "disjoint"


def test_negate(tree):
    x = make_vector([(1, 1), (2, 3), (5, -1)])
    assert evaluate(negate(tree), x) == -evaluate(tree, x)
    assert negate(ZERO) is ZERO


def test_restrict_functional(tree):
    restricted = restrict_functional(tree, Interval(2, 4))
    assert coefficients(restricted) == {2: Fraction(1, 8), 3: Fraction(-1, 8)}
    assert restrict_functional(tree, Interval(6, 9)) is ZERO
    assert restrict_functional(ChiLeaf(Interval(1, 5)), Interval(3, 9)) == ChiLeaf(
        Interval(3, 5)
    )


@given(coordinates, st.integers(min_value=1, max_value=12), st.integers(0, 6))
def test_restriction_commutes_with_evaluation(coords, lo, length):
    fam = FamilySpec.mixed(ParameterSchedule(m=(2, 4), n=(3, 5)))
    inner = Node.of(fam.lookup(1), [Leaf(2), Leaf(4, -1), Leaf(7)])
    tree = Node.of(fam.lookup(2), [Leaf(1), inner, Leaf(9), Leaf(11)])
    E = Interval(lo, lo + length)
    x = make_vector(coords.items())
    assert evaluate(restrict_functional(tree, E), x) == evaluate(tree, x.restrict(E))


@given(coordinates, coordinates)
def test_evaluation_is_linear(a, b):
    fam = FamilySpec.mixed(ParameterSchedule(m=(2, 4), n=(3, 5)))
    tree = Node.of(fam.lookup(2), [Leaf(1), Node.of(fam.lookup(1), [Leaf(3), Leaf(5)])])
    x, y = make_vector(a.items()), make_vector(b.items())
    assert evaluate(tree, x + y) == evaluate(tree, x) + evaluate(tree, y)


def test_spread(tree, fam):
    mapping = {1: 2, 2: 4, 3: 6, 5: 10}
    moved = spread(tree, mapping, fam)
    assert coefficients(moved) == {
        2: Fraction(1, 4),
        4: Fraction(1, 8),
        6: Fraction(-1, 8),
        10: Fraction(1, 4),
    }
    with pytest.raises(exceptions.NonMonotoneMap):
        spread(tree, {1: 5, 2: 4, 3: 6, 5: 10})
    with pytest.raises(exceptions.PreconditionFailed):
        spread(ChiLeaf(Interval(1, 2)), {1: 1, 2: 3})


def test_catalog_sizes(schedule):
    assert FamilySpec.t0_prime(schedule).lookup(2).size == 5
    assert FamilySpec.t0_prime(schedule).lookup(2).factor == Fraction(1, 4)
    w = FamilySpec.w_prime(schedule)
    assert w.lookup(3).size == 20
    # one extra (A_{4n_{2j+1}}, 1/m_{2j}) operation per j with n_{2j+1} defined
    assert len(w.operations) == 5 + 2
    assert len(FamilySpec.w_prime_j0(schedule, 1).operations) == 5 + 1
    assert FamilySpec.jamesified(schedule).ground is Ground.INTERVAL
    with pytest.raises(exceptions.PreconditionFailed):
        FamilySpec.mixed(schedule, J=6)


def test_relaxed_and_plain_parts(schedule):
    kd = FamilySpec.kd(schedule)
    assert kd.has_special
    relaxed = kd.relaxed()
    assert not relaxed.has_special
    assert len(relaxed.operations) == len(kd.operations)
    assert len(kd.plain_part().operations) == 5
    assert all(op.weight_index <= 2 for op in kd.restricted(2).operations)


def test_family_from_json(schedule):
    fam = family_from_json({"catalog": "T0'", "schedule": schedule.to_json(), "J": 3})
    assert fam.name == "T0'"
    assert len(fam.operations) == 3
    paper = family_from_json({"catalog": "mixed", "J": 1})
    assert paper.schedule.n[0] == 32
    with pytest.raises(exceptions.UnsupportedFamily):
        family_from_json({"catalog": "Banach", "schedule": schedule.to_json()})


def test_tree_json(tree, fam):
    data = tree_to_json(tree)
    assert data["factor"] == "1/4"
    assert tree_from_json(data) == tree
    # Factors can be filled in from the family
    del data["factor"]
    assert tree_from_json(data, fam) == tree
    with pytest.raises(exceptions.InvalidTree):
        tree_from_json({"branch": 1})


@pytest.mark.parametrize("builder", ["mixed", "t0_prime", "w_prime", "modified", "jamesified"])
def test_random_trees_are_members(schedule, builder):
    fam = getattr(FamilySpec, builder)(schedule)
    rng = np.random.default_rng(1234)
    for _ in range(50):
        tree = random_tree(fam, rng, 3, 20, depth=3)
        assert check_membership(tree, fam).ok
        assert all(3 <= i <= 20 for i in tree.support)
