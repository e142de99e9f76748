from fractions import Fraction

import pytest

from tsirelsonlab import exceptions
from tsirelsonlab.constructions.coding import coding_schedule
from tsirelsonlab.constructions.spreading import spreading_toy_schedule
from tsirelsonlab.core import Interval, flat_vector, make_vector, minimal_paper_schedule
from tsirelsonlab.diagonal.operators import (
    GENERATOR_AUDIT,
    REDUCTION_AUDIT,
    SPARSE_INDICES,
    DiagonalOperator,
    alpha,
    apply_diagonal,
    audit_c1_bound,
    audit_weight_lemma,
    c1_enclosure,
    certify_alpha_sum,
    find_lacunary,
    linfty_embedding_check,
    noncompact_witnesses,
    operator_bound_constant,
    reduce_diagonal_action,
    validate_lacunary,
)
from tsirelsonlab.normset import FamilySpec, Leaf, Node, OpTag, SizeSource, coefficients


def unit(i):
    return make_vector([(i, 1)])


@pytest.fixture()
def schedule():
    return coding_schedule(12)


@pytest.fixture()
def fam(schedule):
    return FamilySpec.mixed(schedule)


@pytest.fixture()
def operator(schedule):
    groups = {
        4: [Interval(1, 1), Interval(2, 2), Interval(3, 3)],
        6: [Interval(4, 5), Interval(6, 6)],
        8: [Interval(7, 8), Interval(9, 10)],
    }
    return DiagonalOperator(groups, schedule)


@pytest.fixture()
def lacunary_pair(schedule):
    """M = (4, 6) acting on e_1 and e_3."""
    return DiagonalOperator({4: [Interval(1, 1)], 6: [Interval(3, 3)]}, schedule)


def test_lacunary_conditions(operator, schedule):
    assert validate_lacunary((4, 6, 8), operator, schedule).ok
    report = validate_lacunary((1, 2, 3), None, schedule)
    assert not report.flags[SPARSE_INDICES]
    assert not report.ok


def test_find_lacunary(operator, schedule):
    assert operator.M == (4, 6, 8)
    assert find_lacunary(operator, schedule, 3) == (4, 6, 8)
    with pytest.raises(exceptions.Refusal):
        find_lacunary(operator, schedule, 4)
    with pytest.raises(exceptions.PreconditionFailed):
        find_lacunary(operator, schedule, 0)


def test_paper_schedule_has_no_small_lacunary_index():
    s = minimal_paper_schedule(4)
    D = DiagonalOperator({3: [Interval(1, 1)]}, s)
    with pytest.raises(exceptions.Refusal):
        find_lacunary(D, s, 1)


def test_alpha(operator, fam):
    x = flat_vector(range(1, 11), 1)
    report = alpha(4, operator, x, fam)
    assert report.value == Fraction(3, 16)
    assert report.image_norm == Fraction(1, 16)
    assert report.norm == 1
    assert alpha(6, operator, x, fam).value == Fraction(1, 32)
    assert report.to_json()["alpha"] == "3/16"


def test_apply_with_multipliers(operator):
    x = flat_vector(range(1, 11), 1)
    T = operator.with_multipliers({1: 2, 2: 0, 3: -1})
    expected = make_vector(
        [(i, Fraction(1, 8)) for i in (1, 2, 3)] + [(i, Fraction(-1, 256)) for i in range(7, 11)]
    )
    assert apply_diagonal(T, x) == expected
    assert T.sup == 2
    assert operator.cover(2) == Interval(4, 6)


def test_operator_json(operator):
    restored = DiagonalOperator.from_json(operator.to_json())
    assert restored.M == operator.M
    assert restored.groups == operator.groups
    assert restored.lam == operator.lam
    assert restored.schedule == operator.schedule


@pytest.mark.parametrize(
    "kwargs",
    [
        {"groups": {4: [Interval(3, 3)], 6: [Interval(1, 1)]}},
        {"groups": {4: [Interval(1, 1)], 6: [Interval(3, 3)]}, "M": (6, 4)},
        {"groups": {4: [Interval(1, 1)]}, "M": (4, 6)},
        {"groups": {4: [Interval(1, 1)]}, "lam": {5: 1}},
        {"groups": {4: []}},
    ],
)
def test_operator_validation(schedule, kwargs):
    with pytest.raises(exceptions.PreconditionFailed):
        DiagonalOperator(schedule=schedule, **kwargs)


def test_operator_needs_defined_weights(schedule):
    with pytest.raises(exceptions.PreconditionFailed):
        DiagonalOperator({20: [Interval(1, 1)]}, schedule)


def test_alpha_sum_certificate():
    toy = spreading_toy_schedule(5)
    groups = {
        3: [Interval(1, 1), Interval(2, 2)],
        4: [Interval(3, 3), Interval(4, 5), Interval(6, 6)],
    }
    D = DiagonalOperator(groups, toy)
    x = flat_vector(range(1, 7), 1)
    cert = certify_alpha_sum((3, 4), D, x, FamilySpec.mixed(toy))
    assert cert.ok
    assert cert.value == Fraction(11, 16)
    assert cert.norm == Fraction(3, 2)
    assert cert.to_json()["sum"] == "11/16"
    with pytest.raises(exceptions.PreconditionFailed):
        certify_alpha_sum({1, 2, 3}, D, x, FamilySpec.mixed(toy))


def test_alpha_sum_needs_telescoping_weights(operator, fam):
    with pytest.raises(exceptions.Inapplicable):
        certify_alpha_sum({4, 6}, operator, flat_vector(range(1, 11), 1), fam)


def test_c0_enclosure():
    s = minimal_paper_schedule(3)
    first = operator_bound_constant(s, 1)
    assert first.lo == 4
    assert first.hi == Fraction(35, 8)
    assert Fraction(17, 4) in first
    second = operator_bound_constant(s, 2)
    assert second.lo == Fraction(67, 16)
    assert second.width == Fraction(1, 8192)
    assert c1_enclosure(s, 3).width == Fraction(10, 2**64)


def test_c0_enclosure_refusals(schedule):
    with pytest.raises(exceptions.Refusal):
        c1_enclosure(schedule, 2)
    with pytest.raises(exceptions.PreconditionFailed):
        c1_enclosure(minimal_paper_schedule(3), -1)


def test_reduce_diagonal_action(lacunary_pair, fam):
    f = Node.of(fam.lookup(1), [Leaf(1), Leaf(3)])
    g, audit = reduce_diagonal_action(f, lacunary_pair, flat_vector(range(1, 5), 1), fam)
    assert audit.k0 == 0
    assert audit.exceptions == frozenset({1})
    assert coefficients(g) == {2: Fraction(1, 2)}
    assert audit.holds
    assert audit.norm == 1
    assert audit.to_json()["exceptions"] == [1]


def test_reduction_needs_lacunary_operator(schedule, fam):
    D = DiagonalOperator({j: [Interval(j, j)] for j in (1, 2, 3)}, schedule)
    f = Node.of(fam.lookup(1), [Leaf(1), Leaf(3)])
    with pytest.raises(exceptions.Inapplicable):
        reduce_diagonal_action(f, D, flat_vector(range(1, 4), 1), fam)


def test_weight_lemma(lacunary_pair, fam):
    x = flat_vector(range(1, 5), 1)
    heavy = audit_weight_lemma(Node.of(fam.lookup(6), [Leaf(1)]), 1, lacunary_pair, x, fam)
    assert heavy.case == "heavy"
    assert heavy.lhs == Fraction(1, 1024)
    assert heavy.bound == Fraction(1, 2)
    light = audit_weight_lemma(Node.of(fam.lookup(1), [Leaf(3)]), 2, lacunary_pair, x, fam)
    assert light.case == "light"
    assert light.lhs == Fraction(1, 128)
    assert light.bound == Fraction(1, 128) + Fraction(1, 4)


def test_weight_lemma_rejections(lacunary_pair, fam):
    x = flat_vector(range(1, 5), 1)
    with pytest.raises(exceptions.Inapplicable):
        audit_weight_lemma(Node.of(fam.lookup(1), [Leaf(1)]), 1, lacunary_pair, x, fam)
    with pytest.raises(exceptions.PreconditionFailed):
        audit_weight_lemma(Leaf(1), 1, lacunary_pair, x, fam)
    with pytest.raises(exceptions.PreconditionFailed):
        audit_weight_lemma(Node.of(fam.lookup(1), [Leaf(1)]), 3, lacunary_pair, x, fam)


def test_c1_bound_on_toy_schedule(lacunary_pair, fam):
    g = Node(op=OpTag(1, size=SizeSource.FOUR_N_J), factor=Fraction(1, 2), children=(Leaf(1), Leaf(2)))
    audit = audit_c1_bound(g, lacunary_pair, flat_vector(range(1, 5), 1), fam)
    assert audit.lhs == Fraction(5, 128)
    assert audit.mode == "partial-sum"
    assert not audit.asserted
    assert audit.holds


def test_c1_bound_needs_auxiliary_member(lacunary_pair, fam):
    g = Node(op=OpTag(1), factor=Fraction(1, 2), children=(Leaf(1), Leaf(2)))
    with pytest.raises(exceptions.InvalidTree):
        audit_c1_bound(g, lacunary_pair, flat_vector(range(1, 5), 1), fam)


@pytest.fixture()
def systems():
    return {4: [unit(1), unit(2)], 6: [unit(3), unit(4)]}


def test_noncompact_witnesses(systems, fam):
    report = noncompact_witnesses(systems, 8, fam)
    assert report.witnesses[4].vector == make_vector([(1, 8), (2, -8)])
    assert report.witnesses[4].norm.value == 8
    assert report.witnesses[4].image.value == Fraction(1, 2)
    assert report.witnesses[6].norm.value == 32
    assert report.separation == Fraction(1, 2)
    assert report.estimates_ok
    assert not noncompact_witnesses(systems, 2, fam).estimates_ok


@pytest.mark.parametrize(
    "systems",
    [
        {4: [unit(1)]},
        {4: [unit(2), unit(1)]},
    ],
)
def test_witness_preconditions(systems, fam):
    with pytest.raises(exceptions.PreconditionFailed):
        noncompact_witnesses(systems, 8, fam)


def test_linfty_embedding(systems, fam):
    witnesses = noncompact_witnesses(systems, 8, fam)
    report = linfty_embedding_check([{1: 1, 2: -1}, {1: 0, 2: 0}], witnesses, fam)
    assert report.upper_mode == REDUCTION_AUDIT
    assert report.c0 is None
    row = report.rows[0]
    assert row.lower == Fraction(1, 16)
    assert row.upper_observed == Fraction(1, 16)
    assert row.upper_certified == Fraction(13, 16)
    assert report.rows[1].sup == 0
    assert report.holds


def test_linfty_embedding_without_lacunary_indices(fam):
    witnesses = noncompact_witnesses({1: [unit(1), unit(2)], 2: [unit(3), unit(4)]}, 8, fam)
    report = linfty_embedding_check([{1: 1}], witnesses, fam)
    assert report.upper_mode == GENERATOR_AUDIT
    assert report.rows[0].upper_certified is None
