from fractions import Fraction

import pytest

from tsirelsonlab import exceptions
from tsirelsonlab.constructions.spreading import (
    BRANCHES,
    MEMBERSHIP,
    certify_c0_spreading,
    consecutive_f_sets,
    nested_sum,
    smallest_spreading_instance,
    spreading_toy_schedule,
)
from tsirelsonlab.core import ParameterSchedule, minimal_paper_schedule
from tsirelsonlab.normset import ZERO, FamilySpec, Leaf, Node, coefficients


@pytest.fixture()
def toy():
    return spreading_toy_schedule(5)


def test_toy_schedule(toy):
    assert toy.m == (2, 2, 4, 16, 256)
    assert toy.n == (1, 2, 6, 48, 2880)
    assert [toy.p(j) for j in range(1, 6)] == [1, 1, 2, 12, 576]


def test_consecutive_f_sets(toy):
    assert consecutive_f_sets((3, 4), toy) == ((1, 2), tuple(range(3, 15)))


def test_nested_sum():
    fam = FamilySpec.t0(ParameterSchedule(m=(2, 4), n=(2, 3)))
    tree = nested_sum([Leaf(i) for i in range(1, 7)], [1, 2], fam)
    assert coefficients(tree) == {i: Fraction(1, 8) for i in range(1, 7)}
    assert tree.order == 3
    op = fam.lookup(2)
    assert nested_sum([ZERO, ZERO, Leaf(3)], [2], fam) == Node.of(op, [Leaf(3)])
    assert nested_sum([ZERO, ZERO, ZERO], [2], fam) is ZERO
    with pytest.raises(exceptions.InvalidTree):
        nested_sum([Leaf(1), Leaf(2)], [], fam)


@pytest.mark.parametrize("js", [(2, 3), (3, 4)])
def test_certificate_on_toy_schedule(toy, js):
    cert = certify_c0_spreading(2, js, None, toy)
    assert cert.ok
    assert cert.clauses[MEMBERSHIP]
    assert cert.branch_actions == tuple(Fraction(1, toy.weight(j)) for j in js)
    assert cert.tree.weight == toy.weight(js[0])
    assert cert.to_json()["f_sets"][0][0] == 1


def test_smallest_instance():
    cert = smallest_spreading_instance(2)
    assert cert.js == (2, 3)
    assert cert.f_sets == ((1,), (2, 3))
    assert cert.ok


def test_symbolic_certificate_on_paper_schedule():
    cert = certify_c0_spreading(2, (2, 3), None, minimal_paper_schedule(4), symbolic=True)
    assert cert.symbolic
    assert cert.tree is None
    assert cert.clauses[BRANCHES]
    assert cert.ok
    assert cert.branch_actions == (Fraction(1, 2), Fraction(1, 4))


def test_precondition_clauses(toy):
    with pytest.raises(exceptions.PreconditionFailed, match="s_le_j1"):
        certify_c0_spreading(3, (2, 3, 4), None, toy)
    with pytest.raises(exceptions.PreconditionFailed):
        certify_c0_spreading(2, (2,), None, toy)
    with pytest.raises(exceptions.PreconditionFailed, match="cardinality"):
        certify_c0_spreading(2, (2, 3), [(1,), (2, 3, 4)], toy)
    with pytest.raises(exceptions.PreconditionFailed, match="successive"):
        certify_c0_spreading(2, (2, 3), [(5,), (2, 3)], toy)
