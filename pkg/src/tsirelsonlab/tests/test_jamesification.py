from fractions import Fraction
from unittest import mock

import pytest

from tsirelsonlab import engine, exceptions, jamesification
from tsirelsonlab.constructions.coding import coding_schedule
from tsirelsonlab.core import Interval, ParameterSchedule, make_vector
from tsirelsonlab.jamesification import (
    BlockPairSystem,
    JVector,
    alternating_vector,
    as_jvector,
    james_basis_examples,
    jnorm,
    lift_certificate,
    verify_lift,
)
from tsirelsonlab.normset import (
    JAMESIFIED,
    ChiLeaf,
    FamilySpec,
    Leaf,
    Node,
    check_membership,
    evaluate,
)


@pytest.fixture()
def schedule():
    return ParameterSchedule(m=(2,), n=(3,))


@pytest.fixture()
def half():
    return FamilySpec.mixed(ParameterSchedule(m=(2,), n=(2,))).lookup(1)


@pytest.fixture()
def system(half):
    # y_k = 2e_p paired with (1/2)e_p*, parent (1/2)(e_2* + e_5*)
    pairs = [
        (make_vector([(2, 2)]), Node.of(half, [Leaf(2)])),
        (make_vector([(5, 2)]), Node.of(half, [Leaf(5)])),
    ]
    return BlockPairSystem(pairs, parent=Node.of(half, [Leaf(2), Leaf(5)]))


def test_interval_leaves_sum_blocks(schedule):
    cert = jnorm(make_vector([(1, 1), (2, 1), (3, 1)]), schedule)
    assert cert.value == 3
    assert cert.tree == ChiLeaf(Interval(1, 3))
    assert check_membership(cert.tree, cert.family).ok


def test_alternating_signs_are_not_summed(schedule):
    cert = jnorm(make_vector([(1, 1), (2, -1), (3, 1)]), schedule)
    assert cert.value == Fraction(3, 2)
    assert cert.verify()


def test_jnorm_goes_through_the_norm_engine(schedule):
    x = make_vector([(1, 1), (2, -1), (3, 1)])
    with mock.patch.object(jamesification, "norm", wraps=engine.norm) as spy:
        cert = jnorm(x, schedule)
    spy.assert_called_once()
    assert spy.call_args.args[1].name == JAMESIFIED
    assert cert.value == engine.norm(as_jvector(x), FamilySpec.jamesified(schedule)).value


def test_alternating_vector():
    v = alternating_vector(3)
    assert isinstance(v, JVector)
    assert v.coords == ((1, Fraction(1, 3)), (2, Fraction(-1, 3)), (3, Fraction(1, 3)))


@pytest.mark.parametrize("j", [1, 2, 3])
def test_james_basis_examples(j):
    examples = james_basis_examples(j, coding_schedule(8))
    assert examples.half_norm.value == Fraction(1, 2)
    assert examples.alt_norm.value == examples.flat_norm.value
    assert examples.ratio == Fraction(1, 2) / examples.alt_norm.value
    assert not examples.bound_asserted
    assert examples.to_json()["v_half"] == "1/2"


def test_block_pair_system_vector(system):
    assert len(system) == 2
    assert system.vector([3, -1]) == make_vector([(2, 6), (5, -2)])


def test_block_pair_system_validation(half):
    with pytest.raises(exceptions.PreconditionFailed):
        BlockPairSystem([(make_vector([(2, 2)]), Node.of(half, [Leaf(3)]))])
    with pytest.raises(exceptions.PreconditionFailed):
        BlockPairSystem([(make_vector([(2, 1)]), Node.of(half, [Leaf(2)]))])
    with pytest.raises(exceptions.PreconditionFailed):
        BlockPairSystem(
            [
                (make_vector([(5, 2)]), Node.of(half, [Leaf(5)])),
                (make_vector([(2, 2)]), Node.of(half, [Leaf(2)])),
            ]
        )
    with pytest.raises(exceptions.PreconditionFailed):
        BlockPairSystem(
            [
                (make_vector([(2, 2)]), Node.of(half, [Leaf(2)])),
                (make_vector([(5, 2)]), Node.of(half, [Leaf(5)])),
            ],
            parent=Node.of(half, [Leaf(2)]),
        )


@pytest.mark.parametrize(
    "g",
    [
        Leaf(2, -1),
        ChiLeaf(Interval(1, 2)),
        ChiLeaf(Interval(1, 1), -1),
    ],
)
def test_lift_agrees_on_pairs(system, g):
    f = lift_certificate(g, system)
    assert verify_lift(g, f, system)


def test_lift_of_operations(system, half):
    g = Node.of(half, [Leaf(1), Leaf(2)])
    f = lift_certificate(g, system)
    assert verify_lift(g, f, system).ok
    mu = [3, -1]
    t = make_vector(enumerate(mu, start=1))
    assert evaluate(f, system.vector(mu)) == evaluate(g, t) == 1


def test_lift_interval_through_parent(system):
    g = ChiLeaf(Interval(1, 2))
    f = lift_certificate(g, system)
    assert evaluate(f, system.vector([3, -1])) == 2


def test_lift_rejects_bad_functionals(system, half):
    with pytest.raises(exceptions.InvalidTree):
        lift_certificate(Leaf(3), system)
    orphan = BlockPairSystem(system.pairs)
    with pytest.raises(exceptions.InvalidTree):
        lift_certificate(ChiLeaf(Interval(1, 2)), orphan)
