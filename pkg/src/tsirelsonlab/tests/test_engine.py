from fractions import Fraction

import numpy as np
import pytest

from tsirelsonlab import core, exceptions
from tsirelsonlab.constructions.coding import coding_schedule
from tsirelsonlab.core import ParameterSchedule, make_vector, minimal_paper_schedule
from tsirelsonlab.engine import (
    AUX_EVEN,
    AUX_ODD,
    DEPENDENT_AVERAGE,
    LEMMA_4MJ,
    SUPPORT_BOUND,
    audit_lemma_chain,
    average_profile,
    biorthogonality_profile,
    dual_bound,
    exact_sparsity_bound,
    norm,
    norm_bruteforce,
    norm_mixed,
    norm_modified,
    sparsity_profile,
    support_cardinality_check,
    weighted_norms,
)
from tsirelsonlab.normset import (
    T0_PRIME,
    FamilySpec,
    Leaf,
    Node,
    check_membership,
    coefficients,
    evaluate,
)


def random_vector(rng, size, hi=12):
    support = sorted(rng.choice(np.arange(1, hi + 1), size=size, replace=False))
    coords = []
    for index in support:
        numerator = int(rng.integers(1, 7)) * int(rng.choice([-1, 1]))
        coords.append((int(index), Fraction(numerator, int(rng.integers(1, 4)))))
    return make_vector(coords)


@pytest.fixture()
def small_schedule():
    return ParameterSchedule(m=(2, 3, 5), n=(2, 3, 4))


@pytest.fixture()
def five_schedule():
    return ParameterSchedule(m=(2, 4, 8, 16, 32), n=(2, 4, 5, 6, 7))


def test_norm_of_flat_vectors():
    fam = FamilySpec.mixed(ParameterSchedule(m=(2,), n=(2,)))
    assert norm_mixed(make_vector([(1, 1), (2, 1), (3, 1)]), fam).value == 1
    fam = FamilySpec.mixed(ParameterSchedule(m=(2,), n=(3,)))
    cert = norm_mixed(make_vector([(1, 1), (2, 1), (3, 1)]), fam)
    assert cert.value == Fraction(3, 2)
    assert cert.verify()
    assert cert.to_json()["value"] == "3/2"


def test_norm_ignores_signs():
    fam = FamilySpec.mixed(ParameterSchedule(m=(2,), n=(3,)))
    cert = norm(make_vector([(1, 1), (4, -1), (7, 1)]), fam)
    assert cert.value == Fraction(3, 2)
    cert.require()


def test_norm_of_zero_and_unit_vectors(small_schedule):
    fam = FamilySpec.mixed(small_schedule)
    assert norm(make_vector([]), fam).value == 0
    assert norm(make_vector([(5, "-7/3")]), fam).value == Fraction(7, 3)


def test_certificate_rejects_other_vector():
    fam = FamilySpec.mixed(ParameterSchedule(m=(2,), n=(3,)))
    cert = norm(make_vector([(1, 1), (2, 1), (3, 1)]), fam)
    other = make_vector([(1, 1)])
    assert not cert.verify(other)
    with pytest.raises(exceptions.AuditFailure):
        cert.require(other)


@pytest.mark.parametrize("builder", ["mixed", "t0", "t0_prime"])
def test_norm_matches_bruteforce(small_schedule, builder):
    fam = getattr(FamilySpec, builder)(small_schedule)
    rng = np.random.default_rng(42)
    for _ in range(25):
        x = random_vector(rng, int(rng.integers(1, 6)))
        cert = norm(x, fam)
        assert cert.value == norm_bruteforce(x, fam, depth=len(x) + 1)
        assert cert.verify()


def test_modified_norm_matches_bruteforce(small_schedule):
    fam = FamilySpec.modified(small_schedule)
    mixed = FamilySpec.mixed(small_schedule)
    rng = np.random.default_rng(7)
    for _ in range(15):
        x = random_vector(rng, int(rng.integers(1, 6)))
        value = norm_modified(x, fam)
        assert value == norm_bruteforce(x, fam, depth=len(x) + 1)
        assert value >= norm(x, mixed).value


def test_oracles_refuse_large_supports(small_schedule):
    fam = FamilySpec.mixed(small_schedule)
    x = make_vector((i, 1) for i in range(1, 14))
    with pytest.raises(exceptions.Refusal):
        norm_bruteforce(x, fam, depth=2)
    with pytest.raises(exceptions.Refusal):
        norm_modified(x, FamilySpec.modified(small_schedule))


def test_unsupported_families(small_schedule):
    x = make_vector([(1, 1), (2, 1)])
    with pytest.raises(exceptions.UnsupportedFamily):
        norm(x, FamilySpec.kd(small_schedule))
    with pytest.raises(exceptions.UnsupportedFamily):
        norm(x, FamilySpec.modified(small_schedule))
    with pytest.raises(exceptions.UnsupportedFamily):
        norm_mixed(x, FamilySpec.jamesified(small_schedule))


def test_norm_respects_budget(monkeypatch, small_schedule):
    monkeypatch.setenv(core.BUDGET_ENV, "4")
    with pytest.raises(exceptions.BudgetExceeded):
        norm(make_vector([(1, 1), (2, 2), (3, 3)]), FamilySpec.mixed(small_schedule))


def test_weighted_norms():
    fam = FamilySpec.mixed(ParameterSchedule(m=(2, 4), n=(3, 4)))
    weighted = weighted_norms(make_vector([(1, 1), (2, 1), (3, 1)]), fam)
    assert weighted[fam.lookup(1).tag] == Fraction(3, 2)
    assert weighted[fam.lookup(2).tag] == Fraction(3, 4)
    assert set(weighted_norms(make_vector([]), fam).values()) == {0}


def test_support_cardinality():
    s = ParameterSchedule(m=(2, 2, 4), n=(4, 5, 6))
    fam = FamilySpec.mixed(s)
    op = fam.lookup(1)
    report = support_cardinality_check(Node.of(op, [Leaf(1), Leaf(2), Leaf(3)]), fam, 3)
    assert report.holds
    assert report.bound == 5
    assert report.exponent == 2
    assert report.lq_bound == 16
    with pytest.raises(exceptions.Inapplicable):
        support_cardinality_check(Leaf(1), fam, 2)
    # Coordinates of 1/4 do not exceed 1/m_3
    nested = Node.of(op, [Node.of(op, [Leaf(1), Leaf(2)]), Leaf(3)])
    with pytest.raises(exceptions.Inapplicable):
        support_cardinality_check(nested, fam, 3)


def full_tree(op, depth, start=1):
    """*op* nested *depth* times with every node full."""
    if depth == 0:
        return Leaf(start)
    width = op.size ** (depth - 1)
    return Node.of(op, [full_tree(op, depth - 1, start + k * width) for k in range(op.size)])


def test_sparsity_profile(five_schedule):
    fam = FamilySpec.t0_prime(five_schedule)
    profile = sparsity_profile(
        fam, [Fraction(1, 4), Fraction(1, 8)], samples=40, rng=np.random.default_rng(3)
    )
    assert profile.family == T0_PRIME
    assert profile.method == "exact+falsified"
    assert profile.bound(Fraction(1, 4)) == 4
    assert profile.bound(Fraction(1, 8)) == 16
    with pytest.raises(KeyError):
        profile.bound(Fraction(1, 16))
    assert profile.to_json()["entries"]["1/4"] == "4"
    assert profile.to_json()["sources"]["1/8"] == "exact"


@pytest.mark.parametrize(
    "build, depth, eps, count",
    [
        (FamilySpec.t0_prime, 3, Fraction(1, 16), 27),
        (FamilySpec.t0, 6, Fraction(1, 128), 64),
    ],
)
def test_sparsity_bound_covers_nested_members(build, depth, eps, count):
    fam = build(coding_schedule(12))
    tree = full_tree(fam.lookup(1), depth)
    assert check_membership(tree, fam)
    above = sum(1 for c in coefficients(tree).values() if abs(c) > eps)
    assert above == count
    assert exact_sparsity_bound(fam, eps) == count
    assert sparsity_profile(fam, [eps], samples=0).bound(eps) == count


def test_sparsity_profile_on_paper_schedule():
    s = minimal_paper_schedule(5)
    fam = FamilySpec.t0_prime(s)
    profile = sparsity_profile(
        fam, [Fraction(1, 2), Fraction(1, 4)], samples=20, rng=np.random.default_rng(1)
    )
    assert profile.method == "catalogued+falsified"
    assert profile.bound(Fraction(1, 2)) == s.size(1) ** 2
    assert profile.bound(Fraction(1, 4)) == s.size(3) ** 2
    assert exact_sparsity_bound(fam, Fraction(1, 4)) == s.size(3)


def test_sparsity_profile_refusals(five_schedule):
    fam = FamilySpec.t0_prime(five_schedule)
    with pytest.raises(exceptions.Refusal):
        sparsity_profile(fam, [Fraction(1, 3)], samples=0)
    with pytest.raises(exceptions.Refusal):
        sparsity_profile(fam, [Fraction(2, 5)], samples=0)
    with pytest.raises(exceptions.Refusal):
        sparsity_profile(FamilySpec.mixed(five_schedule), [Fraction(1, 4)], samples=0)
    with pytest.raises(exceptions.UnsupportedFamily):
        exact_sparsity_bound(FamilySpec.jamesified(five_schedule), Fraction(1, 4))


def test_dual_bound():
    s = ParameterSchedule(m=(2, 4, 8, 16), n=(2, 3, 4, 5))
    report = dual_bound(s, 3)
    assert report.base == 2
    assert report.q == (8, 4)
    assert report.comparisons == [(1, False), (2, False)]
    with pytest.raises(exceptions.PreconditionFailed):
        dual_bound(s, 5)


@pytest.fixture(scope="module")
def paper():
    return minimal_paper_schedule(5)


@pytest.mark.parametrize(
    "kind,j",
    [
        (LEMMA_4MJ, 3),
        ("lemma-4/m_j", 3),
        (AUX_EVEN, 2),
        (AUX_ODD, 1),
        (SUPPORT_BOUND, 3),
        (DEPENDENT_AVERAGE, 1),
    ],
)
def test_lemma_chains_hold_on_paper_schedule(paper, kind, j):
    report = audit_lemma_chain(kind, paper, j)
    assert report.passed
    assert report.to_json()["passed"] is True


def test_first_chain_is_tight_at_three(paper):
    report = audit_lemma_chain(LEMMA_4MJ, paper, 3)
    # n_1 = 32 makes the first inequality an equality
    assert report.steps[0].margin == 0
    assert report.steps[2].margin > 0


def test_lemma_chains_refuse_toy_schedules(five_schedule):
    with pytest.raises(exceptions.Refusal):
        audit_lemma_chain(AUX_ODD, five_schedule, 1)
    with pytest.raises(exceptions.PreconditionFailed):
        audit_lemma_chain("lemma-99", five_schedule, 1)


def test_lemma_chain_index_preconditions(paper):
    with pytest.raises(exceptions.PreconditionFailed):
        audit_lemma_chain(LEMMA_4MJ, paper, 2)


def test_biorthogonality_profile():
    fam = FamilySpec.mixed(ParameterSchedule(m=(2, 4), n=(2, 4)))
    profile = biorthogonality_profile(fam, 1)
    assert profile.norm.value == 1
    assert profile.lower_bound_holds
    assert profile.checks == {2: True}


def test_average_profile():
    fam = FamilySpec.mixed(ParameterSchedule(m=(2, 4), n=(2, 4)))
    profile = average_profile(fam, 2)
    assert profile.value == Fraction(1, 2)
    assert profile.lower == Fraction(1, 4)
    assert profile.lower_holds and profile.upper_holds
    assert not profile.upper_asserted


def test_certificate_functional_attains_value(five_schedule):
    fam = FamilySpec.mixed(five_schedule)
    x = make_vector([(1, 3), (2, -1), (5, 2), (6, 2), (9, "1/2")])
    cert = norm(x, fam)
    assert evaluate(cert.tree, x) == cert.value
