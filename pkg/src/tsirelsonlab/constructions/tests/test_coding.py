from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import pytest

from tsirelsonlab import exceptions
from tsirelsonlab.constructions.coding import (
    CodingRegistry,
    canonical_sequence,
    coding_schedule,
    growth_witness,
    in_omega1,
    in_omega2,
    sigma,
)
from tsirelsonlab.core import make_vector


@pytest.fixture()
def registry():
    return CodingRegistry(coding_schedule(64))


def test_coding_schedule():
    s = coding_schedule(5)
    assert s.m == (2, 4, 8, 16, 32)
    assert s.n == (2, 3, 4, 5, 6)


def test_omegas():
    assert [k for k in range(1, 8) if in_omega1(k)] == [1, 3, 5, 7]
    assert [k for k in range(1, 8) if in_omega2(k)] == [2, 4, 6]


def test_canonical_sequence_accepts_several_inputs():
    canonical = canonical_sequence([{1: "1/2"}, make_vector([(3, 1)])])
    assert canonical == (((1, Fraction(1, 2)),), ((3, Fraction(1)),))
    assert growth_witness(canonical) == 6


@pytest.mark.parametrize(
    "seq",
    [
        [],
        [{1: 0}],
        [{2: 1}, {1: 1}],
        [{1: 1, 3: 1}, {2: 1}],
    ],
)
def test_canonical_sequence_rejects(seq):
    with pytest.raises(exceptions.PreconditionFailed):
        canonical_sequence(seq)


def test_sigma_is_first_fit(registry):
    assert registry.sigma([{1: "1/2"}]) == 4
    assert registry.sigma([{1: "1/2"}, {3: 1}]) == 8
    # m_2t must exceed 100·2^20
    assert sigma(registry, [{100: Fraction(1, 2**20)}]) == 28
    assert len(registry) == 3


def test_sigma_is_stable(registry):
    value = registry.sigma([{1: 1}, {2: "1/3"}])
    assert registry.sigma([{1: 1}, {2: Fraction(1, 3)}]) == value
    assert registry.lookup([{1: 1}, {2: "1/3"}]) == value
    assert registry.lookup([{1: 1}]) is None
    assert len(registry) == 1


def test_sigma_values_are_multiples_of_four(registry):
    values = [registry.sigma([{k: 1}]) for k in range(1, 12)]
    assert len(set(values)) == len(values)
    assert all(value % 4 == 0 for value in values)
    registry.audit()


def test_sigma_refuses_on_short_schedules():
    registry = CodingRegistry(coding_schedule(8))
    registry.sigma([{1: 1}])
    registry.sigma([{2: 1}])
    with pytest.raises(exceptions.Refusal):
        registry.sigma([{3: 1}])


def test_concurrent_sigma_stays_injective(registry):
    seqs = [[{k: 1}, {k + 1: "1/2"}] for k in range(1, 20, 2)] * 3
    with ThreadPoolExecutor(max_workers=4) as pool:
        values = list(pool.map(registry.sigma, seqs))
    assert len(registry) == 10
    assert len(set(values)) == 10
    registry.audit()


def test_registry_json_round_trip(registry):
    first = registry.sigma([{1: "1/2"}])
    registry.sigma([{5: 1}])
    restored = CodingRegistry.from_json(registry.to_json(), registry.schedule)
    assert restored.lookup([{1: "1/2"}]) == first
    assert len(restored) == 2
    assert '"entries"' in registry.dumps()
    restored.audit()


@pytest.mark.parametrize(
    "entries",
    [
        [["a", 4, "1"], ["b", 4, "1"]],
        [["a", 6, "1"]],
        [["a", 4, "100"]],
    ],
)
def test_audit_detects_corruption(entries):
    registry = CodingRegistry.from_json({"entries": entries}, coding_schedule(16))
    with pytest.raises(exceptions.RegistryCorruption):
        registry.audit()
