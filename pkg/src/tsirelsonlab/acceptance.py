"""Batch audits described by a YAML or JSON manifest.

A manifest names a seed and a list of checks:

.. code-block:: yaml

    seed: 7
    checks:
      - name: schedule-audit
        operation: schedule-audit
        schedule: paper-horizon:6
        inputs: {horizon: 6}
      - name: lacunary-refusal
        operation: find-lacunary
        schedule: paper:4
        expect: refusal

Each check runs in the default executor and the results are reported
sorted by name, so the report does not depend on completion order.
Every check draws from its own generator, derived from the seed and
its name.

"""

import asyncio
import hashlib
import itertools
import json
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
import yaml

from . import exceptions
from .core import (
    Interval,
    ParameterSchedule,
    RationalVector,
    as_fraction,
    flat_vector,
    make_vector,
    minimal_paper_schedule,
    paper_schedule_for_horizon,
    validate_schedule,
)
from .constructions.coding import CodingRegistry, coding_schedule
from .constructions.special import build_special_sequence, check_tree_like
from .constructions.spreading import (
    certify_c0_spreading,
    smallest_spreading_instance,
    spreading_toy_schedule,
)
from .diagonal.factory import (
    OperatorFactoryConfig,
    build_noncompact_operator,
    toy_biorthogonal_system,
)
from .diagonal.operators import (
    DiagonalOperator,
    alpha,
    certify_alpha_sum,
    find_lacunary,
    operator_bound_constant,
)
from .engine import audit_lemma_chain, norm, norm_bruteforce, sparsity_profile
from .jamesification import (
    BlockPairSystem,
    james_basis_examples,
    lift_certificate,
    verify_lift,
)
from .normset import FamilySpec, Leaf, Node, evaluate, random_tree

log = logging.getLogger(__name__)


PASS = "pass"
FAIL = "fail"
REFUSED = "refused"
ERROR = "error"

EXPECT_PASS = "pass"
EXPECT_REFUSAL = "refusal"

GRID_VALUES = (Fraction(1), Fraction(1, 2), Fraction(1, 4))
SIGNED_GRID_VALUES = GRID_VALUES + tuple(-v for v in GRID_VALUES)
RANDOM_VALUES = (-4, -2, -1, 1, 2, 4)


CHECKS: dict[str, Callable] = {}


def check(name: str):
    """Register a check function under *name*."""

    def register(fn):
        CHECKS[name] = fn
        return fn

    return register


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


def input_digest(data) -> str:
    """sha256 of the canonical JSON of *data*."""
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()


def check_manifest(data, source="manifest") -> dict:
    """Make sure parsed *data* has the shape of an audit manifest."""
    if not isinstance(data, Mapping) or "checks" not in data:
        raise exceptions.PreconditionFailed(f"{source} is not an audit manifest")
    return dict(data)


def load_manifest(path: Union[str, Path]) -> dict:
    """Read a YAML or JSON manifest."""
    with open(path, mode="r") as fd:
        data = yaml.safe_load(fd)
    return check_manifest(data, path)


def resolve_schedule(ref) -> Optional[ParameterSchedule]:
    """Turn a manifest schedule reference into a schedule.

    References are ``paper:J``, ``paper-horizon:H``, ``coding:L``,
    ``spreading:J`` or an inline schedule object.
    """
    if ref is None:
        return None
    if isinstance(ref, Mapping):
        return ParameterSchedule.from_json(ref)
    kind, _, arg = str(ref).partition(":")
    builders = {
        "paper": minimal_paper_schedule,
        "paper-horizon": paper_schedule_for_horizon,
        "coding": coding_schedule,
        "spreading": spreading_toy_schedule,
    }
    if kind not in builders or not arg.isdigit():
        raise exceptions.PreconditionFailed(f"unknown schedule reference {ref!r}")
    return builders[kind](int(arg))


def check_rng(seed: int, name: str):
    """The generator of one check, independent of execution order."""
    salt = int(hashlib.sha256(name.encode()).hexdigest()[:8], 16)
    return np.random.default_rng([int(seed), salt])


def _random_vector(rng, lo: int, hi: int, size: int) -> RationalVector:
    points = rng.choice(np.arange(lo, hi + 1), size=min(size, hi - lo + 1), replace=False)
    return make_vector(
        (int(p), Fraction(int(rng.choice(RANDOM_VALUES)), 4)) for p in sorted(points)
    )


@dataclass
class CheckResult:
    name: str
    operation: str
    status: str
    expect: str = EXPECT_PASS
    details: dict = field(default_factory=dict)
    message: str = ""
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        if self.expect == EXPECT_REFUSAL:
            return self.status == REFUSED
        return self.status == PASS

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "operation": self.operation,
            "status": self.status,
            "expect": self.expect,
            "passed": self.passed,
            "message": self.message,
            "seconds": round(self.seconds, 3),
            "details": self.details,
        }


@dataclass
class AuditRunReport:
    seed: int
    digest: str
    results: list

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "input_sha256": self.digest,
            "passed": self.passed,
            "checks": [result.to_json() for result in self.results],
        }


def run_check(entry: Mapping, seed: int) -> CheckResult:
    """Run one manifest entry synchronously and classify the outcome."""
    name = entry["name"]
    operation = entry.get("operation", name)
    expect = entry.get("expect", EXPECT_PASS)
    result = CheckResult(name=name, operation=operation, status=ERROR, expect=expect)
    start = time.monotonic()
    try:
        fn = CHECKS[operation]
    except KeyError:
        result.message = f"unknown operation {operation!r}"
        log.warning(f"Check {name}: {result.message}")
        return result
    try:
        schedule = resolve_schedule(entry.get("schedule"))
        result.details = fn(entry.get("inputs") or {}, schedule, check_rng(seed, name))
    except exceptions.AuditFailure as exc:
        result.status, result.message = FAIL, str(exc)
    except exceptions.Refusal as exc:
        result.status, result.message = REFUSED, str(exc)
    except (ValueError, KeyError, TypeError) as exc:
        result.status, result.message = ERROR, f"{type(exc).__name__}: {exc}"
    else:
        result.status = PASS
    result.seconds = time.monotonic() - start
    log.info(f"Check {name}: {result.status} in {result.seconds:.2f} s")
    return result


async def run_manifest(manifest: Mapping, seed: Optional[int] = None) -> AuditRunReport:
    """Run every check of *manifest* in the default executor."""
    seed = int(manifest.get("seed", 0) if seed is None else seed)
    log.info(f"Running {len(manifest['checks'])} checks with seed {seed}")
    loop = asyncio.get_running_loop()
    names = [entry["name"] for entry in manifest["checks"]]
    if len(set(names)) != len(names):
        raise exceptions.PreconditionFailed("check names must be unique")
    jobs = [
        loop.run_in_executor(None, partial(run_check, entry, seed))
        for entry in manifest["checks"]
    ]
    results = await asyncio.gather(*jobs)
    return AuditRunReport(
        seed=seed,
        digest=input_digest({"manifest": manifest, "seed": seed}),
        results=sorted(results, key=lambda r: r.name),
    )


def run_audit(manifest: Mapping, seed: Optional[int] = None) -> AuditRunReport:
    return asyncio.run(run_manifest(manifest, seed=seed))


# Checks


def _oracle_families(schedule: Optional[ParameterSchedule]) -> list:
    base = ParameterSchedule(m=(2, 3, 5), n=(2, 3, 4))
    other = schedule if schedule is not None else coding_schedule(4)
    return [FamilySpec.mixed(base), FamilySpec.t0_prime(base), FamilySpec.mixed(other)]


def _compare(x: RationalVector, fam: FamilySpec, mismatches: list) -> None:
    fast = norm(x, fam).value
    slow = norm_bruteforce(x, fam, depth=len(x) + 1)
    if fast != slow:
        mismatches.append({"family": fam.name, "vector": x.to_json(), "dp": str(fast), "oracle": str(slow)})


@check("oracle-equivalence")
def oracle_equivalence(inputs: Mapping, schedule, rng) -> dict:
    """Interval DP against brute force.

    Magnitudes in {1, 1/2, 1/4} are exhausted up to ``grid_support``
    points and signed values up to the smaller ``signed_grid_support``;
    the random cases carry signs as well.
    """
    grid_support = int(inputs.get("grid_support", 4))
    signed_support = int(inputs.get("signed_grid_support", 3))
    random_cases = int(inputs.get("random_cases", 50))
    max_support = int(inputs.get("max_support", 6))
    families = _oracle_families(schedule)
    mismatches = []
    compared = 0
    for fam in families:
        for size in range(1, grid_support + 1):
            for values in itertools.product(GRID_VALUES, repeat=size):
                _compare(make_vector(enumerate(values, start=1)), fam, mismatches)
                compared += 1
        for size in range(1, signed_support + 1):
            for values in itertools.product(SIGNED_GRID_VALUES, repeat=size):
                _compare(make_vector(enumerate(values, start=1)), fam, mismatches)
                compared += 1
        for _ in range(random_cases):
            size = int(rng.integers(1, max_support + 1))
            _compare(_random_vector(rng, 1, 3 * max_support, size), fam, mismatches)
            compared += 1
    if mismatches:
        raise exceptions.AuditFailure(
            f"{len(mismatches)} of {compared} norms disagree, first {mismatches[0]}"
        )
    return {"compared": compared, "families": [fam.name for fam in families]}


@check("schedule-audit")
def schedule_audit(inputs: Mapping, schedule, rng) -> dict:
    horizon = int(inputs.get("horizon", 6))
    schedule = schedule or paper_schedule_for_horizon(horizon)
    report = validate_schedule(schedule, horizon)
    if not report.all_hold:
        failing = [name for name, ok in report.flags.items() if not ok]
        raise exceptions.AuditFailure(f"schedule conditions fail: {failing}")
    return {"horizon": horizon, "flags": report.flags}


@check("lemma-chain")
def lemma_chain(inputs: Mapping, schedule, rng) -> dict:
    kind = inputs.get("kind", "lemma-4/m_j")
    js = [int(j) for j in inputs.get("js", (3, 4, 5))]
    schedule = schedule or paper_schedule_for_horizon(max(js))
    results = {}
    for j in js:
        report = audit_lemma_chain(kind, schedule, j)
        if not report.passed:
            raise exceptions.AuditFailure(f"{kind} chain fails at j={j}")
        results[str(j)] = report.passed
    return {"kind": kind, "js": results}


@check("spreading")
def spreading(inputs: Mapping, schedule, rng) -> dict:
    toy = smallest_spreading_instance(int(inputs.get("s", 2)))
    if not toy.ok:
        raise exceptions.AuditFailure(f"toy spreading certificate fails: {toy.clauses}")
    details = {"toy": toy.to_json()}
    if schedule is not None:
        js = tuple(int(j) for j in inputs.get("js", (2, 3)))
        cert = certify_c0_spreading(len(js), js, None, schedule, symbolic=True)
        if not cert.ok:
            raise exceptions.AuditFailure(f"symbolic certificate fails: {cert.clauses}")
        details["symbolic"] = cert.to_json()
    return details


@check("jamesification")
def jamesification_values(inputs: Mapping, schedule, rng) -> dict:
    schedule = schedule or coding_schedule(8)
    limit = int(inputs.get("max_length", 10**4))
    values = {}
    for j in range(1, len(schedule.m) + 1):
        if j > len(schedule.n) + 1 or 2 * schedule.p(j) > limit:
            break
        examples = james_basis_examples(j, schedule)
        values[str(j)] = examples.to_json()
    if not values:
        raise exceptions.Refusal("no index j has 2·p_j within the length limit")
    return {"examples": values}


def _random_block_system(rng, count: int, fam: FamilySpec) -> BlockPairSystem:
    """Pairs (m·e_{i_k}, (1/m)e_{i_k}*) with a parent that norms every y_k."""
    s = fam.schedule
    op = fam.lookup(next(j for j in range(1, len(s.m) + 1) if s.size(j) >= count))
    gaps = rng.integers(1, 3, size=count)
    positions = [int(p) for p in np.cumsum(gaps)]
    pairs = [
        (flat_vector([p], 1 / op.factor), Node.of(op, [Leaf(p)])) for p in positions
    ]
    parent = Node.of(op, [Leaf(p) for p in positions])
    return BlockPairSystem(pairs=pairs, parent=parent)


@check("certificate-lift")
def certificate_lift(inputs: Mapping, schedule, rng) -> dict:
    schedule = schedule or coding_schedule(8)
    cases = int(inputs.get("cases", 100))
    max_pairs = int(inputs.get("max_pairs", 6))
    james = FamilySpec.jamesified(schedule)
    plain = FamilySpec.mixed(schedule)
    failures = 0
    for _ in range(cases):
        count = int(rng.integers(2, max_pairs + 1))
        system = _random_block_system(rng, count, plain)
        g = random_tree(james, rng, 1, count, depth=3)
        mu = [Fraction(int(rng.choice(RANDOM_VALUES)), 4) for _ in range(count)]
        f = lift_certificate(g, system, james)
        report = verify_lift(g, f, system)
        left = evaluate(g, make_vector(enumerate(mu, start=1)))
        right = evaluate(f, system.vector(mu))
        if not report.ok or left != right:
            failures += 1
    if failures:
        raise exceptions.AuditFailure(f"{failures} of {cases} lifted certificates disagree")
    return {"cases": cases}


def _random_groups(rng, js: Sequence[int], sizes: Sequence[int], start: int = 1) -> dict:
    groups = {}
    cursor = start
    for j, size in zip(js, sizes):
        intervals = []
        for _ in range(size):
            length = int(rng.integers(1, 3))
            intervals.append(Interval(cursor, cursor + length - 1))
            cursor += length + int(rng.integers(0, 2))
        groups[j] = tuple(intervals)
    return groups


@check("diagonal")
def diagonal_suite(inputs: Mapping, schedule, rng) -> dict:
    """The α sandwich on random operators and the α-sum certificate."""
    cases = int(inputs.get("cases", 20))
    schedule = schedule or coding_schedule(12)
    fam = FamilySpec.mixed(schedule)
    js = (4, 6, 8)
    for _ in range(cases):
        sizes = [int(rng.integers(1, 4)) for _ in js]
        D = DiagonalOperator(_random_groups(rng, js, sizes), schedule)
        top = max(I.hi for intervals in D.groups.values() for I in intervals)
        x = _random_vector(rng, 1, top, int(rng.integers(1, 7)))
        for j in js:
            alpha(j, D, x, fam)
    toy = spreading_toy_schedule(5)
    toy_fam = FamilySpec.mixed(toy)
    for _ in range(cases):
        groups = _random_groups(rng, (3, 4), (int(rng.integers(1, 3)), int(rng.integers(1, 7))))
        D = DiagonalOperator(groups, toy)
        top = max(I.hi for intervals in groups.values() for I in intervals)
        x = _random_vector(rng, 1, top, int(rng.integers(1, 7)))
        cert = certify_alpha_sum((3, 4), D, x, toy_fam)
        if not cert.ok:
            raise exceptions.AuditFailure(f"α-sum certificate fails: {cert.to_json()}")
    c0 = operator_bound_constant(minimal_paper_schedule(3), int(inputs.get("tail_index", 3)))
    if c0.width >= Fraction(1, 1000) or c0.lo < Fraction(67, 16):
        raise exceptions.AuditFailure(f"C₀ enclosure {c0.to_json()} is too loose")
    return {"cases": cases, "c0": c0.to_json()}


@check("find-lacunary")
def lacunary(inputs: Mapping, schedule, rng) -> dict:
    schedule = schedule or minimal_paper_schedule(4)
    js = [int(j) for j in inputs.get("js", range(1, len(schedule.m) + 1))]
    groups = {j: (Interval(k, k),) for k, j in enumerate(js, start=1)}
    D = DiagonalOperator(groups, schedule)
    return {"M": list(find_lacunary(D, schedule, int(inputs.get("count", 1))))}


@check("operator-factory")
def operator_factory(inputs: Mapping, schedule, rng) -> dict:
    schedule = schedule or coding_schedule(12)
    window = int(inputs.get("window", 5))
    a = int(inputs.get("a", 9))
    samples = int(inputs.get("samples", 100))
    ratio = as_fraction(inputs.get("ratio", "1/2"))
    cfg = OperatorFactoryConfig.geometric(
        toy_biorthogonal_system(schedule, a, count=int(inputs.get("count", 81))),
        count=window + 1,
        ratio=ratio,
        window=window,
    )
    thresholds = [cfg.theta_at(j + 1) for j in range(1, window + 1)]
    target = FamilySpec.t0_prime(schedule)
    profile = sparsity_profile(target, thresholds, samples=samples // 2, rng=rng, window=window)
    operator = build_noncompact_operator(
        cfg, profile, target=target, samples=samples, seed=int(rng.integers(2**31))
    )
    return {
        "q": list(operator.q),
        "boundedness": operator.boundedness.to_json(),
        "separation": operator.separation.to_json(),
    }


def _random_groups_for_sequence(rng, start: int, length: int) -> list:
    groups = []
    cursor = start
    for _ in range(length):
        size = int(rng.integers(1, 3))
        groups.append(list(range(cursor, cursor + size)))
        cursor += size + int(rng.integers(0, 2))
    return groups


@check("tree-like")
def tree_like(inputs: Mapping, schedule, rng) -> dict:
    """Pairs of special sequences sharing a prefix and one registry."""
    pairs = int(inputs.get("pairs", 20))
    registrations = int(inputs.get("registrations", 100))
    j = int(inputs.get("j", 2))
    schedule = schedule or coding_schedule(4 * (pairs * 6 + registrations) + 64)
    registry = CodingRegistry(schedule)
    fam = FamilySpec.kd(schedule, registry=registry)
    length_cap = schedule.size(2 * j + 1)
    checked = 0
    for _ in range(pairs):
        length = int(rng.integers(2, length_cap + 1))
        phi_groups = _random_groups_for_sequence(rng, int(rng.integers(1, 20)), length)
        kappa = int(rng.integers(1, length + 1))
        # psi agrees with phi before kappa and is shifted by one index after
        psi_groups = [list(g) for g in phi_groups[: kappa - 1]]
        psi_groups += [[c + 1 for c in g] for g in phi_groups[kappa - 1 :]]
        phi = build_special_sequence(phi_groups, j, registry, fam)
        psi = build_special_sequence(psi_groups, j, registry, fam)
        checked += check_tree_like(phi, psi).pairs_checked
    for _ in range(registrations):
        count = int(rng.integers(1, 4))
        start = int(rng.integers(1, 50))
        sequence = [
            flat_vector([start + 2 * i], Fraction(1, 2 ** int(rng.integers(0, 4))))
            for i in range(count)
        ]
        registry.sigma(sequence)
    registry.audit()
    return {"pairs": pairs, "weight_pairs_checked": checked, "assignments": len(registry)}
