"""Bounded non-compact operators T x = Σ_n x*_{q_n}(x) e_n.

Given a biorthogonal system (x_n, x_n*) whose functionals generate a c₀
spreading model with constant C, a decreasing sequence θ with θ_1 = 1
and a sparsity profile of the target basis, the indices q_n are chosen
so that #{n: |f(e_n)| > θ_{j+1}} ≤ q_j for every generator f. The
operator is then bounded by C·Σ_j jθ_j, while T x_{q_i} = e_i keeps the
images of a bounded sequence separated.

Only a finite window n ≤ W of the operator is materialized.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .. import exceptions
from ..constructions.spreading import SpreadingCertificate
from ..core import (
    ParameterSchedule,
    RationalVector,
    as_fraction,
    flat_vector,
    fraction_to_str,
    make_vector,
    unit_vector,
)
from ..engine import SparsityProfile, norm
from ..normset import (
    FamilySpec,
    FunctionalTree,
    Leaf,
    Node,
    coefficients,
    evaluate,
    random_tree,
    tree_to_json,
)

log = logging.getLogger(__name__)


DEFAULT_WINDOW = 5
DEFAULT_SAMPLES = 100
DEFAULT_GENERATORS = 20


@dataclass(frozen=True)
class BiorthogonalSystem:
    """x_n* = (1/m_a)Σ_{i∈F_n} e_i* and x_n = (m_a/b)Σ_{i∈F_n} e_i.

    F_n is the n-th run of ``width`` = b consecutive integers, so the
    pairs are biorthogonal with ran x_n = ran x_n*.
    """

    schedule: ParameterSchedule
    a: int
    count: int
    width: int = 1

    def __post_init__(self):
        if self.count < 1 or self.width < 1:
            raise exceptions.PreconditionFailed("count and width must be positive")
        if self.width > self.schedule.size(self.a):
            raise exceptions.PreconditionFailed(
                f"width {self.width} exceeds n_{self.a} = {self.schedule.size(self.a)}"
            )

    def block(self, n: int) -> range:
        if not 1 <= n <= self.count:
            raise exceptions.PreconditionFailed(f"pair {n} is outside 1..{self.count}")
        return range((n - 1) * self.width + 1, n * self.width + 1)

    @property
    def family(self) -> FamilySpec:
        return FamilySpec.t0(self.schedule)

    def functional(self, n: int) -> Node:
        return Node.of(self.family.lookup(self.a), [Leaf(i) for i in self.block(n)])

    def vector(self, n: int) -> RationalVector:
        return flat_vector(self.block(n), Fraction(self.schedule.weight(self.a), self.width))

    def to_json(self) -> dict:
        return {"a": self.a, "count": self.count, "width": self.width}


def toy_biorthogonal_system(
    schedule: ParameterSchedule, a: int, count: int, width: int = 1
) -> BiorthogonalSystem:
    """A biorthogonal system of weight-a averages in T₀.

    Any set of at most n_a/width of the functionals sums, up to signs,
    to a member of the norming set, which makes the spreading constant
    1 on such sets.
    """
    return BiorthogonalSystem(schedule=schedule, a=a, count=count, width=width)


@dataclass(frozen=True)
class OperatorFactoryConfig:
    """θ_1 = 1 > θ_2 > … given explicitly, continued geometrically by ``ratio``."""

    system: BiorthogonalSystem
    theta: tuple
    ratio: Fraction = Fraction(1, 2)
    window: int = DEFAULT_WINDOW
    K: Fraction = Fraction(1)
    C: Fraction = Fraction(1)
    q: tuple = ()
    spreading: Optional[SpreadingCertificate] = None

    def __post_init__(self):
        theta = tuple(as_fraction(t) for t in self.theta)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "ratio", as_fraction(self.ratio))
        object.__setattr__(self, "K", as_fraction(self.K))
        object.__setattr__(self, "C", as_fraction(self.C))
        object.__setattr__(self, "q", tuple(int(v) for v in self.q))
        if not theta or theta[0] != 1:
            raise exceptions.PreconditionFailed("θ must start with θ_1 = 1")
        if any(a <= b for a, b in zip(theta, theta[1:])) or theta[-1] <= 0:
            raise exceptions.PreconditionFailed("θ must be positive and strictly decreasing")
        if not 0 < self.ratio < 1:
            raise exceptions.PreconditionFailed(f"ratio {self.ratio} is not in (0, 1)")
        if any(a >= b for a, b in zip(self.q, self.q[1:])):
            raise exceptions.PreconditionFailed("q must be strictly increasing")
        if self.window < 2:
            raise exceptions.PreconditionFailed("the window needs at least two indices")
        if self.K < 1 or self.C <= 0:
            raise exceptions.PreconditionFailed("K must be at least 1 and C positive")

    @classmethod
    def geometric(
        cls, system: BiorthogonalSystem, count: int, ratio=Fraction(1, 2), **kwargs
    ) -> "OperatorFactoryConfig":
        """θ_j = ratio^{j−1} for j ≤ count."""
        ratio = as_fraction(ratio)
        theta = tuple(ratio**j for j in range(count))
        return cls(system=system, theta=theta, ratio=ratio, **kwargs)

    def theta_at(self, j: int) -> Fraction:
        if j <= len(self.theta):
            return self.theta[j - 1]
        return self.theta[-1] * self.ratio ** (j - len(self.theta))

    def theta_sum(self) -> Fraction:
        """Σ_{j≥1} jθ_j, exact under the geometric continuation."""
        J = len(self.theta)
        partial = sum((j * t for j, t in enumerate(self.theta, start=1)), Fraction(0))
        r = self.ratio
        tail = self.theta[-1] * (J * r / (1 - r) + r / (1 - r) ** 2)
        return partial + tail

    def level(self, c: Fraction) -> int:
        """The j with θ_{j+1} < |c| ≤ θ_j."""
        c = abs(c)
        if not 0 < c <= 1:
            raise exceptions.PreconditionFailed(f"coefficient {c} is not in (0, 1]")
        j = 1
        while self.theta_at(j + 1) >= c:
            j += 1
        return j

    def to_json(self) -> dict:
        return {
            "system": self.system.to_json(),
            "theta": [fraction_to_str(t) for t in self.theta],
            "ratio": fraction_to_str(self.ratio),
            "window": self.window,
            "K": fraction_to_str(self.K),
            "C": fraction_to_str(self.C),
            "q": list(self.q),
            "spreading": None if self.spreading is None else self.spreading.to_json(),
        }


def select_indices(cfg: OperatorFactoryConfig, profile: SparsityProfile) -> tuple:
    """The least strictly increasing q with q_j ≥ M_{θ_{j+1}} for j ≤ W."""
    q = []
    for j in range(1, cfg.window + 1):
        threshold = cfg.theta_at(j + 1)
        try:
            bound = profile.bound(threshold)
        except KeyError:
            raise exceptions.Refusal(
                f"profile for {profile.family} has no bound at θ_{j + 1} = {threshold}"
            ) from None
        q.append(max(int(bound), q[-1] + 1 if q else 1))
    return tuple(q)


@dataclass
class BoundednessAudit:
    samples: int
    checked: int
    bound: Fraction
    worst: Fraction = Fraction(0)
    assumption_failures: int = 0

    @property
    def holds(self) -> bool:
        return self.worst <= self.bound

    def to_json(self) -> dict:
        return {
            "samples": self.samples,
            "checked": self.checked,
            "bound": fraction_to_str(self.bound),
            "worst_ratio": fraction_to_str(self.worst),
            "assumption_failures": self.assumption_failures,
            "holds": self.holds,
        }


@dataclass
class SeparationAudit:
    threshold: Fraction
    pairs: int
    smallest: Optional[Fraction] = None

    @property
    def holds(self) -> bool:
        return self.smallest is not None and self.smallest >= self.threshold

    def to_json(self) -> dict:
        return {
            "threshold": fraction_to_str(self.threshold),
            "pairs": self.pairs,
            "smallest": None if self.smallest is None else fraction_to_str(self.smallest),
            "holds": self.holds,
        }


@dataclass
class NoncompactOperator:
    config: OperatorFactoryConfig
    q: tuple
    matrix: dict
    target: FamilySpec
    boundedness: BoundednessAudit
    separation: SeparationAudit
    seed: int = 0
    generators: list = field(default_factory=list)

    def apply(self, x: RationalVector) -> RationalVector:
        """The truncation Σ_{n≤W} x*_{q_n}(x) e_n."""
        values = {}
        for (n, i), value in self.matrix.items():
            values[n] = values.get(n, Fraction(0)) + value * x[i]
        return make_vector(values.items())

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "q": list(self.q),
            "target": self.target.name,
            "seed": self.seed,
            "matrix": [
                [n, i, fraction_to_str(v)] for (n, i), v in sorted(self.matrix.items())
            ],
            "boundedness": self.boundedness.to_json(),
            "separation": self.separation.to_json(),
        }


def _sample_vector(rng, support: Sequence[int], extra: int, top: int) -> RationalVector:
    points = set(support)
    points.update(int(p) for p in rng.integers(1, top + 1, size=extra))
    values = {}
    for p in sorted(points):
        value = int(rng.integers(-4, 5))
        if value:
            values[p] = Fraction(value, 4)
    return make_vector(values.items())


def _check_generator(f: FunctionalTree, cfg: OperatorFactoryConfig, q: tuple) -> None:
    coords = coefficients(f)
    for j in range(1, cfg.window + 1):
        threshold = cfg.theta_at(j + 1)
        count = sum(1 for n, c in coords.items() if n <= cfg.window and abs(c) > threshold)
        if count > q[j - 1]:
            raise exceptions.Refusal(
                f"generator has {count} coordinates above θ_{j + 1}, more than q_{j} = {q[j - 1]}"
            )


def build_noncompact_operator(
    cfg: OperatorFactoryConfig,
    profile: SparsityProfile,
    *,
    target: Optional[FamilySpec] = None,
    generators: Optional[Sequence[FunctionalTree]] = None,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> NoncompactOperator:
    """Select q, materialize the window of T and audit it.

    Boundedness: for every sample x and generator f the proof's split
    of the window into B_j = {n: θ_{j+1} < |f(e_n)| ≤ θ_j} is rebuilt,
    its spreading assumptions are checked exactly and, where they hold,
    |f(Tx)| ≤ C·Σ_j jθ_j·‖x‖ is asserted. Separation: T x_{q_i} = e_i
    and ‖e_i − e_j‖ ≥ 1/(2K) for all pairs in the window.
    """
    system = cfg.system
    s = system.schedule
    target = FamilySpec.t0_prime(s) if target is None else target
    q = cfg.q or select_indices(cfg, profile)
    if len(q) < cfg.window:
        raise exceptions.Refusal(f"only {len(q)} indices for a window of {cfg.window}")
    if q[cfg.window - 1] > system.count:
        raise exceptions.Refusal(
            f"q_{cfg.window} = {q[cfg.window - 1]} exceeds the {system.count} pairs of the system"
        )
    matrix = {}
    for n in range(1, cfg.window + 1):
        for i in system.block(q[n - 1]):
            matrix[(n, i)] = Fraction(1, s.weight(system.a))
    rng = np.random.default_rng(seed)
    log.info(f"Building operator window {cfg.window} with seed {seed}")
    if generators is None:
        generators = [Leaf(n) for n in range(1, cfg.window + 1)]
        generators += [
            random_tree(target, rng, 1, cfg.window, depth=2)
            for _ in range(DEFAULT_GENERATORS)
        ]
    for f in generators:
        _check_generator(f, cfg, q)
    operator = NoncompactOperator(
        config=cfg,
        q=q,
        matrix=matrix,
        target=target,
        boundedness=BoundednessAudit(samples=samples, checked=0, bound=cfg.C * cfg.theta_sum()),
        separation=SeparationAudit(threshold=1 / (2 * cfg.K), pairs=0),
        seed=seed,
        generators=list(generators),
    )
    _audit_boundedness(operator, rng)
    _audit_separation(operator)
    return operator


def _audit_boundedness(operator: NoncompactOperator, rng) -> None:
    cfg, q = operator.config, operator.q
    system = cfg.system
    audit = operator.boundedness
    support = [i for n in range(1, cfg.window + 1) for i in system.block(q[n - 1])]
    top = system.block(q[cfg.window - 1])[-1]
    functionals = [system.functional(q[n - 1]) for n in range(1, cfg.window + 1)]
    for _ in range(audit.samples):
        x = _sample_vector(rng, support, extra=3, top=top)
        if not x:
            continue
        size = norm(x, system.family).value
        actions = [abs(evaluate(phi, x)) for phi in functionals]
        image = operator.apply(x)
        for f in operator.generators:
            coords = coefficients(f)
            levels = {}
            for n in range(1, cfg.window + 1):
                c = coords.get(n, Fraction(0))
                if c:
                    levels.setdefault(cfg.level(c), []).append(n)
            ok = all(a <= cfg.C * size for a in actions)
            for j, members in levels.items():
                spread = [n for n in members if n >= j]
                ok = ok and sum((actions[n - 1] for n in spread), Fraction(0)) <= cfg.C * size
            audit.checked += 1
            if not ok:
                audit.assumption_failures += 1
                continue
            ratio = abs(evaluate(f, image)) / size
            if ratio > audit.bound:
                raise exceptions.AuditFailure(
                    f"|f(Tx)| = {ratio}·‖x‖ exceeds {audit.bound}·‖x‖ for f = {tree_to_json(f)}"
                )
            audit.worst = max(audit.worst, ratio)
    if audit.assumption_failures:
        log.warning(
            f"Spreading assumptions failed on {audit.assumption_failures} of {audit.checked} checks"
        )
    log.info(f"Boundedness audit: worst ratio {audit.worst} against {audit.bound}")


def _audit_separation(operator: NoncompactOperator) -> None:
    cfg, q = operator.config, operator.q
    system = cfg.system
    audit = operator.separation
    images = []
    for i in range(1, cfg.window + 1):
        image = operator.apply(system.vector(q[i - 1]))
        if image != unit_vector(i):
            raise exceptions.AuditFailure(f"T x_(q_{i}) = {image}, expected e_{i}")
        images.append(image)
    for i in range(cfg.window):
        for j in range(i + 1, cfg.window):
            gap = norm(images[i] - images[j], operator.target).value
            audit.pairs += 1
            audit.smallest = gap if audit.smallest is None else min(audit.smallest, gap)
    if not audit.holds:
        raise exceptions.AuditFailure(
            f"images separated by only {audit.smallest} < {audit.threshold}"
        )
    log.info(f"Separation audit over {audit.pairs} pairs: {audit.smallest}")


@dataclass(frozen=True)
class IdentityAudit:
    j: int
    source_norm: Fraction
    target_norm: Fraction
    bound: Fraction

    @property
    def ratio(self) -> Fraction:
        return self.source_norm / self.target_norm

    @property
    def holds(self) -> bool:
        return self.ratio <= self.bound

    def to_json(self) -> dict:
        return {
            "j": self.j,
            "source_norm": fraction_to_str(self.source_norm),
            "target_norm": fraction_to_str(self.target_norm),
            "ratio": fraction_to_str(self.ratio),
            "bound": fraction_to_str(self.bound),
            "holds": self.holds,
        }


def identity_ratio_audit(s: ParameterSchedule, j: int) -> IdentityAudit:
    """‖y‖_{T₀}/‖y‖_{T₀′} for the average y of n_{j+1} unit vectors.

    The functional (1/m_j)Σ e_i* of T₀′ gives ‖y‖_{T₀′} ≥ 1/m_j, which is
    asserted; the ratio is compared with 6/m_j for information only.
    """
    count = s.size(j + 1)
    y = flat_vector(range(1, count + 1), Fraction(1, count))
    target = FamilySpec.t0_prime(s)
    target_norm = norm(y, target).value
    if target_norm < Fraction(1, s.weight(j)):
        raise exceptions.AuditFailure(f"‖y‖ in {target.name} fell below 1/m_{j}")
    audit = IdentityAudit(
        j=j,
        source_norm=norm(y, FamilySpec.t0(s)).value,
        target_norm=target_norm,
        bound=Fraction(6, s.weight(j)),
    )
    if not audit.holds:
        log.warning(f"Identity ratio {audit.ratio} exceeds 6/m_{j} at toy scale")
    return audit
