"""The ``tslab`` command line.

Every command reads its inputs from JSON (or YAML) files and prints a
JSON report. Rationals are printed exactly as ``num/den`` strings unless
``--approx`` is given.

Exit codes: 0 ok, 1 usage or unreadable input, 2 failed audit, 3
refusal, 4 violated precondition.

"""

import argparse
import json
import logging
import re
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import exceptions
from .acceptance import check_manifest, resolve_schedule, run_audit
from .constructions.averages import make_dependent_sequence
from .constructions.coding import CodingRegistry
from .constructions.spreading import certify_c0_spreading, smallest_spreading_instance
from .core import (
    ParameterSchedule,
    RationalVector,
    minimal_paper_schedule,
    paper_schedule_for_horizon,
    validate_schedule,
)
from .diagonal.factory import (
    OperatorFactoryConfig,
    build_noncompact_operator,
    toy_biorthogonal_system,
)
from .diagonal.operators import (
    DiagonalOperator,
    alpha,
    apply_diagonal,
    c1_enclosure,
    certify_alpha_sum,
    operator_bound_constant,
    validate_lacunary,
)
from .engine import audit_lemma_chain, norm, norm_modified, sparsity_profile
from .jamesification import BlockPairSystem, jnorm, lift_certificate, verify_lift
from .normset import (
    FamilySpec,
    check_membership,
    evaluate,
    family_from_json,
    tree_from_json,
    tree_to_json,
)

log = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_AUDIT = 2
EXIT_REFUSAL = 3
EXIT_PRECONDITION = 4

RATIONAL_RE = re.compile(r"^-?\d+(/\d+)?$")


class UsageError(Exception):
    """The command line or an input file cannot be used."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# Input helpers


def _load(path) -> object:
    try:
        with open(path, mode="r") as fd:
            return yaml.safe_load(fd)
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _schedule(ref) -> ParameterSchedule:
    """A schedule file or a reference such as ``coding:12`` or ``paper:4``."""
    if Path(ref).is_file():
        return ParameterSchedule.from_json(_load(ref))
    return resolve_schedule(ref)


def _manifest(path) -> dict:
    try:
        return check_manifest(_load(path), path)
    except exceptions.PreconditionFailed as exc:
        raise UsageError(str(exc)) from exc


def _vector(path) -> RationalVector:
    data = _load(path)
    if isinstance(data, list):
        data = {"coords": data}
    return RationalVector.from_json(data)


def _vectors(path) -> list:
    data = _load(path)
    if isinstance(data, dict):
        data = data.get("blocks", [])
    return [RationalVector.from_json(item) for item in data]


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _family(args, schedule: Optional[ParameterSchedule] = None) -> FamilySpec:
    if getattr(args, "family", None):
        return family_from_json(_load(args.family))
    if schedule is None:
        raise UsageError("a family file is required")
    return FamilySpec.mixed(schedule)


def _operator(args) -> DiagonalOperator:
    return DiagonalOperator.from_json(_load(args.operator))


def approximate(data):
    """Replace exact rational strings with decimal renderings."""
    if isinstance(data, dict):
        return {k: approximate(v) for k, v in data.items()}
    if isinstance(data, list):
        return [approximate(v) for v in data]
    if isinstance(data, str) and RATIONAL_RE.match(data) and "/" in data:
        return f"{float(Fraction(data)):.12g}"
    return data


# Commands


def cmd_norm(args):
    fam = _family(args)
    x = _vector(args.vector)
    if fam.has_modified:
        return {"value": str(norm_modified(x, fam)), "family": fam.name}, EXIT_OK
    cert = norm(x, fam)
    return dict(cert.to_json(), verified=cert.verify(x)), EXIT_OK


def cmd_jnorm(args):
    cert = jnorm(_vector(args.vector), _schedule(args.schedule), args.J)
    return cert.to_json(), EXIT_OK


def cmd_eval(args):
    fam = family_from_json(_load(args.family)) if args.family else None
    tree = tree_from_json(_load(args.tree), fam)
    return {"value": str(evaluate(tree, _vector(args.vector)))}, EXIT_OK


def cmd_member(args):
    fam = family_from_json(_load(args.family))
    report = check_membership(tree_from_json(_load(args.tree), fam), fam)
    return report.to_json(), EXIT_OK if report.ok else EXIT_AUDIT


def cmd_validate_schedule(args):
    if args.paper:
        schedule = paper_schedule_for_horizon(args.horizon)
    elif args.schedule:
        schedule = _schedule(args.schedule)
    else:
        raise UsageError("give --schedule or --paper")
    report = validate_schedule(schedule, args.horizon)
    return report.to_json(), EXIT_OK if report.all_hold else EXIT_AUDIT


def cmd_audit(args):
    if args.manifest:
        report = run_audit(_manifest(args.manifest), seed=args.seed)
        return report.to_json(), EXIT_OK if report.passed else EXIT_AUDIT
    if not args.lemma or args.j is None:
        raise UsageError("give --manifest, or --lemma with --j")
    schedule = _schedule(args.schedule) if args.schedule else paper_schedule_for_horizon(args.j)
    report = audit_lemma_chain(args.lemma, schedule, args.j)
    return report.to_json(), EXIT_OK if report.passed else EXIT_AUDIT


def _registry(args, schedule: ParameterSchedule) -> CodingRegistry:
    if args.registry and Path(args.registry).is_file():
        return CodingRegistry.from_json(_load(args.registry), schedule)
    return CodingRegistry(schedule)


def _save_registry(args, registry: CodingRegistry) -> None:
    if args.registry:
        Path(args.registry).write_text(registry.dumps())
        log.info(f"Wrote {len(registry)} assignments to {args.registry}")


def cmd_sigma_assign(args):
    schedule = _schedule(args.schedule)
    registry = _registry(args, schedule)
    items = _load(args.sequence)
    sequence = [
        RationalVector.from_json(item) if "coords" in item else tree_from_json(item)
        for item in items
    ]
    value = registry.sigma(sequence)
    registry.audit()
    _save_registry(args, registry)
    return {"sigma": value, "registry": registry.to_json()}, EXIT_OK


def cmd_make_dependent(args):
    schedule = _schedule(args.schedule)
    registry = _registry(args, schedule)
    fam = FamilySpec.kd(schedule, registry=registry, relaxed_threshold=args.relaxed_threshold)
    dep = make_dependent_sequence(
        _vectors(args.z_blocks),
        _vectors(args.w_blocks),
        args.j,
        registry,
        fam,
        length=args.length,
        pieces=args.pieces,
        relaxed_threshold=args.relaxed_threshold,
    )
    _save_registry(args, registry)
    return dep.to_json(), EXIT_OK


def cmd_certify_c0(args):
    if args.smallest:
        cert = smallest_spreading_instance(args.s or 2)
    else:
        if not args.js:
            raise UsageError("give --js or --smallest")
        js = _ints(args.js)
        if not (args.paper or args.schedule):
            raise UsageError("give --schedule or --paper")
        schedule = minimal_paper_schedule(args.paper) if args.paper else _schedule(args.schedule)
        cert = certify_c0_spreading(len(js), js, None, schedule, symbolic=args.symbolic)
    return cert.to_json(), EXIT_OK if cert.ok else EXIT_AUDIT


def cmd_diag_apply(args):
    image = apply_diagonal(_operator(args), _vector(args.vector))
    return {"image": image.to_json()}, EXIT_OK


def cmd_alpha(args):
    D = _operator(args)
    report = alpha(args.j, D, _vector(args.vector), _family(args, D.schedule))
    return report.to_json(), EXIT_OK


def cmd_alpha_sum_cert(args):
    D = _operator(args)
    cert = certify_alpha_sum(_ints(args.L), D, _vector(args.vector), _family(args, D.schedule))
    return cert.to_json(), EXIT_OK if cert.ok else EXIT_AUDIT


def cmd_validate_lacunary(args):
    D = _operator(args)
    M = _ints(args.M) if args.M else D.M
    report = validate_lacunary(M, D, D.schedule)
    return report.to_json(), EXIT_OK if report.ok else EXIT_AUDIT


def cmd_c0_constant(args):
    schedule = _schedule(args.schedule)
    return {
        "C1": c1_enclosure(schedule, args.tail_index).to_json(),
        "C0": operator_bound_constant(schedule, args.tail_index).to_json(),
    }, EXIT_OK


def cmd_build_operator(args):
    schedule = _schedule(args.schedule)
    system = toy_biorthogonal_system(schedule, args.a, args.count, width=args.width)
    cfg = OperatorFactoryConfig.geometric(
        system, count=args.window + 1, ratio=Fraction(args.ratio), window=args.window
    )
    target = FamilySpec.t0_prime(schedule)
    thresholds = [cfg.theta_at(j + 1) for j in range(1, args.window + 1)]
    rng = np.random.default_rng(args.seed)
    log.info(f"Sparsity falsification seed {args.seed}")
    profile = sparsity_profile(
        target, thresholds, samples=args.samples, rng=rng, window=args.window
    )
    operator = build_noncompact_operator(
        cfg, profile, target=target, samples=args.samples, seed=args.seed
    )
    return operator.to_json(), EXIT_OK


def cmd_lift_cert(args):
    data = _load(args.system)
    pairs = [
        (RationalVector.from_json(p["vector"]), tree_from_json(p["functional"]))
        for p in data["pairs"]
    ]
    parent = data.get("parent")
    system = BlockPairSystem(
        pairs=pairs, parent=None if parent is None else tree_from_json(parent)
    )
    james = FamilySpec.jamesified(_schedule(args.schedule)) if args.schedule else None
    g = tree_from_json(_load(args.tree), james)
    f = lift_certificate(g, system, james)
    report = verify_lift(g, f, system)
    payload = {
        "lifted": tree_to_json(f),
        "ok": report.ok,
        "mismatches": [[k, str(a), str(b)] for k, a, b in report.mismatches],
    }
    return payload, EXIT_OK if report.ok else EXIT_AUDIT


# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tslab", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--approx", action="store_true", help="render rationals as decimals")
    parser.add_argument("-o", "--output", help="write the report to this file")
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name, handler, help):
        sub = commands.add_parser(name, help=help)
        sub.set_defaults(handler=handler)
        return sub

    sub = command("norm", cmd_norm, "exact norm with a certificate")
    sub.add_argument("--family", required=True)
    sub.add_argument("--vector", required=True)

    sub = command("jnorm", cmd_jnorm, "Jamesified norm")
    sub.add_argument("--schedule", required=True)
    sub.add_argument("--vector", required=True)
    sub.add_argument("--J", type=int)

    sub = command("eval", cmd_eval, "evaluate a functional tree")
    sub.add_argument("--tree", required=True)
    sub.add_argument("--vector", required=True)
    sub.add_argument("--family")

    sub = command("member", cmd_member, "check membership in a norming set")
    sub.add_argument("--tree", required=True)
    sub.add_argument("--family", required=True)

    sub = command("validate-schedule", cmd_validate_schedule, "check growth conditions")
    sub.add_argument("--schedule")
    sub.add_argument("--paper", action="store_true")
    sub.add_argument("--horizon", type=int, required=True)

    sub = command("audit", cmd_audit, "run a manifest or one lemma chain")
    sub.add_argument("--manifest")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--lemma")
    sub.add_argument("--j", type=int)
    sub.add_argument("--schedule")

    sub = command("sigma-assign", cmd_sigma_assign, "code a sequence of functionals")
    sub.add_argument("--schedule", required=True)
    sub.add_argument("--sequence", required=True)
    sub.add_argument("--registry")

    sub = command("make-dependent", cmd_make_dependent, "build a dependent sequence")
    sub.add_argument("--schedule", required=True)
    sub.add_argument("--z-blocks", required=True)
    sub.add_argument("--w-blocks", required=True)
    sub.add_argument("--j", type=int, required=True)
    sub.add_argument("--length", type=int, default=2)
    sub.add_argument("--pieces", type=int)
    sub.add_argument("--relaxed-threshold", type=int)
    sub.add_argument("--registry")

    sub = command("certify-c0", cmd_certify_c0, "c₀ spreading certificate")
    sub.add_argument("--schedule")
    sub.add_argument("--paper", type=int, metavar="J")
    sub.add_argument("--js")
    sub.add_argument("--symbolic", action="store_true")
    sub.add_argument("--smallest", action="store_true")
    sub.add_argument("--s", type=int)

    sub = command("diag-apply", cmd_diag_apply, "apply a diagonal operator")
    sub.add_argument("--operator", required=True)
    sub.add_argument("--vector", required=True)

    sub = command("alpha", cmd_alpha, "α_j(x) with its certificate")
    sub.add_argument("--operator", required=True)
    sub.add_argument("--vector", required=True)
    sub.add_argument("--j", type=int, required=True)
    sub.add_argument("--family")

    sub = command("alpha-sum-cert", cmd_alpha_sum_cert, "certify Σ_{j∈L} α_j(x) ≤ ‖x‖")
    sub.add_argument("--operator", required=True)
    sub.add_argument("--vector", required=True)
    sub.add_argument("--L", required=True)
    sub.add_argument("--family")

    sub = command("validate-lacunary", cmd_validate_lacunary, "check a lacunary index list")
    sub.add_argument("--operator", required=True)
    sub.add_argument("--M")

    sub = command("c0-constant", cmd_c0_constant, "enclose the operator bound constant")
    sub.add_argument("--schedule", default="paper:3")
    sub.add_argument("--tail-index", type=int, default=3)

    sub = command("build-operator", cmd_build_operator, "bounded non-compact operator")
    sub.add_argument("--schedule", default="coding:12")
    sub.add_argument("--a", type=int, default=9)
    sub.add_argument("--count", type=int, default=81)
    sub.add_argument("--width", type=int, default=1)
    sub.add_argument("--window", type=int, default=5)
    sub.add_argument("--ratio", default="1/2")
    sub.add_argument("--samples", type=int, default=100)
    sub.add_argument("--seed", type=int, default=0)

    sub = command("lift-cert", cmd_lift_cert, "lift a Jamesified certificate")
    sub.add_argument("--tree", required=True)
    sub.add_argument("--system", required=True)
    sub.add_argument("--schedule")

    return parser


def configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s:%(name)s: %(message)s")


def emit(payload, approx: bool = False, output: Optional[str] = None) -> None:
    if approx:
        payload = approximate(payload)
    text = json.dumps(payload, indent=2, default=str)
    if output:
        Path(output).write_text(text + "\n")
    else:
        print(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        payload, code = args.handler(args)
    except UsageError as exc:
        log.error(str(exc))
        return EXIT_USAGE
    except exceptions.AuditFailure as exc:
        payload, code = {"error": type(exc).__name__, "message": str(exc)}, EXIT_AUDIT
    except exceptions.Refusal as exc:
        payload, code = {"error": type(exc).__name__, "message": str(exc)}, EXIT_REFUSAL
    except (ValueError, KeyError, TypeError) as exc:
        payload, code = {"error": type(exc).__name__, "message": str(exc)}, EXIT_PRECONDITION
    if code != EXIT_OK:
        log.info(f"{args.command} finished with exit code {code}")
    emit(payload, approx=args.approx, output=args.output)
    return code


if __name__ == "__main__":
    sys.exit(main())
