import json
import logging
from unittest import mock

import pytest

from tsirelsonlab import cli
from tsirelsonlab.cli import (
    EXIT_AUDIT,
    EXIT_OK,
    EXIT_PRECONDITION,
    EXIT_REFUSAL,
    EXIT_USAGE,
    approximate,
    main,
)
from tsirelsonlab.constructions.coding import coding_schedule
from tsirelsonlab.core import Interval
from tsirelsonlab.diagonal.operators import DiagonalOperator


@pytest.fixture()
def family_file(tmp_path):
    path = tmp_path / "family.json"
    path.write_text(json.dumps({"catalog": "mixed", "schedule": {"m": ["2"], "n": ["3"]}}))
    return path


@pytest.fixture()
def vector_file(tmp_path):
    path = tmp_path / "vector.json"
    path.write_text(json.dumps([[1, "1"], [2, "1"], [3, "1"]]))
    return path


def run(argv, tmp_path):
    """Run the CLI and return its exit code and the JSON report."""
    output = tmp_path / "report.json"
    code = main(["-o", str(output)] + argv)
    return code, json.loads(output.read_text())


def test_norm(tmp_path, family_file, vector_file):
    code, report = run(["norm", "--family", str(family_file), "--vector", str(vector_file)], tmp_path)
    assert code == EXIT_OK
    assert report["value"] == "3/2"
    assert report["verified"] is True


def test_norm_prints_to_stdout(capsys, family_file, vector_file):
    code = main(["--approx", "norm", "--family", str(family_file), "--vector", str(vector_file)])
    assert code == EXIT_OK
    assert json.loads(capsys.readouterr().out)["value"] == "1.5"


def test_unreadable_input(tmp_path, vector_file):
    missing = tmp_path / "missing.json"
    code = main(["norm", "--family", str(missing), "--vector", str(vector_file)])
    assert code == EXIT_USAGE
    assert main(["audit", "--manifest", str(tmp_path / "missing.yaml")]) == EXIT_USAGE
    broken = tmp_path / "broken.yaml"
    broken.write_text("checks: [\n")
    assert main(["audit", "--manifest", str(broken)]) == EXIT_USAGE
    listing = tmp_path / "listing.yaml"
    listing.write_text("- 1\n- 2\n")
    assert main(["audit", "--manifest", str(listing)]) == EXIT_USAGE


def test_bad_command_line():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_failed_schedule_audit(tmp_path):
    code, report = run(["validate-schedule", "--schedule", "coding:6", "--horizon", "3"], tmp_path)
    assert code == EXIT_AUDIT
    assert report["all_hold"] is False


def test_lemma_chain_refused_on_toy_schedule(tmp_path):
    argv = ["audit", "--lemma", "lemma-4/m_j", "--j", "3", "--schedule", "coding:6"]
    code, report = run(argv, tmp_path)
    assert code == EXIT_REFUSAL
    assert report["error"] == "Refusal"


def test_audit_needs_arguments(tmp_path):
    assert main(["audit"]) == EXIT_USAGE


def test_c0_constant(tmp_path):
    code, report = run(["c0-constant", "--tail-index", "2"], tmp_path)
    assert code == EXIT_OK
    assert report["C0"]["lo"] == "67/16"
    assert report["C1"]["width"] == "1/8192"


def test_c0_constant_exit_codes(tmp_path):
    assert main(["c0-constant", "--schedule", "coding:4"]) == EXIT_REFUSAL
    assert main(["c0-constant", "--tail-index", "-1"]) == EXIT_PRECONDITION


def test_sigma_assign_keeps_registry(tmp_path):
    sequence = tmp_path / "sequence.json"
    sequence.write_text(json.dumps([{"coords": [[1, "1/2"]]}]))
    registry = tmp_path / "registry.json"
    argv = ["sigma-assign", "--schedule", "coding:16", "--sequence", str(sequence)]
    argv += ["--registry", str(registry)]
    code, report = run(argv, tmp_path)
    assert code == EXIT_OK
    assert report["sigma"] == 4
    assert registry.is_file()
    code, report = run(argv, tmp_path)
    assert report["sigma"] == 4
    assert len(report["registry"]["entries"]) == 1


def test_diag_apply(tmp_path, vector_file):
    D = DiagonalOperator({2: [Interval(1, 1), Interval(3, 3)]}, coding_schedule(4))
    operator = tmp_path / "operator.json"
    operator.write_text(json.dumps(D.to_json()))
    code, report = run(["diag-apply", "--operator", str(operator), "--vector", str(vector_file)], tmp_path)
    assert code == EXIT_OK
    assert report["image"] == {"coords": [[1, "1/4"], [3, "1/4"]]}


def test_smallest_spreading_certificate(tmp_path):
    code, _ = run(["certify-c0", "--smallest"], tmp_path)
    assert code == EXIT_OK
    assert main(["certify-c0", "--js", "2,3"]) == EXIT_USAGE
    assert main(["certify-c0", "--js", "2,x", "--paper", "4"]) == EXIT_USAGE


def test_approximate():
    data = {"a": "1/4", "b": ["3", "-1/3"], "c": "name", "d": 2}
    assert approximate(data) == {"a": "0.25", "b": ["3", "-0.333333333333"], "c": "name", "d": 2}


@pytest.mark.parametrize(
    "verbosity, level",
    [(0, logging.WARNING), (1, logging.INFO), (2, logging.DEBUG)],
)
def test_configure_logging(verbosity, level):
    with mock.patch.object(cli.logging, "basicConfig") as basic_config:
        cli.configure_logging(verbosity)
    assert basic_config.call_args.kwargs["level"] == level
