import pytest

from symtele.checks import CHECKS, CheckResult, format_report, run_checks

INVARIANCE = {"testfn rotation invariance", "quadratic O(n) invariance",
              "MLP GL invariance (exact)", "MLP GL identity/composition",
              "quadratic level set is one orbit"}


@pytest.fixture(scope="module")
def clean():
    return run_checks()


@pytest.fixture(scope="module")
def faulty():
    return run_checks(fault=True)


def test_every_check_passes(clean):
    assert len(clean) >= len(CHECKS)
    failed = [r.line() for r in clean if not r.passed]
    assert not failed, "\n".join(failed)


def test_checks_pass_for_another_seed():
    assert all(r.passed for r in run_checks(seed=7))


def test_fault_is_caught_by_invariance_and_orbit_checks(faulty):
    failed = {r.name for r in faulty if not r.passed}
    assert INVARIANCE <= failed


def test_fault_leaves_action_free_checks_alone(faulty):
    by_name = {r.name: r.passed for r in faulty}
    assert by_name["Penrose identities"]
    assert by_name["Lipschitz sufficient condition"]


def test_report_lines_name_measurement_and_tolerance(clean):
    text = format_report(clean, elapsed=1.25)
    lines = text.splitlines()
    assert len(lines) == len(clean) + 1
    for r, line in zip(clean, lines):
        assert line.startswith("PASS") and r.name in line and "tol=" in line
    assert lines[-1] == f"{len(clean)}/{len(clean)} checks passed in 1.2s"


def test_result_line_format():
    line = CheckResult("demo", False, 2e-3, 1e-3, "note").line()
    assert line.startswith("FAIL  demo")
    assert "measured=2.000e-03" in line and "tol=1.0e-03" in line and line.endswith("(note)")
