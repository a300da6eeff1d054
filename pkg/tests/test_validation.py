import pytest

from adaptheston.validation import SUITES, run_validation


@pytest.mark.parametrize("suite", sorted(SUITES))
def test_suite_passes(suite):
    checks = run_validation(suite, seed=20240601)
    assert checks and all(c.suite == suite for c in checks)
    failed = [c.row() for c in checks if not c.passed]
    assert not failed, failed


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_validation("nope")
