import pytest

from dual_level_forecaster.gradcore.suite import CASES, TOLERANCE, run_case, run_suite


@pytest.mark.parametrize("name", sorted(CASES))
def test_case_passes_seed_0(name):
    result = run_case(name, 0)
    assert result.checked > 0
    assert result.max_rel_error < TOLERANCE, result.to_dict()


@pytest.mark.acceptance
@pytest.mark.parametrize("seed", [1, 2])
def test_suite_passes_other_seeds(seed):
    failed = [r.to_dict() for r in run_suite(seeds=(seed,)) if not r.passed]
    assert failed == []


def test_run_case_is_deterministic():
    first, second = run_case("softmax", 1), run_case("softmax", 1)
    assert first.max_rel_error == second.max_rel_error
    assert first.checked == second.checked == 6


def test_run_suite_subset_reports_every_seed():
    results = run_suite(seeds=(0, 1), only=["add", "relu"])
    assert [(r.name, r.seed) for r in results] == [("add", 0), ("relu", 0), ("add", 1), ("relu", 1)]
    assert all(r.passed for r in results)
    assert set(results[0].to_dict()) == {"name", "seed", "max_rel_error", "checked", "skipped", "passed"}


def test_result_fails_above_tolerance():
    result = run_case("exp", 0, tolerance=0.0)
    assert not result.passed
