# tests/test_validation.py
# -*- coding: utf-8 -*-
import pytest

from lib.validation import FAST_CHECKS, FULL_CHECKS, SUITES, run_suite
from state_inference import tampered_bns_table


def test_suites_are_nested():
    fast = [name for name, _ in FAST_CHECKS]
    full = [name for name, _ in FULL_CHECKS]
    assert full[:len(fast)] == fast
    assert set(SUITES) == {"fast", "full"}
    assert len(set(full)) == len(full)


@pytest.mark.parametrize("name", ["bns_table", "brillouin", "bns_mep_structure", "work_ordering"])
def test_cheap_checks_pass(cfg, name):
    (result,) = run_suite("fast", cfg, only=[name])
    assert result.name == name
    assert result.passed, result.detail
    assert result.seconds >= 0.0


def test_tampered_table_fails_dependent_checks(cfg):
    results = run_suite("fast", cfg, bns_table=tampered_bns_table(), only=["bns_table", "mep_solvers"])
    assert [r.passed for r in results] == [False, False]
    assert "ValueError" in results[1].detail


def test_unknown_suite_and_check(cfg):
    with pytest.raises(ValueError):
        run_suite("medium", cfg)
    with pytest.raises(ValueError):
        run_suite("fast", cfg, only=["bns_oracle"])


@pytest.mark.slow
def test_fast_suite_passes(cfg):
    results = run_suite("fast", cfg)
    failed = [(r.name, r.detail) for r in results if not r.passed]
    assert not failed


@pytest.mark.slow
def test_entropy_dominance_compares_enough_samples(cfg):
    (result,) = run_suite("full", cfg, only=["mep_entropy_dominance"])
    assert result.passed, result.detail
    assert "状態あたり最少" in result.detail
