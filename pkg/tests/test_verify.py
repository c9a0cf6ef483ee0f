import numpy as np
import pytest

from mcr2 import rates, verify


@pytest.mark.parametrize("suite", ["lemmas", "gradients", "metrics"])
def test_suites_pass_on_small_budgets(suite):
    results = verify.run_suite(suite, 10, seed=11)
    assert results and all(r.passed for r in results), [r.to_dict() for r in results if not r.passed]


def test_theorem_suite_small_budget():
    results = verify.run_suite("theorem", 3, seed=2)
    assert all(r.passed for r in results)


def test_unknown_suite():
    with pytest.raises(KeyError):
        verify.run_suite("lemma", 1, 0)


def test_result_serializes():
    d = verify.sweep_nonnegativity(3, 0).to_dict()
    assert d["passed"] and d["trials"] == 3 and "witness" in d


@pytest.fixture
def flipped_reduction(monkeypatch):
    """A broken rate module whose reduction is Rc - R instead of R - Rc."""
    honest = rates.rate_reduction

    def broken(Z, pi, params):
        rep = honest(Z, pi, params)
        rep.reduction = -rep.reduction
        return rep

    monkeypatch.setattr(rates, "rate_reduction", broken)


def test_mutation_is_caught(flipped_reduction):
    res = verify.sweep_nonnegativity(50, seed=0)
    assert not res.passed
    assert res.witness["DeltaR"] < 0


def test_candidate_family_check():
    assert verify.in_candidate_family(np.sqrt([2.0, 2.0, 2.0]))
    assert verify.in_candidate_family(np.sqrt([3.0, 3.0, 1.0, 0.0]))
    assert not verify.in_candidate_family(np.sqrt([3.0, 2.0, 1.0]))
