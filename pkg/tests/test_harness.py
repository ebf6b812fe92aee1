import json
import math

import numpy as np
import pytest

from thinlimit.geometry import Domain, Profile
from thinlimit.harness import SweepTemplate, oracle_suite, ordered_source_pair, run_sweep
from thinlimit.iteration import SolverParams
from thinlimit.limit_solver import solve_limit
from thinlimit.operators import ConstantTerm, CosineTerm, Functional, Operator, Source
from thinlimit.thin_solver import solve_thin

UNIT = Domain(0.0, 1.0)
BUMP = Profile.cos_bump(2.0, 0.5, 1.0, UNIT)


def _template(op=Operator("laplacian"), source=None, params=SolverParams()):
    source = source or Source(CosineTerm(1.0), ConstantTerm(1.0))
    return SweepTemplate(UNIT, BUMP, Functional(op, 1.0, source), params)


def test_constant_sweep_is_exact():
    result = run_sweep(_template(Operator("pucci_plus", 1.0, 2.0), Source(ConstantTerm(2.5))), [0.1, 0.3], 21)
    assert result.all_converged
    for rec in result.records:
        assert rec.sup_error <= 10 * rec.thin_report.tol


def test_records_sorted_by_decreasing_epsilon():
    result = run_sweep(_template(), [0.05, 0.4, 0.2], 21)
    assert [r.epsilon for r in result.records] == [0.4, 0.2, 0.05]
    assert all(r.nx == 21 for r in result.records)
    assert [r.ns for r in result.records] == [max(9, round(21 * e * 2.5) + 9) for e in (0.4, 0.2, 0.05)]


def test_sup_error_matches_direct_computation():
    tpl = _template()
    result = run_sweep(tpl, [0.2], 31)
    u, _ = solve_thin(tpl.scenario(0.2, 31))
    w, _ = solve_limit(tpl.limit_scenario(31))
    assert result.records[0].sup_error == float(np.abs(u.values - w[None, :]).max())


def test_sweep_rejects_bad_epsilons():
    with pytest.raises(ValueError):
        run_sweep(_template(), [], 21)
    with pytest.raises(ValueError):
        run_sweep(_template(), [0.1, 0.1], 21)
    with pytest.raises(ValueError):
        run_sweep(_template(), [-0.1], 21)
    with pytest.raises(ValueError):
        run_sweep(_template(), [0.9], 21)


def test_sweep_reproducible_and_jobs_independent():
    tpl = _template(Operator("pucci_minus", 1.0, 2.0))
    a = run_sweep(tpl, [0.3, 0.1], 21)
    b = run_sweep(tpl, [0.3, 0.1], 21)
    c = run_sweep(tpl, [0.1, 0.3], 21, jobs=2)
    assert a.to_json() == b.to_json() == c.to_json()
    payload = json.loads(a.to_json())
    assert [r["epsilon"] for r in payload["records"]] == [0.3, 0.1]


def test_failed_record_is_flagged_and_sweep_continues():
    tpl = _template(params=SolverParams(preconditioner="diagonal"))
    result = run_sweep(tpl, [0.3, 0.2], 21)
    assert len(result.records) == 2
    assert not result.all_converged
    assert all(math.isnan(r.sup_error) for r in result.records)


def test_sweep_metrics():
    result = run_sweep(_template(), [0.4, 0.2, 0.1], 41)
    assert result.strictly_decreasing()
    assert result.ratio() == pytest.approx(result.errors[-1] / result.errors[0])
    rates = result.observed_rates()
    assert len(rates) == 2 and all(r > 0 for r in rates)


def test_ordered_source_pair_is_ordered():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 1, 201)
    for _ in range(20):
        lo, hi = ordered_source_pair(rng)
        for y in (0.0, 0.3, 1.0):
            assert np.all(lo(x, y) <= hi(x, y))


def test_oracle_suite_passes():
    report = oracle_suite()
    assert report.passed, report.table()
    names = [c.name for c in report.checks]
    for key in ("chain_rule", "constant", "bound", "mms", "comparison"):
        assert any(key in n for n in names), key
    assert json.loads(json.dumps(report.to_dict()))["passed"] is True


def test_oracle_suite_detects_chain_rule_mutation():
    report = oracle_suite(mutate="chain_rule")
    assert not report.passed
    failed = [c.name for c in report.checks if not c.passed]
    assert failed and all("chain_rule" in n for n in failed)


def test_oracle_suite_loose_tolerance():
    assert oracle_suite(tol=1e-3).passed


def test_oracle_suite_rejects_unknown_mutation():
    with pytest.raises(ValueError):
        oracle_suite(mutate="nonsense")
