"""Epsilon sweeps, the uniform convergence metric, and the built-in oracle suite."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import Domain, Profile, ThinDomain, chain_rule_bundle, profile_eval
from .grids import Field, ReferenceGrid, fd_derivs, jet_from_derivs
from .iteration import DivergenceError, SolveReport, SolverParams
from .limit_solver import LimitScenario, solve_limit
from .operators import (
    CallableTerm,
    ConstantTerm,
    CosineTerm,
    Functional,
    Operator,
    PolynomialTerm,
    Source,
    build_limit_G,
)
from .thin_solver import ThinScenario, residual, solve_thin

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepTemplate:
    """Everything of a thin scenario except epsilon and the grid."""

    domain: Domain
    profile: Profile
    functional: Functional
    params: SolverParams = SolverParams()

    def thin(self, epsilon: float) -> ThinDomain:
        return ThinDomain(self.domain, self.profile, epsilon)

    def scenario(self, epsilon: float, nx: int) -> ThinScenario:
        return ThinScenario.with_default_grid(self.thin(epsilon), self.functional, nx)

    def limit_scenario(self, nx: int) -> LimitScenario:
        return LimitScenario(self.domain, build_limit_G(self.functional, self.profile), nx)


def _failed_report(exc: DivergenceError) -> SolveReport:
    return SolveReport(exc.iteration, float("inf"), float("inf"), False, float("nan"))


@dataclass(frozen=True)
class SweepRecord:
    epsilon: float
    nx: int
    ns: int
    sup_error: float
    thin_report: SolveReport
    limit_report: SolveReport

    @property
    def converged(self) -> bool:
        return self.thin_report.converged and self.limit_report.converged

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "nx": self.nx,
            "ns": self.ns,
            "sup_error": self.sup_error,
            "converged": self.converged,
            "thin_report": self.thin_report.to_dict(),
            "limit_report": self.limit_report.to_dict(),
        }


@dataclass(frozen=True)
class SweepResult:
    records: tuple[SweepRecord, ...]

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.sup_error for r in self.records])

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.records)

    def strictly_decreasing(self) -> bool:
        e = self.errors
        return bool(np.all(np.diff(e) < 0.0))

    def ratio(self) -> float:
        """Final over initial sup error."""
        return float(self.errors[-1] / self.errors[0])

    def observed_rates(self) -> list[float]:
        """Log-ratio rates in epsilon between consecutive records (reported only)."""
        eps = np.array([r.epsilon for r in self.records])
        e = self.errors
        return [float(v) for v in np.log(e[:-1] / e[1:]) / np.log(eps[:-1] / eps[1:])]

    def to_json(self) -> str:
        return json.dumps({"records": [r.to_dict() for r in self.records]}, sort_keys=True, indent=2)


def _sweep_one(template: SweepTemplate, epsilon: float, nx: int, w: np.ndarray, limit_report: SolveReport):
    scn = template.scenario(epsilon, nx)
    try:
        u, report = solve_thin(scn, template.params)
        err = float(np.max(np.abs(u.values - w[None, :])))
    except DivergenceError as exc:
        log.warning("thin solve diverged at epsilon=%g: %s", epsilon, exc)
        report, err = _failed_report(exc), float("nan")
    return SweepRecord(epsilon, nx, scn.grid.ns, err, report, limit_report)


def run_sweep(template: SweepTemplate, epsilons, nx: int, jobs: int = 1) -> SweepResult:
    """Solve the thin problems for each epsilon and compare with the limit solution.

    The limit problem shares the thin grid's x-nodes, so the sup error is the
    max over all thin nodes of ``|u_eps(x_i, y_j) - w(x_i)|``.
    """
    epsilons = [float(e) for e in epsilons]
    if not epsilons or any(e <= 0.0 for e in epsilons):
        raise ValueError("epsilons must be a non-empty list of positive numbers")
    if len(set(epsilons)) != len(epsilons):
        raise ValueError("epsilons must be distinct")
    epsilons = sorted(epsilons, reverse=True)
    for e in epsilons:
        template.thin(e)  # validates range before any solve

    try:
        w, limit_report = solve_limit(template.limit_scenario(nx), template.params)
    except DivergenceError as exc:
        log.warning("limit solve diverged: %s", exc)
        w, limit_report = np.full(nx, np.nan), _failed_report(exc)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_one, template, e, nx, w, limit_report) for e in epsilons]
            records = [f.result() for f in futures]
    else:
        records = [_sweep_one(template, e, nx, w, limit_report) for e in epsilons]
    return SweepResult(tuple(records))


# ---------------------------------------------------------------------------
# oracle suite


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""


@dataclass
class OracleReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self) -> str:
        lines = [f"{'check':<34} {'result':<6} {'measured':>12} {'threshold':>12}"]
        for c in self.checks:
            verdict = "PASS" if c.passed else "FAIL"
            lines.append(f"{c.name:<34} {verdict:<6} {c.measured:>12.4e} {c.threshold:>12.4e}  {c.detail}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}


MUTATIONS = ("chain_rule",)

_UNIT = Domain(0.0, 1.0)
_BUMP = Profile.cos_bump(2.0, 0.5, 1.0, _UNIT)
_FLAT = Profile.constant(1.0, _UNIT)


def _fit_order(hs, errors) -> float:
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def _check_chain_rule(mutate: str | None) -> CheckResult:
    """Reconstructed physical jets of composed polynomials vs analytic derivatives."""
    thin = ThinDomain(_UNIT, _BUMP, 0.2)
    # u(x, y) = x^2 y + x y^2 + y^3 ; gradient and Hessian in closed form
    def u(x, y):
        return x**2 * y + x * y**2 + y**3

    worst = []
    for nx in (21, 41, 81):
        grid = ReferenceGrid(nx, nx, _UNIT)
        field_ = Field.from_function(grid, lambda X, S: u(X, thin.physical_y(X, S)))
        err = 0.0
        for j in range(1, grid.ns - 1, max(1, grid.ns // 7)):
            for i in range(1, grid.nx - 1, max(1, grid.nx // 7)):
                x, s = grid.node(i, j)
                y = float(thin.physical_y(x, s))
                B = chain_rule_bundle(thin, x, s)
                if mutate == "chain_rule":
                    B = replace(B, s_xx=B.s_xx * 1.05 + 0.05)
                jet = jet_from_derivs(fd_derivs(field_, i, j), B)
                exact = np.array([2 * x * y + y**2, x**2 + 2 * x * y + 3 * y**2, 2 * y, 2 * x + 2 * y, 2 * x + 6 * y])
                got = np.array([jet.p[0], jet.p[1], jet.X.xx, jet.X.xy, jet.X.yy])
                err = max(err, float(np.max(np.abs(got - exact))))
        worst.append(err)
    order = _fit_order([1 / 20, 1 / 40, 1 / 80], worst)
    return CheckResult("chain_rule_reconstruction_order", order >= 1.9, order, 1.9, f"errors={worst}")


def _check_constant(params: SolverParams) -> list[CheckResult]:
    out = []
    for op in (Operator("laplacian"), Operator("pucci_plus", 1.0, 2.0), Operator("second_yy")):
        F = Functional(op, 1.0, Source(ConstantTerm(2.0)))
        template = SweepTemplate(_UNIT, _BUMP, F, params)
        sweep = run_sweep(template, [0.4, 0.1], 21)
        tol = sweep.records[0].thin_report.tol
        err = float(np.max(sweep.errors))
        w, _ = solve_limit(template.limit_scenario(21), params)
        err = max(err, float(np.max(np.abs(w - 2.0))))
        out.append(CheckResult(f"constant_solution[{op.kind}]", sweep.all_converged and err <= 10 * tol, err, 10 * tol))
    return out


def _check_bound(params: SolverParams) -> list[CheckResult]:
    out = []
    sources = {"poly": Source(PolynomialTerm((1.0, 0.0, 1.0))), "cos+y": Source(CosineTerm(1.0), ConstantTerm(1.0))}
    for op in (Operator("laplacian"), Operator("pucci_plus", 1.0, 2.0)):
        for label, src in sources.items():
            scn = ThinScenario.with_default_grid(ThinDomain(_UNIT, _BUMP, 0.1), Functional(op, 1.0, src), 41)
            _, rep = solve_thin(scn, params)
            bound = scn.C0 + 10 * rep.tol
            out.append(CheckResult(f"apriori_bound[{op.kind},{label}]", rep.converged and rep.sup_norm <= bound, rep.sup_norm, bound))
    return out


def _manufactured_limit(kind: str):
    w_star = lambda x: np.cos(np.pi * x)
    dw_star = lambda x: -np.pi * np.sin(np.pi * x)
    if kind == "laplacian":
        return _FLAT, Functional(Operator("laplacian"), 1.0, Source(CosineTerm(np.pi**2 + 1.0))), w_star

    def f(x):
        g, gp, _ = profile_eval(_BUMP, x)
        return -gp / g * dw_star(x) + w_star(x)

    return _BUMP, Functional(Operator("second_yy"), 1.0, Source(CallableTerm(f, "mms_first_order"))), w_star


def _check_mms(params: SolverParams) -> list[CheckResult]:
    out = []
    grids = (41, 81, 161)
    hs = [1.0 / (n - 1) for n in grids]
    profile, F, w_star = _manufactured_limit("laplacian")
    errs = []
    for nx in grids:
        scn = ThinScenario.with_default_grid(ThinDomain(_UNIT, profile, 0.2), F, nx)
        u, _ = solve_thin(scn, params)
        errs.append(float(np.max(np.abs(u.values - w_star(scn.grid.x)[None, :]))))
    order = _fit_order(hs, errs)
    out.append(CheckResult("mms_thin_laplacian_order", order >= 1.9, order, 1.9))
    for kind, need in (("laplacian", 1.9), ("first_order", 0.9)):
        profile, F, w_star = _manufactured_limit(kind)
        errs = []
        for nx in grids:
            scn = LimitScenario(_UNIT, build_limit_G(F, profile), nx)
            w, _ = solve_limit(scn, params)
            errs.append(float(np.max(np.abs(w - w_star(scn.x)))))
        order = _fit_order(hs, errs)
        out.append(CheckResult(f"mms_limit_{kind}_order", order >= need, order, need))
    return out


def ordered_source_pair(rng: np.random.Generator) -> tuple[Source, Source]:
    """Random polynomial sources with ``f1 <= f2`` on ``[0, 1] x [0, inf)``.

    The gap is ``b0 + b2 (x - c)^2 + y * b3`` with nonnegative ``b0, b2, b3``.
    """
    coeffs = rng.uniform(-1.0, 1.0, size=4)
    slope = rng.uniform(-1.0, 1.0)
    b0, b2, b3 = rng.uniform(0.0, 0.3), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)
    c = rng.uniform(0.0, 1.0)
    gap = np.array([b0 + b2 * c * c, -2.0 * b2 * c, b2, 0.0])
    f1 = Source(PolynomialTerm(tuple(coeffs)), ConstantTerm(slope))
    f2 = Source(PolynomialTerm(tuple(coeffs + gap)), ConstantTerm(slope + b3))
    return f1, f2


def _check_comparison(params: SolverParams, seed: int = 7) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for op in (Operator("laplacian"), Operator("second_yy")):
        worst_thin, worst_limit, tol = -np.inf, -np.inf, 0.0
        for _ in range(3):
            f1, f2 = ordered_source_pair(rng)
            sols, lims = [], []
            for src in (f1, f2):
                template = SweepTemplate(_UNIT, _BUMP, Functional(op, 1.0, src), params)
                u, rep = solve_thin(template.scenario(0.2, 21), params)
                w, _ = solve_limit(template.limit_scenario(21), params)
                sols.append(u.values)
                lims.append(w)
                tol = max(tol, rep.tol)
            worst_thin = max(worst_thin, float(np.max(sols[0] - sols[1])))
            worst_limit = max(worst_limit, float(np.max(lims[0] - lims[1])))
        out.append(CheckResult(f"comparison_thin[{op.kind}]", worst_thin <= 10 * tol, worst_thin, 10 * tol))
        out.append(CheckResult(f"comparison_limit[{op.kind}]", worst_limit <= 10 * tol, worst_limit, 10 * tol))
    return out


def _check_residual_constant() -> CheckResult:
    F = Functional(Operator("pucci_minus", 1.0, 3.0), 2.0, Source(ConstantTerm(3.0)))
    scn = ThinScenario.with_default_grid(ThinDomain(_UNIT, _BUMP, 0.3), F, 17)
    r = residual(scn, Field(scn.grid, np.full(scn.grid.size, 1.5)))
    val = float(np.max(np.abs(r.values)))
    return CheckResult("residual_of_constant_solution", val <= 1e-12, val, 1e-12)


def oracle_suite(tol: float | None = None, mutate: str | None = None) -> OracleReport:
    """Run the built-in verification checks.

    ``tol`` overrides the solver tolerance; ``mutate`` injects a known defect
    (one of ``MUTATIONS``) so the sensitivity of the suite can be demonstrated.
    """
    if mutate is not None and mutate not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutate!r}; choose from {MUTATIONS}")
    params = SolverParams(tol=tol)
    report = OracleReport()
    steps: list[Callable[[], CheckResult | list[CheckResult]]] = [
        lambda: _check_chain_rule(mutate),
        _check_residual_constant,
        lambda: _check_constant(params),
        lambda: _check_bound(params),
        lambda: _check_mms(params),
        lambda: _check_comparison(params),
    ]
    for step in steps:
        t0 = time.perf_counter()
        result = step()
        report.checks.extend(result if isinstance(result, list) else [result])
        log.info("oracle step finished in %.2fs", time.perf_counter() - t0)
    return report
