"""JSON scenario files.

Example::

    {
      "domain": {"a": 0.0, "b": 1.0},
      "profile": {"kind": "cos_bump", "params": {"c0": 2.0, "c1": 0.5, "k": 1}},
      "operator": {"kind": "pucci_plus", "lambda": 1.0, "Lambda": 2.0},
      "alpha": 1.0,
      "source": {"f0": {"kind": "cosine", "params": {"amplitude": 1.0, "k": 1}},
                 "f1": {"kind": "constant", "params": {"value": 1.0}}},
      "epsilons": [0.4, 0.2, 0.1, 0.05],
      "grid": {"nx": 161},
      "solver": {"tau": 0.9, "tol": 1e-9, "max_iters": 1000}
    }

Unknown keys are rejected and every error names the offending key path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .geometry import Domain, Profile, ThinDomain
from .harness import SweepTemplate
from .iteration import SolverParams
from .limit_solver import LimitScenario
from .operators import (
    OPERATOR_NAMES,
    ConstantTerm,
    CosineTerm,
    Functional,
    Operator,
    PolynomialTerm,
    Source,
    build_limit_G,
)
from .thin_solver import ThinScenario

TOP_KEYS = {"domain", "profile", "operator", "alpha", "source", "epsilon", "epsilons", "grid", "solver"}


class ScenarioError(ValueError):
    """Invalid scenario file; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _mapping(obj: Any, key: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(key, f"expected an object, got {type(obj).__name__}")
    for k in obj:
        if k not in allowed:
            raise ScenarioError(f"{key}.{k}" if key else k, "unknown key")
    for k in sorted(required):
        if k not in obj:
            raise ScenarioError(f"{key}.{k}" if key else k, "missing required key")
    return obj


def _number(obj: Any, key: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)) or not math.isfinite(obj):
        raise ScenarioError(key, f"expected a finite number, got {obj!r}")
    return float(obj)


def _integer(obj: Any, key: str, minimum: int) -> int:
    if isinstance(obj, bool) or not isinstance(obj, int):
        raise ScenarioError(key, f"expected an integer, got {obj!r}")
    if obj < minimum:
        raise ScenarioError(key, f"must be >= {minimum}, got {obj}")
    return obj


def _kind(obj: dict, key: str, choices) -> str:
    kind = obj["kind"]
    if kind not in choices:
        raise ScenarioError(f"{key}.kind", f"unknown kind {kind!r} (expected one of {', '.join(choices)})")
    return kind


def _params(obj: dict, key: str, names: set[str], required: set[str]) -> dict:
    return _mapping(obj.get("params", {}), f"{key}.params", names, required)


_PROFILE_PARAMS = {"constant": ({"c"}, {"c"}), "cos_bump": ({"c0", "c1", "k"}, {"c0", "c1", "k"})}
_TERM_PARAMS = {
    "constant": ({"value"}, {"value"}),
    "polynomial": ({"coeffs"}, {"coeffs"}),
    "cosine": ({"amplitude", "k", "x0"}, {"amplitude"}),
}


def parse_domain(obj: Any) -> Domain:
    d = _mapping(obj, "domain", {"a", "b"}, {"a", "b"})
    try:
        return Domain(_number(d["a"], "domain.a"), _number(d["b"], "domain.b"))
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError("domain", str(exc)) from None


def parse_profile(obj: Any, domain: Domain) -> Profile:
    p = _mapping(obj, "profile", {"kind", "params"}, {"kind", "params"})
    kind = _kind(p, "profile", tuple(_PROFILE_PARAMS))
    names, required = _PROFILE_PARAMS[kind]
    params = {k: _number(v, f"profile.params.{k}") for k, v in _params(p, "profile", names, required).items()}
    try:
        if kind == "constant":
            return Profile.constant(params["c"], domain)
        return Profile.cos_bump(params["c0"], params["c1"], params["k"], domain)
    except ValueError as exc:
        raise ScenarioError("profile.params", str(exc)) from None


def parse_operator(obj: Any) -> Operator:
    o = _mapping(obj, "operator", {"kind", "lambda", "Lambda"}, {"kind"})
    kind = _kind(o, "operator", OPERATOR_NAMES)
    if kind.startswith("pucci"):
        _mapping(o, "operator", {"kind", "lambda", "Lambda"}, {"lambda", "Lambda"})
        lam, Lam = _number(o["lambda"], "operator.lambda"), _number(o["Lambda"], "operator.Lambda")
        if not 0.0 < lam:
            raise ScenarioError("operator.lambda", f"must be positive, got {lam}")
        if not lam <= Lam:
            raise ScenarioError("operator.Lambda", f"must be >= lambda, got {Lam} < {lam}")
        return Operator(kind, lam, Lam)
    for k in ("lambda", "Lambda"):
        if k in o:
            raise ScenarioError(f"operator.{k}", f"not accepted by operator kind {kind!r}")
    return Operator(kind)


def parse_term(obj: Any, key: str):
    t = _mapping(obj, key, {"kind", "params"}, {"kind", "params"})
    kind = _kind(t, key, tuple(_TERM_PARAMS))
    names, required = _TERM_PARAMS[kind]
    params = _params(t, key, names, required)
    if kind == "polynomial":
        coeffs = params["coeffs"]
        if not isinstance(coeffs, list) or not 1 <= len(coeffs) <= 4:
            raise ScenarioError(f"{key}.params.coeffs", "expected a list of 1 to 4 numbers")
        return PolynomialTerm(tuple(_number(c, f"{key}.params.coeffs[{i}]") for i, c in enumerate(coeffs)))
    values = {k: _number(v, f"{key}.params.{k}") for k, v in params.items()}
    if kind == "constant":
        return ConstantTerm(values["value"])
    return CosineTerm(values["amplitude"], values.get("k", 1.0), values.get("x0", 0.0))


def parse_source(obj: Any) -> Source:
    s = _mapping(obj, "source", {"f0", "f1"}, {"f0"})
    f0 = parse_term(s["f0"], "source.f0")
    f1 = parse_term(s["f1"], "source.f1") if "f1" in s else ConstantTerm(0.0)
    return Source(f0, f1)


def parse_solver(obj: Any) -> SolverParams:
    s = _mapping(obj, "solver", {"tau", "tol", "max_iters", "preconditioner"})
    kwargs: dict[str, Any] = {}
    if "tau" in s:
        kwargs["tau"] = _number(s["tau"], "solver.tau")
        if kwargs["tau"] <= 0.0:
            raise ScenarioError("solver.tau", "must be positive")
    if "tol" in s:
        kwargs["tol"] = _number(s["tol"], "solver.tol")
        if kwargs["tol"] <= 0.0:
            raise ScenarioError("solver.tol", "must be positive")
    if "max_iters" in s:
        kwargs["max_iters"] = _integer(s["max_iters"], "solver.max_iters", 1)
    if "preconditioner" in s:
        if s["preconditioner"] not in ("newton", "diagonal"):
            raise ScenarioError("solver.preconditioner", f"unknown preconditioner {s['preconditioner']!r}")
        kwargs["preconditioner"] = s["preconditioner"]
    return SolverParams(**kwargs)


def _epsilon(obj: Any, key: str, domain: Domain, profile: Profile) -> float:
    eps = _number(obj, key)
    try:
        ThinDomain(domain, profile, eps)
    except ValueError as exc:
        raise ScenarioError(key, str(exc)) from None
    return eps


@dataclass(frozen=True)
class Scenario:
    domain: Domain
    profile: Profile
    functional: Functional
    nx: int
    params: SolverParams
    epsilon: float | None = None
    epsilons: tuple[float, ...] | None = None

    def template(self) -> SweepTemplate:
        return SweepTemplate(self.domain, self.profile, self.functional, self.params)

    def thin_scenario(self) -> ThinScenario:
        if self.epsilon is None:
            raise ScenarioError("epsilon", "missing required key")
        return self.template().scenario(self.epsilon, self.nx)

    def limit_scenario(self) -> LimitScenario:
        return LimitScenario(self.domain, build_limit_G(self.functional, self.profile), self.nx)


def parse_scenario(obj: Any) -> Scenario:
    top = _mapping(obj, "", TOP_KEYS, {"domain", "profile", "operator", "alpha", "source", "grid"})
    domain = parse_domain(top["domain"])
    profile = parse_profile(top["profile"], domain)
    op = parse_operator(top["operator"])
    alpha = _number(top["alpha"], "alpha")
    if alpha <= 0.0:
        raise ScenarioError("alpha", f"must be positive, got {alpha}")
    functional = Functional(op, alpha, parse_source(top["source"]))
    grid = _mapping(top["grid"], "grid", {"nx"}, {"nx"})
    nx = _integer(grid["nx"], "grid.nx", 4)
    params = parse_solver(top.get("solver", {}))

    epsilon = epsilons = None
    if "epsilon" in top:
        epsilon = _epsilon(top["epsilon"], "epsilon", domain, profile)
    if "epsilons" in top:
        raw = top["epsilons"]
        if not isinstance(raw, list) or not raw:
            raise ScenarioError("epsilons", "expected a non-empty list of numbers")
        epsilons = tuple(_epsilon(e, f"epsilons[{i}]", domain, profile) for i, e in enumerate(raw))
        if len(set(epsilons)) != len(epsilons):
            raise ScenarioError("epsilons", "values must be distinct")
    return Scenario(domain, profile, functional, nx, params, epsilon, epsilons)


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("config", f"invalid JSON: {exc}") from None
    return parse_scenario(obj)
