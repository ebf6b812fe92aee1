"""Second-order operators, the proper functional F and the limit functional G.

Every routine is vectorized: the entries of a :class:`SymMat2` may be numpy
arrays of any common shape, in which case results are arrays of that shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy import optimize

from .geometry import Profile, ThinDomain, profile_eval

OperatorName = Literal["pucci_plus", "pucci_minus", "laplacian", "second_yy", "second_xx"]
OPERATOR_NAMES = ("pucci_plus", "pucci_minus", "laplacian", "second_yy", "second_xx")


@dataclass(frozen=True)
class SymMat2:
    xx: np.ndarray | float
    xy: np.ndarray | float
    yy: np.ndarray | float

    @classmethod
    def diag(cls, xx, yy) -> "SymMat2":
        return cls(xx, np.zeros_like(np.asarray(xx, dtype=float)), yy)

    def __neg__(self) -> "SymMat2":
        return SymMat2(-np.asarray(self.xx), -np.asarray(self.xy), -np.asarray(self.yy))

    def __sub__(self, other: "SymMat2") -> "SymMat2":
        return SymMat2(
            np.asarray(self.xx) - other.xx,
            np.asarray(self.xy) - other.xy,
            np.asarray(self.yy) - other.yy,
        )

    @property
    def trace(self):
        return np.asarray(self.xx) + self.yy

    @property
    def det(self):
        return np.asarray(self.xx) * self.yy - np.asarray(self.xy) ** 2


def eigen2(X: SymMat2):
    """Eigenvalues ``(e1, e2)`` with ``e1 <= e2``."""
    half_trace = 0.5 * (np.asarray(X.xx) + X.yy)
    radius = np.hypot(0.5 * (np.asarray(X.xx) - X.yy), X.xy)
    return half_trace - radius, half_trace + radius


@dataclass(frozen=True)
class Operator:
    """One member of the degenerate-elliptic operator family ``Op(X)``."""

    kind: OperatorName
    lam: float = 1.0
    Lam: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in OPERATOR_NAMES:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if not 0.0 < self.lam <= self.Lam:
            raise ValueError(f"need 0 < lambda <= Lambda, got {self.lam}, {self.Lam}")
        if self.kind not in ("pucci_plus", "pucci_minus") and (self.lam, self.Lam) != (1.0, 1.0):
            raise ValueError(f"{self.kind} takes no ellipticity constants")

    @property
    def effective_ellipticity(self) -> float:
        return self.Lam if self.kind.startswith("pucci") else 1.0


def _pucci_coefficients(X: SymMat2, w_neg: float, w_pos: float):
    # weight w_neg on eigenvalues < 0, w_pos on eigenvalues >= 0
    e1, e2 = eigen2(X)
    xx, xy, yy = (np.asarray(c, dtype=float) for c in (X.xx, X.xy, X.yy))
    xx, xy, yy, e1, e2 = np.broadcast_arrays(xx, xy, yy, e1, e2)
    split = (e1 < 0.0) & (e2 >= 0.0)
    gap = np.where(split, e2 - e1, 1.0)
    # projector onto the e2-eigenspace is (X - e1 I) / (e2 - e1)
    p_xx = np.where(split, (xx - e1) / gap, 0.0)
    p_xy = np.where(split, xy / gap, 0.0)
    p_yy = np.where(split, (yy - e1) / gap, 0.0)
    base = np.where(e1 >= 0.0, w_pos, w_neg)
    base = np.where(split, w_neg, base)
    jump = np.where(split, w_pos - w_neg, 0.0)
    return base + jump * p_xx, jump * p_xy, base + jump * p_yy


def operator_coefficients(op: Operator, X: SymMat2):
    """Coefficients ``(a_xx, a_xy, a_yy)`` of a matrix A with ``Op(X) = tr(A X)``.

    For the Pucci operators A is the extremal matrix attaining the sup (inf)
    over ``lam I <= A <= Lam I`` at X; for the linear kinds it is constant.
    This is the policy used by the Newton linearization of the solvers.
    """
    shape = np.broadcast(np.asarray(X.xx), np.asarray(X.xy), np.asarray(X.yy)).shape
    ones, zeros = np.ones(shape), np.zeros(shape)
    if op.kind == "pucci_plus":
        return _pucci_coefficients(X, op.lam, op.Lam)
    if op.kind == "pucci_minus":
        return _pucci_coefficients(X, op.Lam, op.lam)
    if op.kind == "laplacian":
        return ones, zeros, ones
    if op.kind == "second_yy":
        return zeros, zeros, ones
    return ones, zeros, zeros


def apply_operator(op: Operator, X: SymMat2):
    if op.kind == "pucci_plus":
        e1, e2 = eigen2(X)
        return sum(np.where(e <= 0.0, op.lam * e, op.Lam * e) for e in (e1, e2))
    if op.kind == "pucci_minus":
        return -apply_operator(Operator("pucci_plus", op.lam, op.Lam), -X)
    if op.kind == "laplacian":
        return X.trace
    if op.kind == "second_yy":
        return np.asarray(X.yy, dtype=float) + 0.0
    return np.asarray(X.xx, dtype=float) + 0.0


# ---------------------------------------------------------------------------
# source terms f(x, y) = f0(x) + y f1(x)


@dataclass(frozen=True)
class ConstantTerm:
    value: float

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)


@dataclass(frozen=True)
class PolynomialTerm:
    """``c[0] + c[1] x + c[2] x^2 + c[3] x^3`` (degree at most 3)."""

    coeffs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.coeffs) <= 4:
            raise ValueError("polynomial terms take 1 to 4 coefficients")

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)


@dataclass(frozen=True)
class CosineTerm:
    """``amplitude * cos(k * pi * (x - x0))``."""

    amplitude: float
    k: float = 1.0
    x0: float = 0.0

    def __call__(self, x):
        return self.amplitude * np.cos(self.k * np.pi * (np.asarray(x, dtype=float) - self.x0))


@dataclass(frozen=True)
class CallableTerm:
    """Arbitrary vectorized ``x -> value``; used for manufactured sources."""

    fn: Callable[[np.ndarray], np.ndarray]
    label: str = "callable"

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


Term = ConstantTerm | PolynomialTerm | CosineTerm | CallableTerm


def _sup_abs_curve(fn, a: float, b: float, samples: int = 4001) -> float:
    xs = np.linspace(a, b, samples)
    vals = np.abs(fn(xs))
    best = float(vals.max())
    i = int(vals.argmax())
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, samples - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda t: -abs(float(fn(np.array([t]))[0])),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12},
        )
        best = max(best, -float(res.fun))
    return best


@dataclass(frozen=True)
class Source:
    f0: Term
    f1: Term = field(default_factory=lambda: ConstantTerm(0.0))

    def __call__(self, x, y):
        return self.f0(x) + np.asarray(y, dtype=float) * self.f1(x)

    def at_base(self, x):
        """``f(x, 0)``, the only part of the source the limit problem sees."""
        return self.f0(x)

    def sup_abs(self, thin: ThinDomain) -> float:
        """``sup |f|`` over the closed thin domain.

        f is affine in y, so the sup over each vertical segment is attained at
        y = 0 or y = eps g(x); both curves are maximized numerically.
        """
        a, b = thin.domain.a, thin.domain.b
        bottom = _sup_abs_curve(self.f0, a, b)
        top = _sup_abs_curve(lambda x: self.f0(x) + thin.height(x) * self.f1(x), a, b)
        return max(bottom, top)

    def sup_abs_base(self, a: float, b: float) -> float:
        return _sup_abs_curve(self.f0, a, b)


# ---------------------------------------------------------------------------
# functionals


@dataclass(frozen=True)
class Functional:
    """``F(X, p, r, z) = -Op(X) + alpha r - f(z)``."""

    op: Operator
    alpha: float
    source: Source

    def __post_init__(self) -> None:
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    def C0(self, thin: ThinDomain) -> float:
        """``sup |F(0, 0, 0, z)|`` over the thin domain."""
        return self.source.sup_abs(thin)


def eval_F(F: Functional, X: SymMat2, p, r, z):
    """Evaluate the proper functional; ``z = (x, y)``. The gradient ``p`` is unused by this family."""
    x, y = z
    return -apply_operator(F.op, X) + F.alpha * np.asarray(r, dtype=float) - F.source(x, y)


@dataclass(frozen=True)
class LimitFunctional:
    """``G(q, p, r, x) = F(diag(q, g'(x) p / g(x)), (p, 0), r, (x, 0))``."""

    functional: Functional
    profile: Profile

    def drift_ratio(self, x):
        g, gp, _ = profile_eval(self.profile, x)
        return gp / g

    def __call__(self, q, p, r, x):
        d = self.drift_ratio(x) * np.asarray(p, dtype=float)
        X = SymMat2.diag(np.asarray(q, dtype=float) + 0.0 * d, d)
        zero = np.zeros_like(d)
        return eval_F(self.functional, X, (p, zero), r, (x, zero))


def build_limit_G(F: Functional, profile: Profile) -> LimitFunctional:
    return LimitFunctional(F, profile)
