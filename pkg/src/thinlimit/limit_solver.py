"""1D limit problem ``G(w'', w', w, x) = 0`` on [a, b] with Neumann ends.

The drift ``d = g' w' / g`` enters through the upwinded first difference.
The upwind side is picked from the sign of ``dG/dp`` evaluated in a first
pass with the central difference; ties (zero coefficient) go backward.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .geometry import Domain
from .grids import one_sided_rows
from .iteration import SolveReport, SolverParams, damped_iteration
from .operators import LimitFunctional, SymMat2, operator_coefficients


@dataclass(frozen=True)
class LimitScenario:
    domain: Domain
    limitG: LimitFunctional
    nx: int

    def __post_init__(self) -> None:
        if self.nx < 4:
            raise ValueError(f"nx must be >= 4, got {self.nx}")
        if self.limitG.profile.domain != self.domain:
            raise ValueError("profile is defined on a different domain")

    @property
    def h(self) -> float:
        return self.domain.length / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return self.domain.a + self.h * np.arange(self.nx)

    @cached_property
    def C0(self) -> float:
        return self.limitG.functional.source.sup_abs_base(self.domain.a, self.domain.b)


class LimitSystem:
    def __init__(self, scn: LimitScenario):
        self.scn = scn
        n, h = scn.nx, scn.h
        self.size = n
        self.x = scn.x
        self.ratio = scn.limitG.drift_ratio(self.x)
        self.f = scn.limitG.functional.source.at_base(self.x)
        self.interior = np.zeros(n, dtype=bool)
        self.interior[1:-1] = True

        e = np.ones(n - 1)
        self.D2 = self._interior_rows(sp.diags([e, -2 * np.ones(n), e], [-1, 0, 1]) / h**2)
        self.Dc = self._interior_rows(sp.diags([-e, e], [-1, 1]) / (2 * h))
        self.Dback = self._interior_rows(sp.diags([-e, np.ones(n)], [-1, 0]) / h)
        self.Dfwd = self._interior_rows(sp.diags([-np.ones(n), e], [0, 1]) / h)
        fwd, bwd = one_sided_rows(n, h)
        m = len(fwd)
        ends = sp.lil_matrix((n, n))
        ends[0, 0:m] = -fwd
        ends[n - 1, n - m :] = bwd
        self.boundary_rows = ends.tocsr()

    def _interior_rows(self, M) -> sp.csr_matrix:
        M = sp.lil_matrix(M)
        M[0, :] = 0.0
        M[-1, :] = 0.0
        return M.tocsr()

    def _coefficients(self, q, p):
        d = self.ratio * p
        return operator_coefficients(self.scn.limitG.functional.op, SymMat2.diag(q, d))

    def upwind_forward(self, w: np.ndarray) -> np.ndarray:
        """True where the forward difference is used (negative drift coefficient)."""
        _, _, a_yy = self._coefficients(self.D2 @ w, self.Dc @ w)
        return -a_yy * self.ratio < 0.0

    def upwind_gradient(self, w: np.ndarray, forward: np.ndarray | None = None) -> np.ndarray:
        forward = self.upwind_forward(w) if forward is None else forward
        return np.where(forward, self.Dfwd @ w, self.Dback @ w)

    def residual(self, w: np.ndarray) -> np.ndarray:
        q = self.D2 @ w
        p = self.upwind_gradient(w)
        G = self.scn.limitG(q, p, w, self.x)
        return np.where(self.interior, G, self.boundary_rows @ w)

    def policy(self, w: np.ndarray):
        forward = self.upwind_forward(w)
        p = self.upwind_gradient(w, forward)
        a_xx, _, a_yy = self._coefficients(self.D2 @ w, p)
        m = self.interior
        return np.where(m, a_xx, 0.0), np.where(m, a_yy, 0.0), forward & m

    def matrix(self, policy) -> sp.csr_matrix:
        a_xx, a_yy, forward = policy
        alpha = self.scn.limitG.functional.alpha
        Dup = sp.diags(forward.astype(float)) @ self.Dfwd + sp.diags((~forward).astype(float)) @ self.Dback
        pde = -(sp.diags(a_xx) @ self.D2 + sp.diags(a_yy * self.ratio) @ Dup)
        pde = pde + alpha * sp.identity(self.size)
        return (sp.diags(self.interior.astype(float)) @ pde + self.boundary_rows).tocsr()

    def rhs(self) -> np.ndarray:
        return np.where(self.interior, self.f, 0.0)

    def diagonal(self) -> np.ndarray:
        F = self.scn.limitG.functional
        lam = F.op.effective_ellipticity
        h = self.scn.h
        interior = F.alpha + 2 * lam / h**2 + lam * np.abs(self.ratio) / h
        return np.where(self.interior, interior, self.boundary_rows.diagonal())


def residual_limit(scn: LimitScenario, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (scn.nx,):
        raise ValueError(f"expected {scn.nx} values, got shape {w.shape}")
    return LimitSystem(scn).residual(w)


def solve_limit(
    scn: LimitScenario, params: SolverParams | None = None, initial=None
) -> tuple[np.ndarray, SolveReport]:
    params = params or SolverParams()
    tol = params.resolved_tol(scn.C0, scn.limitG.functional.alpha)
    return damped_iteration(LimitSystem(scn), params, tol, initial)
