"""Discrete Neumann problem on the thin domain, in flattened coordinates."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .geometry import ThinDomain, profile_eval
from .grids import Field, ReferenceGrid, build_jet_operators, build_stencils, default_ns, node_bundle
from .iteration import SolveReport, SolverParams, damped_iteration
from .operators import Functional, SymMat2, eval_F, operator_coefficients


@dataclass(frozen=True)
class ThinScenario:
    thin: ThinDomain
    functional: Functional
    grid: ReferenceGrid

    def __post_init__(self) -> None:
        if self.grid.domain != self.thin.domain:
            raise ValueError("grid and thin domain disagree on [a, b]")

    @classmethod
    def with_default_grid(cls, thin: ThinDomain, functional: Functional, nx: int) -> "ThinScenario":
        return cls(thin, functional, ReferenceGrid(nx, default_ns(nx, thin), thin.domain))

    @cached_property
    def C0(self) -> float:
        return self.functional.C0(self.thin)


class ThinSystem:
    """Cached discretization of one scenario: residual, policy and linearization."""

    def __init__(self, scn: ThinScenario):
        self.scn = scn
        grid, thin = scn.grid, scn.thin
        self.size = grid.size
        self.bundle = node_bundle(grid, thin)
        self.stencils = build_stencils(grid)
        self.jets = build_jet_operators(self.stencils, self.bundle)

        X, S = grid.mesh()
        self.x = X.reshape(-1)
        self.y = thin.physical_y(X, S).reshape(-1)
        self.interior = grid.interior_mask().reshape(-1)
        self.f = scn.functional.source(self.x, self.y)

        nx, ns = grid.nx, grid.ns
        ii = np.tile(np.arange(nx), ns)
        jj = np.repeat(np.arange(ns), nx)
        left, right = ii == 0, ii == nx - 1
        lateral = left | right
        bottom = (jj == 0) & ~lateral
        top = (jj == ns - 1) & ~lateral
        _, gp, _ = profile_eval(thin.profile, self.x)
        eps_gp = thin.epsilon * gp

        def rows(mask, weight=1.0):
            return sp.diags(np.where(mask, weight, 0.0))

        J = self.jets
        # lateral conditions take precedence at the corners
        self.boundary_rows = (
            rows(bottom) @ (-self.stencils.Ds)
            + rows(top, -eps_gp) @ J.ux
            + rows(top) @ J.uy
            - rows(left) @ J.ux
            + rows(right) @ J.ux
        ).tocsr()
        self._int_rows = sp.diags(self.interior.astype(float))

    def hessian(self, u: np.ndarray) -> SymMat2:
        J = self.jets
        return SymMat2(J.uxx @ u, J.uxy @ u, J.uyy @ u)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        return np.stack([self.jets.ux @ u, self.jets.uy @ u], axis=-1)

    def residual(self, u: np.ndarray) -> np.ndarray:
        F = self.scn.functional
        X = self.hessian(u)
        pde = eval_F(F, X, self.gradient(u), u, (self.x, self.y))
        return np.where(self.interior, pde, self.boundary_rows @ u)

    def policy(self, u: np.ndarray):
        a_xx, a_xy, a_yy = operator_coefficients(self.scn.functional.op, self.hessian(u))
        m = self.interior
        return np.where(m, a_xx, 0.0), np.where(m, a_xy, 0.0), np.where(m, a_yy, 0.0)

    def matrix(self, policy) -> sp.csr_matrix:
        a_xx, a_xy, a_yy = policy
        J = self.jets
        alpha = self.scn.functional.alpha
        pde = -(sp.diags(a_xx) @ J.uxx + sp.diags(2 * a_xy) @ J.uxy + sp.diags(a_yy) @ J.uyy)
        pde = pde + alpha * sp.identity(self.size)
        return (self._int_rows @ pde + self.boundary_rows).tocsr()

    def rhs(self) -> np.ndarray:
        return np.where(self.interior, self.f, 0.0)

    def diagonal(self) -> np.ndarray:
        grid = self.scn.grid
        F = self.scn.functional
        hy = grid.hs / self.bundle.inv_eg
        interior = F.alpha + 2 * F.op.effective_ellipticity * (1 / grid.hx**2 + 1 / hy**2)
        return np.where(self.interior, interior, self.boundary_rows.diagonal())


def residual(scn: ThinScenario, field: Field) -> Field:
    if field.grid != scn.grid:
        raise ValueError("field lives on a different grid")
    return Field(scn.grid, ThinSystem(scn).residual(field.flat))


def solve_thin(
    scn: ThinScenario, params: SolverParams | None = None, initial: Field | None = None
) -> tuple[Field, SolveReport]:
    """Solve the thin-domain problem; raises DivergenceError on blow-up."""
    params = params or SolverParams()
    tol = params.resolved_tol(scn.C0, scn.functional.alpha)
    system = ThinSystem(scn)
    u0 = None if initial is None else initial.flat
    u, report = damped_iteration(system, params, tol, u0)
    return Field(scn.grid, u), report
