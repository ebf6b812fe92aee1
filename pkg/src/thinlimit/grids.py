"""Reference grid on the flattened rectangle, stencils, and jet reconstruction.

Fields are stored as ``(ns, nx)`` arrays, so flattening in C order gives the
node ordering ``index = j * nx + i`` (row-major by j then i).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import ChainRuleBundle, Domain, ThinDomain, chain_rule_bundle
from .operators import SymMat2


class NonFiniteFieldError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ReferenceGrid:
    nx: int
    ns: int
    domain: Domain

    def __post_init__(self) -> None:
        if self.nx < 4 or self.ns < 4:
            raise ValueError(f"grid needs nx, ns >= 4, got nx={self.nx}, ns={self.ns}")

    @property
    def hx(self) -> float:
        return self.domain.length / (self.nx - 1)

    @property
    def hs(self) -> float:
        return 1.0 / (self.ns - 1)

    @property
    def x(self) -> np.ndarray:
        return self.domain.a + self.hx * np.arange(self.nx)

    @property
    def s(self) -> np.ndarray:
        return self.hs * np.arange(self.ns)

    @property
    def size(self) -> int:
        return self.nx * self.ns

    def node(self, i: int, j: int) -> tuple[float, float]:
        return self.domain.a + i * self.hx, j * self.hs

    def index(self, i: int, j: int) -> int:
        return j * self.nx + i

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, S)`` node coordinates, each of shape ``(ns, nx)``."""
        return np.meshgrid(self.x, self.s)

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros((self.ns, self.nx), dtype=bool)
        mask[1:-1, 1:-1] = True
        return mask

    def is_interior(self, i: int, j: int) -> bool:
        return 1 <= i <= self.nx - 2 and 1 <= j <= self.ns - 2


def default_ns(nx: int, thin: ThinDomain) -> int:
    """Nodes in s so that physical y-spacing stays comparable to hx."""
    scaled = nx * thin.epsilon * thin.profile.g_max / thin.domain.length
    return max(9, int(round(scaled)) + 9)


@dataclass
class Field:
    grid: ReferenceGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.size:
            raise ValueError(f"field has {values.size} values, grid has {self.grid.size} nodes")
        self.values = values.reshape(self.grid.ns, self.grid.nx)
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteFieldError("field contains non-finite values")

    @classmethod
    def from_function(cls, grid: ReferenceGrid, fn) -> "Field":
        """Sample ``fn(x, s)`` at every node."""
        X, S = grid.mesh()
        return cls(grid, np.broadcast_to(fn(X, S), X.shape).copy())

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True)
class PhysicalJet:
    p: np.ndarray
    X: SymMat2


def fd_derivs(field: Field, i: int, j: int):
    """Central differences ``(v_x, v_s, v_xx, v_ss, v_xs)`` at an interior node."""
    grid = field.grid
    if not grid.is_interior(i, j):
        raise ValueError(f"node ({i}, {j}) is not interior")
    v = field.values
    hx, hs = grid.hx, grid.hs
    v_x = (v[j, i + 1] - v[j, i - 1]) / (2 * hx)
    v_s = (v[j + 1, i] - v[j - 1, i]) / (2 * hs)
    v_xx = (v[j, i + 1] - 2 * v[j, i] + v[j, i - 1]) / hx**2
    v_ss = (v[j + 1, i] - 2 * v[j, i] + v[j - 1, i]) / hs**2
    v_xs = (v[j + 1, i + 1] - v[j - 1, i + 1] - v[j + 1, i - 1] + v[j - 1, i - 1]) / (4 * hx * hs)
    return v_x, v_s, v_xx, v_ss, v_xs


def jet_from_derivs(derivs, bundle: ChainRuleBundle) -> PhysicalJet:
    """Physical gradient and Hessian from flattened derivatives."""
    v_x, v_s, v_xx, v_ss, v_xs = derivs
    B = bundle
    u_x = v_x + v_s * B.s_x
    u_y = v_s * B.inv_eg
    u_xx = v_xx + 2 * v_xs * B.s_x + v_ss * B.s_x**2 + v_s * B.s_xx
    u_xy = B.inv_eg * (v_xs + v_ss * B.s_x) + v_s * B.ds_x_dy
    u_yy = v_ss * B.inv_eg**2
    return PhysicalJet(np.stack([np.asarray(u_x), np.asarray(u_y)], axis=-1), SymMat2(u_xx, u_xy, u_yy))


def reconstruct_jet(field: Field, thin: ThinDomain, i: int, j: int) -> PhysicalJet:
    x, s = field.grid.node(i, j)
    return jet_from_derivs(fd_derivs(field, i, j), chain_rule_bundle(thin, x, s))


# ---------------------------------------------------------------------------
# sparse stencils over the full node set


# Third-order one-sided end rows. The 3-point closure is also second order
# globally but carries a large O(h^3) defect that spoils observed orders on
# practical grids (slope ~1.77 over nx = 41, 81, 161 for a cosine MMS).
ONE_SIDED = np.array([-11.0, 18.0, -9.0, 2.0]) / 6.0


def one_sided_rows(n: int, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of the forward row at node 0 and the backward row at node n-1."""
    if n < len(ONE_SIDED):
        raise ValueError(f"need at least {len(ONE_SIDED)} nodes, got {n}")
    return ONE_SIDED / h, -ONE_SIDED[::-1] / h


def first_difference(n: int, h: float) -> sp.csr_matrix:
    """Central first difference with one-sided rows at both ends."""
    D = sp.lil_matrix((n, n))
    for k in range(1, n - 1):
        D[k, k - 1] = -0.5 / h
        D[k, k + 1] = 0.5 / h
    fwd, bwd = one_sided_rows(n, h)
    m = len(fwd)
    D[0, 0:m] = fwd
    D[n - 1, n - m : n] = bwd
    return D.tocsr()


def central_first_difference(n: int, h: float) -> sp.csr_matrix:
    """Central first difference with zero end rows."""
    off = np.full(n - 1, 0.5 / h)
    D = sp.diags([-off, off], [-1, 1], shape=(n, n), format="lil")
    D[0, :] = 0.0
    D[n - 1, :] = 0.0
    return D.tocsr()


def second_difference(n: int, h: float) -> sp.csr_matrix:
    """Central second difference with zero end rows."""
    D = sp.diags(
        [np.full(n - 1, 1.0), np.full(n, -2.0), np.full(n - 1, 1.0)], [-1, 0, 1], shape=(n, n), format="lil"
    )
    D[0, :] = 0.0
    D[n - 1, :] = 0.0
    return (D / h**2).tocsr()


@dataclass(frozen=True)
class Stencils:
    """Flattened-derivative operators acting on ``field.flat``.

    ``Dx`` and ``Ds`` are valid at every node (one-sided on the edges); the
    second-derivative operators are only meaningful on interior rows.
    """

    Dx: sp.csr_matrix
    Ds: sp.csr_matrix
    Dxx: sp.csr_matrix
    Dss: sp.csr_matrix
    Dxs: sp.csr_matrix


def build_stencils(grid: ReferenceGrid) -> Stencils:
    Ix, Is = sp.identity(grid.nx, format="csr"), sp.identity(grid.ns, format="csr")
    dx = first_difference(grid.nx, grid.hx)
    ds = first_difference(grid.ns, grid.hs)
    return Stencils(
        Dx=sp.kron(Is, dx, format="csr"),
        Ds=sp.kron(ds, Ix, format="csr"),
        Dxx=sp.kron(Is, second_difference(grid.nx, grid.hx), format="csr"),
        Dss=sp.kron(second_difference(grid.ns, grid.hs), Ix, format="csr"),
        Dxs=sp.kron(
            central_first_difference(grid.ns, grid.hs),
            central_first_difference(grid.nx, grid.hx),
            format="csr",
        ),
    )


def node_bundle(grid: ReferenceGrid, thin: ThinDomain) -> ChainRuleBundle:
    """Chain-rule coefficients at every node, flattened like ``Field.flat``."""
    X, S = grid.mesh()
    B = chain_rule_bundle(thin, X.reshape(-1), S.reshape(-1))
    return ChainRuleBundle(*(np.broadcast_to(np.asarray(c, dtype=float), (grid.size,)).copy()
                             for c in (B.s_x, B.s_xx, B.ds_x_dy, B.inv_eg)))


@dataclass(frozen=True)
class JetOperators:
    """Sparse maps from ``field.flat`` to physical derivatives at every node.

    Rows of the second-order maps are meaningful on interior nodes only.
    """

    ux: sp.csr_matrix
    uy: sp.csr_matrix
    uxx: sp.csr_matrix
    uxy: sp.csr_matrix
    uyy: sp.csr_matrix


def build_jet_operators(stencils: Stencils, bundle: ChainRuleBundle) -> JetOperators:
    B = bundle
    dg = sp.diags
    St = stencils
    return JetOperators(
        ux=(St.Dx + dg(B.s_x) @ St.Ds).tocsr(),
        uy=(dg(B.inv_eg) @ St.Ds).tocsr(),
        uxx=(St.Dxx + dg(2 * B.s_x) @ St.Dxs + dg(B.s_x**2) @ St.Dss + dg(B.s_xx) @ St.Ds).tocsr(),
        uxy=(dg(B.inv_eg) @ (St.Dxs + dg(B.s_x) @ St.Dss) + dg(B.ds_x_dy) @ St.Ds).tocsr(),
        uyy=(dg(B.inv_eg**2) @ St.Dss).tocsr(),
    )
