import numpy as np
import pytest

from thinlimit.geometry import Domain, Profile, ThinDomain
from thinlimit.grids import Field, ReferenceGrid
from thinlimit.iteration import DivergenceError, SolverParams
from thinlimit.operators import (
    CallableTerm,
    ConstantTerm,
    CosineTerm,
    Functional,
    Operator,
    PolynomialTerm,
    Source,
)
from thinlimit.thin_solver import ThinScenario, ThinSystem, residual, solve_thin

UNIT = Domain(0.0, 1.0)
BUMP = Profile.cos_bump(2.0, 0.5, 1.0, UNIT)
FLAT = Profile.constant(1.0, UNIT)
OPS = [
    Operator("pucci_plus", 1.0, 2.0),
    Operator("pucci_minus", 1.0, 2.0),
    Operator("laplacian"),
    Operator("second_yy"),
    Operator("second_xx"),
]


def _scenario(op=Operator("laplacian"), source=None, profile=BUMP, eps=0.2, nx=21, alpha=1.0, domain=UNIT):
    source = source or Source(CosineTerm(1.0), ConstantTerm(1.0))
    return ThinScenario.with_default_grid(ThinDomain(domain, profile, eps), Functional(op, alpha, source), nx)


def _mms_source(alpha=1.0, domain=UNIT):
    a, L = domain.a, domain.length
    k = np.pi / L
    return Source(CallableTerm(lambda x: (k * k + alpha) * np.cos(k * (x - a)), "mms"))


@pytest.mark.parametrize("op", OPS, ids=lambda o: o.kind)
@pytest.mark.parametrize("profile", [FLAT, BUMP], ids=["flat", "bump"])
def test_constant_field_has_zero_residual(op, profile):
    scn = _scenario(op, Source(ConstantTerm(3.0)), profile, alpha=1.5)
    r = residual(scn, Field(scn.grid, np.full(scn.grid.size, 2.0)))
    assert np.abs(r.values).max() <= 1e-12


def test_zero_field_residual_is_minus_source():
    scn = _scenario(Operator("pucci_plus", 1.0, 2.0))
    r = residual(scn, Field(scn.grid, np.zeros(scn.grid.size))).values
    X, S = scn.grid.mesh()
    Y = scn.thin.physical_y(X, S)
    inner = scn.grid.interior_mask()
    np.testing.assert_allclose(r[inner], -(np.cos(np.pi * X) + Y)[inner], atol=1e-15)
    assert np.all(r[~inner] == 0.0)


def test_boundary_residual_rows():
    flat = _scenario(profile=Profile.constant(1.5, UNIT), eps=0.3, nx=11)
    # u = y: bottom row -v_s = -eps c, top row u_y = 1, lateral rows 0
    u = Field.from_function(flat.grid, lambda X, S: flat.thin.physical_y(X, S))
    r = residual(flat, u).values
    np.testing.assert_allclose(r[0, 1:-1], -0.45, atol=1e-12)
    np.testing.assert_allclose(r[-1, 1:-1], 1.0, atol=1e-12)
    np.testing.assert_allclose(r[:, [0, -1]], 0.0, atol=1e-12)

    scn = _scenario(profile=BUMP, eps=0.3, nx=11)
    grid = scn.grid
    # u = x: lateral rows -1 on the left and +1 on the right; top row -eps g'
    u = Field.from_function(grid, lambda X, S: X)
    r = residual(scn, u).values
    np.testing.assert_allclose(r[:, 0], -1.0, atol=1e-12)
    np.testing.assert_allclose(r[:, -1], 1.0, atol=1e-12)
    x = grid.x[1:-1]
    gp = -0.5 * np.pi * np.sin(np.pi * x)
    np.testing.assert_allclose(r[-1, 1:-1], -0.3 * gp, atol=1e-12)
    np.testing.assert_allclose(r[0, 1:-1], 0.0, atol=1e-12)


def test_mms_residual_is_second_order():
    hs, interior, boundary = [], [], []
    for nx in (21, 41, 81):
        scn = _scenario(source=_mms_source(), profile=FLAT, eps=0.2, nx=nx)
        u = Field.from_function(scn.grid, lambda X, S: np.cos(np.pi * X))
        r = residual(scn, u).values
        m = scn.grid.interior_mask()
        hs.append(scn.grid.hx)
        interior.append(np.abs(r[m]).max())
        boundary.append(np.abs(r[~m]).max())
    assert np.polyfit(np.log(hs), np.log(interior), 1)[0] >= 1.9
    assert all(b <= 10 * h * h for b, h in zip(boundary, hs))


def test_residual_is_affine_in_policy_cell():
    scn = _scenario(Operator("pucci_plus", 1.0, 2.0), nx=15)
    system = ThinSystem(scn)
    rng = np.random.default_rng(0)
    u = rng.normal(size=scn.grid.size)
    L = system.matrix(system.policy(u))
    np.testing.assert_allclose(system.residual(u), L @ u - system.rhs(), atol=1e-8 * np.abs(L @ u).max())


def test_solve_constant_source():
    for op in OPS:
        scn = _scenario(op, Source(ConstantTerm(2.0)), eps=0.2)
        u, rep = solve_thin(scn)
        assert rep.converged and rep.residual_inf <= rep.tol
        np.testing.assert_allclose(u.values, 2.0, atol=10 * rep.tol)
        assert rep.sup_norm == pytest.approx(2.0, abs=10 * rep.tol)


def test_solve_mms_second_order():
    hs, errs = [], []
    for nx in (21, 41, 81):
        scn = _scenario(source=_mms_source(), profile=FLAT, eps=0.2, nx=nx)
        u, rep = solve_thin(scn)
        assert rep.converged
        X, _ = scn.grid.mesh()
        errs.append(np.abs(u.values - np.cos(np.pi * X)).max())
        hs.append(scn.grid.hx)
    assert np.polyfit(np.log(hs), np.log(errs), 1)[0] >= 1.9


def test_pucci_bound_example():
    scn = _scenario(Operator("pucci_plus", 1.0, 2.0), Source(PolynomialTerm((1.0, 0.0, 1.0))), eps=0.1, nx=41)
    u, rep = solve_thin(scn)
    assert rep.converged
    assert scn.C0 == pytest.approx(2.0, abs=1e-12)
    assert rep.sup_norm <= 2.0 + 10 * rep.tol


def test_y_independent_data_gives_y_independent_solution():
    scn = _scenario(Operator("pucci_plus", 1.0, 2.0), Source(CosineTerm(1.0, 2.0)), profile=Profile.constant(1.3, UNIT), eps=0.3)
    u, rep = solve_thin(scn)
    assert rep.converged
    assert np.abs(u.values - u.values[0]).max() <= 10 * rep.tol


def test_deterministic():
    scn = _scenario(Operator("pucci_minus", 1.0, 3.0), eps=0.15, nx=31)
    u1, r1 = solve_thin(scn)
    u2, r2 = solve_thin(scn)
    assert np.array_equal(u1.values, u2.values)
    assert r1 == r2


@pytest.mark.parametrize("op", [Operator("laplacian"), Operator("second_yy")], ids=lambda o: o.kind)
def test_comparison(op):
    rng = np.random.default_rng(42)
    for _ in range(3):
        c = rng.normal(size=3)
        slope = rng.normal()
        # f2 - f1 = b0 + b2 x^2 + b3 y with nonnegative b's
        b0, b2, b3 = rng.uniform(0.0, 1.0, size=3)
        f1 = Source(PolynomialTerm(tuple(c)), ConstantTerm(slope))
        f2 = Source(PolynomialTerm((c[0] + b0, c[1], c[2] + b2)), ConstantTerm(slope + b3))
        u1, r1 = solve_thin(_scenario(op, f1, eps=0.25))
        u2, r2 = solve_thin(_scenario(op, f2, eps=0.25))
        assert r1.converged and r2.converged
        assert np.all(u1.values <= u2.values + 10 * max(r1.tol, r2.tol))


def test_max_iters_reports_non_convergence():
    scn = _scenario(Operator("pucci_plus", 1.0, 2.0))
    _, rep = solve_thin(scn, SolverParams(max_iters=1))
    assert rep.iterations == 1
    assert not rep.converged


def test_diagonal_mode_blows_up_on_curved_profile_at_default_tau():
    scn = _scenario(Operator("laplacian"), nx=21, eps=0.2)
    with pytest.raises(DivergenceError) as info:
        solve_thin(scn, SolverParams(preconditioner="diagonal"))
    assert info.value.iteration > 0


@pytest.mark.parametrize("profile", [FLAT, BUMP], ids=["flat", "bump"])
def test_diagonal_mode_agrees_with_newton_on_small_grid(profile):
    scn = ThinScenario(
        ThinDomain(UNIT, profile, 0.2),
        Functional(Operator("laplacian"), 1.0, Source(CosineTerm(1.0), ConstantTerm(1.0))),
        ReferenceGrid(11, 6, UNIT),
    )
    u_jac, rep = solve_thin(scn, SolverParams(tau=0.5, tol=1e-8, preconditioner="diagonal"))
    u_newton, _ = solve_thin(scn)
    assert rep.converged and rep.iterations > 1000
    assert np.abs(u_jac.values - u_newton.values).max() <= 1e-7


def test_diagonal_mode_is_the_scaled_operator_diagonal():
    scn = _scenario(Operator("pucci_plus", 1.0, 2.0), nx=11, eps=0.2)
    system = ThinSystem(scn)
    d = system.diagonal().reshape(scn.grid.ns, scn.grid.nx)
    hx, hs = scn.grid.hx, scn.grid.hs
    x = scn.grid.x[3]
    g = 2.0 + 0.5 * np.cos(np.pi * x)
    assert d[2, 3] == pytest.approx(1.0 + 4.0 * (1 / hx**2 + 1 / (0.2 * g * hs) ** 2), rel=1e-12)


def test_initial_guess_is_used():
    scn = _scenario(Operator("laplacian"), Source(ConstantTerm(2.0)))
    u, rep = solve_thin(scn, initial=Field(scn.grid, np.full(scn.grid.size, 2.0)))
    assert rep.iterations == 0 and rep.converged


def test_non_unit_domain_mms():
    dom = Domain(-1.0, 2.0)
    scn = ThinScenario(
        ThinDomain(dom, Profile.constant(1.0, dom), 0.1),
        Functional(Operator("laplacian"), 2.0, _mms_source(2.0, dom)),
        ReferenceGrid(61, 9, dom),
    )
    u, rep = solve_thin(scn)
    X, _ = scn.grid.mesh()
    assert rep.converged
    assert np.abs(u.values - np.cos(np.pi * (X + 1) / 3)).max() < 1e-3


def test_grid_domain_mismatch():
    with pytest.raises(ValueError):
        ThinScenario(ThinDomain(UNIT, BUMP, 0.1), Functional(Operator("laplacian"), 1.0, Source(ConstantTerm(1.0))), ReferenceGrid(5, 5, Domain(0, 2)))
