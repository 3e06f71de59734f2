import numpy as np
import pytest

from hlx.errors import InputError
from hlx.fields import ScalarField, edge_mask
from hlx.hamiltonian import HamiltonianModel, lagrangian_evaluator
from hlx.solver import (
    SolveConfig,
    comparison_gap,
    solve_dirichlet,
    stationary_point_search,
)

QUAD1 = HamiltonianModel.quadratic(np.eye(1))
LAG1 = lagrangian_evaluator(QUAD1)
QUAD2 = HamiltonianModel.quadratic(np.eye(2))
LAG2 = lagrangian_evaluator(QUAD2)
NORM2 = HamiltonianModel.norm(2)
LAGN2 = lagrangian_evaluator(NORM2)


def square(n, fn):
    h = 1.0 / (n - 1)
    ax = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return ScalarField(fn(X, Y), (h, h), (0.0, 0.0))


def test_affine_1d_exact():
    n = 33
    h = 1.0 / (n - 1)
    x = np.linspace(0.0, 1.0, n)
    g = ScalarField(x.copy(), (h,), (0.0,))
    u, rep = solve_dirichlet(QUAD1, g, SolveConfig(t=0.05, radius=2 * h), lag=LAG1)
    assert rep.converged
    assert rep.residual <= 1e-8
    assert np.max(np.abs(u.values - x)) <= 1e-5


@pytest.mark.parametrize("H,lag", [(QUAD2, LAG2), (NORM2, LAGN2)])
def test_affine_2d_exact(H, lag):
    g = square(33, lambda X, Y: 0.3 * X + 0.7 * Y)
    h = max(g.spacing)
    u, rep = solve_dirichlet(H, g, SolveConfig(t=0.05, radius=2.5 * h), lag=lag)
    assert rep.converged and rep.residual <= 1e-8
    assert np.max(np.abs(u.values - g.values)) <= 1e-4


def test_affine_is_fixed_point_to_machine_precision():
    # starting at the solution, one residual evaluation is already zero
    g = square(33, lambda X, Y: 0.3 * X + 0.7 * Y)
    h = max(g.spacing)
    cfg = SolveConfig(t=0.05, radius=2.5 * h, init=g.values.copy(), max_iters=1,
                      tol=1e-8)
    u, rep = solve_dirichlet(QUAD2, g, cfg, lag=LAG2)
    assert rep.converged
    assert rep.residual <= 1e-12


def test_three_inits_agree_norm():
    g = square(33, lambda X, Y: 0.2 * np.sin(2 * np.pi * X) + 0.1 * Y)
    h = max(g.spacing)
    sols = []
    for init in ("min", "max", "random"):
        cfg = SolveConfig(t=0.1, radius=3.5 * h, tol=1e-12, max_iters=5000,
                          init=init, seed=11)
        u, rep = solve_dirichlet(NORM2, g, cfg, lag=LAGN2)
        assert rep.converged
        sols.append(u)
    worst = max(
        float(np.max(np.abs(a.values - b.values))) for a in sols for b in sols
    )
    assert worst <= 1e-10


def test_maximum_principle():
    g = square(25, lambda X, Y: 0.2 * np.sin(2 * np.pi * X) + 0.1 * Y)
    h = max(g.spacing)
    u, rep = solve_dirichlet(NORM2, g, SolveConfig(t=0.1, radius=3 * h), lag=LAGN2)
    fixed = u.boundary
    assert np.max(u.values) <= np.max(g.values[fixed]) + 1e-10
    assert np.min(u.values) >= np.min(g.values[fixed]) - 1e-10


def test_not_converged_reported():
    g = square(25, lambda X, Y: 0.2 * np.sin(2 * np.pi * X))
    h = max(g.spacing)
    u, rep = solve_dirichlet(
        NORM2, g, SolveConfig(t=0.1, radius=3 * h, max_iters=2), lag=LAGN2
    )
    assert not rep.converged
    assert rep.verdict == "not converged"
    assert u.shape == g.shape


def test_solve_config_validation():
    with pytest.raises(InputError):
        SolveConfig(t=0.1, radius=0.1, tol=0.0)
    with pytest.raises(InputError):
        SolveConfig(t=0.1, radius=0.1, damping=1.5)


def test_comparison_gap_trivial_laws():
    g = square(17, lambda X, Y: X)
    assert comparison_gap(g, g) == 0.0
    shifted = g.with_values(g.values + 3.0)
    assert abs(comparison_gap(g, shifted)) <= 1e-12


def test_comparison_gap_rejects_mismatch():
    a = square(17, lambda X, Y: X)
    b = square(19, lambda X, Y: X)
    with pytest.raises(InputError):
        comparison_gap(a, b)


def test_stationary_search_zero_fields_certificate():
    z = square(33, lambda X, Y: np.zeros_like(X))
    h = max(z.spacing)
    res = stationary_point_search(z, z, 0.05, 3 * h, LAG2)
    assert res.kind == "certificate"


def test_stationary_search_affine_certificate():
    f = square(33, lambda X, Y: 0.4 * X + 0.1 * Y)
    g = square(33, lambda X, Y: 0.1 * X + 0.3 * Y)
    h = max(f.spacing)
    res = stationary_point_search(f, g, 0.05, 3 * h, LAG2, tol=1e-6)
    assert res.kind == "certificate"


def test_stationary_search_rejects_bump():
    # strictly concave bump violates the sub-inequality in the interior
    f = square(33, lambda X, Y: np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / 0.02))
    h = max(f.spacing)
    with pytest.raises(InputError):
        stationary_point_search(f, f, 0.05, 3 * h, LAG2, tol=1e-6)
