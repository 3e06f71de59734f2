import numpy as np
import pytest

from hlx.criteria import (
    check_cone_comparison_above,
    check_convexity_criterion,
    check_equivalences,
    check_pointwise_criterion,
    cone_table,
    gradient_cone_equivalence,
    increasing_slope_check,
    ladder_slopes,
    lipschitz_from_cones,
    s_plus,
)
from hlx.errors import InputError
from hlx.fields import ScalarField
from hlx.geometry import cone_data
from hlx.hamiltonian import HamiltonianModel, lagrangian_evaluator

QUAD2 = HamiltonianModel.quadratic(np.eye(2))
LAG2 = lagrangian_evaluator(QUAD2)
QUAD1 = HamiltonianModel.quadratic(np.eye(1))
LAG1 = lagrangian_evaluator(QUAD1)

N = 33
H = 1.0 / (N - 1)
LADDER = H * np.array([3.0, 6.0, 12.0])
RADIUS = 2.0  # covers the whole unit square: every node stencil-valid


def field2(fn):
    ax = np.linspace(0.0, 1.0, N)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return ScalarField(fn(X, Y), (H, H), (0.0, 0.0))


def interior_mask(u, margin=0.35):
    return u.boundary_distance() > margin


def test_s_plus_affine_equals_hamiltonian():
    p = np.array([0.7, -0.5])
    u = field2(lambda X, Y: p[0] * X + p[1] * Y)
    sp = s_plus(u, LAG2, LADDER, RADIUS)
    V = interior_mask(u)
    expect = 0.5 * np.dot(p, p)
    # slope quantization at the smallest rung caps accuracy near h^2/t^2
    assert np.max(np.abs(sp.values - expect)[V]) <= 0.02
    assert not sp.approximate[V].any()


def test_s_plus_cone_equals_level():
    k = 0.5
    cd = cone_data(QUAD2, k)
    u = field2(lambda X, Y: np.asarray(
        cd.value(np.stack([X - 0.5, Y - 0.5], axis=-1))
    ))
    sp = s_plus(u, LAG2, LADDER, RADIUS)
    V = interior_mask(u)
    assert np.max(np.abs(sp.values - k)[V]) <= 5 * cd.K_k * H


def test_convexity_criterion_passes_affine():
    u = field2(lambda X, Y: 0.3 * X + 0.1 * Y)
    rep = check_convexity_criterion(u, LAG2, LADDER, RADIUS,
                                    V=interior_mask(u), tol=0.006)
    assert rep.ok


def test_convexity_criterion_fails_concave_bump():
    u = field2(lambda X, Y: -5.0 * ((X - 0.5) ** 2 + (Y - 0.5) ** 2))
    rep = check_convexity_criterion(u, LAG2, LADDER, RADIUS,
                                    V=interior_mask(u), tol=0.006)
    assert not rep.ok
    assert rep.worst_second_diff < -0.02
    assert rep.witnesses


def test_ladder_must_be_midpoint_admissible():
    u = field2(lambda X, Y: X)
    bad = H * np.array([1.0, 10.0, 11.0])  # 10 > (1 + 11)/2 fails
    with pytest.raises(InputError):
        check_convexity_criterion(u, LAG2, bad, RADIUS)


def test_cone_comparison_passes_affine_fails_concave():
    cones = [cone_data(QUAD2, k) for k in (0.25, 1.0)]
    good = field2(lambda X, Y: 0.3 * X + 0.1 * Y)
    bad = field2(lambda X, Y: -5.0 * ((X - 0.5) ** 2 + (Y - 0.5) ** 2))
    assert check_cone_comparison_above(good, cones, tol=5 * H).ok
    rep = check_cone_comparison_above(bad, cones, tol=5 * H)
    assert not rep.ok
    assert rep.worst_violation > 5 * H


def test_pointwise_criterion_affine():
    u = field2(lambda X, Y: 0.3 * X + 0.1 * Y)
    rep = check_pointwise_criterion(u, LAG2, LADDER, RADIUS,
                                    V=interior_mask(u), tol=0.006,
                                    usc_margin=0.2)
    assert rep.ok


def test_equivalence_report_agreement():
    cones = [cone_data(QUAD2, k) for k in (0.0625, 0.25, 1.0)]
    u = field2(lambda X, Y: 0.3 * X + 0.1 * Y)
    rep = check_equivalences(u, LAG2, cones, LADDER, RADIUS,
                             V=interior_mask(u), conv_tol=0.006,
                             cone_tol=5 * H, usc_margin=0.2)
    assert rep.agree and all(rep.verdicts)
    bad = field2(lambda X, Y: -5.0 * ((X - 0.5) ** 2 + (Y - 0.5) ** 2))
    rep = check_equivalences(bad, LAG2, cones, LADDER, RADIUS,
                             V=interior_mask(bad), conv_tol=0.006,
                             cone_tol=5 * H, usc_margin=0.2)
    assert rep.agree and not any(rep.verdicts)


def test_neg_abs_signature_1d():
    # H = |p|, u = -|x - 1/2|: S+ is 1 off the kink and 0 at it.  The
    # flow is a plain ball max, so the rung t = h already resolves the
    # slope exactly; the node-dependent short interval delta = |x - c|
    # keeps the kink out of every other node's ladder.  Per-node
    # convexity holds while the usc surrogate fails exactly at the kink.
    norm1 = HamiltonianModel.norm(1)
    lagn = lagrangian_evaluator(norm1)
    n = 33
    h = 1.0 / (n - 1)
    x = np.linspace(0.0, 1.0, n)
    u = ScalarField(-np.abs(x - 0.5), (h,), (0.0,))
    lad = h * np.array([1.0, 2.0, 4.0])
    kink = n // 2
    delta = np.abs(x - 0.5)
    delta[kink] = 1.0  # at the kink every rung participates
    sp = s_plus(u, lagn, lad, 2.0, delta=delta)
    V = u.boundary_distance() > 0.3
    assert sp.values[kink] == 0.0
    off = V & (np.arange(n) != kink)
    assert np.max(np.abs(sp.values[off] - 1.0)) <= 1e-12
    rep = check_pointwise_criterion(u, lagn, lad, 2.0, V=V, tol=0.006,
                                    usc_margin=0.2, delta=delta)
    assert rep.convexity.ok
    assert rep.usc_fail[kink]
    assert rep.usc_fail.sum() == 1


def test_increasing_slope_at_kink():
    norm1 = HamiltonianModel.norm(1)
    lagn = lagrangian_evaluator(norm1)
    n = 33
    h = 1.0 / (n - 1)
    x = np.linspace(0.0, 1.0, n)
    u = ScalarField(-np.abs(x - 0.5), (h,), (0.0,))
    lad = h * np.array([1.0, 2.0, 4.0])
    delta = np.abs(x - 0.5)
    delta[n // 2] = 1.0
    sp = s_plus(u, lagn, lad, 2.0, delta=delta)
    chk = increasing_slope_check(u, (n // 2,), 2 * h, lagn, 2.0, sp, tol=0.05)
    assert chk.ok


def test_ladder_slopes_shared():
    u = field2(lambda X, Y: 0.3 * X)
    sd = ladder_slopes(u, LAG2, LADDER, RADIUS)
    sp1 = s_plus(u, LAG2, LADDER, RADIUS)
    sp2 = s_plus(u, LAG2, LADDER, RADIUS, slopes_data=sd)
    assert np.array_equal(sp1.values, sp2.values)


def test_cone_table_and_lipschitz_bound():
    tab = cone_table(QUAD2, np.geomspace(0.01, 10.0, 40))
    u = field2(lambda X, Y: 0.3 * X + 0.1 * Y)
    A = lipschitz_from_cones(u, 0.25, tab)
    # K_k at the first level with M_k >= osc/R; for the quadratic family
    # M_k = K_k = sqrt(2k) so A is about osc/R
    assert u.osc() / 0.25 <= A <= 2.0 * u.osc() / 0.25


def test_gradient_cone_equivalence_consistent():
    k = 1.0
    cd = cone_data(QUAD2, k)
    good = field2(lambda X, Y: 0.3 * X + 0.1 * Y)  # H(Du) = 0.05 <= 1
    rep = gradient_cone_equivalence(good, cd, QUAD2)
    assert rep.chord_holds and rep.gradient_holds and rep.consistent
    steep = field2(lambda X, Y: 3.0 * X)  # H(Du) = 4.5 > 1
    rep = gradient_cone_equivalence(steep, cd, QUAD2)
    assert not rep.chord_holds and not rep.gradient_holds and rep.consistent
