"""Acceptance suite: one test per top-level guarantee.

Each test prints a single pass/fail line so the suite doubles as a
human-readable report when run with -s.
"""

import time

import numpy as np

from hlx.aronsson import subsolution_residual
from hlx.criteria import check_equivalences, check_pointwise_criterion, s_plus
from hlx.errors import InputError
from hlx.fields import ScalarField
from hlx.geometry import cone_data
from hlx.hamiltonian import (
    HamiltonianModel,
    conjugate_1d,
    conjugate_1d_brute,
    lagrangian_evaluator,
)
from hlx.hopflax import flow_params, flow_up, semigroup_defect, verify_flow_laws
from hlx.patching import patch, prepatch_bound
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
NORM1 = HamiltonianModel.norm(1)
LAGN1 = lagrangian_evaluator(NORM1)
NORM2 = HamiltonianModel.norm(2)
LAGN2 = lagrangian_evaluator(NORM2)


def report(num, name, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    print(f"criterion {num} ({name}): {tag} {detail}".rstrip())
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def square(n, fn, lo=0.0, hi=1.0):
    h = (hi - lo) / (n - 1)
    ax = np.linspace(lo, hi, n)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return ScalarField(fn(X, Y), (h, h), (lo, lo))


def exemplar(X, Y, c=0.5):
    return np.abs(X - c) ** (4.0 / 3.0) - np.abs(Y - c) ** (4.0 / 3.0)


def solve_exemplar(h):
    # axis-avoiding square [0.55, 0.925]: side 12/32, kinks at 0.5 excluded
    n = int(round(0.375 / h)) + 1
    g = square(n, exemplar, lo=0.55, hi=0.55 + 0.375)
    cfg = SolveConfig(t=1.6 * h, radius=0.09, tol=1e-10, max_iters=20000)
    u, rep = solve_dirichlet(QUAD2, g, cfg, lag=LAG2)
    return g, u, rep


# 1. Legendre round trip ------------------------------------------------

def test_criterion_1_legendre_roundtrip():
    t0 = time.perf_counter()
    # 1D sections of {|p|^2/2, (p1^2 + 4 p2^2)/2, |p|}
    sections = [lambda p: 0.5 * p * p, lambda p: 2.0 * p * p, np.abs]
    ok = True
    detail = []
    for fn in sections:
        for n in (257, 1025, 4097):
            x = np.linspace(-4.0, 4.0, n)
            h = x[1] - x[0]
            # dual grid wide enough that no maximizer leaves it
            s = np.arange(-4 * (n - 1), 4 * (n - 1) + 1) * h
            back = conjugate_1d(s, conjugate_1d(x, fn(x), s), x)
            err = float(np.max(np.abs(back - fn(x))))
            ok &= err <= 3 * h
        x = np.linspace(-4.0, 4.0, 257)
        ok &= np.array_equal(
            conjugate_1d(x, fn(x), x), conjugate_1d_brute(x, fn(x), x)
        )
    x = np.linspace(-4.0, 4.0, 4096)
    f = 0.5 * x * x
    t_fast = np.inf
    t_slow = np.inf
    for _ in range(3):
        s = time.perf_counter()
        conjugate_1d(x, f, x)
        t_fast = min(t_fast, time.perf_counter() - s)
        s = time.perf_counter()
        conjugate_1d_brute(x, f, x)
        t_slow = min(t_slow, time.perf_counter() - s)
    speedup = t_slow / t_fast
    ok &= speedup >= 20.0
    detail.append(f"speedup {speedup:.0f}x")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 5.0
    report(1, "legendre round trip", ok, " ".join(detail) + f" [{elapsed:.1f}s]")


# 2. Cone flow identity -------------------------------------------------

def test_criterion_2_cone_flow_identity():
    t0 = time.perf_counter()
    n = 65
    h = 1.0 / (n - 1)
    ax = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    offs = np.stack([X - 0.5, Y - 0.5], axis=-1)
    worst = 0.0
    ok = True
    for H, lag in ((QUAD2, LAG2), (NORM2, LAGN2)):
        for k in (0.5, 1.0, 2.0):
            cd = cone_data(H, k)
            u = ScalarField(np.asarray(cd.value(offs), dtype=float), (h, h),
                            (0.0, 0.0))
            for t in (0.05, 0.1):
                fp = flow_params(u, lag, t, t * cd.K_k + 4 * h)
                up = flow_up(u, fp)
                valid = fp.valid_mask(u.shape)
                err = float(np.max(np.abs(up.values - (u.values + k * t))[valid]))
                ok &= err <= 5 * cd.K_k * h
                worst = max(worst, err / (cd.K_k * h))
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10.0
    report(2, "cone flow identity", ok,
           f"worst err {worst:.2f} K_k h [{elapsed:.1f}s]")


# 3. Exact discrete flow laws -------------------------------------------

def test_criterion_3_flow_laws():
    from scipy.ndimage import gaussian_filter

    t0 = time.perf_counter()
    n = 17
    h = 1.0 / (n - 1)
    violations = 0
    worst_defect = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        vals = gaussian_filter(rng.standard_normal((n, n)), sigma=3.0,
                               mode="nearest")
        u = ScalarField(vals, (h, h), (0.0, 0.0))
        v = u.with_values(u.values + np.abs(rng.standard_normal(u.shape)))
        fp = flow_params(u, LAG2, 0.05, 0.2)
        rep = verify_flow_laws(u, fp, v=v)
        violations += (rep.chain_violations + rep.constant_violations
                       + rep.sandwich_violations + (0 if rep.ok else 1))
        defect, valid = semigroup_defect(u, LAG2, 0.05, 0.05, 0.2)
        if valid.any():
            worst_defect = max(worst_defect, float(np.nanmax(defect.values)))
    ok = violations == 0 and worst_defect <= 3 * h
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30.0
    report(3, "exact flow laws", ok,
           f"violations {violations}, defect {worst_defect:.3g} [{elapsed:.1f}s]")


# 4. Equivalence suite --------------------------------------------------

def test_criterion_4_equivalences():
    t0 = time.perf_counter()
    n = 33
    h = 1.0 / (n - 1)
    ladder = h * np.array([3.0, 6.0, 12.0])
    cones = [cone_data(QUAD2, k) for k in (0.0625, 0.25, 1.0)]
    rng = np.random.default_rng(42)
    cx, cy = rng.uniform(0.4, 0.6, size=2)
    cd1 = cone_data(QUAD2, 0.25)
    fields = {
        "affine": square(n, lambda X, Y: 0.3 * X + 0.1 * Y),
        "cone": square(n, lambda X, Y: np.asarray(
            cd1.value(np.stack([X - 0.5, Y - 0.5], axis=-1)))),
        # half amplitude keeps the largest rung's reach inside the
        # checked margin (scalar multiples stay absolutely minimizing)
        "exemplar": square(n, lambda X, Y: 0.5 * exemplar(X, Y, c=-0.25)),
        "convex": square(n, lambda X, Y: 5.0 * ((X - cx) ** 2 + (Y - cy) ** 2)),
        "concave": square(n, lambda X, Y: -5.0 * ((X - cx) ** 2 + (Y - cy) ** 2)),
    }
    ok = True
    verdicts = {}
    for name, u in fields.items():
        V = u.boundary_distance() > 0.35
        rep = check_equivalences(u, LAG2, cones, ladder, 2.0, V=V,
                                 conv_tol=0.006, cone_tol=5 * h, usc_margin=0.2)
        ok &= rep.agree
        verdicts[name] = rep.verdicts
    ok &= all(all(verdicts[k]) for k in ("affine", "cone", "exemplar"))
    # strongly curved paraboloids are not absolutely minimizing either way
    ok &= not any(verdicts["convex"]) and not any(verdicts["concave"])

    # -|x - 1/2| with H = |p|: per-node convexity holds, the usc
    # surrogate fails exactly at the kink, and S+ is the 0/1 pattern
    x = np.linspace(0.0, 1.0, n)
    u1 = ScalarField(-np.abs(x - 0.5), (h,), (0.0,))
    lad1 = h * np.array([1.0, 2.0, 4.0])
    kink = n // 2
    delta = np.abs(x - 0.5)
    delta[kink] = 1.0
    sp = s_plus(u1, LAGN1, lad1, 2.0, delta=delta)
    V1 = u1.boundary_distance() > 0.3
    off = V1 & (np.arange(n) != kink)
    ok &= abs(sp.values[kink]) <= 0.05
    ok &= float(np.max(np.abs(sp.values[off] - 1.0))) <= 0.05
    prep = check_pointwise_criterion(u1, LAGN1, lad1, 2.0, V=V1, tol=0.006,
                                     usc_margin=0.2, delta=delta)
    ok &= prep.convexity.ok and prep.usc_fail[kink] and prep.usc_fail.sum() == 1
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60.0
    report(4, "equivalence suite", ok,
           f"verdicts {[(k, v[0]) for k, v in verdicts.items()]} [{elapsed:.1f}s]")


# 5. Solver exactness and uniqueness ------------------------------------

def test_criterion_5_solver():
    t0 = time.perf_counter()
    tol = 1e-8
    ok = True
    # affine recovery, 1D and 2D, quadratic and norm Hamiltonians
    n = 33
    h = 1.0 / (n - 1)
    x = np.linspace(0.0, 1.0, n)
    for H, lag in ((QUAD1, LAG1), (NORM1, LAGN1)):
        g = ScalarField(0.7 * x, (h,), (0.0,))
        u, rep = solve_dirichlet(H, g, SolveConfig(t=0.05, radius=2.5 * h),
                                 lag=lag)
        ok &= rep.converged and rep.residual <= tol
        ok &= float(np.max(np.abs(u.values - g.values))) <= 1e-4
    for H, lag in ((QUAD2, LAG2), (NORM2, LAGN2)):
        g = square(n, lambda X, Y: 0.3 * X + 0.7 * Y)
        u, rep = solve_dirichlet(H, g, SolveConfig(t=0.05, radius=2.5 * h),
                                 lag=lag)
        ok &= rep.converged and rep.residual <= tol
        ok &= float(np.max(np.abs(u.values - g.values))) <= 1e-4
    # uniqueness: three initializations on nonaffine data
    g = square(n, lambda X, Y: 0.2 * np.sin(2 * np.pi * X) + 0.1 * Y)
    sols = []
    for init in ("min", "max", "random"):
        cfg = SolveConfig(t=0.1, radius=3.5 * h, tol=1e-12, max_iters=5000,
                          init=init, seed=11)
        u, rep = solve_dirichlet(NORM2, g, cfg, lag=LAGN2)
        ok &= rep.converged
        sols.append(u)
    pair = max(float(np.max(np.abs(a.values - b.values)))
               for a in sols for b in sols)
    ok &= pair <= 10 * tol
    gaps = [comparison_gap(a, b) for a in sols for b in sols]
    ok &= max(abs(gv) for gv in gaps) <= 10 * tol
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    report(5, "solver exactness and uniqueness", ok,
           f"pairwise {pair:.2g} [{elapsed:.1f}s]")


# 6. Infinity-harmonic exemplar -----------------------------------------

def test_criterion_6_exemplar_convergence():
    t0 = time.perf_counter()
    errs = []
    ok = True
    for h in (1.0 / 32, 1.0 / 64):
        g, u, rep = solve_exemplar(h)
        ok &= rep.converged
        err = float(np.max(np.abs(u.values - g.values)))
        ok &= err <= 10.0 * h ** (2.0 / 3.0)
        errs.append(err)
    ok &= errs[1] < errs[0]
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    report(6, "infinity-harmonic exemplar", ok,
           f"errors {errs[0]:.2e} -> {errs[1]:.2e} [{elapsed:.1f}s]")


# 7. Patching claims ----------------------------------------------------

def test_criterion_7_patching():
    t0 = time.perf_counter()
    ok = True
    gammas = (0.4, 0.2, 0.1, 0.05)
    # 2D: solver output of the exemplar problem
    g, u6, rep6 = solve_exemplar(1.0 / 32)
    ok &= rep6.converged
    h = max(u6.spacing)
    diam = 0.375 * np.sqrt(2.0)
    prev = np.inf
    for gamma in gammas:
        cd = cone_data(QUAD2, gamma)
        base = h / cd.M_k
        ladder = base * np.array([2.0, 4.0, 8.0])
        sp = s_plus(u6, LAG2, ladder, 2.0)
        res = patch(u6, gamma, cd, sp.values, lag=LAG2, ladder=ladder,
                    radius=2.0, flow_t=4 * base)
        bok, below = res.claims["below_u"]
        ok &= bok and below <= 0.0
        eok, bdry = res.claims["boundary_equal"]
        ok &= eok and bdry == 0.0
        ok &= res.claims["sp_at_least_gamma"][0]
        drop = float(np.max(u6.values - res.u_gamma.values))
        ok &= drop <= prev + 1e-15
        # eps with prepatch level gamma: both unit cone values under
        # eps / (2 diam), so eps = 2 diam max C_gamma(+-q)
        q = np.array([1.0, 0.0])
        eps = 2.0 * diam * max(float(cd.value(q)), float(cd.value(-q)))
        ok &= 0.8 * gamma <= prepatch_bound(QUAD2, diam, eps) <= 1.05 * gamma
        ok &= drop <= eps
        prev = drop
    # 1D closed form: u = 0 patches to the tent -sqrt(2 gamma) min(x, 1-x)
    n = 33
    h1 = 1.0 / (n - 1)
    z = ScalarField(np.zeros(n), (h1,), (0.0,))
    xs = np.linspace(0.0, 1.0, n)
    worst1d = 0.0
    for gamma in gammas:
        cd = cone_data(QUAD1, gamma)
        base = h1 / cd.M_k
        ladder = base * np.array([2.0, 4.0, 8.0])
        sp = s_plus(z, LAG1, ladder, 2.0)
        res = patch(z, gamma, cd, sp.values, lag=LAG1, ladder=ladder,
                    radius=2.0, flow_t=4 * base)
        expect = -np.sqrt(2.0 * gamma) * np.minimum(xs, 1.0 - xs)
        worst1d = max(worst1d,
                      float(np.max(np.abs(res.u_gamma.values - expect))))
    ok &= worst1d <= 3 * h1
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60.0
    report(7, "patching claims", ok,
           f"1D closed-form err {worst1d:.2e} [{elapsed:.1f}s]")


# 8. Stationary-point diagnostic ----------------------------------------

def test_criterion_8_stationary_diagnostic():
    t0 = time.perf_counter()
    ok = True
    g, u, rep = solve_exemplar(1.0 / 64)
    ok &= rep.converged
    res = stationary_point_search(u, u, 0.025, 3.0 / 64, LAG2, tol=2e-3)
    ok &= res.kind == "certificate"
    # a strict interior bump violates the sub-inequality precondition
    bump = square(33, lambda X, Y: np.exp(-((X - 0.5) ** 2
                                            + (Y - 0.5) ** 2) / 0.02))
    h = max(bump.spacing)
    rejected = False
    try:
        stationary_point_search(bump, bump, 0.05, 3 * h, LAG2, tol=1e-6)
    except InputError:
        rejected = True
    ok &= rejected
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30.0
    report(8, "stationary-point diagnostic", ok,
           f"kind {res.kind}, bump rejected {rejected} [{elapsed:.1f}s]")


# 9. Aronsson residual --------------------------------------------------

def test_criterion_9_aronsson_residual():
    t0 = time.perf_counter()
    ok = True
    n = 65
    u = square(n, lambda X, Y: np.abs(X) ** (4 / 3) - np.abs(Y) ** (4 / 3),
               lo=0.25, hi=1.0)
    h = max(u.spacing)
    rho = 4 * h
    idx = np.linspace(5, n - 6, 10).astype(int)
    worst = np.inf
    for i in idx:
        for j in idx:
            r, _ = subsolution_residual(u, (int(i), int(j)), rho, QUAD2)
            worst = min(worst, r)
    bound = -10.0 * (rho + h * h / (rho * rho))
    ok &= worst >= bound
    v = square(n, lambda X, Y: -(X * X + Y * Y), lo=-1.0, hi=1.0)
    hv = max(v.spacing)
    coords = v.coords()
    hi = -np.inf
    for i in idx:
        for j in idx:
            if np.linalg.norm(coords[int(i), int(j)]) < 0.5:
                continue
            r, _ = subsolution_residual(v, (int(i), int(j)), 4 * hv, QUAD2)
            hi = max(hi, r)
    ok &= hi <= -0.5
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30.0
    report(9, "aronsson residual", ok,
           f"exemplar min {worst:.2g} >= {bound:.2g}, neg-square max {hi:.2g}"
           f" [{elapsed:.1f}s]")
