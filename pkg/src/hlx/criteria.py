"""Slope fields and the convexity / cone-comparison criteria.

S+ u(x) is the upper right derivative of t -> T^t u(x) at t = 0,
estimated on a short geometric ladder of flow times.  The three
criteria checked here (convexity of the flow in t, its pointwise
refinement with an upper-semicontinuity surrogate, and comparison with
cones from above) are equivalent characterizations of absolutely
subminimizing fields; the checkers are falsifiers with explicit
tolerances, not proofs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hlx.errors import InputError, LocalityError, ResolutionError
from hlx.fields import ScalarField
from hlx.hopflax import flow_argmax, flow_params, flow_up

__all__ = [
    "SPlusField",
    "default_ladder",
    "s_plus",
    "ConvexityReport",
    "check_convexity_criterion",
    "PointwiseReport",
    "check_pointwise_criterion",
    "ConeComparisonReport",
    "check_cone_comparison_above",
    "ConeTable",
    "cone_table",
    "lipschitz_from_cones",
    "GradientConeReport",
    "gradient_cone_equivalence",
    "SlopeCheck",
    "increasing_slope_check",
    "EquivalenceReport",
    "check_equivalences",
]


def default_ladder(t_max, npts=8, lo_div=64.0, hi_div=2.0):
    """Geometric ladder of flow times from t_max/64 to t_max/2."""
    return np.geomspace(t_max / lo_div, t_max / hi_div, npts)


@dataclass(frozen=True)
class SPlusField:
    """Per-node estimate of S+ u.

    ``slopes[i]`` holds (T^{t_i} u - u)/t_i; ``approximate`` marks nodes
    where the per-node convexity check failed and the estimate fell back
    to extrapolating the two smallest ladder slopes toward t = 0.
    """

    values: np.ndarray
    ladder: np.ndarray
    slopes: np.ndarray
    approximate: np.ndarray
    valid: np.ndarray


def ladder_slopes(u, lag, ladder, radius, t_limit=None):
    """(T^t u - u)/t for every ladder time, plus the joint validity mask.

    The result triple can be passed to :func:`s_plus` and the criterion
    checkers as ``slopes_data`` to avoid recomputing the flows.
    """
    ladder = np.sort(np.asarray(ladder, dtype=float))
    if ladder.size == 0:
        raise InputError("empty flow-time ladder")
    slopes = np.empty((ladder.size,) + u.shape)
    valid = np.ones(u.shape, dtype=bool)
    for i, t in enumerate(ladder):
        fp = flow_params(u, lag, float(t), radius, t_limit=t_limit)
        slopes[i] = (flow_up(u, fp).values - u.values) / t
        valid &= fp.valid_mask(u.shape)
    return ladder, slopes, valid


def _ladder_slopes(u, lag, ladder, radius, t_limit, slopes_data=None):
    if slopes_data is not None:
        return slopes_data
    return ladder_slopes(u, lag, ladder, radius, t_limit=t_limit)


def _participation(ladder, delta, shape):
    """Rung-participation mask: rung i counts at x iff ladder[i] <= delta(x)."""
    if delta is None:
        return np.ones((ladder.size,) + shape, dtype=bool)
    delta = np.asarray(delta, dtype=float)
    lad = ladder.reshape((ladder.size,) + (1,) * len(shape))
    return lad <= delta[None]


def _convex_mask(ladder, slopes, u, tol, delta=None):
    """Nodes where t -> T^t u(x) passes both convexity surrogates.

    The exact anchor phi(0) = u joins the ladder as rung zero, so the
    first second difference is noise-free on one leg.  Plain second
    differences require the ladder to be midpoint-admissible
    (t_i <= (t_{i-1} + t_{i+1})/2, true for geometric ladders); slope
    monotonicity from t = 0 is checked as well.  ``delta`` caps the
    usable flow times per node (the short interval of the criterion is
    node dependent); rungs above the cap are skipped.
    """
    lad0 = np.concatenate([[0.0], ladder])
    mid_bad = lad0[1:-1] > 0.5 * (lad0[:-2] + lad0[2:]) + 1e-12
    if np.any(mid_bad):
        raise InputError(
            "ladder not midpoint-admissible for plain second differences"
        )
    phi = slopes * ladder.reshape((ladder.size,) + (1,) * u.ndim)
    phi = np.concatenate([np.zeros((1,) + u.shape), phi], axis=0)
    part = np.concatenate(
        [
            np.ones((1,) + u.shape, dtype=bool),
            _participation(ladder, delta, u.shape),
        ],
        axis=0,
    )
    d2 = phi[2:] - 2.0 * phi[1:-1] + phi[:-2]
    ok = np.all((d2 >= -tol) | ~part[2:], axis=0)
    # slope monotonicity along the ladder (difference quotients from 0)
    ok &= np.all((np.diff(slopes, axis=0) >= -tol) | ~part[2:], axis=0)
    return ok, d2


def s_plus(u: ScalarField, lag, ladder, radius, t_limit=None, conv_tol=1e-8,
           delta=None, slopes_data=None):
    """Estimate S+ u over the flow-time ladder.

    At nodes passing the convexity check the estimate is the minimum
    participating ladder slope (the slope is nondecreasing in t there);
    elsewhere the two smallest ladder slopes are extrapolated linearly
    to t = 0 and the node is flagged approximate.  ``delta`` caps the
    usable flow times per node; nodes with no rung below the cap fall
    back to the smallest-rung slope.
    """
    ladder, slopes, valid = _ladder_slopes(u, lag, ladder, radius, t_limit,
                                           slopes_data=slopes_data)
    convex, _ = _convex_mask(ladder, slopes, u, conv_tol, delta=delta)
    part = _participation(ladder, delta, u.shape)
    npart = np.sum(part, axis=0)
    vmin = np.min(np.where(part, slopes, np.inf), axis=0)
    if ladder.size >= 2:
        t1, t2 = ladder[0], ladder[1]
        extrap = (t2 * slopes[0] - t1 * slopes[1]) / (t2 - t1)
    else:
        extrap = slopes[0]
    values = np.where(convex & (npart > 0), vmin, extrap)
    values = np.where(npart > 0, values, slopes[0])
    approximate = ~(convex & (npart > 0))
    return SPlusField(
        values=values,
        ladder=ladder,
        slopes=slopes,
        approximate=approximate,
        valid=valid,
    )


@dataclass
class ConvexityReport:
    pass_mask: np.ndarray
    checked: np.ndarray
    worst_second_diff: float
    witnesses: list = field(default_factory=list)

    @property
    def ok(self):
        return bool(np.all(self.pass_mask[self.checked]))


def check_convexity_criterion(
    u: ScalarField, lag, ladder, radius, V=None, t_limit=None, tol=1e-8,
    delta=None, slopes_data=None,
):
    """Second differences of t -> T^t u(x) over the ladder, per node.

    A node passes when every second difference is >= -tol and the
    difference quotients are nondecreasing.  ``V`` restricts the checked
    node set (defaults to all stencil-valid nodes); ``delta`` caps the
    usable flow times per node.
    """
    ladder, slopes, valid = _ladder_slopes(u, lag, ladder, radius, t_limit,
                                           slopes_data=slopes_data)
    ok, d2 = _convex_mask(ladder, slopes, u, tol, delta=delta)
    checked = valid if V is None else (valid & V)
    worst = float(np.min(d2[:, checked])) if np.any(checked) else 0.0
    rep = ConvexityReport(pass_mask=ok, checked=checked, worst_second_diff=worst)
    bad = checked & ~ok
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        rep.witnesses.append((idx, worst))
    return rep


@dataclass
class PointwiseReport:
    convexity: ConvexityReport
    sp: SPlusField
    usc_fail: np.ndarray
    witnesses: list = field(default_factory=list)

    @property
    def ok(self):
        return self.convexity.ok and not bool(np.any(self.usc_fail))


def check_pointwise_criterion(
    u: ScalarField,
    lag,
    ladder,
    radius,
    V=None,
    t_limit=None,
    tol=1e-8,
    usc_margin=0.1,
    delta=None,
    slopes_data=None,
):
    """Per-node convexity plus an upper-semicontinuity surrogate for S+.

    The usc surrogate requires S+(x) >= max over the 3^n neighborhood of
    S+ minus ``usc_margin`` (the margin bundles usc_tol and the grid
    modulus); drops sharper than the margin are witnessed.
    """
    from scipy.ndimage import maximum_filter

    conv = check_convexity_criterion(
        u, lag, ladder, radius, V=V, t_limit=t_limit, tol=tol, delta=delta,
        slopes_data=slopes_data,
    )
    sp = s_plus(u, lag, ladder, radius, t_limit=t_limit, conv_tol=tol,
                delta=delta, slopes_data=slopes_data)
    neigh_max = maximum_filter(sp.values, size=3, mode="nearest")
    usc_fail = (sp.values < neigh_max - usc_margin) & conv.checked
    rep = PointwiseReport(convexity=conv, sp=sp, usc_fail=usc_fail)
    if np.any(usc_fail):
        idx = tuple(int(i) for i in np.argwhere(usc_fail)[0])
        rep.witnesses.append(
            (idx, float(sp.values[idx]), float(neigh_max[idx]))
        )
    return rep


@dataclass
class ConeComparisonReport:
    n_checked: int
    n_failed: int
    worst_violation: float
    witnesses: list = field(default_factory=list)

    @property
    def ok(self):
        return self.n_failed == 0


def _cone_offset_table(cone, u: ScalarField):
    """Cone values on the lattice of all node-to-node offsets."""
    shape = u.shape
    axes = [
        u.spacing[d] * np.arange(-(shape[d] - 1), shape[d])
        for d in range(u.ndim)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return cone.value(np.stack(mesh, axis=-1))


def _boxes(shape, sides, stride_div=2):
    """Grid-aligned index boxes with the given side lengths (in cells)."""
    out = []
    for side in sides:
        stride = max(side // stride_div, 1)
        for i0 in range(0, shape[0] - side, stride):
            if len(shape) == 1:
                out.append(((i0, i0 + side),))
            else:
                for j0 in range(0, shape[1] - side, stride):
                    out.append(((i0, i0 + side), (j0, j0 + side)))
    return out


def _vertices(shape, box, stride):
    """Coarse-lattice nodes outside the (closed) box."""
    grids = [np.arange(0, n, stride) for n in shape]
    mesh = np.meshgrid(*grids, indexing="ij")
    pts = np.stack(mesh, axis=-1).reshape(-1, len(shape))
    inside = np.ones(len(pts), dtype=bool)
    for d, (lo, hi) in enumerate(box):
        inside &= (pts[:, d] >= lo) & (pts[:, d] <= hi)
    return pts[~inside]


def check_cone_comparison_above(
    u: ScalarField,
    cones,
    sides_cells=(4, 8, 16),
    vertex_stride=4,
    tol=1e-8,
    below=True,
):
    """Comparison with cones from above (and below) on box subdomains.

    For each cone level k, box V, and vertex x0 outside V: the max over
    the closed box of u - C_k(. - x0) must be attained on the box rim up
    to ``tol``.  With ``below`` the dual test runs on u + C_k(x0 - .)
    and min.  ``cones`` is an iterable of ConeData.
    """
    shape = u.shape
    rep = ConeComparisonReport(n_checked=0, n_failed=0, worst_violation=0.0)
    boxes = _boxes(shape, [s for s in sides_cells if s < min(shape) - 1])
    if not boxes:
        raise InputError("grid too small for any test subdomain")
    center = tuple(n - 1 for n in shape)
    for cone in cones:
        tab = _cone_offset_table(cone, u)
        for box in boxes:
            for x0 in _vertices(shape, box, vertex_stride):
                sl_above = tuple(
                    slice(lo - int(a) + c, hi - int(a) + c + 1)
                    for (lo, hi), a, c in zip(box, x0, center)
                )
                sl_below = tuple(
                    slice(int(a) - hi + c, int(a) - lo + c + 1)
                    for (lo, hi), a, c in zip(box, x0, center)
                )
                usub = u.values[tuple(slice(lo, hi + 1) for lo, hi in box)]
                diff = usub - tab[sl_above]
                viol = _rim_violation(diff, sign=+1)
                rep.n_checked += 1
                if viol > tol:
                    rep.n_failed += 1
                    if viol > rep.worst_violation:
                        rep.worst_violation = viol
                        rep.witnesses = [(cone.k, box, tuple(int(a) for a in x0), viol)]
                if below:
                    s = usub + tab[sl_below][_flip(u.ndim)]
                    viol = _rim_violation(s, sign=-1)
                    rep.n_checked += 1
                    if viol > tol:
                        rep.n_failed += 1
                        if viol > rep.worst_violation:
                            rep.worst_violation = viol
                            rep.witnesses = [
                                (cone.k, box, tuple(int(a) for a in x0), -viol)
                            ]
    return rep


def _flip(ndim):
    return tuple(slice(None, None, -1) for _ in range(ndim))


def _rim_violation(block, sign):
    """Interior max minus rim max (sign=+1) or rim min minus interior
    min (sign=-1); positive means the extremum hides in the interior."""
    if block.ndim == 1:
        inner = block[1:-1]
        rim = np.concatenate([block[:1], block[-1:]])
    else:
        inner = block[1:-1, 1:-1]
        rim_mask = np.ones(block.shape, dtype=bool)
        rim_mask[1:-1, 1:-1] = False
        rim = block[rim_mask]
    if inner.size == 0:
        return 0.0
    if sign > 0:
        return float(np.max(inner) - np.max(rim))
    return float(np.min(rim) - np.min(inner))


@dataclass(frozen=True)
class ConeTable:
    """Cone constants tabulated over a k ladder."""

    ks: np.ndarray
    M: np.ndarray
    K: np.ndarray


def cone_table(H, ks, ndirs=256):
    from hlx.geometry import cone_data

    ks = np.asarray(ks, dtype=float)
    cones = [cone_data(H, float(k), ndirs=ndirs) for k in ks]
    return ConeTable(
        ks=ks,
        M=np.array([c.M_k for c in cones]),
        K=np.array([c.K_k for c in cones]),
    )


def lipschitz_from_cones(u: ScalarField, R, table: ConeTable):
    """Lipschitz bound on the R-interior: A_R = K_k at the smallest
    tabulated k with osc(u)/R <= M_k."""
    if R <= 0:
        raise InputError("R must be positive")
    target = u.osc() / R
    hit = np.flatnonzero(table.M >= target)
    if hit.size == 0:
        raise ResolutionError("cone table exhausted; extend the k ladder")
    return float(table.K[hit[0]])


@dataclass
class GradientConeReport:
    chord_holds: bool
    gradient_holds: bool
    worst_chord: float
    worst_gradient: float

    @property
    def consistent(self):
        return self.chord_holds == self.gradient_holds


def gradient_cone_equivalence(
    u: ScalarField, cone, H, chord_tol=1e-8, grad_tol=None, max_chord_cells=8
):
    """Two-sided check of the gradient-bound / cone-bound equivalence.

    Direction A tests u(x) - u(y) <= C_k(x - y) on axis and diagonal
    chords up to ``max_chord_cells``; direction B tests the one-sided
    difference surrogate of H(Du) <= k at interior nodes.
    """
    h = max(u.spacing)
    if grad_tol is None:
        grad_tol = 10.0 * h * (1.0 + cone.K_k)
    worst_a = -np.inf
    dirs = [(1,)] if u.ndim == 1 else [(1, 0), (0, 1), (1, 1), (1, -1)]
    from hlx.hopflax import _slices

    for d in dirs:
        for m in range(1, max_chord_cells + 1):
            off = tuple(m * c for c in d)
            dst, src = _slices(off, u.shape)
            delta = np.asarray(off, float) * np.asarray(u.spacing)
            # chord x -> y with y - x = delta: test both orientations
            ck_f = float(cone.value(-delta))
            ck_b = float(cone.value(delta))
            gap_f = np.max(u.values[dst] - u.values[src]) - ck_f
            gap_b = np.max(u.values[src] - u.values[dst]) - ck_b
            worst_a = max(worst_a, float(gap_f), float(gap_b))
    chord_holds = worst_a <= chord_tol

    grads = _one_sided_gradients(u)
    hvals = np.max(H(grads), axis=0)
    inner = tuple(slice(1, -1) for _ in range(u.ndim))
    worst_b = float(np.max(hvals[inner]) - cone.k)
    gradient_holds = worst_b <= grad_tol
    return GradientConeReport(
        chord_holds=bool(chord_holds),
        gradient_holds=bool(gradient_holds),
        worst_chord=float(worst_a),
        worst_gradient=worst_b,
    )


def _one_sided_gradients(u: ScalarField):
    """All forward/backward difference-quotient gradients, stacked.

    Shape (2^n, *shape, n); edge rows reuse the inward quotient.
    """
    quots = []
    for d in range(u.ndim):
        fwd = np.empty(u.shape)
        bwd = np.empty(u.shape)
        sl_f = [slice(None)] * u.ndim
        sl_b = [slice(None)] * u.ndim
        sl_f[d] = slice(1, None)
        sl_b[d] = slice(0, -1)
        dv = (u.values[tuple(sl_f)] - u.values[tuple(sl_b)]) / u.spacing[d]
        fwd[tuple(sl_b)] = dv
        sl_last = [slice(None)] * u.ndim
        sl_last[d] = -1
        sl_prev = [slice(None)] * u.ndim
        sl_prev[d] = -2
        fwd[tuple(sl_last)] = fwd[tuple(sl_prev)]
        bwd[tuple(sl_f)] = dv
        sl_first = [slice(None)] * u.ndim
        sl_first[d] = 0
        sl_second = [slice(None)] * u.ndim
        sl_second[d] = 1
        bwd[tuple(sl_first)] = bwd[tuple(sl_second)]
        quots.append((fwd, bwd))
    combos = []
    for bits in range(2**u.ndim):
        g = [quots[d][(bits >> d) & 1] for d in range(u.ndim)]
        combos.append(np.stack(g, axis=-1))
    return np.stack(combos, axis=0)


@dataclass
class SlopeCheck:
    slope: float
    sp_at_argmax: float
    argmax: tuple
    ok: bool


def increasing_slope_check(
    u: ScalarField, x_idx, t, lag, radius, sp: SPlusField, tol=0.05, t_limit=None
):
    """Verify (T^t u(x) - u(x))/t <= S+ u(y) + tol at the flow argmax y."""
    fp = flow_params(u, lag, t, radius, t_limit=t_limit)
    up, arg = flow_argmax(u, fp)
    x_idx = tuple(int(i) for i in np.atleast_1d(x_idx))
    y_flat = int(arg[x_idx])
    if y_flat < 0:
        raise LocalityError("flow argmax undefined at the requested node")
    y_idx = tuple(int(i) for i in np.unravel_index(y_flat, u.shape))
    if not sp.valid[y_idx]:
        raise LocalityError("flow argmax fell on a flow-invalid node")
    slope = float((up.values[x_idx] - u.values[x_idx]) / t)
    spy = float(sp.values[y_idx])
    return SlopeCheck(
        slope=slope, sp_at_argmax=spy, argmax=y_idx, ok=slope <= spy + tol
    )


@dataclass
class EquivalenceReport:
    cone_comparison: ConeComparisonReport
    convexity: ConvexityReport
    pointwise: PointwiseReport

    @property
    def verdicts(self):
        return (self.cone_comparison.ok, self.convexity.ok, self.pointwise.ok)

    @property
    def agree(self):
        v = self.verdicts
        return all(v) or not any(v)


def check_equivalences(
    u: ScalarField,
    lag,
    cones,
    ladder,
    radius,
    V=None,
    t_limit=None,
    conv_tol=1e-8,
    cone_tol=1e-8,
    usc_margin=0.1,
):
    """Run all three criteria and report whether the verdicts agree.

    The flow slopes are computed once and shared between the convexity
    and pointwise checks; ``V`` restricts the checked node set for both.
    """
    sd = ladder_slopes(u, lag, ladder, radius, t_limit=t_limit)
    cc = check_cone_comparison_above(u, cones, tol=cone_tol)
    cx = check_convexity_criterion(
        u, lag, ladder, radius, V=V, t_limit=t_limit, tol=conv_tol, slopes_data=sd
    )
    pw = check_pointwise_criterion(
        u, lag, ladder, radius, V=V, t_limit=t_limit, tol=conv_tol,
        usc_margin=usc_margin, slopes_data=sd,
    )
    return EquivalenceReport(cone_comparison=cc, convexity=cx, pointwise=pw)
