"""Convex Hamiltonians, their Lagrangians, and coercivity data.

A Hamiltonian here is a convex function H with H(0) = 0 = min H and a
bounded, interior-free zero set.  Four families are supported:

- ``quadratic``: H(p) = |A p|^2 / 2 for a nonsingular matrix A;
- ``power``: H(p) = |p|^m / m for an exponent m > 1;
- ``norm``: H(p) = ||p||, Euclidean by default or the gauge of a sampled
  unit ball;
- ``table``: H sampled on a box grid, evaluated by multilinear
  interpolation.

The Lagrangian L is the convex conjugate of H; it may take the value
+infinity, represented by the finite sentinel :data:`hlx.fields.BIG` with
saturating max/min semantics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from hlx.errors import EvaluationError, InputError, ResolutionError
from hlx.fields import BIG, BIG_CUT, is_big

__all__ = [
    "HamiltonianModel",
    "CoercivityProfile",
    "LagrangianEvaluator",
    "ValidationReport",
    "validate_hamiltonian",
    "lagrangian",
    "lagrangian_evaluator",
    "conjugate_1d",
    "conjugate_1d_brute",
    "conjugate_nd",
    "conjugate_nd_brute",
    "coercivity_profile",
    "t_zero",
]

_TIE_EPS = 1e-12


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HamiltonianModel:
    """A convex Hamiltonian from one of the supported analytic families,
    or a sampled table.

    Use the constructors :meth:`quadratic`, :meth:`power`, :meth:`norm`,
    :meth:`from_table` rather than filling fields by hand.
    """

    kind: str
    dim: int
    matrix: Optional[np.ndarray] = None
    exponent: Optional[float] = None
    ball_points: Optional[np.ndarray] = None
    table_axes: Optional[tuple] = None
    table_values: Optional[np.ndarray] = None
    pbox: tuple = None  # ((lo, hi), ...) evaluation domain per axis

    @staticmethod
    def quadratic(matrix, pbox_half=4.0):
        """H(p) = |A p|^2 / 2."""
        A = np.atleast_2d(np.asarray(matrix, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or abs(np.linalg.det(A)) < 1e-14:
            raise InputError("quadratic family needs a nonsingular square matrix")
        return HamiltonianModel(
            kind="quadratic", dim=n, matrix=A, pbox=_box(n, pbox_half)
        )

    @staticmethod
    def power(exponent, dim, pbox_half=4.0):
        """H(p) = |p|^m / m, m > 1."""
        m = float(exponent)
        if m <= 1.0:
            raise InputError("power family needs exponent > 1")
        return HamiltonianModel(
            kind="power", dim=dim, exponent=m, pbox=_box(dim, pbox_half)
        )

    @staticmethod
    def norm(dim, ball_points=None, pbox_half=4.0):
        """H(p) = ||p||; Euclidean unless a sampled unit ball is given.

        ``ball_points`` are boundary points of the unit ball, shape (m, dim);
        the gauge is evaluated by angular interpolation of their radii (2D)
        or from the two endpoint radii (1D).
        """
        pts = None
        if ball_points is not None:
            pts = np.atleast_2d(np.asarray(ball_points, dtype=float))
            if pts.shape[1] != dim:
                raise InputError("ball point dimension mismatch")
            if dim not in (1, 2):
                raise InputError("sampled-ball norms support dim 1 and 2 only")
        return HamiltonianModel(
            kind="norm", dim=dim, ball_points=pts, pbox=_box(dim, pbox_half)
        )

    @staticmethod
    def from_table(axes, values):
        """H sampled on a box grid; axes are 1D coordinate arrays."""
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        values = np.asarray(values, dtype=float)
        if values.shape != tuple(len(a) for a in axes):
            raise InputError("table shape does not match axes")
        for a in axes:
            if a[0] > 0.0 or a[-1] < 0.0:
                raise InputError("table domain box must contain the origin")
        pbox = tuple((float(a[0]), float(a[-1])) for a in axes)
        return HamiltonianModel(
            kind="table",
            dim=len(axes),
            table_axes=axes,
            table_values=values,
            pbox=pbox,
        )

    # -- evaluation ---------------------------------------------------------

    def __call__(self, p):
        """Evaluate H at points ``p`` of shape (..., dim)."""
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.dim:
            raise InputError(f"expected points of dimension {self.dim}")
        if self.kind == "quadratic":
            Ap = p @ self.matrix.T
            return 0.5 * np.sum(Ap * Ap, axis=-1)
        if self.kind == "power":
            r = np.linalg.norm(p, axis=-1)
            return r**self.exponent / self.exponent
        if self.kind == "norm":
            return self._gauge(p)
        if self.kind == "table":
            return self._interp_table(p)
        raise InputError(f"unknown Hamiltonian kind {self.kind!r}")

    def _gauge(self, p):
        r = np.linalg.norm(p, axis=-1)
        if self.ball_points is None:
            return r
        if self.dim == 1:
            rad_pos = float(np.max(self.ball_points[self.ball_points[:, 0] > 0]))
            rad_neg = float(-np.min(self.ball_points[self.ball_points[:, 0] < 0]))
            return np.where(p[..., 0] >= 0, p[..., 0] / rad_pos, -p[..., 0] / rad_neg)
        ang = np.arctan2(self.ball_points[:, 1], self.ball_points[:, 0])
        rad = np.linalg.norm(self.ball_points, axis=1)
        order = np.argsort(ang)
        ang_s, rad_s = ang[order], rad[order]
        # periodic wrap for interpolation
        ang_w = np.concatenate([ang_s, [ang_s[0] + 2 * np.pi]])
        rad_w = np.concatenate([rad_s, [rad_s[0]]])
        theta = np.arctan2(p[..., 1], p[..., 0])
        theta = np.where(theta < ang_w[0], theta + 2 * np.pi, theta)
        rho = np.interp(theta, ang_w, rad_w)
        return r / rho

    def _interp_table(self, p):
        from scipy.interpolate import RegularGridInterpolator

        itp = RegularGridInterpolator(
            self.table_axes, self.table_values, method="linear", bounds_error=False,
            fill_value=None,
        )
        return itp(p)

    def support_radius(self):
        """Radius of the largest inscribed ball of the evaluation box."""
        return min(min(-lo, hi) for lo, hi in self.pbox)

    def has_closed_lagrangian(self):
        return self.kind in ("quadratic", "power", "norm")

    def closed_lagrangian(self, q):
        """L(q) for analytic families (BIG sentinel where the sup diverges)."""
        q = np.asarray(q, dtype=float)
        if self.kind == "quadratic":
            B = self.matrix.T @ self.matrix
            Binv = np.linalg.inv(B)
            Bq = q @ Binv.T
            return 0.5 * np.sum(q * Bq, axis=-1)
        if self.kind == "power":
            m = self.exponent
            mc = m / (m - 1.0)
            r = np.linalg.norm(q, axis=-1)
            return r**mc / mc
        if self.kind == "norm":
            # support function of the unit ball at q, <= 1 <=> L = 0
            if self.ball_points is None:
                s = np.linalg.norm(q, axis=-1)
            else:
                s = np.max(q @ self.ball_points.T, axis=-1)
            return np.where(s <= 1.0 + 1e-12, 0.0, BIG)
        raise InputError("no closed-form Lagrangian for this kind")


def _box(n, half):
    return tuple((-float(half), float(half)) for _ in range(n))


def _sample_box(pbox, nper):
    axes = [np.linspace(lo, hi, nper) for lo, hi in pbox]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1), axes


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    """Pass/fail per structural condition, with witnesses for failures."""

    convex: bool
    zero_at_origin: bool
    zero_set_bounded: bool
    zero_set_empty_interior: bool
    witnesses: dict
    tol: float
    grid_step: float

    @property
    def ok(self):
        return (
            self.convex
            and self.zero_at_origin
            and self.zero_set_bounded
            and self.zero_set_empty_interior
        )


def validate_hamiltonian(H, tol=1e-9, nper=33, rng=None):
    """Sample-based validation of the structural conditions on H.

    Checks convexity (midpoint test over sampled pairs), H(0) = min = 0,
    boundedness of the zero set (no zero touching the sampling box edge),
    and empty interior of the zero set (no sampled ball of radius 2h on
    which H <= tol throughout).  The result is a sampled certificate, not
    a proof.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    for lo, hi in H.pbox:
        if lo > 0 or hi < 0:
            raise InputError("evaluation box must contain the origin")
    pts, axes = _sample_box(H.pbox, nper)
    vals = H(pts)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("H produced non-finite values on its domain box")
    witnesses = {}
    h = max((hi - lo) / (nper - 1) for lo, hi in H.pbox)

    # (ii) normalization
    h0 = float(np.asarray(H(np.zeros(H.dim))).reshape(-1)[0])
    zero_at_origin = abs(h0) <= tol and np.min(vals) >= -tol
    if not zero_at_origin:
        idx = np.unravel_index(np.argmin(vals), vals.shape)
        witnesses["zero_at_origin"] = (pts[idx], float(vals[idx]))

    # (i) convexity via random midpoint tests
    rng = np.random.default_rng(0) if rng is None else rng
    flat = pts.reshape(-1, H.dim)
    npairs = min(4000, flat.shape[0] ** 2)
    ia = rng.integers(0, flat.shape[0], npairs)
    ib = rng.integers(0, flat.shape[0], npairs)
    pa, pb = flat[ia], flat[ib]
    mid = 0.5 * (pa + pb)
    gap = H(mid) - 0.5 * (H(pa) + H(pb))
    convex = bool(np.max(gap) <= tol + 1e-9 * np.max(np.abs(vals)))
    if not convex:
        j = int(np.argmax(gap))
        witnesses["convex"] = (pa[j], pb[j], float(gap[j]))

    # (iii) zero set bounded: zeros must not touch the box edge
    zero_mask = vals <= tol
    edge = np.zeros_like(zero_mask)
    for d in range(zero_mask.ndim):
        sl = [slice(None)] * zero_mask.ndim
        sl[d] = 0
        edge[tuple(sl)] = True
        sl[d] = -1
        edge[tuple(sl)] = True
    bounded = not bool(np.any(zero_mask & edge))
    if not bounded:
        idx = np.unravel_index(np.argmax(zero_mask & edge), zero_mask.shape)
        witnesses["zero_set_bounded"] = (pts[idx], float(vals[idx]))

    # (iv) empty interior: no sampled ball of radius 2h inside the zero set
    from scipy.ndimage import binary_erosion

    struct = _ball_structure(len(axes), 2)
    eroded = binary_erosion(zero_mask, structure=struct)
    empty_interior = not bool(np.any(eroded))
    if not empty_interior:
        idx = np.unravel_index(np.argmax(eroded), eroded.shape)
        witnesses["zero_set_empty_interior"] = (pts[idx], float(vals[idx]))

    return ValidationReport(
        convex=convex,
        zero_at_origin=bool(zero_at_origin),
        zero_set_bounded=bounded,
        zero_set_empty_interior=empty_interior,
        witnesses=witnesses,
        tol=tol,
        grid_step=h,
    )


def _ball_structure(ndim, radius_cells):
    r = radius_cells
    grids = np.meshgrid(*([np.arange(-r, r + 1)] * ndim), indexing="ij")
    d2 = sum(g * g for g in grids)
    return d2 <= r * r


# ---------------------------------------------------------------------------
# Lagrangian
# ---------------------------------------------------------------------------


def lagrangian(H, q):
    """L(q) = sup_p (p . q - H(p)), with BIG where the sup diverges.

    Analytic families use closed forms; table Hamiltonians take the max
    over the stored grid and flag boundary-dominated maxima as divergent.
    """
    q = np.asarray(q, dtype=float)
    if H.has_closed_lagrangian():
        return H.closed_lagrangian(q)
    pts, _ = _table_points(H)
    vals = H.table_values.ravel()
    single = q.ndim == 1
    qq = np.atleast_2d(q)
    cand = qq @ pts.T - vals[None, :]  # (nq, np)
    interior = _table_interior_mask(H).ravel()
    vmax = np.max(cand, axis=1)
    vint = np.max(np.where(interior[None, :], cand, -BIG), axis=1)
    out = np.where(vmax <= vint + _TIE_EPS * (1.0 + np.abs(vmax)), vmax, BIG)
    return float(out[0]) if single else out


def _table_points(H):
    mesh = np.meshgrid(*H.table_axes, indexing="ij")
    pts = np.stack(mesh, axis=-1).reshape(-1, H.dim)
    return pts, mesh


def _table_interior_mask(H):
    shape = H.table_values.shape
    m = np.ones(shape, dtype=bool)
    for d in range(len(shape)):
        sl = [slice(None)] * len(shape)
        sl[d] = 0
        m[tuple(sl)] = False
        sl[d] = -1
        m[tuple(sl)] = False
    return m


@dataclass(frozen=True)
class LagrangianEvaluator:
    """Callable Lagrangian: closed form, or a sampled conjugate table.

    The table route interpolates multilinearly and returns BIG outside the
    effective domain (or outside the stored dual box).
    """

    closed: Optional[Callable] = None
    axes: Optional[tuple] = None
    values: Optional[np.ndarray] = None

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        if self.closed is not None:
            return self.closed(q)
        from scipy.interpolate import RegularGridInterpolator

        itp = RegularGridInterpolator(
            self.axes, self.values, method="linear",
            bounds_error=False, fill_value=BIG,
        )
        out = itp(q)
        # any corner at BIG poisons the cell: saturate
        out = np.where(out >= 1e-3 * BIG, BIG, out)
        return out


def lagrangian_evaluator(H, dual_axes=None):
    """Build a LagrangianEvaluator for H.

    Analytic families evaluate in closed form.  Table Hamiltonians get a
    conjugate table on ``dual_axes`` (required in that case).
    """
    if H.has_closed_lagrangian():
        return LagrangianEvaluator(closed=H.closed_lagrangian)
    if dual_axes is None:
        raise InputError("table Hamiltonians need explicit dual axes")
    dual_axes = tuple(np.asarray(a, dtype=float) for a in dual_axes)
    mesh = np.meshgrid(*dual_axes, indexing="ij")
    qs = np.stack(mesh, axis=-1).reshape(-1, H.dim)
    vals = lagrangian(H, qs).reshape([len(a) for a in dual_axes])
    return LagrangianEvaluator(axes=dual_axes, values=vals)


# ---------------------------------------------------------------------------
# Legendre transform of sampled tables
# ---------------------------------------------------------------------------


def conjugate_1d_brute(x, f, s):
    """O(N*M) discrete conjugate oracle.

    Returns max_i (s x_i - f_i) per dual node s.  Where the max is attained
    only at a finite value sitting on the grid edge, the sampled sup is a
    truncation of a divergent one and the BIG sentinel is returned instead.
    A max attained at the edge of the *effective domain* strictly inside the
    grid (f = BIG beyond it) is a genuine constrained max and stays finite.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    s = np.asarray(s, dtype=float)
    finite = f < BIG_CUT
    if not np.any(finite):
        raise InputError("empty effective domain")
    cand = s[:, None] * x[None, :] - f[None, :]
    cand = np.where(finite[None, :], cand, -BIG)
    interior = finite.copy()
    interior[0] = interior[-1] = False
    vmax = np.max(cand, axis=1)
    if not np.any(interior):
        return _clamp_big(vmax)
    vint = np.max(np.where(interior[None, :], cand, -BIG), axis=1)
    out = np.where(vmax <= vint + _TIE_EPS * (1.0 + np.abs(vmax)), vmax, BIG)
    return _clamp_big(out)


def _clamp_big(v):
    v = np.where(v >= BIG_CUT, BIG, v)
    return np.where(v <= -BIG_CUT, -BIG, v)


def conjugate_1d(x, f, s):
    """Linear-time discrete conjugate via the lower convex hull.

    Agrees with :func:`conjugate_1d_brute` (same candidate set, same
    edge-sentinel rule) at O(N + M log N) cost.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    s = np.asarray(s, dtype=float)
    fin = np.flatnonzero(f < BIG_CUT)
    if fin.size == 0:
        raise InputError("empty effective domain")
    xs, fs = x[fin], f[fin]
    hull = _lower_hull(xs, fs)
    hx, hf = xs[hull], fs[hull]
    gidx = fin[hull]
    nv = hx.size
    if nv == 1:
        j = np.zeros(s.shape, dtype=int)
    else:
        # argmax vertex: slope thresholds are the hull segment slopes
        slopes = np.diff(hf) / np.diff(hx)
        j = np.searchsorted(slopes, s, side="left")
    vmax = s * hx[j] - hf[j]

    n_interior = fin.size - int(fin[0] == 0) - int(fin[-1] == x.size - 1)
    if n_interior <= 0:
        return _clamp_big(vmax)
    at_lo = gidx[j] == 0
    at_hi = gidx[j] == x.size - 1
    if not (np.any(at_lo) or np.any(at_hi)):
        return _clamp_big(vmax)
    # best interior competitor: the flanking hull vertex if interior,
    # else the interior grid neighbor of the winning edge point
    alt = np.full_like(vmax, -BIG)
    if nv > 1:
        jn = np.clip(j + 1, 0, nv - 1)
        jp = np.clip(j - 1, 0, nv - 1)
        cn = s * hx[jn] - hf[jn]
        cp = s * hx[jp] - hf[jp]
        edge_v = (gidx == 0) | (gidx == x.size - 1)
        alt = np.where(~edge_v[jn] & (jn != j), np.maximum(alt, cn), alt)
        alt = np.where(~edge_v[jp] & (jp != j), np.maximum(alt, cp), alt)
    if fin[0] == 0 and fin.size > 1:
        i1 = fin[1]
        alt = np.where(at_lo, np.maximum(alt, s * x[i1] - f[i1]), alt)
    if fin[-1] == x.size - 1 and fin.size > 1:
        i2 = fin[-2]
        alt = np.where(at_hi, np.maximum(alt, s * x[i2] - f[i2]), alt)
    bad = (at_lo | at_hi) & (vmax > alt + _TIE_EPS * (1.0 + np.abs(vmax)))
    return _clamp_big(np.where(bad, BIG, vmax))


def _lower_hull(x, f):
    """Indices of the lower convex hull vertices of the graph (x, f)."""
    idx = []
    for i in range(x.size):
        while len(idx) >= 2:
            a, b = idx[-2], idx[-1]
            # pop b if it lies on or above chord a->i
            if (f[b] - f[a]) * (x[i] - x[a]) >= (f[i] - f[a]) * (x[b] - x[a]):
                idx.pop()
            else:
                break
        idx.append(i)
    return np.asarray(idx, dtype=int)


def conjugate_nd(axes, F, dual_axes):
    """Discrete conjugate of an ND sampled table, axis by axis.

    Uses the sup-decomposition max_x (s.x - F) = max_{x_n} (s_n x_n + ...),
    running the 1D linear-time transform along one axis at a time.  After
    each pass the negated partial result feeds the next axis.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    dual_axes = [np.asarray(a, dtype=float) for a in dual_axes]
    G = np.asarray(F, dtype=float)  # invariant: G = -(partial conjugate)
    for d in range(len(axes)):
        Gm = np.moveaxis(G, d, -1)
        lead = Gm.shape[:-1]
        flat = Gm.reshape(-1, Gm.shape[-1])
        out = np.empty((flat.shape[0], dual_axes[d].size))
        for i in range(flat.shape[0]):
            if np.all(flat[i] >= BIG_CUT):
                # slice outside the effective domain: contributes -inf
                out[i] = -BIG
            else:
                out[i] = conjugate_1d(axes[d], flat[i], dual_axes[d])
        G = -np.moveaxis(out.reshape(lead + (dual_axes[d].size,)), -1, d)
    return _clamp_big(-G)


def conjugate_nd_brute(axes, F, dual_axes):
    """O(N*M) ND conjugate oracle over the full grid."""
    axes = [np.asarray(a, dtype=float) for a in axes]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1).reshape(-1, len(axes))
    f = np.asarray(F, dtype=float).ravel()
    dmesh = np.meshgrid(*[np.asarray(a, float) for a in dual_axes], indexing="ij")
    dpts = np.stack(dmesh, axis=-1).reshape(-1, len(dual_axes))
    finite = f < BIG_CUT
    if not np.any(finite):
        raise InputError("empty effective domain")
    cand = dpts @ pts.T - f[None, :]
    cand = np.where(finite[None, :], cand, -BIG)
    interior = _nd_interior(np.asarray(F), finite)
    vmax = np.max(cand, axis=1)
    if not np.any(interior):
        return _clamp_big(vmax).reshape([len(a) for a in dual_axes])
    vint = np.max(np.where(interior[None, :], cand, -BIG), axis=1)
    out = np.where(vmax <= vint + _TIE_EPS * (1.0 + np.abs(vmax)), vmax, BIG)
    return _clamp_big(out).reshape([len(a) for a in dual_axes])


def _nd_interior(F, finite_flat):
    m = np.ones(F.shape, dtype=bool)
    for d in range(F.ndim):
        sl = [slice(None)] * F.ndim
        sl[d] = 0
        m[tuple(sl)] = False
        sl[d] = -1
        m[tuple(sl)] = False
    return m.ravel() & finite_flat


# ---------------------------------------------------------------------------
# coercivity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoercivityProfile:
    """Coercivity data: zero-set radius, sphere minimum, and the
    nondecreasing lower bound M with L(q) >= M(|q|) |q|.

    ``radii``/``m_values`` form a piecewise-constant nondecreasing table
    (value at the largest table radius <= r).
    """

    R0: float
    k0: float
    radii: np.ndarray
    m_values: np.ndarray

    def M(self, r):
        """Piecewise-constant left lookup of the M table."""
        r = np.asarray(r, dtype=float)
        idx = np.searchsorted(self.radii, r, side="right") - 1
        out = self.m_values[np.maximum(idx, 0)]
        return np.where(idx < 0, 0.0, out)

    def a_K(self, K):
        """Least table radius past which L(z) > K |z|."""
        above = self.m_values > K
        if not np.any(above):
            raise ResolutionError("M table does not exceed K; extend the table")
        return float(self.radii[int(np.argmax(above))])


def _directions(dim, count=64):
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    # Fibonacci sphere
    i = np.arange(count, dtype=float) + 0.5
    phi = np.arccos(1 - 2 * i / count)
    theta = np.pi * (1 + 5**0.5) * i
    return np.stack(
        [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)],
        axis=-1,
    )


def coercivity_profile(H, ndirs=64, nradii=512, rmax=1e4, rmin=1e-3, ztol=1e-9):
    """Compute R0, k0 and the M table for a validated Hamiltonian.

    R0 bounds the zero set; k0 = min H on the sphere of radius R0; the M
    table is the nondecreasing envelope of inf over sampled |q| >= r of
    L(q)/|q|.
    """
    dirs = _directions(H.dim, ndirs)
    # last zero along each ray, by bisection (monotone past the zero)
    box_r = H.support_radius()
    zeros = np.empty(dirs.shape[0])
    for i, d in enumerate(dirs):
        zeros[i] = _last_zero_radius(H, d, box_r, ztol)
    R0 = max(float(np.max(zeros)) * 1.0000001, 1e-8)
    k0 = float(np.min(H(R0 * dirs)))
    if k0 <= 0:
        # degenerate sampling; nudge outward
        R0 = min(2 * R0, 0.5 * box_r)
        k0 = float(np.min(H(R0 * dirs)))

    radii = np.geomspace(rmin, rmax, nradii)
    if H.has_closed_lagrangian():
        Lfun = H.closed_lagrangian
    else:
        Lfun = lambda q: lagrangian(H, q)
    vals = np.empty(nradii)
    for j, r in enumerate(radii):
        Lv = np.asarray(Lfun(r * dirs), dtype=float)
        ratio = np.where(Lv >= BIG_CUT, BIG, Lv / r)
        vals[j] = float(np.min(ratio))
    # inf over |q| >= r: suffix minimum; nondecreasing by construction
    vals = np.minimum.accumulate(vals[::-1])[::-1]
    return CoercivityProfile(R0=R0, k0=k0, radii=radii, m_values=vals)


def _last_zero_radius(H, d, box_r, ztol):
    rs = np.linspace(0.0, 0.9 * box_r, 65)
    hv = H(rs[:, None] * d[None, :])
    pos = np.flatnonzero(hv > ztol)
    if pos.size == 0:
        raise EvaluationError("H vanishes along an entire sampled ray")
    if pos[0] == 0:
        return 0.0
    lo, hi = rs[pos[0] - 1], rs[pos[0]]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if H(mid * d) > ztol:
            hi = mid
        else:
            lo = mid
    return hi


def t_zero(alpha, r, prof):
    """Largest table-resolved t0 with M(r / t0) > alpha / r + 1.

    Guarantees the radius-r truncation of the up-flow for t < t0; the
    table inversion rounds t0 down (conservative).
    """
    if alpha < 0 or r <= 0:
        raise InputError("need alpha >= 0 and r > 0")
    threshold = alpha / r + 1.0
    above = prof.m_values > threshold
    if not np.any(above):
        raise ResolutionError(
            "M table never exceeds alpha/r + 1; extend the coercivity table"
        )
    s = float(prof.radii[int(np.argmax(above))])
    return r / s
