"""Cone functions, subdifferentials, and the dual sets they generate.

The cone at level k is the support function of the level set H^{-1}(k):
C_k(x) = max { p . x : H(p) = k }.  Level sets are sampled by bisection
along rays from the origin, which is valid because t -> H(t p) is
nondecreasing past its last zero.

The dual sets live in q-space: Gamma_k collects subdifferentials of H
over the k-level set, W_k over the full sublevel set, and N_k = W_k
minus Gamma_k is a neighborhood of the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hlx.errors import InputError, LevelSetError
from hlx.hamiltonian import _directions

__all__ = [
    "ConeData",
    "SubdiffSets",
    "cone_data",
    "cone_value",
    "cone_constants",
    "subdifferential",
    "gamma_w_n",
]


@dataclass(frozen=True)
class ConeData:
    """A sampled level set of H plus the cone constants M_k, K_k.

    ``points`` are the level-set samples; the cone value at x is the max
    of p . x over them (positively homogeneous by construction).
    """

    k: float
    points: np.ndarray
    M_k: float
    K_k: float
    level_tol: float

    def value(self, x):
        """C_k at points ``x`` of shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        if self.points.size == 0:
            raise LevelSetError(f"empty level-set sample at k={self.k}")
        return np.max(x @ self.points.T, axis=-1)


def _level_radii(H, dirs, k, level_tol, iters=80):
    """Radii r_i with H(r_i d_i) = k per direction, by vectorized bisection."""
    m = dirs.shape[0]
    lo = np.zeros(m)
    hi = np.ones(m)
    for _ in range(200):
        short = np.asarray(H(hi[:, None] * dirs)) < k
        if not np.any(short):
            break
        lo = np.where(short, hi, lo)
        hi = np.where(short, 2.0 * hi, hi)
        if np.max(hi) > 1e12:
            raise LevelSetError(f"level k={k} not reached along some ray")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        hv = np.asarray(H(mid[:, None] * dirs))
        below = hv < k
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) <= level_tol * 1e-3:
            break
    return 0.5 * (lo + hi)


def cone_data(H, k, ndirs=256, level_tol=1e-10):
    """Sample H^{-1}(k) by ray bisection and compute M_k, K_k.

    For k = 0 the zero set is sampled instead (last zero along each ray);
    C_0 vanishes when the zero set is the origin alone.
    """
    if k < 0:
        raise InputError("cone level must be nonnegative")
    dirs = _directions(H.dim, ndirs)
    if k == 0.0:
        from hlx.hamiltonian import _last_zero_radius

        box_r = H.support_radius()
        radii = np.array(
            [_last_zero_radius(H, d, box_r, max(level_tol, 1e-12)) for d in dirs]
        )
    else:
        radii = _level_radii(H, dirs, k, level_tol)
    points = radii[:, None] * dirs
    vals = np.max(dirs @ points.T, axis=-1)
    M_k = float(np.min(vals))
    K_k = float(np.max(vals))
    return ConeData(k=float(k), points=points, M_k=M_k, K_k=K_k, level_tol=level_tol)


def cone_value(H, k, x, ndirs=256):
    """C_k(x) = max of p . x over the sampled level set H^{-1}(k)."""
    return cone_data(H, k, ndirs=ndirs).value(x)


def cone_constants(H, k, ndirs=256):
    """Min and max of C_k over sampled unit directions."""
    cd = cone_data(H, k, ndirs=ndirs)
    return cd.M_k, cd.K_k


def subdifferential(H, p, tol=1e-6, nper=41, dual_axes=None):
    """All dual-grid q passing the global supporting-hyperplane test.

    q is kept when H(p') >= H(p) + q . (p' - p) - tol for every sampled
    p' in the evaluation box.  The global test (not a finite-difference
    gradient) stays correct at kinks of H.
    """
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != H.dim:
        raise InputError(f"expected a point of dimension {H.dim}")
    paxes = [np.linspace(lo, hi, nper) for lo, hi in H.pbox]
    pmesh = np.meshgrid(*paxes, indexing="ij")
    pts = np.stack(pmesh, axis=-1).reshape(-1, H.dim)
    hvals = H(pts)
    hp = float(H(p))
    if dual_axes is None:
        dual_axes = [np.linspace(lo, hi, nper) for lo, hi in H.pbox]
    qmesh = np.meshgrid(*[np.asarray(a, float) for a in dual_axes], indexing="ij")
    qs = np.stack(qmesh, axis=-1).reshape(-1, H.dim)
    # violation = max over p' of q.(p'-p) - (H(p') - H(p))
    viol = np.max(qs @ (pts - p).T - (hvals - hp)[None, :], axis=1)
    return qs[viol <= tol]


@dataclass(frozen=True)
class SubdiffSets:
    """Discrete Gamma_k / W_k / N_k in dual (q) space.

    ``w_mask`` and ``n_mask`` are indicator grids over ``dual_axes``;
    ``gamma_points`` is the Gamma_k point cloud.  ``resolution`` records
    the dual-grid spacing bound; postcondition breaches are listed in
    ``warnings`` with witnesses instead of raising.
    """

    k: float
    dual_axes: tuple
    gamma_points: np.ndarray
    w_mask: np.ndarray
    n_mask: np.ndarray
    resolution: float
    level_tol: float
    warnings: list = field(default_factory=list)


def gamma_w_n(H, k, nper=65, dual_axes=None, level_tol=None, tie_tol=1e-9):
    """Classify dual-grid nodes into Gamma_k, W_k, N_k.

    Uses the conjugacy characterization: q lies in the subdifferential of
    H at p exactly when p maximizes p . q - H(p).  For each dual node the
    near-argmax set over the sampled p-box is found and q is assigned to
    W_k when some maximizer has H <= k, to Gamma_k when some maximizer
    sits on the level k itself (within ``level_tol``).
    """
    if k <= 0:
        raise InputError("gamma_w_n needs k > 0")
    paxes = [np.linspace(lo, hi, nper) for lo, hi in H.pbox]
    hp = max((hi - lo) / (nper - 1) for lo, hi in H.pbox)
    pmesh = np.meshgrid(*paxes, indexing="ij")
    pts = np.stack(pmesh, axis=-1).reshape(-1, H.dim)
    hvals = np.asarray(H(pts), dtype=float)
    if level_tol is None:
        sub = np.linalg.norm(pts, axis=1)[hvals <= 1.5 * k]
        rk = float(np.max(sub)) if sub.size else 1.0
        level_tol = 2.0 * hp * max(rk, 1.0)
    if dual_axes is None:
        dual_axes = tuple(np.linspace(lo, hi, nper) for lo, hi in H.pbox)
    else:
        dual_axes = tuple(np.asarray(a, dtype=float) for a in dual_axes)
    qshape = tuple(a.size for a in dual_axes)
    qmesh = np.meshgrid(*dual_axes, indexing="ij")
    qs = np.stack(qmesh, axis=-1).reshape(-1, H.dim)

    cand = qs @ pts.T - hvals[None, :]
    cmax = np.max(cand, axis=1)
    near = cand >= (cmax - tie_tol * (1.0 + np.abs(cmax)))[:, None]
    h_b = np.broadcast_to(hvals[None, :], near.shape)
    in_w = np.any(near & (h_b <= k + level_tol), axis=1)
    in_g = np.any(near & (np.abs(h_b - k) <= level_tol), axis=1)
    w_mask = in_w.reshape(qshape)
    g_mask = in_g.reshape(qshape)
    n_mask = w_mask & ~g_mask
    gamma_points = qs[in_g]
    res = max(float(np.max(np.diff(a))) for a in dual_axes)

    warnings = []
    origin_idx = tuple(int(np.argmin(np.abs(a))) for a in dual_axes)
    if not n_mask[origin_idx]:
        warnings.append(("origin_not_in_n", origin_idx))
    # boundary cells of N_k should sit near Gamma_k
    inner = n_mask.copy()
    for d in range(n_mask.ndim):
        sl_lo = [slice(None)] * n_mask.ndim
        sl_hi = [slice(None)] * n_mask.ndim
        sl_lo[d] = slice(0, -1)
        sl_hi[d] = slice(1, None)
        shifted = np.ones_like(n_mask)
        shifted[tuple(sl_lo)] &= n_mask[tuple(sl_hi)]
        shifted[tuple(sl_hi)] &= n_mask[tuple(sl_lo)]
        inner &= shifted
    rim = n_mask & ~inner
    if gamma_points.size and np.any(rim):
        rim_q = qs.reshape(qshape + (H.dim,))[rim]
        d2 = np.min(
            np.sum((rim_q[:, None, :] - gamma_points[None, :, :]) ** 2, axis=-1),
            axis=1,
        )
        # rim-to-Gamma distance bounded by grid resolution plus level width
        cap = 4.0 * res + 2.0 * level_tol
        worst = int(np.argmax(d2))
        if np.sqrt(d2[worst]) > cap:
            warnings.append(("rim_far_from_gamma", rim_q[worst], float(np.sqrt(d2[worst]))))

    return SubdiffSets(
        k=float(k),
        dual_axes=dual_axes,
        gamma_points=gamma_points,
        w_mask=w_mask,
        n_mask=n_mask,
        resolution=res,
        level_tol=float(level_tol),
        warnings=warnings,
    )
