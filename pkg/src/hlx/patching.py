"""Low-slope patching: raise S+ u to at least gamma on {S+ u < gamma}.

The patch region V_gamma collects nodes whose slope estimate falls below
gamma.  On its closure the field is replaced by the path metric

    v_gamma(x) = max over rim nodes b of u(b) - d_gamma(x -> b),

where d_gamma is the least total cost of a grid path from x to b inside
the closed region, each directed step x -> y costing C_gamma(y - x).
Shortest paths run over the 8-neighbor (2D) or 2-neighbor (1D) grid
graph with a deterministic label-correcting scheme.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from hlx.errors import InputError, LevelSetError
from hlx.fields import ScalarField

__all__ = ["PatchResult", "patch", "prepatch_bound"]


@dataclass
class PatchResult:
    """Patched field plus the per-claim verification results.

    ``claims`` maps claim names to (ok, measured value); ``v_gamma``
    holds the path-metric values (NaN off the closed patch region).
    """

    u_gamma: ScalarField
    v_gamma: np.ndarray
    region: np.ndarray
    rim: np.ndarray
    gamma: float
    sp_before: np.ndarray
    claims: dict = field(default_factory=dict)


def _neighbor_offsets(ndim):
    if ndim == 1:
        return [(-1,), (1,)]
    offs = [
        (di, dj)
        for di in (-1, 0, 1)
        for dj in (-1, 0, 1)
        if (di, dj) != (0, 0)
    ]
    return offs


def _dijkstra_to_rim(u, cone, region, rim):
    """Labels m(x) = min over rim b of d_gamma(x -> b) - u(b).

    Runs Dijkstra on the reversed edges: relaxing a -> c uses the cost of
    traveling a -> c, namely C_gamma(c - a).  v_gamma = -m.
    """
    shape = u.shape
    offs = _neighbor_offsets(u.ndim)
    steps = [np.asarray(o, float) * np.asarray(u.spacing) for o in offs]
    # forward step cost a -> a+o is C(step); relax a from c = a + o
    costs = [float(cone.value(s)) for s in steps]
    label = np.full(shape, np.inf)
    inside = region | rim
    heap = []
    for b in np.argwhere(rim):
        b = tuple(int(i) for i in b)
        label[b] = -u.values[b]
        heapq.heappush(heap, (label[b], b))
    while heap:
        d, c = heapq.heappop(heap)
        if d > label[c] + 1e-15:
            continue
        for o, w in zip(offs, costs):
            a = tuple(int(ci) - oi for ci, oi in zip(c, o))
            if any(ai < 0 or ai >= n for ai, n in zip(a, shape)):
                continue
            if not inside[a] or rim[a]:
                continue
            nd = d + w
            if nd < label[a] - 1e-15:
                label[a] = nd
                heapq.heappush(heap, (nd, a))
    return label


def patch(
    u: ScalarField,
    gamma,
    cone,
    sp_values,
    check=True,
    lag=None,
    ladder=None,
    radius=None,
    flow_t=None,
    claim_tol=None,
):
    """Build u_gamma from u, the gamma-level cone, and a slope field.

    ``cone`` is the ConeData at level gamma; ``sp_values`` is the S+ u
    estimate (same shape as u).  Nodes with sp < gamma and off the
    boundary mask form V_gamma; the rim is every adjacent node outside
    it.  With ``check`` the claim battery runs: monotonicity u_gamma <=
    u, boundary equality, the per-edge cone-Lipschitz bound on v_gamma,
    the flow identity T^t u_gamma - u_gamma = gamma t on the patch, flow
    equality off the patch, and S+ u_gamma >= gamma (the last three need
    ``lag``/``ladder``/``radius``/``flow_t``).
    """
    if gamma <= 0:
        raise InputError("gamma must be positive")
    sp_values = np.asarray(sp_values, dtype=float)
    if sp_values.shape != u.shape:
        raise InputError("slope field shape mismatch")
    region = (sp_values < gamma) & ~u.boundary
    offs = _neighbor_offsets(u.ndim)
    adj = np.zeros(u.shape, dtype=bool)
    for o in offs:
        src = tuple(
            slice(max(oi, 0), u.shape[d] + min(oi, 0)) for d, oi in enumerate(o)
        )
        dst = tuple(
            slice(max(-oi, 0), u.shape[d] + min(-oi, 0)) for d, oi in enumerate(o)
        )
        adj[dst] |= region[src]
    rim = adj & ~region
    vals = u.values.copy()
    v_gamma = np.full(u.shape, np.nan)
    if np.any(region):
        if not np.any(rim):
            raise LevelSetError("patch region has no rim")
        label = _dijkstra_to_rim(u, cone, region, rim)
        v = -label
        closed = region | rim
        v_gamma = np.where(closed, v, np.nan)
        # rim keeps u; interior takes the path metric, capped by u
        vals = np.where(region, np.minimum(v, u.values), vals)
    u_gamma = u.with_values(vals)

    res = PatchResult(
        u_gamma=u_gamma,
        v_gamma=v_gamma,
        region=region,
        rim=rim,
        gamma=float(gamma),
        sp_before=sp_values,
    )
    if check:
        _verify_claims(res, u, cone, lag, ladder, radius, flow_t, claim_tol)
    return res


def _verify_claims(res, u, cone, lag, ladder, radius, flow_t, claim_tol):
    h = max(u.spacing)
    tol = 5.0 * h if claim_tol is None else claim_tol
    ug = res.u_gamma.values
    below = float(np.max(ug - u.values))
    res.claims["below_u"] = (below <= 0.0, below)
    bmatch = float(np.max(np.abs(ug - u.values)[u.boundary])) if u.boundary.any() else 0.0
    res.claims["boundary_equal"] = (bmatch == 0.0, bmatch)

    # per-edge cone-Lipschitz bound for v_gamma inside the closed region
    worst = -np.inf
    closed = res.region | res.rim
    if np.any(res.region):
        v = np.where(closed, np.where(np.isnan(res.v_gamma), ug, res.v_gamma), np.nan)
        v = np.where(res.rim, u.values, v)
        for o in _neighbor_offsets(u.ndim):
            src = tuple(
                slice(max(oi, 0), u.shape[d] + min(oi, 0))
                for d, oi in enumerate(o)
            )
            dst = tuple(
                slice(max(-oi, 0), u.shape[d] + min(-oi, 0))
                for d, oi in enumerate(o)
            )
            step = np.asarray(o, float) * np.asarray(u.spacing)
            # v(x) - v(y) <= C(y - x) for the step y = x + o
            gap = v[dst] - v[src] - float(cone.value(step))
            both = closed[dst] & closed[src]
            if np.any(both):
                worst = max(worst, float(np.nanmax(np.where(both, gap, -np.inf))))
        res.claims["cone_lipschitz"] = (worst <= 1e-12, worst)
    if lag is None or ladder is None or radius is None:
        return
    from scipy.ndimage import distance_transform_edt

    from hlx.criteria import s_plus
    from hlx.hopflax import flow_params, flow_up

    sp_after = s_plus(res.u_gamma, lag, ladder, radius)
    interior = sp_after.valid & ~u.boundary
    drop = float(np.min(sp_after.values[interior] - res.gamma))
    res.claims["sp_at_least_gamma"] = (drop >= -tol, drop)
    if flow_t is not None:
        fp = flow_params(res.u_gamma, lag, flow_t, radius)
        upg = flow_up(res.u_gamma, fp)
        valid = fp.valid_mask(u.shape)
        # the cone flow identity needs the argmax inside the patch: stay
        # clear of the rim by the flow travel distance
        pmax = float(np.max(np.linalg.norm(cone.points, axis=-1)))
        dist = distance_transform_edt(res.region, sampling=u.spacing)
        deep = res.region & (dist > 1.2 * pmax * flow_t + 2 * max(u.spacing))
        on = deep & valid
        if np.any(on):
            dev = (upg.values - ug - res.gamma * flow_t)[on]
            res.claims["flow_identity_on_patch"] = (
                float(np.max(np.abs(dev))) <= tol * flow_t + tol * max(u.spacing),
                float(np.max(np.abs(dev))),
            )
        off = ~closed & valid
        if np.any(off):
            upu = flow_up(u, fp)
            gap = float(np.max(np.abs(upg.values - upu.values)[off]))
            res.claims["flow_equal_off_patch"] = (gap <= tol, gap)


def prepatch_bound(
    H, diam, eps, k_lo=1e-10, k_hi=None, nk=600, zero_tol=1e-8, zero_radius_tol=1e-3
):
    """Largest tabulated k whose cone is flat enough across the domain.

    Picks a unit direction q orthogonal to the sampled zero set of H
    (any direction when the zero set is the origin alone) and returns
    the largest k on a geometric ladder with both C_k(q) and C_k(-q)
    at most eps / (2 diam).  Fields agreeing on the boundary whose slope
    levels sum below k then differ by at most eps.
    """
    if eps <= 0 or diam <= 0:
        raise InputError("eps and diam must be positive")
    from hlx.geometry import cone_data

    zc = cone_data(H, 0.0, ndirs=64, level_tol=zero_tol)
    # a numerically tiny zero set counts as the origin alone
    zpts = zc.points[np.linalg.norm(zc.points, axis=1) > zero_radius_tol]
    if zpts.size == 0:
        q = np.zeros(H.dim)
        q[0] = 1.0
    else:
        # orthogonal complement of the zero-set span
        _, s, vt = np.linalg.svd(zpts)
        rank = int(np.sum(s > zero_tol * max(1.0, s[0])))
        if rank >= H.dim:
            raise InputError(
                "zero set spans all directions; empty-interior condition fails"
            )
        q = vt[rank]
        q = q / np.linalg.norm(q)
    target = eps / (2.0 * diam)
    if k_hi is None:
        k_hi = max(1.0, float(H(10.0 * q)))
    ks = np.geomspace(k_lo, k_hi, nk)

    def flat(k):
        cd = cone_data(H, float(k), ndirs=64)
        return max(float(cd.value(q)), float(cd.value(-q))) <= target

    # C_k(+-q) is increasing in k: bisect the ladder for the last flat k
    if not flat(ks[0]):
        raise InputError("no tabulated k meets the flatness target; lower k_lo")
    lo, hi = 0, nk - 1
    if flat(ks[hi]):
        return float(ks[hi])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if flat(ks[mid]):
            lo = mid
        else:
            hi = mid
    return float(ks[lo])
