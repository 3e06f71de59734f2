"""Subsolution residual for the generalized Aronsson inequality.

At a candidate touching point a C^2 test function is stood in for by a
least-squares quadratic fit on a small ball.  The residual is the max of
w . D2phi w over the (possibly multi-valued) subdifferential of H at the
fitted gradient; a genuine subsolution keeps it above -tol at touching
points.  For quadratic H the classical infinity-Laplacian value
sum u_i u_j u_ij is reported alongside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hlx.errors import EvaluationError, InputError
from hlx.fields import ScalarField
from hlx.hamiltonian import HamiltonianModel

__all__ = ["QuadraticFit", "quadratic_fit", "subsolution_residual"]


@dataclass(frozen=True)
class QuadraticFit:
    """Quadratic model of u near x0: value, gradient, Hessian, fit error."""

    x0: tuple
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    rho: float
    fit_residual: float


def _design(d):
    """Monomial columns for points d of shape (m, ndim)."""
    m, nd = d.shape
    cols = [np.ones(m)]
    cols.extend(d[:, i] for i in range(nd))
    for i in range(nd):
        for j in range(i, nd):
            # quadratic columns carry the 1/2 symmetry factor on diagonals
            cols.append(d[:, i] * d[:, j] * (0.5 if i == j else 1.0))
    return np.stack(cols, axis=1)


def quadratic_fit(u: ScalarField, x0, rho) -> QuadraticFit:
    """Least-squares quadratic fit to u on the grid ball of radius rho.

    ``x0`` is a node index tuple; the ball must contain enough nodes to
    determine the quadratic (6 in 2D, 3 in 1D) and stay inside the grid.
    """
    x0 = tuple(int(i) for i in np.atleast_1d(x0))
    if len(x0) != u.ndim:
        raise InputError("x0 must be a node index of the field")
    if rho <= 0:
        raise InputError("fit radius must be positive")
    widths = [int(np.floor(rho / h)) for h in u.spacing]
    for d, (i, w) in enumerate(zip(x0, widths)):
        if i - w < 0 or i + w >= u.shape[d]:
            raise InputError(f"fit ball leaves the grid along axis {d}")
    ranges = [np.arange(-w, w + 1) for w in widths]
    mesh = np.meshgrid(*ranges, indexing="ij")
    offs = np.stack(mesh, axis=-1).reshape(-1, u.ndim)
    phys = offs * np.asarray(u.spacing)[None, :]
    keep = np.sum(phys * phys, axis=1) <= rho * rho + 1e-12
    offs, phys = offs[keep], phys[keep]
    nparam = 1 + u.ndim + u.ndim * (u.ndim + 1) // 2
    if offs.shape[0] < nparam:
        raise InputError(
            f"only {offs.shape[0]} nodes in the fit ball, need {nparam}"
        )
    nodes = tuple(np.asarray(x0)[None, :].T + offs.T)
    vals = u.values[nodes]
    A = _design(phys)
    coef, _, rank, _ = np.linalg.lstsq(A, vals, rcond=None)
    if rank < nparam:
        raise EvaluationError("rank-deficient quadratic fit")
    grad = coef[1 : 1 + u.ndim]
    hess = np.zeros((u.ndim, u.ndim))
    idx = 1 + u.ndim
    for i in range(u.ndim):
        for j in range(i, u.ndim):
            hess[i, j] = hess[j, i] = coef[idx]
            idx += 1
    resid = float(np.max(np.abs(A @ coef - vals)))
    return QuadraticFit(
        x0=x0,
        value=float(coef[0]),
        gradient=grad,
        hessian=hess,
        rho=float(rho),
        fit_residual=resid,
    )


def subsolution_residual(u: ScalarField, x0, rho, H: HamiltonianModel, subdiff_tol=1e-3):
    """max over w in the subdifferential of H at Dphi of w . D2phi w.

    Returns (residual, fit).  The subdifferential is sampled on a fine
    dual grid centered at the fitted gradient (wide enough to catch the
    full multi-valued set at kinks of H).  For the quadratic family
    ``fit.gradient``/``fit.hessian`` give the classical
    infinity-Laplacian value directly.
    """
    from hlx.geometry import subdifferential

    fit = quadratic_fit(u, x0, rho)
    g = fit.gradient
    # half-width generous enough for kink subdifferentials (norm-like H
    # at 0 owns the whole unit ball); spacing fine enough that a smooth
    # point's singleton gradient is caught within subdiff_tol
    half = 1.5 + float(np.linalg.norm(g))
    axes = [gi + np.linspace(-half, half, 61) for gi in g]
    ws = subdifferential(H, g, tol=subdiff_tol, dual_axes=axes)
    if ws.shape[0] == 0:
        raise EvaluationError("empty sampled subdifferential at the fitted gradient")
    vals = np.einsum("mi,ij,mj->m", ws, fit.hessian, ws)
    return float(np.max(vals)), fit


def infinity_laplacian(fit: QuadraticFit):
    """Classical value Du . D2u Du from a quadratic fit."""
    g = fit.gradient
    return float(g @ fit.hessian @ g)
