"""Classical digital processor: signal estimation at a fixed support.

At fixed ``sigma`` the cost is the quadratic ``0.5 s^T G s - hz^T s`` in the
active entries ``s = R[active]``.  It is minimised either by damped Jacobi
sweeps or by plain conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .exceptions import SingularDiagonalError
from .model import CouplingForm, HyperParams

METHODS = ("jacobi", "cg")


@dataclass(frozen=True)
class QuadraticSubproblem:
    G: np.ndarray | LinearOperator
    b: np.ndarray
    active: np.ndarray
    diag: np.ndarray

    @property
    def size(self) -> int:
        return self.active.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if isinstance(self.G, np.ndarray):
            return self.G @ v
        return np.asarray(self.G.matvec(v)).ravel()


@dataclass
class CGInfo:
    n_iter: int
    converged: bool
    breakdown: bool = False


def build_subproblem(coupling: CouplingForm, sigma) -> QuadraticSubproblem:
    sigma = np.asarray(sigma)
    if sigma.shape != (coupling.N,) or not np.all((sigma == 0) | (sigma == 1)):
        raise ValueError("sigma must be a binary vector of length N")
    active = np.flatnonzero(sigma)
    b = coupling.hz[active]
    diag = coupling.gram_diag[active]
    if coupling.is_dense:
        G = coupling.gram[np.ix_(active, active)]
    else:
        N = coupling.N

        def mv(v):
            full = np.zeros(N)
            full[active] = np.ravel(v)
            return coupling.gram_matvec(full)[active]

        G = LinearOperator((active.size, active.size), matvec=mv, dtype=np.float64)
    return QuadraticSubproblem(G=G, b=b, active=active, diag=diag)


def jacobi_solve(sub: QuadraticSubproblem, R_init, dt_c: float = 0.1, iters: int = 100) -> np.ndarray:
    """Damped Jacobi: ``R <- (1 - dt_c) R + dt_c (b - offdiag(G) R) / diag(G)``."""
    R = np.array(R_init, dtype=np.float64)
    if R.shape != (sub.size,):
        raise ValueError("R_init must match the active-set size")
    if sub.size == 0:
        return R
    zero = np.flatnonzero(sub.diag == 0)
    if zero.size:
        raise SingularDiagonalError(int(sub.active[zero[0]]))
    for _ in range(iters):
        target = (sub.b - sub.matvec(R) + sub.diag * R) / sub.diag
        R = (1.0 - dt_c) * R + dt_c * target
    return R


def cg_solve(sub: QuadraticSubproblem, R_init, max_iters: int = 10000, tol: float = 1e-10,
             callback=None) -> tuple[np.ndarray, CGInfo]:
    """Unpreconditioned conjugate gradients on ``G R = b``.

    Stops when ``||G R - b|| <= tol * ||b||``.  A non-positive curvature
    direction ends the iteration with ``info.breakdown`` set.
    """
    x = np.array(R_init, dtype=np.float64)
    if x.shape != (sub.size,):
        raise ValueError("R_init must match the active-set size")
    bnorm = float(np.linalg.norm(sub.b))
    if sub.size == 0:
        return x, CGInfo(0, True)
    r = sub.b - sub.matvec(x)
    if bnorm == 0.0:
        bnorm = 1.0
    rr = float(r @ r)
    if np.sqrt(rr) <= tol * bnorm:
        return x, CGInfo(0, True)
    d = r.copy()
    for k in range(1, max_iters + 1):
        Gd = sub.matvec(d)
        curv = float(d @ Gd)
        if curv <= 0.0:
            return x, CGInfo(k - 1, False, breakdown=True)
        step = rr / curv
        x = x + step * d
        r = r - step * Gd
        rr_new = float(r @ r)
        if callback is not None:
            callback(x)
        if np.sqrt(rr_new) <= tol * bnorm:
            return x, CGInfo(k, True)
        d = r + (rr_new / rr) * d
        rr = rr_new
    return x, CGInfo(max_iters, False)


def conditional_estimates(coupling: CouplingForm, sigma, R) -> np.ndarray:
    """Per-coordinate minimiser of the cost given all other active entries.

    ``(hz_r - sum_{r' != r} G_rr' sigma_r' R_r') / G_rr``; for an active
    coordinate at a solved support this is its current value.
    """
    s = np.asarray(R) * np.asarray(sigma)
    with np.errstate(divide="ignore", invalid="ignore"):
        est = (coupling.hz - coupling.gram_matvec(s) + coupling.gram_diag * s) / coupling.gram_diag
    return np.where(coupling.gram_diag > 0, est, 0.0)


def cdp_minimize(coupling: CouplingForm, sigma, R_prev, method: str = "jacobi",
                 params: HyperParams | None = None, refresh_inactive: bool = False) -> np.ndarray:
    """Update ``R`` at fixed ``sigma``; warm start from ``R_prev``.

    Inactive entries keep ``R_prev`` unless ``refresh_inactive`` is set, in
    which case they become :func:`conditional_estimates` against the new
    active solution (the fixed point of Jacobi sweeps over the full system
    with masked neighbours).
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    params = params or HyperParams()
    R = np.array(R_prev, dtype=np.float64)
    if R.shape != (coupling.N,):
        raise ValueError("R_prev must have length N")
    sub = build_subproblem(coupling, sigma)
    if sub.size:
        if method == "jacobi":
            R[sub.active] = jacobi_solve(sub, R[sub.active], params.dt_c, params.jacobi_iters)
        else:
            R[sub.active], _ = cg_solve(sub, R[sub.active], params.cg_max_iters, params.cg_tol)
    if refresh_inactive:
        off = np.asarray(sigma) == 0
        R[off] = conditional_estimates(coupling, sigma, R)[off]
    return R
