"""Problem data, couplings and cost functions for L0-regularised compressed sensing.

The support/signal split writes the estimate as ``R * sigma`` with a binary
support ``sigma`` and a real signal ``R``.  Two cost functions live here:

* :func:`hamiltonian` is the Ising-form energy whose pair sum runs over
  ``r < r'`` only.  The CIM injection fields are its (negative) gradients.
* :func:`objective` adds the self-interaction ``0.5 * G_rr R_r^2 sigma_r`` and
  equals ``0.5*||y - A(sigma*R)||^2 - 0.5*||y||^2 + lam*||sigma||_0``.  This is
  the well-posed quantity the brute-force oracle minimises.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.sparse.linalg import LinearOperator

__all__ = [
    "ProblemInstance",
    "CouplingForm",
    "HyperParams",
    "SupportSignalPair",
    "lam_from_eta",
    "hamiltonian",
    "objective",
    "coupling_from_observation",
    "brute_force_l0rbcs",
    "rmse",
    "hamming_loss",
    "save_instance",
    "load_instance",
]

BRUTE_FORCE_MAX_N = 20


def lam_from_eta(eta: float) -> float:
    """L0 weight for a hard threshold ``eta`` (``eta = sqrt(2 lam)``)."""
    return 0.5 * float(eta) ** 2


def _as_binary(sigma, n: int | None = None, name: str = "sigma") -> np.ndarray:
    sigma = np.asarray(sigma)
    if sigma.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if n is not None and sigma.shape[0] != n:
        raise ValueError(f"{name} has length {sigma.shape[0]}, expected {n}")
    if not np.all((sigma == 0) | (sigma == 1)):
        raise ValueError(f"{name} must contain only 0/1 entries")
    return sigma.astype(np.float64)


def _as_vector(v, n: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != n:
        raise ValueError(f"{name} must be a vector of length {n}, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class ProblemInstance:
    """Observation ``y = A (xi * x) + noise`` plus optional ground truth."""

    A: np.ndarray
    y: np.ndarray
    x_true: np.ndarray | None = None
    xi_true: np.ndarray | None = None
    a: float = float("nan")
    alpha: float = float("nan")
    nu: float = 0.0
    seed: int = 0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if A.ndim != 2 or A.size == 0:
            raise ValueError("A must be a non-empty 2-D array")
        if y.ndim != 1 or y.shape[0] != A.shape[0]:
            raise ValueError(f"y must have length M={A.shape[0]}, got shape {y.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)
        M, N = A.shape
        if self.x_true is not None:
            object.__setattr__(self, "x_true", _as_vector(self.x_true, N, "x_true"))
        if self.xi_true is not None:
            xi = _as_binary(self.xi_true, N, "xi_true")
            if not np.isnan(self.a) and int(xi.sum()) != int(round_half_away(self.a * N)):
                raise ValueError("xi_true nonzero count does not equal round(a*N)")
            object.__setattr__(self, "xi_true", xi)
        if np.isnan(self.alpha):
            object.__setattr__(self, "alpha", M / N)
        elif abs(self.alpha - M / N) > 1.0 / N:
            raise ValueError(f"alpha={self.alpha} inconsistent with M/N={M / N}")
        if self.nu < 0:
            raise ValueError("nu must be non-negative")

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    @property
    def has_truth(self) -> bool:
        return self.x_true is not None and self.xi_true is not None


def round_half_away(v: float) -> int:
    """Round to nearest integer, halves away from zero."""
    return int(np.sign(v) * np.floor(abs(v) + 0.5))


@dataclass(frozen=True)
class CouplingForm:
    """Quadratic form seen by the solvers.

    ``gram`` is the full Gram matrix ``G`` (dense array or a
    :class:`~scipy.sparse.linalg.LinearOperator`); the Ising coupling is
    ``J = -(G - diag(G))`` so its diagonal is exactly zero.  ``hz`` is the
    Zeeman vector without the ``sqrt(tau)`` factor, which the solvers apply.
    """

    gram: np.ndarray | LinearOperator
    hz: np.ndarray
    gram_diag: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        hz = np.asarray(self.hz, dtype=np.float64)
        n = hz.shape[0]
        if self.gram.shape != (n, n):
            raise ValueError(f"gram shape {self.gram.shape} does not match hz length {n}")
        if isinstance(self.gram, np.ndarray):
            object.__setattr__(self, "gram", np.asarray(self.gram, dtype=np.float64))
            if self.gram_diag is None:
                object.__setattr__(self, "gram_diag", np.diag(self.gram).copy())
        elif self.gram_diag is None:
            raise ValueError("gram_diag is required for matrix-free couplings")
        object.__setattr__(self, "hz", hz)
        object.__setattr__(self, "gram_diag", np.asarray(self.gram_diag, dtype=np.float64))

    @property
    def N(self) -> int:
        return self.hz.shape[0]

    @property
    def is_dense(self) -> bool:
        return isinstance(self.gram, np.ndarray)

    @property
    def J(self) -> np.ndarray:
        """Dense zero-diagonal interaction matrix."""
        if not self.is_dense:
            raise TypeError("J is only materialised for dense couplings")
        J = -self.gram.copy()
        np.fill_diagonal(J, 0.0)
        return J

    def gram_matvec(self, v: np.ndarray) -> np.ndarray:
        if self.is_dense:
            return self.gram @ v
        return np.asarray(self.gram.matvec(v)).ravel().real

    @cached_property
    def _dense_J(self) -> np.ndarray:
        return self.J

    def couple(self, v: np.ndarray) -> np.ndarray:
        """Return ``J @ v``."""
        if self.is_dense:
            return self._dense_J @ v
        return self.gram_diag * v - self.gram_matvec(v)

    def energy(self, R, sigma, lam: float, include_self: bool = False) -> float:
        R = _as_vector(R, self.N, "R")
        sigma = _as_binary(sigma, self.N)
        s = R * sigma
        Gs = self.gram_matvec(s)
        quad = 0.5 * float(s @ Gs)
        if not include_self:
            quad -= 0.5 * float(np.sum(self.gram_diag * s * s))
        return quad - float(self.hz @ s) + lam * float(sigma.sum())


def coupling_from_observation(A, y) -> CouplingForm:
    """Build ``J_rr' = -sum_k A_r^k A_r'^k`` (zero diagonal) and ``hz = A^T y``."""
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if A.ndim != 2 or A.size == 0:
        raise ValueError("A must be a non-empty 2-D array")
    if y.shape != (A.shape[0],):
        raise ValueError(f"y must have length {A.shape[0]}")
    G = A.T @ A
    G = 0.5 * (G + G.T)
    return CouplingForm(gram=G, hz=A.T @ y, gram_diag=np.einsum("kr,kr->r", A, A))


def hamiltonian(inst: ProblemInstance, R, sigma, lam: float) -> float:
    """Ising-form energy with the pair sum over ``r < r'`` only."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    R = _as_vector(R, inst.N, "R")
    sigma = _as_binary(sigma, inst.N)
    s = R * sigma
    As = inst.A @ s
    pair = 0.5 * (float(As @ As) - float(np.sum((inst.A * inst.A) @ (s * s))))
    return pair - float(inst.y @ As) + lam * float(sigma.sum())


def objective(inst: ProblemInstance, R, sigma, lam: float) -> float:
    """``0.5||y - A(sigma*R)||^2 - 0.5||y||^2 + lam * ||sigma||_0``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    R = _as_vector(R, inst.N, "R")
    sigma = _as_binary(sigma, inst.N)
    r = inst.y - inst.A @ (R * sigma)
    return 0.5 * float(r @ r) - 0.5 * float(inst.y @ inst.y) + lam * float(sigma.sum())


def brute_force_l0rbcs(inst: ProblemInstance, lam: float):
    """Exhaustive ground state of :func:`objective` (test oracle).

    Every support is scored with its least-squares signal (pseudo-inverse
    for rank-deficient supports).  Ties go to the smaller support, then the
    lexicographically smaller ``sigma``.

    Returns
    -------
    R, sigma, H : ndarray, ndarray, float
    """
    N = inst.N
    if N > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force refused for N={N} > {BRUTE_FORCE_MAX_N}")
    A, y = inst.A, inst.y
    best_key = None
    best = None
    for bits in itertools.product((0, 1), repeat=N):
        sigma = np.array(bits, dtype=np.float64)
        R = np.zeros(N)
        active = np.flatnonzero(sigma)
        if active.size:
            R[active] = np.linalg.pinv(A[:, active]) @ y
        H = objective(inst, R, sigma, lam)
        # round so that float noise does not break ties between equal supports
        key = (round(H, 12), active.size, bits)
        if best_key is None or key < best_key:
            best_key = key
            best = (R, sigma, H)
    return best


class SupportSignalPair(NamedTuple):
    sigma: np.ndarray
    R: np.ndarray

    @property
    def estimate(self) -> np.ndarray:
        return self.R * self.sigma


def rmse(R, sigma, x_true, xi_true) -> float:
    if x_true is None or xi_true is None:
        raise ValueError("RMSE needs the true signal and support")
    R = np.asarray(R, dtype=np.float64)
    est = R * np.asarray(sigma, dtype=np.float64)
    ref = np.asarray(x_true, dtype=np.float64) * np.asarray(xi_true, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError("estimate and truth lengths differ")
    return float(np.sqrt(np.mean((est - ref) ** 2)))


def hamming_loss(sigma, xi_true) -> float:
    sigma = _as_binary(sigma)
    xi = _as_binary(xi_true, sigma.shape[0], "xi_true")
    return float(np.mean(np.abs(sigma - xi)))


@dataclass(frozen=True)
class HyperParams:
    """Every scalar knob of the solvers, schedules and CDP.

    Defaults are the random-data settings; ``tau`` and ``K`` vary by backend
    and experiment.  ``loss_includes_j`` switches the mean-field loss term to
    ``(-1 + p - j - c^2) c``.
    """

    g2: float = 1e-7
    j: float = 1.0
    K: float = 1.0
    beta: float = 0.2
    tau: float = 1.0
    dt: float = 0.02
    n_steps: int = 1000
    p_thr: float = 1.0
    d: float = 0.4
    eta_init: float = 0.8
    eta_end: float = 0.18
    velo: int = 51
    dt_c: float = 0.1
    jacobi_iters: int = 100
    cg_max_iters: int = 10000
    cg_tol: float = 1e-10
    gamma: float = 1e-4
    loss_includes_j: bool = False
    refresh_inactive: bool = True
    divergence_limit: float = 100.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.g2 < 0:
            raise ValueError("g2 must be non-negative")
        if not (self.eta_init >= self.eta_end >= 0):
            raise ValueError("need eta_init >= eta_end >= 0")
        if self.velo < 1:
            raise ValueError("velo must be >= 1")
        if self.jacobi_iters < 0 or self.cg_max_iters < 0:
            raise ValueError("iteration limits must be non-negative")

    def replace(self, **changes) -> "HyperParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)


# --- CSV bundle -------------------------------------------------------------

def save_instance(inst: ProblemInstance, directory) -> Path:
    """Write ``A.csv``, ``y.csv``, ``truth.csv`` and ``meta.json`` into ``directory``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    fmt = "%.17g"
    np.savetxt(out / "A.csv", inst.A, delimiter=",", fmt=fmt)
    np.savetxt(out / "y.csv", inst.y[:, None], delimiter=",", fmt=fmt)
    if inst.has_truth:
        truth = np.column_stack([inst.x_true, inst.xi_true])
        np.savetxt(out / "truth.csv", truth, delimiter=",", fmt=fmt, header="x,xi", comments="")
    meta = {"N": inst.N, "M": inst.M, "a": inst.a, "alpha": inst.alpha,
            "nu": inst.nu, "seed": int(inst.seed)}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def load_instance(directory) -> ProblemInstance:
    src = Path(directory)
    meta = json.loads((src / "meta.json").read_text())
    A = np.loadtxt(src / "A.csv", delimiter=",", ndmin=2)
    y = np.loadtxt(src / "y.csv", delimiter=",", ndmin=1)
    if A.shape != (meta["M"], meta["N"]):
        raise ValueError(f"{src / 'A.csv'}: shape {A.shape} does not match meta {meta['M']}x{meta['N']}")
    x_true = xi_true = None
    if (src / "truth.csv").exists():
        truth = np.loadtxt(src / "truth.csv", delimiter=",", skiprows=1, ndmin=2)
        x_true, xi_true = truth[:, 0], truth[:, 1]
    return ProblemInstance(A=A, y=y, x_true=x_true, xi_true=xi_true, a=meta["a"],
                           alpha=meta["alpha"], nu=meta["nu"], seed=meta["seed"])
