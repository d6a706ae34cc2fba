"""scikit-learn style wrapper around :func:`~l0cim.alternating.alternating_minimize`."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .alternating import Backend, alternating_minimize
from .model import HyperParams, coupling_from_observation


class L0CimRegressor(RegressorMixin, BaseEstimator):
    """Sparse linear regression ``y ~ X @ coef_`` with an L0 penalty.

    Rows of ``X`` are measurements and columns are signal entries, so ``X``
    plays the role of the observation matrix ``A``.  The support is searched
    by a simulated coherent Ising machine and the signal by a CDP solver.

    Parameters
    ----------
    backend : {"mfz-bn", "mfz-cn", "pp"}
        Binarized or continuous mean-field CIM, or the Positive-P SDE model.
    cdp : {"jacobi", "cg"}
        Solver for the signal at a fixed support.
    keep_best : bool
        Keep the lowest-objective alternation instead of the last one.
    random_state : int, Generator or None
    Other parameters mirror :class:`~l0cim.model.HyperParams`.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        ``signal_ * support_``.
    support_ : ndarray of bool
    signal_ : ndarray
        The CDP signal ``R``, including values for inactive entries.
    history_ : RunHistory
    """

    def __init__(self, backend="mfz-bn", *, tau=1.0, K=1.0, g2=1e-7, j=1.0, beta=0.2,
                 dt=0.02, n_steps=1000, p_thr=1.0, d=0.4, eta_init=0.8, eta_end=0.18,
                 velo=51, cdp="jacobi", dt_c=0.1, jacobi_iters=100, cg_max_iters=10000,
                 cg_tol=1e-10, loss_includes_j=False, refresh_inactive=True, keep_best=False,
                 random_state=None):
        self.backend = backend
        self.tau = tau
        self.K = K
        self.g2 = g2
        self.j = j
        self.beta = beta
        self.dt = dt
        self.n_steps = n_steps
        self.p_thr = p_thr
        self.d = d
        self.eta_init = eta_init
        self.eta_end = eta_end
        self.velo = velo
        self.cdp = cdp
        self.dt_c = dt_c
        self.jacobi_iters = jacobi_iters
        self.cg_max_iters = cg_max_iters
        self.cg_tol = cg_tol
        self.loss_includes_j = loss_includes_j
        self.refresh_inactive = refresh_inactive
        self.keep_best = keep_best
        self.random_state = random_state

    def hyperparams(self) -> HyperParams:
        names = ("tau", "K", "g2", "j", "beta", "dt", "n_steps", "p_thr", "d", "eta_init",
                 "eta_end", "velo", "dt_c", "jacobi_iters", "cg_max_iters", "cg_tol",
                 "loss_includes_j", "refresh_inactive")
        return HyperParams(**{k: getattr(self, k) for k in names})

    def fit(self, X, y, R_init=None, x_true=None, xi_true=None):
        X, y = check_X_y(X, y, y_numeric=True, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        params = self.hyperparams()
        result = alternating_minimize(
            coupling_from_observation(X, y), Backend(self.backend), params, R_init=R_init,
            rng=self.random_state, method=self.cdp, x_true=x_true, xi_true=xi_true,
            keep_best=self.keep_best,
        )
        self.signal_ = result.R
        self.support_ = result.sigma.astype(bool)
        self.coef_ = result.coef
        self.intercept_ = 0.0
        self.history_ = result.history
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_
