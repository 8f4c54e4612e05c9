"""Reference EDMD solvers: pseudoinverse, sequential thresholded least squares
and sparse Bayesian learning (relevance-vector style evidence maximisation)."""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConfigError, NumericError

logger = logging.getLogger(__name__)

PINV_RCOND = 1e-15
SBL_PRUNE_ALPHA = 1e12
SBL_G_FLOOR = 1e-12


def _as_2d(T):
    T = np.asarray(T, dtype=float)
    return (T[:, None], True) if T.ndim == 1 else (T, False)


def edmd_pinv(Phi, T, rcond: float = PINV_RCOND) -> np.ndarray:
    """Minimum-norm least-squares solution ``pinv(Phi) @ T``."""
    Phi = np.asarray(Phi, dtype=float)
    T2, squeeze = _as_2d(T)
    if Phi.shape[0] < 1 or Phi.shape[0] != T2.shape[0]:
        raise ConfigError(f"incompatible shapes {Phi.shape} and {T2.shape}")
    K = np.linalg.pinv(Phi, rcond=rcond) @ T2
    return K[:, 0] if squeeze else K


def _stls_column(Phi, t, w, lam, max_rounds):
    active = np.ones(w.size, dtype=bool)
    for _ in range(max_rounds):
        keep = active & (np.abs(w) >= lam)
        if np.array_equal(keep, active):
            break
        active = keep
        w = np.zeros_like(w)
        if active.any():
            w[active] = np.linalg.pinv(Phi[:, active], rcond=PINV_RCOND) @ t
    w[~active] = 0.0
    return w


def stls(Phi, T, lam: float, max_rounds: int = 10) -> np.ndarray:
    """Sequential thresholded least squares, one target column at a time.

    Starts from the pseudoinverse solution; each round zeroes coefficients
    with magnitude below ``lam`` and refits on the remaining columns.
    """
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    Phi = np.asarray(Phi, dtype=float)
    T2, squeeze = _as_2d(T)
    K = edmd_pinv(Phi, T2)
    for j in range(T2.shape[1]):
        K[:, j] = _stls_column(Phi, T2[:, j], K[:, j], lam, max_rounds)
    return K[:, 0] if squeeze else K


def _cholesky_jitter(A):
    """Cholesky factor of ``A``, adding a growing diagonal jitter if it fails."""
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-12 * max(float(np.mean(np.diag(A))), np.finfo(float).tiny)
    for _ in range(20):
        logger.debug("ill-conditioned SBL posterior, adding jitter %.3g", jitter)
        try:
            return np.linalg.cholesky(A + jitter * np.eye(A.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericError("SBL posterior precision is not positive definite")


def sbl(Phi, t, max_iter: int = 1000, tol: float = 1e-6):
    """Sparse Bayesian learning for a single target.

    Fixed-point evidence maximisation: with ``Sigma = (beta Phi^T Phi + diag(alpha))^-1``
    and ``mu = beta Sigma Phi^T t``, each round sets ``alpha_i = g_i / mu_i^2``
    with ``g_i = 1 - alpha_i Sigma_ii`` and ``beta = (m - sum g) / ||t - Phi mu||^2``.
    Coefficients whose precision exceeds 1e12 are removed and set to exactly 0.

    Returns
    -------
    weights : ndarray of shape (P,)
    alphas : ndarray of shape (P,)
        Final precisions (``inf`` for pruned coefficients).
    """
    Phi = np.asarray(Phi, dtype=float)
    t = np.asarray(t, dtype=float).ravel()
    m, P = Phi.shape
    if m < 1 or t.size != m:
        raise ConfigError(f"incompatible shapes {Phi.shape} and {t.shape}")
    scale = float(np.mean(t * t))
    if scale == 0.0:
        return np.zeros(P), np.full(P, np.inf)
    min_noise = 1e-12 * scale
    alpha = np.ones(P)
    beta = 1.0 / max(float(np.var(t)), min_noise) if np.var(t) > 0 else 1.0 / scale
    active = np.ones(P, dtype=bool)
    mu = np.zeros(P)
    G_full = Phi.T @ Phi
    Pt_full = Phi.T @ t
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        A = beta * G_full[np.ix_(idx, idx)] + np.diag(alpha[idx])
        L = _cholesky_jitter(A)
        Linv = np.linalg.solve(L, np.eye(idx.size))
        Sigma = Linv.T @ Linv
        mu_a = beta * Sigma @ Pt_full[idx]
        # round-off can push g outside [0, 1] for badly conditioned designs
        g = np.clip(1.0 - alpha[idx] * np.diag(Sigma), SBL_G_FLOOR, 1.0)
        new_alpha = g / np.maximum(mu_a * mu_a, np.finfo(float).tiny)
        resid = t - Phi[:, idx] @ mu_a
        rss = float(resid @ resid)
        beta = max(m - float(g.sum()), np.finfo(float).eps) / max(rss, min_noise * m)
        beta = min(beta, 1.0 / min_noise)
        change = np.max(np.abs(new_alpha - alpha[idx]) / alpha[idx])
        alpha[idx] = new_alpha
        mu[:] = 0.0
        mu[idx] = mu_a
        pruned = alpha > SBL_PRUNE_ALPHA
        active &= ~pruned
        if change < tol and not pruned[idx].any():
            break
    mu[~active] = 0.0
    alpha = np.where(active, alpha, np.inf)
    return mu, alpha


def sbl_all(Phi, T, max_iter: int = 1000, tol: float = 1e-6) -> np.ndarray:
    """Column-wise :func:`sbl`; returns the weight matrix."""
    T2, squeeze = _as_2d(T)
    K = np.column_stack([sbl(Phi, T2[:, j], max_iter, tol)[0] for j in range(T2.shape[1])])
    return K[:, 0] if squeeze else K


class _LinearBase(RegressorMixin, BaseEstimator):
    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self.coef_ = self._solve(X, y)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X) @ self.coef_


class PinvRegressor(_LinearBase):
    """Method I: ordinary EDMD least squares."""

    def __init__(self, rcond=PINV_RCOND):
        self.rcond = rcond

    def _solve(self, X, y):
        return edmd_pinv(X, y, self.rcond)


class STLSRegressor(_LinearBase):
    """Method II: sequential thresholded least squares."""

    def __init__(self, threshold=0.05, max_rounds=10):
        self.threshold = threshold
        self.max_rounds = max_rounds

    def _solve(self, X, y):
        return stls(X, y, self.threshold, self.max_rounds)


class SBLRegressor(_LinearBase):
    """Method III: sparse Bayesian learning."""

    def __init__(self, max_iter=1000, tol=1e-6):
        self.max_iter = max_iter
        self.tol = tol

    def _solve(self, X, y):
        return sbl_all(X, y, self.max_iter, self.tol)
