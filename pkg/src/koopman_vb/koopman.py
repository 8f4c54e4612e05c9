"""Lifted linear predictors: model container, identification front-end, prediction and NMSE."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import baselines
from .data import Dataset, snapshot_pairs
from .dictionary import Dictionary, delay_embed, evaluate, evaluate_batch, featurize
from .exceptions import ConfigError, DataError, DegenerateSignalError, DivergenceError
from .vb import FitResult, Priors, fit_all, matrix_from_json, matrix_to_json

METHODS = ("I", "II", "III", "IV")


@dataclass(frozen=True)
class KoopmanModel:
    """``phi(x[k+1])^T = [phi(x[k])^T u[k]^T] K_F_hat``,  ``y[k] = C phi(x[k])``.

    ``rho_hats`` (per-target noise precisions) and ``inclusion`` (the
    inclusion matrix) are only present for method IV.
    """

    dictionary: Dictionary
    K_F_hat: np.ndarray
    method_tag: str = "I"
    rho_hats: np.ndarray | None = None
    inclusion: np.ndarray | None = None

    def __post_init__(self):
        K = np.asarray(self.K_F_hat, dtype=float)
        L, l = len(self.dictionary), self.dictionary.n_inputs
        if K.shape != (L + l, L):
            raise ConfigError(f"K_F_hat has shape {K.shape}, expected {(L + l, L)}")
        if self.method_tag not in METHODS:
            raise ConfigError(f"unknown method tag {self.method_tag!r}")
        object.__setattr__(self, "K_F_hat", K)
        if self.rho_hats is not None:
            object.__setattr__(self, "rho_hats", np.asarray(self.rho_hats, dtype=float))
        if self.inclusion is not None:
            G = np.asarray(self.inclusion, dtype=float)
            if G.shape != K.shape:
                raise ConfigError("inclusion matrix must have the shape of K_F_hat")
            object.__setattr__(self, "inclusion", G)

    @property
    def C(self) -> np.ndarray:
        """Output selection matrix (one 1 per row, at an output observable)."""
        C = np.zeros((len(self.dictionary.output_indices), len(self.dictionary)))
        C[np.arange(C.shape[0]), list(self.dictionary.output_indices)] = 1.0
        return C

    def to_dict(self) -> dict:
        out = {
            "method_tag": self.method_tag,
            "dictionary": self.dictionary.to_dict(),
            "K_F_hat": matrix_to_json(self.K_F_hat),
            "C": matrix_to_json(self.C),
        }
        if self.rho_hats is not None:
            out["rho_hats"] = self.rho_hats.tolist()
        if self.inclusion is not None:
            out["inclusion"] = matrix_to_json(self.inclusion)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "KoopmanModel":
        try:
            return cls(
                dictionary=Dictionary.from_dict(d["dictionary"]),
                K_F_hat=matrix_from_json(d["K_F_hat"]),
                method_tag=d.get("method_tag", "I"),
                rho_hats=d.get("rho_hats"),
                inclusion=matrix_from_json(d["inclusion"]) if "inclusion" in d else None,
            )
        except KeyError as exc:
            raise ConfigError(f"model JSON missing field {exc}") from None

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, path) -> "KoopmanModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _inputs_vector(model, u):
    u = np.zeros(0) if u is None else np.atleast_1d(np.asarray(u, dtype=float))
    if u.size != model.dictionary.n_inputs:
        raise DataError(f"expected {model.dictionary.n_inputs} inputs, got {u.size}")
    return u


def one_step(model: KoopmanModel, x, u=None):
    """Advance one step from a (delay-embedded) state.

    Returns ``(phi_next, y_next)`` where ``y_next = C phi_next``.
    """
    phi = evaluate(model.dictionary, x)
    phi_next = model.K_F_hat.T @ np.concatenate([phi, _inputs_vector(model, u)])
    return phi_next, model.C @ phi_next


def predict_one_step(model: KoopmanModel, d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """One-step predictions along a dataset.

    Every step is lifted from the measured state. Returns ``(y_true, y_pred)``
    for the output observables, both of shape ``(m', n_out)`` where ``m'``
    accounts for the rows consumed by delay embedding.
    """
    emb = delay_embed(d, model.dictionary.embed_delays)
    pairs = snapshot_pairs(emb)
    Phi = np.hstack([evaluate_batch(model.dictionary, pairs.X), pairs.U])
    pred = Phi @ model.K_F_hat[:, list(model.dictionary.output_indices)]
    true = pairs.X_next[:, model.dictionary.output_state_indices]
    return true, pred


def rollout(model: KoopmanModel, x0, inputs=None, horizon: int | None = None,
            relift: bool = False) -> np.ndarray:
    """Multi-step prediction.

    By default ``x0`` is lifted once and the observables are propagated
    linearly. With ``relift=True`` each prediction is mapped back to a state
    and lifted again; this needs the outputs to cover the whole un-delayed
    state (delayed coordinates are shifted in from the history).

    Returns an array of shape ``(horizon, n_out)``.
    """
    dic = model.dictionary
    U = np.zeros((0, dic.n_inputs)) if inputs is None else np.asarray(inputs, dtype=float)
    if U.ndim == 1:
        U = U[:, None] if dic.n_inputs == 1 else U[None, :]
    if horizon is None:
        if dic.n_inputs == 0:
            raise ConfigError("horizon is required for autonomous models")
        horizon = U.shape[0]
    if dic.n_inputs and U.shape[0] < horizon:
        raise ConfigError(f"need {horizon} input rows, got {U.shape[0]}")
    if dic.n_inputs == 0:
        U = np.zeros((horizon, 0))
    outs = dic.output_state_indices
    if relift and sorted(outs) != list(range(dic.n_states)):
        raise ConfigError("relift needs every un-delayed state component as an output")
    KT = model.K_F_hat.T
    C = model.C
    x = np.asarray(x0, dtype=float).copy()
    phi = evaluate(dic, x)
    traj = np.empty((horizon, len(outs)))
    for k in range(horizon):
        phi = KT @ np.concatenate([phi, U[k]])
        y = C @ phi
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"prediction diverged at step {k}")
        traj[k] = y
        if relift:
            n = dic.n_states
            new = np.empty_like(x)
            new[n:] = x[:-n] if dic.embed_delays else x[n:]
            new[outs] = y
            x = new
            phi = evaluate(dic, x)
    return traj


def nmse(x_true, x_pred):
    """Normalised mean squared error ``||x_true - x_pred||^2 / ||x_true - mean(x_true)||^2``.

    Two-dimensional inputs are scored column by column and return an array.
    """
    xt = np.asarray(x_true, dtype=float)
    xp = np.asarray(x_pred, dtype=float)
    if xt.shape != xp.shape:
        raise DataError(f"shape mismatch {xt.shape} vs {xp.shape}")
    if xt.shape[0] < 2:
        raise DataError("need at least 2 samples")
    denom = np.sum((xt - xt.mean(axis=0)) ** 2, axis=0)
    if np.any(denom == 0):
        raise DegenerateSignalError("x_true is constant; NMSE undefined")
    return np.sum((xt - xp) ** 2, axis=0) / denom


def fit_matrix(method: str, Phi, T, *, priors: Priors | None = None, stls_lambda: float = 0.05,
               sbl_max_iter: int = 1000, sbl_tol: float = 1e-6):
    """Solve the EDMD regression with method I, II, III or IV.

    Returns ``(K_F_hat, FitResult or None)``.
    """
    if method == "I":
        return baselines.edmd_pinv(Phi, T), None
    if method == "II":
        return baselines.stls(Phi, T, stls_lambda), None
    if method == "III":
        return baselines.sbl_all(Phi, T, sbl_max_iter, sbl_tol), None
    if method == "IV":
        res = fit_all(Phi, T, priors)
        return res.K_F_hat, res
    raise ConfigError(f"unknown method {method!r}")


def identify(dic: Dictionary, d: Dataset, method: str = "IV", **kw) -> tuple[KoopmanModel, FitResult | None]:
    """Featurise ``d`` with ``dic`` and fit a :class:`KoopmanModel`."""
    Phi, T = featurize(dic, d)
    K, res = fit_matrix(method, Phi, T, **kw)
    model = KoopmanModel(dic, K, method,
                         rho_hats=None if res is None else res.rho_hats,
                         inclusion=None if res is None else res.Gamma)
    return model, res


class KoopmanRegressor(RegressorMixin, BaseEstimator):
    """Scikit-learn front-end: ``fit(dataset)`` then ``predict(dataset)`` one step ahead.

    ``score`` returns ``1 - mean(NMSE)`` over the outputs.
    """

    def __init__(self, dictionary=None, method="IV", priors=None, stls_lambda=0.05):
        self.dictionary = dictionary
        self.method = method
        self.priors = priors
        self.stls_lambda = stls_lambda

    def fit(self, X, y=None):
        if not isinstance(X, Dataset):
            raise DataError("KoopmanRegressor.fit expects a Dataset")
        if self.dictionary is None:
            raise ConfigError("a Dictionary is required")
        kw = {"stls_lambda": self.stls_lambda}
        if self.method == "IV":
            kw["priors"] = self.priors
        self.model_, self.fit_result_ = identify(self.dictionary, X, self.method, **kw)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return predict_one_step(self.model_, X)[1]

    def score(self, X, y=None, sample_weight=None):
        check_is_fitted(self, "model_")
        true, pred = predict_one_step(self.model_, X)
        return float(1.0 - np.mean(nmse(true, pred)))
