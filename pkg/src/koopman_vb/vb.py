"""Spike-and-slab variational Bayes for sparse EDMD regression.

Each target ``t`` (one lifted observable at the next time step) is modelled as

    t = Phi (gamma * beta) + v,          v ~ N(0, 1/rho I)
    beta_i ~ N(0, 1/alpha_i),            gamma_i ~ Bernoulli(pi_i)
    rho ~ Gamma(a, b),  alpha_i ~ Gamma(c_i, d_i),  pi_i ~ Beta(e_i, f_i)

and the mean-field posterior is found by coordinate updates with damping on
the slab parameters and clipping of the inclusion probabilities.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConfigError, NumericError

LITERAL = "algorithm1_literal"
JACOBI = "jacobi"


@dataclass
class Priors:
    """Hyperparameters of the hierarchical prior and solver settings.

    ``c``, ``d``, ``e`` and ``f`` may be scalars (shared by all coefficients)
    or sequences with one entry per column of the design matrix.
    """

    a: float = 1e-6
    b: float = 1e-6
    c: float | Sequence[float] = 1e-6
    d: float | Sequence[float] = 1e-6
    e: float | Sequence[float] = 1.0
    f: float | Sequence[float] = 1.0
    p_d: float = 0.5
    delta: float = 1e-8
    max_iter: int = 500
    tol: float = 1e-6
    update_mode: str = LITERAL

    def __post_init__(self):
        for name in ("a", "b", "c", "d", "e", "f"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise ConfigError(f"prior parameter {name} must be > 0")
        if not 0 < self.p_d <= 1:
            raise ConfigError("damping coefficient p_d must lie in (0, 1]")
        if not 0 < self.delta < 0.5:
            raise ConfigError("delta must lie in (0, 0.5)")
        if self.max_iter < 0 or not self.tol > 0:
            raise ConfigError("need max_iter >= 0 and tol > 0")
        if self.update_mode not in (LITERAL, JACOBI):
            raise ConfigError(f"update_mode must be {LITERAL!r} or {JACOBI!r}")

    def vector(self, name: str, size: int) -> np.ndarray:
        v = np.asarray(getattr(self, name), dtype=float)
        if v.ndim == 0:
            return np.full(size, float(v))
        if v.shape != (size,):
            raise ConfigError(f"prior {name} has length {v.size}, expected {size}")
        return v.copy()

    def to_dict(self) -> dict:
        out = asdict(self)
        for k in ("c", "d", "e", "f"):
            v = np.asarray(out[k], dtype=float)
            out[k] = float(v) if v.ndim == 0 else v.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Priors":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown prior fields {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Priors":
        return cls.from_dict(json.loads(text))


@dataclass
class PosteriorState:
    """Variational parameters and expectations for one target regression.

    ``alpha_bar`` and ``mu`` hold the damped slab precision and mean;
    ``sigma2 = 1 / alpha_bar``.
    """

    a_bar: float
    b_bar: float
    c_bar: np.ndarray
    d_bar: np.ndarray
    e_bar: np.ndarray
    f_bar: np.ndarray
    mu: np.ndarray
    alpha_bar: np.ndarray
    sigma2: np.ndarray
    pi_bar: np.ndarray
    rho_hat: float
    alpha_hat: np.ndarray
    pi_hat: np.ndarray
    gamma_hat: np.ndarray
    iterations: int = 0
    converged: bool = False

    @property
    def size(self) -> int:
        return self.mu.size

    @property
    def weights(self) -> np.ndarray:
        """Posterior mean of ``gamma * beta`` under the mean-field factorisation."""
        return self.gamma_hat * self.mu

    def refresh_expectations(self) -> None:
        self.rho_hat = self.a_bar / self.b_bar
        self.alpha_hat = self.c_bar / self.d_bar
        self.pi_hat = self.e_bar / (self.e_bar + self.f_bar)
        self.sigma2 = 1.0 / self.alpha_bar
        self.gamma_hat = self.pi_bar.copy()

    def copy(self) -> "PosteriorState":
        kw = {k: (v.copy() if isinstance(v, np.ndarray) else v)
              for k, v in self.__dict__.items()}
        return PosteriorState(**kw)

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorState":
        kw = dict(d)
        for k in ("c_bar", "d_bar", "e_bar", "f_bar", "mu", "alpha_bar", "sigma2",
                  "pi_bar", "alpha_hat", "pi_hat", "gamma_hat"):
            kw[k] = np.asarray(kw[k], dtype=float)
        return cls(**kw)


# -- scalar special functions ---------------------------------------------

_ASYMPTOTIC = (
    1.0 / 12,
    -1.0 / 120,
    1.0 / 252,
    -1.0 / 240,
    1.0 / 132,
    -691.0 / 32760,
    1.0 / 12,
)


def digamma(x: float) -> float:
    """Digamma function for ``x > 0``.

    Shifts the argument above 6 with ``psi(x) = psi(x + 1) - 1/x`` and then
    applies the asymptotic series through the ``x**-14`` term.
    """
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise ConfigError(f"digamma is only defined here for finite x > 0, got {x}")
    acc = 0.0
    while x < 6.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    p = inv2
    for coef in _ASYMPTOTIC:
        series += coef * p
        p *= inv2
    return acc + math.log(x) - 0.5 / x - series


def sigmoid(eta: float) -> float:
    """Logistic function without overflow for large ``|eta|``."""
    if eta >= 0:
        return 1.0 / (1.0 + math.exp(-eta))
    z = math.exp(eta)
    return z / (1.0 + z)


# -- single updates --------------------------------------------------------


def update_rho(state: PosteriorState, t, Phi, priors: Priors):
    """Noise-precision update: ``a_bar = m/2 + a``, ``b_bar = ||t - Phi (gamma*mu)||^2 / 2 + b``."""
    t = np.asarray(t, dtype=float)
    resid = t - np.asarray(Phi, dtype=float) @ state.weights
    state.a_bar = 0.5 * t.size + priors.a
    state.b_bar = 0.5 * float(resid @ resid) + priors.b
    if not math.isfinite(state.b_bar):
        raise NumericError("b_bar is not finite")
    state.rho_hat = state.a_bar / state.b_bar
    return state.a_bar, state.b_bar


def update_alpha(state: PosteriorState, i: int, priors: Priors):
    c = priors.vector("c", state.size)[i]
    d = priors.vector("d", state.size)[i]
    state.c_bar[i] = c + 0.5
    state.d_bar[i] = d + 0.5 * (state.mu[i] ** 2 + state.sigma2[i])
    state.alpha_hat[i] = state.c_bar[i] / state.d_bar[i]
    return state.c_bar[i], state.d_bar[i]


def update_pi(state: PosteriorState, i: int, priors: Priors):
    e = priors.vector("e", state.size)[i]
    f = priors.vector("f", state.size)[i]
    g = state.gamma_hat[i]
    state.e_bar[i] = g + e
    state.f_bar[i] = 1.0 - g + f
    state.pi_hat[i] = state.e_bar[i] / (state.e_bar[i] + state.f_bar[i])
    return state.e_bar[i], state.f_bar[i]


def residual(state: PosteriorState, t, Phi, i: int) -> np.ndarray:
    """Target minus the fitted contribution of every coefficient except ``i``."""
    Phi = np.asarray(Phi, dtype=float)
    w = state.weights
    return np.asarray(t, dtype=float) - Phi @ w + Phi[:, i] * w[i]


def _beta_raw(rho, gamma, alpha_hat, phi_sq, phi_r):
    alpha_bar = rho * gamma * phi_sq + alpha_hat
    if not alpha_bar > 0:
        raise NumericError(f"non-positive slab precision {alpha_bar}")
    return alpha_bar, rho * gamma * phi_r / alpha_bar


def update_beta(state: PosteriorState, i: int, r_i, phi_i, priors: Priors):
    """Slab update followed by damping against the previous iterate of coefficient ``i``.

    Returns the damped ``(alpha_bar_i, mu_i)``.
    """
    phi_i = np.asarray(phi_i, dtype=float)
    a_raw, m_raw = _beta_raw(state.rho_hat, state.gamma_hat[i], state.alpha_hat[i],
                             float(phi_i @ phi_i), float(phi_i @ np.asarray(r_i, dtype=float)))
    p = priors.p_d
    state.alpha_bar[i] = p * a_raw + (1.0 - p) * state.alpha_bar[i]
    state.mu[i] = p * m_raw + (1.0 - p) * state.mu[i]
    state.sigma2[i] = 1.0 / state.alpha_bar[i]
    return state.alpha_bar[i], state.mu[i]


def inclusion_logit(rho, mu, sigma2, phi_sq, phi_r, e_bar, f_bar) -> float:
    """Log-odds ``eta`` of the inclusion flag."""
    return (rho * mu * phi_r - 0.5 * rho * (mu * mu + sigma2) * phi_sq
            + digamma(e_bar) - digamma(f_bar))


def update_gamma(state: PosteriorState, i: int, r_i, phi_i, priors: Priors) -> float:
    phi_i = np.asarray(phi_i, dtype=float)
    eta = inclusion_logit(state.rho_hat, state.mu[i], state.sigma2[i], float(phi_i @ phi_i),
                          float(phi_i @ np.asarray(r_i, dtype=float)),
                          state.e_bar[i], state.f_bar[i])
    pi = min(max(sigmoid(eta), priors.delta), 1.0 - priors.delta)
    state.pi_bar[i] = pi
    state.gamma_hat[i] = pi
    return pi


# -- full inference ----------------------------------------------------------


def digamma_array(x) -> np.ndarray:
    """Vectorised :func:`digamma` (fixed six-step shift, then the same series)."""
    x = np.asarray(x, dtype=float)
    if not np.all(x > 0):
        raise ConfigError("digamma needs x > 0")
    acc = -(1.0 / x + 1.0 / (x + 1.0) + 1.0 / (x + 2.0)
            + 1.0 / (x + 3.0) + 1.0 / (x + 4.0) + 1.0 / (x + 5.0))
    y = x + 6.0
    inv2 = 1.0 / (y * y)
    series = np.zeros_like(y)
    p = inv2
    for coef in _ASYMPTOTIC:
        series += coef * p
        p = p * inv2
    return acc + np.log(y) - 0.5 / y - series


_MATRIX_FIELDS = ("c_bar", "d_bar", "e_bar", "f_bar", "mu", "alpha_bar", "sigma2",
                  "pi_bar", "alpha_hat", "pi_hat")
_VECTOR_FIELDS = ("a_bar", "b_bar", "rho_hat")


def _init_batch(G, PT, spread, m, priors: Priors, fixed_inclusion):
    P, L = PT.shape
    col = lambda name: np.repeat(priors.vector(name, P)[:, None], L, axis=1)
    mu = np.linalg.solve(G + np.eye(P), PT)
    rho = np.where(spread > 0, m / np.where(spread > 0, spread, 1.0), 1.0)
    a_bar = np.full(L, 0.5 * m + priors.a)
    c_bar = col("c") + 0.5
    e_bar = col("e") + 0.5
    f_bar = col("f") + 0.5
    return {
        "a_bar": a_bar, "b_bar": a_bar / rho, "rho_hat": rho,
        "c_bar": c_bar, "d_bar": c_bar.copy(), "e_bar": e_bar, "f_bar": f_bar,
        "mu": mu, "alpha_bar": np.ones((P, L)), "sigma2": np.ones((P, L)),
        "pi_bar": np.full((P, L), 0.5 if fixed_inclusion is None else float(fixed_inclusion)),
        "alpha_hat": np.ones((P, L)), "pi_hat": e_bar / (e_bar + f_bar),
    }


def init_state(Phi, t, priors: Priors | None = None) -> PosteriorState:
    """Starting point of the iteration: ridge means (unit regulariser), unit
    variances, inclusion 0.5 and noise precision ``m / ||t - mean(t)||^2``."""
    priors = priors or Priors()
    Phi = np.asarray(Phi, dtype=float)
    t = np.asarray(t, dtype=float).ravel()
    spread = np.array([np.sum((t - t.mean()) ** 2)])
    S = _init_batch(Phi.T @ Phi, (Phi.T @ t)[:, None], spread, t.size, priors, None)
    return _states_from_batch(S, np.zeros(1, dtype=int), np.zeros(1, dtype=bool))[0]


def _states_from_batch(S, iterations, converged) -> list[PosteriorState]:
    out = []
    for j in range(S["a_bar"].size):
        kw = {k: S[k][:, j].copy() for k in _MATRIX_FIELDS}
        kw.update({k: float(S[k][j]) for k in _VECTOR_FIELDS})
        kw["gamma_hat"] = kw["pi_bar"].copy()
        out.append(PosteriorState(**kw, iterations=int(iterations[j]),
                                  converged=bool(converged[j])))
    return out


def _update_rho_gram(S, G, PT, tt, m, priors):
    W = S["pi_bar"] * S["mu"]
    rss = tt - 2.0 * np.einsum("ij,ij->j", W, PT) + np.einsum("ij,ij->j", W, G @ W)
    S["a_bar"] = np.full(rss.size, 0.5 * m + priors.a)
    S["b_bar"] = 0.5 * np.maximum(rss, 0.0) + priors.b
    S["rho_hat"] = S["a_bar"] / S["b_bar"]


def _alpha_pi_updates(S, gamma_old, c, d, e, f):
    """Precision and inclusion-prior updates from the values entering the sweep.

    Coefficient i's inputs to these updates are untouched until step i of a
    sequential sweep, so computing them up front gives identical results.
    """
    S["c_bar"] = np.broadcast_to(c + 0.5, S["mu"].shape).copy()
    S["d_bar"] = d + 0.5 * (S["mu"] ** 2 + S["sigma2"])
    S["alpha_hat"] = S["c_bar"] / S["d_bar"]
    S["e_bar"] = gamma_old + e
    S["f_bar"] = 1.0 - gamma_old + f
    S["pi_hat"] = S["e_bar"] / (S["e_bar"] + S["f_bar"])


def _clipped_sigmoid(eta, delta):
    return np.clip(expit(eta), delta, 1.0 - delta)


def _sweep_literal(S, G, PT, diagG, priors, c, d, e, f, fixed_inclusion):
    p = priors.p_d
    _alpha_pi_updates(S, S["pi_bar"].copy(), c, d, e, f)
    psi = digamma_array(S["e_bar"]) - digamma_array(S["f_bar"])
    mu, s2, gam, ab, ah = S["mu"], S["sigma2"], S["pi_bar"], S["alpha_bar"], S["alpha_hat"]
    rho = S["rho_hat"]
    W = gam * mu
    for i in range(mu.shape[0]):
        gii = diagG[i]
        g = gam[i].copy()
        phi_r = PT[i] - G[i] @ W + gii * W[i]
        a_raw = rho * g * gii + ah[i]
        if not np.all(a_raw > 0):
            raise NumericError(f"non-positive slab precision at coefficient {i}")
        m_raw = rho * g * phi_r / a_raw
        a_d = p * a_raw + (1.0 - p) * ab[i]
        m_d = p * m_raw + (1.0 - p) * mu[i]
        ab[i] = a_d
        mu[i] = m_d
        s2[i] = 1.0 / a_d
        if fixed_inclusion is None:
            eta = rho * m_d * phi_r - 0.5 * rho * (m_d * m_d + s2[i]) * gii + psi[i]
            gam[i] = _clipped_sigmoid(eta, priors.delta)
        W[i] = gam[i] * m_d


def _sweep_jacobi(S, G, PT, diagG, priors, c, d, e, f, fixed_inclusion):
    p = priors.p_d
    gamma_old = S["pi_bar"].copy()
    mu_old = S["mu"].copy()
    _alpha_pi_updates(S, gamma_old, c, d, e, f)
    rho = S["rho_hat"]
    W = gamma_old * mu_old
    dg = diagG[:, None]
    phi_r = PT - G @ W + dg * W
    a_raw = rho * gamma_old * dg + S["alpha_hat"]
    if not np.all(a_raw > 0):
        raise NumericError("non-positive slab precision")
    m_raw = rho * gamma_old * phi_r / a_raw
    S["alpha_bar"] = p * a_raw + (1.0 - p) * S["alpha_bar"]
    S["mu"] = p * m_raw + (1.0 - p) * mu_old
    S["sigma2"] = 1.0 / S["alpha_bar"]
    if fixed_inclusion is None:
        psi = digamma_array(S["e_bar"]) - digamma_array(S["f_bar"])
        eta = rho * S["mu"] * phi_r - 0.5 * rho * (S["mu"] ** 2 + S["sigma2"]) * dg + psi
        S["pi_bar"] = _clipped_sigmoid(eta.ravel(), priors.delta).reshape(eta.shape)


def _check_finite_batch(S, sweep, cols):
    for name in ("mu", "alpha_bar", "pi_bar", "d_bar"):
        bad = np.argwhere(~np.isfinite(S[name]))
        if bad.size:
            i, j = bad[0]
            raise NumericError(f"non-finite {name} at iteration {sweep}, coefficient {i} "
                               f"(target {cols[j]})")
    bad = np.flatnonzero(~np.isfinite(S["b_bar"]))
    if bad.size:
        raise NumericError(f"non-finite b_bar at iteration {sweep} (target {cols[bad[0]]})")


def _fit_batch(G, PT, tt, spread, m, priors: Priors, fixed_inclusion=None) -> list[PosteriorState]:
    """Run the updates for all target columns of ``PT = Phi^T T`` side by side.

    Targets are independent; stacking them only turns each coefficient update
    into a vector operation. A target stops changing once it has converged.
    """
    P, L = PT.shape
    c, d, e, f = (priors.vector(k, P)[:, None] for k in "cdef")
    diagG = np.ascontiguousarray(np.diag(G))
    S = _init_batch(G, PT, spread, m, priors, fixed_inclusion)
    iterations = np.zeros(L, dtype=int)
    converged = np.zeros(L, dtype=bool)
    active = np.arange(L)
    sweep = _sweep_literal if priors.update_mode == LITERAL else _sweep_jacobi
    for it in range(1, priors.max_iter + 1):
        full = active.size == L
        sub = S if full else {k: v[..., active].copy() for k, v in S.items()}
        PT_a = PT if full else PT[:, active]
        _update_rho_gram(sub, G, PT_a, tt[active], m, priors)
        mu_prev = sub["mu"].copy()
        sweep(sub, G, PT_a, diagG, priors, c, d, e, f, fixed_inclusion)
        sub["alpha_hat"] = sub["c_bar"] / sub["d_bar"]
        sub["pi_hat"] = sub["e_bar"] / (sub["e_bar"] + sub["f_bar"])
        sub["sigma2"] = 1.0 / sub["alpha_bar"]
        _check_finite_batch(sub, it, active)
        if not full:
            for k, v in sub.items():
                S[k][..., active] = v
        iterations[active] = it
        done = np.max(np.abs(sub["mu"] - mu_prev), axis=0) < priors.tol
        converged[active[done]] = True
        active = active[~done]
        if active.size == 0:
            break
    return _states_from_batch(S, iterations, converged)


def fit_target(Phi, t, priors: Priors | None = None, *, fixed_inclusion: float | None = None,
               gram: np.ndarray | None = None) -> PosteriorState:
    """Run the variational updates for one target column.

    Each sweep updates the noise precision once and then every coefficient
    in turn (``update_mode='algorithm1_literal'``) or all coefficients at once
    from the previous sweep's values (``update_mode='jacobi'``). Iteration
    stops after ``priors.max_iter`` sweeps or when the largest change of a
    damped slab mean falls below ``priors.tol``.

    Parameters
    ----------
    Phi : array of shape (m, P)
    t : array of shape (m,)
    priors : Priors, optional
    fixed_inclusion : float, optional
        Hold every inclusion probability at this value instead of updating it.
    gram : array of shape (P, P), optional
        Precomputed ``Phi.T @ Phi``.
    """
    priors = priors or Priors()
    Phi = np.asarray(Phi, dtype=float)
    t = np.asarray(t, dtype=float).ravel()
    if Phi.ndim != 2 or Phi.shape[0] != t.size:
        raise ConfigError(f"Phi shape {Phi.shape} incompatible with target length {t.size}")
    if t.size < 2:
        raise ConfigError("need at least 2 samples")
    G = Phi.T @ Phi if gram is None else gram
    spread = np.array([np.sum((t - t.mean()) ** 2)])
    return _fit_batch(G, (Phi.T @ t)[:, None], np.array([t @ t]), spread, t.size,
                      priors, fixed_inclusion)[0]


@dataclass
class FitResult:
    """Per-target posteriors assembled into the Koopman matrix and inclusion matrix."""

    states: list[PosteriorState]
    K_F_hat: np.ndarray
    Gamma: np.ndarray
    rho_hats: np.ndarray
    iterations_used: np.ndarray
    converged: np.ndarray
    priors: Priors = field(default_factory=Priors)

    @classmethod
    def from_states(cls, states: list[PosteriorState], priors: Priors) -> "FitResult":
        Gamma = np.column_stack([s.gamma_hat for s in states])
        mus = np.column_stack([s.mu for s in states])
        return cls(
            states=states,
            K_F_hat=Gamma * mus,
            Gamma=Gamma,
            rho_hats=np.array([s.rho_hat for s in states]),
            iterations_used=np.array([s.iterations for s in states], dtype=int),
            converged=np.array([s.converged for s in states], dtype=bool),
            priors=priors,
        )

    def to_dict(self) -> dict:
        return {
            "K_F_hat": matrix_to_json(self.K_F_hat),
            "Gamma": matrix_to_json(self.Gamma),
            "rho_hats": self.rho_hats.tolist(),
            "iterations_used": self.iterations_used.tolist(),
            "converged": self.converged.tolist(),
            "priors": self.priors.to_dict(),
            "states": [s.to_dict() for s in self.states],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            states=[PosteriorState.from_dict(s) for s in d["states"]],
            K_F_hat=matrix_from_json(d["K_F_hat"]),
            Gamma=matrix_from_json(d["Gamma"]),
            rho_hats=np.asarray(d["rho_hats"], dtype=float),
            iterations_used=np.asarray(d["iterations_used"], dtype=int),
            converged=np.asarray(d["converged"], dtype=bool),
            priors=Priors.from_dict(d["priors"]),
        )


def matrix_to_json(A) -> dict:
    A = np.asarray(A, dtype=float)
    return {"shape": list(A.shape), "data": A.ravel(order="C").tolist()}


def matrix_from_json(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=float).reshape(d["shape"])


def fit_all(Phi, targets, priors: Priors | None = None, n_jobs: int | None = 1) -> FitResult:
    """Fit every target column independently and assemble ``K_F_hat`` and ``Gamma``.

    ``targets`` is an ``(m, L)`` matrix or a list of ``L`` length-``m`` vectors.
    With ``n_jobs != 1`` blocks of targets are distributed over joblib workers.
    """
    priors = priors or Priors()
    Phi = np.asarray(Phi, dtype=float)
    if isinstance(targets, (list, tuple)):
        T = np.column_stack([np.asarray(t, dtype=float) for t in targets])
    else:
        T = np.asarray(targets, dtype=float)
    if T.ndim == 1:
        T = T[:, None]
    m = Phi.shape[0]
    if T.shape[0] != m:
        raise ConfigError(f"targets have {T.shape[0]} rows, Phi has {m}")
    if m < 2:
        raise ConfigError("need at least 2 samples")
    G = Phi.T @ Phi
    PT = Phi.T @ T
    tt = np.einsum("ij,ij->j", T, T)
    spread = np.sum((T - T.mean(axis=0)) ** 2, axis=0)

    def block(cols):
        try:
            return _fit_batch(G, PT[:, cols], tt[cols], spread[cols], m, priors)
        except NumericError as exc:
            raise NumericError(f"targets {list(cols)}: {exc}") from exc

    if n_jobs == 1:
        states = block(np.arange(T.shape[1]))
    else:
        from joblib import Parallel, delayed, effective_n_jobs
        chunks = np.array_split(np.arange(T.shape[1]), min(effective_n_jobs(n_jobs), T.shape[1]))
        parts = Parallel(n_jobs=n_jobs)(delayed(block)(c) for c in chunks)
        states = [s for part in parts for s in part]
    return FitResult.from_states(states, priors)


class SpikeSlabRegressor(RegressorMixin, BaseEstimator):
    """Scikit-learn regressor running :func:`fit_all` on ``(X, y)``.

    No intercept is fitted: include a constant column in ``X`` if needed.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,) or (n_features, n_targets)
        ``gamma_hat * mu`` per target.
    inclusion_ : ndarray, same shape as ``coef_``
        Posterior inclusion probabilities.
    result_ : FitResult
    """

    def __init__(self, a=1e-6, b=1e-6, c=1e-6, d=1e-6, e=1.0, f=1.0, damping=0.5,
                 delta=1e-8, max_iter=500, tol=1e-6, update_mode=LITERAL, n_jobs=1):
        self.a = a
        self.b = b
        self.c = c
        self.d = d
        self.e = e
        self.f = f
        self.damping = damping
        self.delta = delta
        self.max_iter = max_iter
        self.tol = tol
        self.update_mode = update_mode
        self.n_jobs = n_jobs

    def _priors(self) -> Priors:
        return Priors(a=self.a, b=self.b, c=self.c, d=self.d, e=self.e, f=self.f,
                      p_d=self.damping, delta=self.delta, max_iter=self.max_iter,
                      tol=self.tol, update_mode=self.update_mode)

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self.result_ = fit_all(X, y, self._priors(), n_jobs=self.n_jobs)
        squeeze = y.ndim == 1
        self.coef_ = self.result_.K_F_hat[:, 0] if squeeze else self.result_.K_F_hat
        self.inclusion_ = self.result_.Gamma[:, 0] if squeeze else self.result_.Gamma
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X) @ self.coef_
