"""Observable dictionaries for EDMD: definition, evaluation and the design matrix.

A :class:`Dictionary` is an ordered list of scalar observables of the
(possibly delay-embedded) state. Three observable kinds are supported::

    identity(j)            x -> x[j]
    gaussian_rbf(c, a)     x -> exp(-a * ||x - c||^2)
    periodic_rbf(c, a, f)  x -> exp(-a * sin^2(pi * f * ||x - c||))

The order of the observables fixes the row/column order of the Koopman
matrix and of the inclusion matrix.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Dataset, SnapshotPairs, snapshot_pairs
from .exceptions import ConfigError, DataError, InsufficientDataError, NumericError

IDENTITY = "identity"
GAUSSIAN = "gaussian_rbf"
PERIODIC = "periodic_rbf"
_KINDS = (IDENTITY, GAUSSIAN, PERIODIC)


@dataclass(frozen=True)
class ObservableSpec:
    kind: str
    state_index: int | None = None
    center: tuple[float, ...] | None = None
    exponent_coeff: float | None = None
    frequency: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown observable kind {self.kind!r}")
        if self.kind == IDENTITY:
            if self.state_index is None or int(self.state_index) < 0:
                raise ConfigError("identity observable needs a non-negative state_index")
            object.__setattr__(self, "state_index", int(self.state_index))
            return
        if self.center is None or len(self.center) == 0:
            raise ConfigError(f"{self.kind} needs a center")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not (self.exponent_coeff is not None and self.exponent_coeff > 0):
            raise ConfigError("exponent_coeff must be > 0")
        if self.kind == PERIODIC and not (self.frequency is not None and self.frequency > 0):
            raise ConfigError("frequency must be > 0")

    @classmethod
    def identity(cls, state_index: int) -> "ObservableSpec":
        return cls(IDENTITY, state_index=state_index)

    @classmethod
    def gaussian_rbf(cls, center, exponent_coeff: float) -> "ObservableSpec":
        return cls(GAUSSIAN, center=tuple(center), exponent_coeff=float(exponent_coeff))

    @classmethod
    def periodic_rbf(cls, center, exponent_coeff: float, frequency: float) -> "ObservableSpec":
        return cls(PERIODIC, center=tuple(center), exponent_coeff=float(exponent_coeff),
                   frequency=float(frequency))

    @property
    def dim(self) -> int | None:
        return None if self.center is None else len(self.center)

    def label(self) -> str:
        if self.kind == IDENTITY:
            return f"x{self.state_index}"
        if self.kind == GAUSSIAN:
            return f"rbf(a={self.exponent_coeff:g})"
        return f"prbf(a={self.exponent_coeff:g},f={self.frequency:g})"

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == IDENTITY:
            out["state_index"] = self.state_index
        else:
            out["center"] = list(self.center)
            out["exponent_coeff"] = self.exponent_coeff
            if self.kind == PERIODIC:
                out["frequency"] = self.frequency
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ObservableSpec":
        try:
            kind = d["kind"]
        except (KeyError, TypeError):
            raise ConfigError(f"observable descriptor without 'kind': {d!r}") from None
        return cls(kind, state_index=d.get("state_index"), center=d.get("center"),
                   exponent_coeff=d.get("exponent_coeff"), frequency=d.get("frequency"))


@dataclass(frozen=True)
class Dictionary:
    """Ordered observables plus the output index set.

    Parameters
    ----------
    observables : sequence of ObservableSpec
    output_indices : sequence of int
        Positions (0-based) of the output observables; each must be an identity.
    n_states : int
        Raw (un-embedded) state dimension ``n``.
    n_inputs : int
    embed_delays : int
        Number of delayed state copies; the observables act on vectors of
        dimension ``n * (embed_delays + 1)``.
    """

    observables: tuple[ObservableSpec, ...]
    output_indices: tuple[int, ...]
    n_states: int
    n_inputs: int = 0
    embed_delays: int = 0
    labels: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        obs = tuple(self.observables)
        outs = tuple(int(i) for i in self.output_indices)
        object.__setattr__(self, "observables", obs)
        object.__setattr__(self, "output_indices", outs)
        if self.n_states < 1 or self.n_inputs < 0 or self.embed_delays < 0:
            raise ConfigError("need n_states >= 1, n_inputs >= 0, embed_delays >= 0")
        dim = self.state_dim
        for k, o in enumerate(obs):
            if o.kind == IDENTITY and o.state_index >= dim:
                raise ConfigError(f"observable {k}: identity index {o.state_index} >= {dim}")
            if o.kind != IDENTITY and o.dim != dim:
                raise ConfigError(f"observable {k}: center dimension {o.dim} != {dim}")
        if not outs:
            raise ConfigError("output index set must not be empty")
        if len(set(outs)) != len(outs):
            raise ConfigError("duplicate output indices")
        for i in outs:
            if not 0 <= i < len(obs) or obs[i].kind != IDENTITY:
                raise ConfigError(f"output index {i} must refer to an identity observable")
        if not self.labels or len(self.labels) != len(obs):
            object.__setattr__(self, "labels", tuple(
                f"{k}:{o.label()}" for k, o in enumerate(obs)))

    def __len__(self) -> int:
        return len(self.observables)

    @property
    def state_dim(self) -> int:
        """Dimension of the vectors the observables are evaluated on."""
        return self.n_states * (self.embed_delays + 1)

    @property
    def output_state_indices(self) -> list[int]:
        return [self.observables[i].state_index for i in self.output_indices]

    def subset(self, keep: Sequence[int]) -> tuple["Dictionary", dict[int, int]]:
        """Dictionary restricted to positions ``keep`` (order preserved).

        Returns the new dictionary and the old->new index map.
        """
        keep = sorted(set(int(k) for k in keep))
        missing = set(self.output_indices) - set(keep)
        if missing:
            raise ConfigError(f"cannot drop output observables {sorted(missing)}")
        index_map = {old: new for new, old in enumerate(keep)}
        sub = Dictionary(
            observables=tuple(self.observables[k] for k in keep),
            output_indices=tuple(index_map[i] for i in self.output_indices),
            n_states=self.n_states,
            n_inputs=self.n_inputs,
            embed_delays=self.embed_delays,
            labels=tuple(self.labels[k] for k in keep),
        )
        return sub, index_map

    def to_dict(self) -> dict:
        return {
            "observables": [o.to_dict() for o in self.observables],
            "output_indices": list(self.output_indices),
            "n_states": self.n_states,
            "n_inputs": self.n_inputs,
            "embed_delays": self.embed_delays,
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Dictionary":
        try:
            return cls(
                observables=tuple(ObservableSpec.from_dict(o) for o in d["observables"]),
                output_indices=tuple(d["output_indices"]),
                n_states=int(d["n_states"]),
                n_inputs=int(d.get("n_inputs", 0)),
                embed_delays=int(d.get("embed_delays", 0)),
                labels=tuple(d.get("labels", ())),
            )
        except KeyError as exc:
            raise ConfigError(f"dictionary JSON missing field {exc}") from None

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, path_or_text) -> "Dictionary":
        p = Path(path_or_text) if not str(path_or_text).lstrip().startswith("{") else None
        return cls.from_dict(json.loads(p.read_text() if p else path_or_text))


# -- k-means ----------------------------------------------------------------


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(X, k, rng):
    m = X.shape[0]
    chosen = [int(rng.integers(m))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(m, p=d2 / total))
        else:
            # every remaining point coincides with a center
            free = np.setdiff1d(np.arange(m), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(1))
    return X[chosen].copy()


def kmeans_centers(X, k: int, seed=None, max_iter: int = 300, return_history: bool = False):
    """Lloyd's algorithm with k-means++ seeding.

    Iterates until the assignment stops changing or ``max_iter`` rounds.
    A cluster that becomes empty is re-seeded at the point farthest from
    its current center.

    Returns
    -------
    centers : ndarray of shape (k, n)
    history : list of float, only if ``return_history``
        Objective (sum of squared distances to the nearest center) after
        each assignment step.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise DataError("X contains non-finite values")
    m = X.shape[0]
    if not 1 <= k <= m:
        raise ConfigError(f"need 1 <= k <= m, got k={k}, m={m}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(X, k, rng)
    labels = None
    history = []
    for _ in range(max_iter):
        d = _sq_dists(X, centers)
        new_labels = d.argmin(1)
        point_d = d[np.arange(m), new_labels]
        history.append(float(point_d.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        while np.any(counts == 0):
            j = int(np.flatnonzero(counts == 0)[0])
            # donors must leave a non-empty cluster behind
            far = int(np.where(counts[labels] > 1, point_d, -1.0).argmax())
            counts[labels[far]] -= 1
            labels[far] = j
            counts[j] += 1
            point_d[far] = 0.0
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        centers = sums / counts[:, None]
    return (centers, history) if return_history else centers


# -- embedding and evaluation ------------------------------------------------


def delay_embed(d: Dataset, delays: int) -> Dataset:
    """Stack ``delays`` past copies of the state: row k -> [x[k], x[k-1], ..., x[k-delays]]."""
    if delays < 0:
        raise ConfigError("delays must be >= 0")
    if delays == 0:
        return d
    rows = d.states.shape[0]
    if rows < delays + 2:
        raise InsufficientDataError(f"need at least {delays + 2} state rows, got {rows}")
    blocks = [d.states[delays - j: rows - j] for j in range(delays + 1)]
    names = [f"{c}[k-{j}]" if j else c
             for j in range(delays + 1) for c in d.column_names[:d.n_states]]
    return Dataset(np.hstack(blocks), d.inputs[delays:], d.dt,
                   names + d.column_names[d.n_states:])


def evaluate_batch(dic: Dictionary, X) -> np.ndarray:
    """Evaluate every observable on every row of ``X``; returns shape (rows, L)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != dic.state_dim:
        raise DataError(f"state dimension {X.shape[1]} != dictionary dimension {dic.state_dim}")
    out = np.empty((X.shape[0], len(dic)))
    dist_cache: dict[tuple, np.ndarray] = {}
    for k, o in enumerate(dic.observables):
        if o.kind == IDENTITY:
            out[:, k] = X[:, o.state_index]
            continue
        sq = dist_cache.get(o.center)
        if sq is None:
            sq = ((X - np.asarray(o.center)) ** 2).sum(1)
            dist_cache[o.center] = sq
        if o.kind == GAUSSIAN:
            out[:, k] = np.exp(-o.exponent_coeff * sq)
        else:
            s = np.sin(np.pi * o.frequency * np.sqrt(sq))
            out[:, k] = np.exp(-o.exponent_coeff * s * s)
    return out


def evaluate(dic: Dictionary, x) -> np.ndarray:
    """Lift a single state vector: component i is ``phi_i(x)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("evaluate expects a single state vector")
    return evaluate_batch(dic, x[None, :])[0]


def design_matrix(dic: Dictionary, pairs: SnapshotPairs):
    """EDMD regression data.

    Returns
    -------
    Phi : ndarray of shape (m, L + l)
        ``[phi(x[i]) | u[i]]``.
    T : ndarray of shape (m, L)
        Column j is the target ``t_j``, i.e. ``phi_j`` evaluated on ``X_next``.
    """
    if pairs.U.shape[1] != dic.n_inputs:
        raise DataError(f"pairs have {pairs.U.shape[1]} inputs, dictionary expects {dic.n_inputs}")
    lifted = evaluate_batch(dic, pairs.X)
    T = evaluate_batch(dic, pairs.X_next)
    for name, arr in (("Phi", lifted), ("targets", T)):
        bad = np.argwhere(~np.isfinite(arr))
        if bad.size:
            r, c = bad[0]
            raise NumericError(f"non-finite {name} value at row {r}, observable {c}")
    return np.hstack([lifted, pairs.U]), T


def featurize(dic: Dictionary, d: Dataset):
    """Delay-embed ``d`` as the dictionary requires and build ``(Phi, T)``."""
    if d.n_states != dic.n_states:
        raise DataError(f"dataset has {d.n_states} states, dictionary expects {dic.n_states}")
    return design_matrix(dic, snapshot_pairs(delay_embed(d, dic.embed_delays)))


def build_dictionary(
    X,
    n_states: int,
    n_inputs: int = 0,
    embed_delays: int = 0,
    n_centers: int = 0,
    rbf_exponents: Sequence[float] = (),
    periodic: Sequence[tuple[float, float]] = (),
    n_periodic_centers: int | None = None,
    outputs: Sequence[int] | None = None,
    seed=None,
) -> Dictionary:
    """Identities + k-means-centred RBFs.

    ``X`` holds (embedded) training states. Centers are clustered once with
    ``n_centers`` clusters; each center gets one Gaussian RBF per entry of
    ``rbf_exponents``. ``periodic`` is a list of ``(exponent, frequency)``
    pairs applied to the first ``n_periodic_centers`` centers (all by default).
    """
    X = np.asarray(X, dtype=float)
    dim = n_states * (embed_delays + 1)
    if X.shape[1] != dim:
        raise DataError(f"training states have dimension {X.shape[1]}, expected {dim}")
    obs = [ObservableSpec.identity(j) for j in range(dim)]
    if n_centers:
        centers = kmeans_centers(X, n_centers, seed=seed)
        for c in centers:
            for a in rbf_exponents:
                obs.append(ObservableSpec.gaussian_rbf(c, a))
        pc = centers if n_periodic_centers is None else centers[:n_periodic_centers]
        for c in pc:
            for a, f in periodic:
                obs.append(ObservableSpec.periodic_rbf(c, a, f))
    if outputs is None:
        outputs = range(n_states)
    return Dictionary(tuple(obs), tuple(outputs), n_states, n_inputs, embed_delays)


class ObservableDictionary(TransformerMixin, BaseEstimator):
    """Scikit-learn transformer wrapping :func:`build_dictionary`.

    ``fit`` clusters the (embedded) rows of ``X`` to place RBF centers;
    ``transform`` lifts rows of embedded states to observable values.

    Parameters
    ----------
    n_states : int
        Raw state dimension. ``X`` passed to ``fit`` must already be
        delay-embedded when ``embed_delays > 0``.
    n_centers, rbf_exponents, periodic, n_periodic_centers, embed_delays, outputs
        See :func:`build_dictionary`.
    random_state : int or None
    """

    def __init__(self, n_states=1, n_inputs=0, n_centers=10, rbf_exponents=(1.0,),
                 periodic=(), n_periodic_centers=None, embed_delays=0, outputs=None,
                 random_state=None):
        self.n_states = n_states
        self.n_inputs = n_inputs
        self.n_centers = n_centers
        self.rbf_exponents = rbf_exponents
        self.periodic = periodic
        self.n_periodic_centers = n_periodic_centers
        self.embed_delays = embed_delays
        self.outputs = outputs
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        self.dictionary_ = build_dictionary(
            X, self.n_states, self.n_inputs, self.embed_delays, self.n_centers,
            self.rbf_exponents, self.periodic, self.n_periodic_centers, self.outputs,
            seed=self.random_state,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "dictionary_")
        return evaluate_batch(self.dictionary_, check_array(X))

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "dictionary_")
        return np.asarray(self.dictionary_.labels, dtype=object)
