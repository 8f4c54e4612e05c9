"""Datasets of sampled trajectories, CSV I/O and measurement-noise injection."""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    DataError,
    DegenerateSignalError,
    InsufficientDataError,
    MalformedFileError,
)

_DT_LINE = re.compile(r"^#\s*dt\s*=\s*(\S+)\s*$")


@dataclass(frozen=True)
class Dataset:
    """State snapshots ``x[0..m]`` and inputs ``u[0..m-1]`` sampled every ``dt``.

    ``states`` has shape ``(m + 1, n)``, ``inputs`` has shape ``(m, l)``
    (``l = 0`` for autonomous systems).
    """

    states: np.ndarray
    inputs: np.ndarray
    dt: float = 1.0
    column_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        states = np.array(self.states, dtype=float, ndmin=2)
        if states.ndim != 2:
            raise DataError(f"states must be 2-D, got shape {states.shape}")
        m = states.shape[0] - 1
        inputs = np.asarray(self.inputs, dtype=float)
        if inputs.size == 0:
            inputs = np.zeros((max(m, 0), 0))
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        if inputs.shape[0] != m:
            raise DataError(
                f"inputs must have one fewer row than states "
                f"({m}), got {inputs.shape[0]}"
            )
        for name, arr in (("states", states), ("inputs", inputs)):
            bad = np.argwhere(~np.isfinite(arr))
            if bad.size:
                r, c = bad[0]
                raise DataError(f"non-finite value in {name} at row {r}, column {c}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise DataError(f"dt must be a positive finite number, got {self.dt}")
        names = list(self.column_names)
        if not names:
            names = [f"x{j}" for j in range(states.shape[1])]
            names += [f"u{j}" for j in range(inputs.shape[1])]
        states.setflags(write=False)
        inputs.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "column_names", names)

    @property
    def n_samples(self) -> int:
        """Number of snapshot pairs ``m``."""
        return self.states.shape[0] - 1

    @property
    def n_states(self) -> int:
        return self.states.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    def with_states(self, states) -> "Dataset":
        return Dataset(states, self.inputs, self.dt, self.column_names)


@dataclass(frozen=True)
class SnapshotPairs:
    X: np.ndarray
    X_next: np.ndarray
    U: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]


def snapshot_pairs(d: Dataset) -> SnapshotPairs:
    """Split a dataset into current/next state matrices and inputs."""
    return SnapshotPairs(X=d.states[:-1], X_next=d.states[1:], U=d.inputs)


def load_csv(path, n_states: int, n_inputs: int = 0, dt: float | None = None) -> Dataset:
    """Read a dataset from a CSV file.

    The first ``n_states`` columns are states and the next ``n_inputs`` are
    inputs. An optional first line ``# dt=<seconds>`` sets the sample time;
    an explicit ``dt`` argument overrides it. Input cells of the final row
    may be empty, and any values there are dropped.
    """
    path = Path(path)
    n_cols = n_states + n_inputs
    if n_states < 1 or n_inputs < 0:
        raise DataError("need n_states >= 1 and n_inputs >= 0")
    file_dt = None
    rows: list[tuple[int, list[str]]] = []
    header = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if row[0].lstrip().startswith("#"):
                mt = _DT_LINE.match(",".join(row).strip())
                if mt:
                    try:
                        file_dt = float(mt.group(1))
                    except ValueError:
                        raise MalformedFileError(f"{path}:{lineno}: bad dt value") from None
                continue
            if header is None:
                header = [c.strip() for c in row]
                if len(header) < n_cols:
                    raise MalformedFileError(
                        f"{path}:{lineno}: header has {len(header)} columns, "
                        f"expected at least {n_cols}"
                    )
                continue
            rows.append((lineno, row))
    if header is None:
        raise MalformedFileError(f"{path}: missing header row")
    if len(rows) < 2:
        raise InsufficientDataError(f"{path}: need at least 2 data rows, got {len(rows)}")

    values = np.empty((len(rows), n_cols))
    for k, (lineno, row) in enumerate(rows):
        last = k == len(rows) - 1
        if len(row) < n_states or (len(row) < n_cols and not last):
            raise MalformedFileError(f"{path}:{lineno}: expected {n_cols} columns, got {len(row)}")
        for j in range(n_cols):
            cell = row[j].strip() if j < len(row) else ""
            if last and j >= n_states and cell == "":
                values[k, j] = 0.0
                continue
            try:
                v = float(cell)
            except ValueError:
                raise MalformedFileError(
                    f"{path}:{lineno}: cannot parse {cell!r} in column {header[j]!r}"
                ) from None
            if not math.isfinite(v):
                raise DataError(
                    f"{path}:{lineno}: non-finite value {cell!r} at row {k}, "
                    f"column {j} ({header[j]!r})"
                )
            values[k, j] = v

    return Dataset(
        states=values[:, :n_states],
        inputs=values[:-1, n_states:],
        dt=dt if dt is not None else (file_dt if file_dt is not None else 1.0),
        column_names=header[:n_cols],
    )


def save_csv(d: Dataset, path) -> None:
    """Write ``d`` in the format read by :func:`load_csv` (inputs of the last row left empty)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# dt={d.dt!r}\n")
        w = csv.writer(fh)
        w.writerow(d.column_names)
        for k in range(d.states.shape[0]):
            row = [repr(float(v)) for v in d.states[k]]
            if k < d.n_samples:
                row += [repr(float(v)) for v in d.inputs[k]]
            else:
                row += [""] * d.n_inputs
            w.writerow(row)


def add_measurement_noise(X, snr_db: float, seed: int | np.random.Generator | None = None) -> np.ndarray:
    """Add white Gaussian noise to every column of ``X`` at a given SNR.

    Column ``j`` receives noise of variance ``var_j / 10**(snr_db / 10)`` where
    ``var_j`` is the population variance of the column. ``snr_db = inf``
    returns an unchanged copy.

    Raises
    ------
    DegenerateSignalError
        If a column is constant and ``snr_db`` is finite.
    """
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise DataError("X contains non-finite values")
    if np.isnan(snr_db):
        raise DataError("snr_db must not be NaN")
    if snr_db == math.inf:
        return X.copy()
    squeeze = X.ndim == 1
    X2 = X[:, None] if squeeze else X
    power = np.mean((X2 - X2.mean(axis=0)) ** 2, axis=0)
    if np.any(power <= 0):
        j = int(np.flatnonzero(power <= 0)[0])
        raise DegenerateSignalError(f"column {j} is constant; noise variance undefined")
    var = power / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(seed)
    noisy = X2 + rng.standard_normal(X2.shape) * np.sqrt(var)
    return noisy[:, 0] if squeeze else noisy


def noisy_dataset(d: Dataset, snr_db: float, seed=None) -> Dataset:
    """Copy of ``d`` with measurement noise on the states only."""
    return d.with_states(add_measurement_noise(d.states, snr_db, seed))
