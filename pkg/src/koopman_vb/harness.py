"""Monte-Carlo experiment orchestration.

For each SNR level and run: simulate (or load) training/test data, add
measurement noise, build the dictionary, fit the spike-and-slab model to get
the inclusion matrix, reduce the dictionary for every epsilon, refit every
requested method on the full and reduced dictionaries, and score one-step
NMSE on training and test data.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import systems
from .data import Dataset, load_csv, noisy_dataset
from .dictionary import build_dictionary, delay_embed, featurize
from .exceptions import ConfigError, KoopmanVBError
from .graphred import design_columns, reduced_indices
from .koopman import METHODS, KoopmanModel, fit_matrix, nmse
from .vb import Priors, fit_all

logger = logging.getLogger(__name__)

DEFAULT_STLS_LAMBDA = {"lorenz": 0.05, "usv": 0.005, "wiener_hammerstein": 0.015}
NMSE_COLUMNS = ["method", "snr_db", "dict", "split", "state", "mean_nmse", "ci95", "n_ok", "n_fail"]
SIZES_COLUMNS = ["snr_db", "epsilon", "run", "reduced_size"]
SYSTEM_DIMS = {"lorenz": (3, 0), "usv": (3, 2), "wiener_hammerstein": (1, 1)}
DICTIONARY_FIELDS = {"n_centers", "rbf_exponents", "periodic", "n_periodic_centers",
                     "embed_delays", "outputs"}
HEATMAP_COLUMNS = ["row", "col", "row_label", "col_label", "abs_value", "is_exact_zero"]


def parse_snr(v) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if v is None:
        return math.inf
    return float(v)


def format_float(v: float) -> str:
    return repr(float(v))


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce a sweep; see ``README.md`` for the JSON layout."""

    system: dict
    dictionary: dict
    priors: dict = field(default_factory=dict)
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    snr_grid: list[float] = field(default_factory=lambda: [math.inf])
    mc_runs: int = 25
    epsilon_grid: list[float] = field(default_factory=lambda: [0.01, 0.1, 0.25])
    reduce_epsilon: float | None = None
    stls_lambda: float | None = None
    seed: int = 0
    output_dir: str = "results"
    n_jobs: int = 1
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def __post_init__(self):
        self.snr_grid = [parse_snr(s) for s in self.snr_grid]
        self.epsilon_grid = [float(e) for e in self.epsilon_grid]
        if self.mc_runs < 1:
            raise ConfigError("mc_runs must be >= 1")
        if not self.snr_grid or not self.epsilon_grid:
            raise ConfigError("snr_grid and epsilon_grid must be non-empty")
        if any(not 0 < e < 1 for e in self.epsilon_grid):
            raise ConfigError("epsilon values must lie in (0, 1)")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ConfigError(f"methods must be a non-empty subset of {METHODS}")
        if self.reduce_epsilon is None:
            self.reduce_epsilon = self.epsilon_grid[0]
        if not 0 < self.reduce_epsilon < 1:
            raise ConfigError("reduce_epsilon must lie in (0, 1)")
        kind = self.system.get("kind")
        if kind not in ("lorenz", "usv", "wiener_hammerstein", "csv"):
            raise ConfigError(f"unknown system kind {kind!r}")
        if self.stls_lambda is None:
            self.stls_lambda = DEFAULT_STLS_LAMBDA.get(kind, 0.05)
        Priors.from_dict(self.priors)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        for req in ("system", "dictionary"):
            if req not in d:
                raise ConfigError(f"config is missing {req!r}")
        return cls(**d, base_dir=Path(base_dir) if base_dir else Path.cwd())

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw, base_dir=path.parent)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


@dataclass
class SweepResult:
    """Aggregated NMSE table, reduced sizes, per-run values and stored models.

    ``per_run[key]`` lists the successful runs' values for
    ``key = (method, snr, dict, split, state_index)``; ``per_run_ids[key]``
    holds the matching run indices.
    """

    nmse_rows: list[dict]
    size_rows: list[dict]
    per_run: dict[tuple, list[float]]
    models: dict[tuple, KoopmanModel]
    failures: list[str]
    per_run_ids: dict[tuple, list[int]] = field(default_factory=dict)

    def nmse_lookup(self, method, snr_db, which, split, state) -> dict:
        for r in self.nmse_rows:
            if (r["method"], r["snr_db"], r["dict"], r["split"], r["state"]) == (
                    method, float(snr_db), which, split, state):
                return r
        raise KeyError((method, snr_db, which, split, state))


# -- data generation -------------------------------------------------------


def _streams(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def _train_data(cfg: ExperimentConfig) -> Dataset:
    s = cfg.system
    kind = s["kind"]
    train_seed = np.random.SeedSequence([cfg.seed, 1])
    if kind == "lorenz":
        return systems.simulate_lorenz(
            s.get("sigma", 10.0), s.get("rho", 28.0), s.get("beta", 8.0 / 3.0),
            x0=s.get("x0", [-8.0, 8.0, 27.0]), dt=s.get("dt", 0.001),
            n_steps=s.get("n_steps", 6000), substeps=s.get("substeps", 1))
    if kind == "usv":
        n = s.get("n_steps", 2000)
        amp = s.get("amplitude", 20.0)
        u = amp + systems.excitation("prbs", n, 2, amp, train_seed, hold=s.get("hold", 20))
        return systems.simulate_usv(systems.USVParams(**s.get("params", {})), s.get("x0", (0, 0, 0)),
                                    u, s.get("dt", 0.1), n, substeps=s.get("substeps", 1))
    if kind == "wiener_hammerstein":
        return systems.simulate_wiener_hammerstein(
            systems.WHParams(**s.get("params", {})), None, s.get("n_steps", 2000),
            s.get("dt", 1.0), seed=train_seed, amplitude=s.get("amplitude", 1.5))
    return load_csv(cfg.resolve(s["train"]), s["n_states"], s.get("n_inputs", 0), s.get("dt"))


def _test_data(cfg: ExperimentConfig, seed) -> Dataset:
    s = cfg.system
    kind = s["kind"]
    rng = np.random.default_rng(seed)
    if kind == "lorenz":
        x0 = np.asarray(s.get("x0", [-8.0, 8.0, 27.0]), dtype=float)
        x0 = x0 + rng.normal(scale=s.get("test_perturbation", 1.0), size=3)
        return systems.simulate_lorenz(
            s.get("sigma", 10.0), s.get("rho", 28.0), s.get("beta", 8.0 / 3.0), x0=x0,
            dt=s.get("dt", 0.001), n_steps=s.get("test_n_steps", s.get("n_steps", 6000)),
            substeps=s.get("substeps", 1))
    if kind == "usv":
        n = s.get("test_n_steps", s.get("n_steps", 2000))
        amp = s.get("amplitude", 20.0)
        u = amp + systems.excitation("prbs", n, 2, amp, rng, hold=s.get("hold", 20))
        return systems.simulate_usv(systems.USVParams(**s.get("params", {})), s.get("x0", (0, 0, 0)),
                                    u, s.get("dt", 0.1), n, substeps=s.get("substeps", 1))
    if kind == "wiener_hammerstein":
        return systems.simulate_wiener_hammerstein(
            systems.WHParams(**s.get("params", {})), None,
            s.get("test_n_steps", s.get("n_steps", 2000)), s.get("dt", 1.0), seed=rng,
            amplitude=s.get("amplitude", 1.5))
    return load_csv(cfg.resolve(s["test"]), s["n_states"], s.get("n_inputs", 0), s.get("dt"))


def system_dims(cfg: ExperimentConfig) -> tuple[int, int]:
    """``(n_states, n_inputs)`` of the configured system."""
    kind = cfg.system["kind"]
    if kind in SYSTEM_DIMS:
        return SYSTEM_DIMS[kind]
    try:
        return int(cfg.system["n_states"]), int(cfg.system.get("n_inputs", 0))
    except KeyError:
        raise ConfigError("csv systems need 'n_states'") from None


def simulate(cfg: ExperimentConfig, split: str = "train", seed=None) -> Dataset:
    """Noise-free training trajectory, or a test trajectory drawn with ``seed``."""
    if split == "train":
        return _train_data(cfg)
    if split == "test":
        return _test_data(cfg, np.random.SeedSequence([cfg.seed if seed is None else seed, 2]))
    raise ConfigError(f"split must be 'train' or 'test', got {split!r}")


def make_dictionary(cfg: ExperimentConfig, train: Dataset, seed=None):
    """Build the configured dictionary, placing RBF centers on ``train``."""
    dspec = cfg.dictionary
    unknown = set(dspec) - DICTIONARY_FIELDS
    if unknown:
        raise ConfigError(f"unknown dictionary fields {sorted(unknown)}")
    delays = dspec.get("embed_delays", 0)
    return build_dictionary(
        delay_embed(train, delays).states, train.n_states, train.n_inputs, delays,
        n_centers=dspec.get("n_centers", 0), rbf_exponents=dspec.get("rbf_exponents", ()),
        periodic=[tuple(p) for p in dspec.get("periodic", ())],
        n_periodic_centers=dspec.get("n_periodic_centers"), outputs=dspec.get("outputs"),
        seed=seed)


# -- one Monte-Carlo run ----------------------------------------------------


def _score(Phi, T, K, outs):
    pred = Phi @ K[:, outs]
    return nmse(T[:, outs], pred)


def run_single(cfg: ExperimentConfig, snr: float, run: int, train_clean: Dataset) -> dict:
    """One (snr, run) cell; returns sizes, NMSE values, models and failures."""
    ss_test, ss_train_noise, ss_test_noise, ss_kmeans = _streams(cfg.seed + run, 4)
    out: dict[str, Any] = {"sizes": {}, "nmse": {}, "models": {}, "failures": []}
    test_clean = _test_data(cfg, ss_test)
    train = noisy_dataset(train_clean, snr, ss_train_noise)
    test = noisy_dataset(test_clean, snr, ss_test_noise)
    dic = make_dictionary(cfg, train, ss_kmeans)
    Phi, T = featurize(dic, train)
    Phi_te, T_te = featurize(dic, test)
    priors = Priors.from_dict(cfg.priors)
    vb_full = fit_all(Phi, T, priors)
    Gamma = vb_full.Gamma
    outs = list(dic.output_indices)
    for eps in cfg.epsilon_grid:
        out["sizes"][eps] = len(reduced_indices(Gamma, eps, outs))
    keep = reduced_indices(Gamma, cfg.reduce_epsilon, outs)
    red_dic, index_map = dic.subset(keep)
    cols = design_columns(index_map, len(dic), dic.n_inputs)
    variants = {
        "full": (dic, Phi, T, Phi_te, T_te),
        "reduced": (red_dic, Phi[:, cols], T[:, keep], Phi_te[:, cols], T_te[:, keep]),
    }
    for which, (d_, P_tr, T_tr, P_te, T_te_) in variants.items():
        o = list(d_.output_indices)
        for method in cfg.methods:
            try:
                if method == "IV" and which == "full":
                    K, res = vb_full.K_F_hat, vb_full
                else:
                    K, res = fit_matrix(method, P_tr, T_tr, priors=priors,
                                        stls_lambda=cfg.stls_lambda)
                scores = {"train": _score(P_tr, T_tr, K, o), "test": _score(P_te, T_te_, K, o)}
                if not all(np.all(np.isfinite(v)) for v in scores.values()):
                    raise KoopmanVBError("non-finite NMSE")
            except (KoopmanVBError, np.linalg.LinAlgError) as exc:
                out["failures"].append(f"snr={snr} run={run} {method}/{which}: {exc}")
                continue
            out["nmse"][(method, which)] = scores
            if run == 0:
                out["models"][(method, which)] = KoopmanModel(
                    d_, K, method,
                    rho_hats=None if res is None else res.rho_hats,
                    inclusion=None if res is None else res.Gamma)
    out["state_names"] = [train.column_names[i] for i in dic.output_state_indices]
    return out


def _ci95(values) -> float:
    v = np.asarray(values, dtype=float)
    return 0.0 if v.size < 2 else float(1.96 * v.std(ddof=1) / math.sqrt(v.size))


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    train_clean = _train_data(cfg)
    tasks = [(snr, run) for snr in cfg.snr_grid for run in range(cfg.mc_runs)]

    def safe(snr, run):
        try:
            return run_single(cfg, snr, run, train_clean)
        except (KoopmanVBError, np.linalg.LinAlgError) as exc:
            return {"error": f"snr={snr} run={run}: {exc}"}

    if cfg.n_jobs == 1:
        results = [safe(s, r) for s, r in tasks]
    else:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=cfg.n_jobs)(delayed(safe)(s, r) for s, r in tasks)

    per_run: dict[tuple, list[float]] = {}
    per_run_ids: dict[tuple, list[int]] = {}
    fails: dict[tuple, int] = {}
    size_rows, failures = [], []
    models: dict[tuple, KoopmanModel] = {}
    state_names = None
    for (snr, run), res in zip(tasks, results):
        if "error" in res:
            failures.append(res["error"])
            for method in cfg.methods:
                for which in ("full", "reduced"):
                    fails[(method, snr, which)] = fails.get((method, snr, which), 0) + 1
            continue
        state_names = state_names or res["state_names"]
        failures.extend(res["failures"])
        for eps in cfg.epsilon_grid:
            size_rows.append({"snr_db": snr, "epsilon": eps, "run": run,
                              "reduced_size": res["sizes"][eps]})
        for method in cfg.methods:
            for which in ("full", "reduced"):
                scores = res["nmse"].get((method, which))
                if scores is None:
                    fails[(method, snr, which)] = fails.get((method, snr, which), 0) + 1
                    continue
                for split, vals in scores.items():
                    for k, v in enumerate(np.atleast_1d(vals)):
                        key = (method, snr, which, split, k)
                        per_run.setdefault(key, []).append(float(v))
                        per_run_ids.setdefault(key, []).append(run)
        for (method, which), model in res["models"].items():
            models[(method, which, snr)] = model
    for msg in failures:
        logger.warning("run failed: %s", msg)

    nmse_rows = []
    n_states = len(state_names) if state_names else 0
    for method in cfg.methods:
        for snr in cfg.snr_grid:
            for which in ("full", "reduced"):
                for split in ("train", "test"):
                    for k in range(n_states):
                        vals = per_run.get((method, snr, which, split, k), [])
                        nmse_rows.append({
                            "method": method, "snr_db": snr, "dict": which, "split": split,
                            "state": state_names[k],
                            "mean_nmse": float(np.mean(vals)) if vals else math.nan,
                            "ci95": _ci95(vals), "n_ok": len(vals),
                            "n_fail": fails.get((method, snr, which), 0),
                        })
    return SweepResult(nmse_rows, size_rows, per_run, models, failures, per_run_ids)


# -- output ------------------------------------------------------------------


def _write_rows(path: Path, columns, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_float(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def write_results(result: SweepResult, out_dir) -> Path:
    """Write ``nmse.csv``, ``sizes.csv`` and ``models/*.json`` into ``out_dir``."""
    out = Path(out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    _write_rows(out / "nmse.csv", NMSE_COLUMNS, result.nmse_rows)
    _write_rows(out / "sizes.csv", SIZES_COLUMNS, result.size_rows)
    for (method, which, snr), model in sorted(result.models.items(), key=lambda kv: str(kv[0])):
        model.to_json(out / "models" / f"{method}_{which}_snr{format_float(snr)}.json")
    return out


def heatmap_rows(model: KoopmanModel) -> list[dict]:
    K = model.K_F_hat
    L = len(model.dictionary)
    row_labels = list(model.dictionary.labels) + [f"u{j}" for j in range(model.dictionary.n_inputs)]
    rows = []
    for i in range(K.shape[0]):
        for j in range(K.shape[1]):
            rows.append({"row": i, "col": j, "row_label": row_labels[i],
                         "col_label": model.dictionary.labels[j], "abs_value": abs(float(K[i, j])),
                         "is_exact_zero": int(K[i, j] == 0.0)})
    assert len(rows) == (L + model.dictionary.n_inputs) * L
    return rows


def heatmap_export(result: SweepResult | KoopmanModel, method: str | None = None,
                   full_or_reduced: str = "full", path=None, snr_db: float | None = None) -> str:
    """CSV of ``|K_F_hat|`` with an exact-zero mask column.

    ``result`` is a :class:`SweepResult` (pick the model by method, dictionary
    variant and optionally SNR; defaults to the first SNR stored) or a single
    :class:`KoopmanModel`.
    """
    if isinstance(result, KoopmanModel):
        model = result
    else:
        keys = [k for k in result.models if k[0] == method and k[1] == full_or_reduced
                and (snr_db is None or k[2] == float(snr_db))]
        if not keys:
            raise KeyError(f"no stored model for method={method!r}, dict={full_or_reduced!r}")
        model = result.models[keys[0]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEATMAP_COLUMNS)
    for r in heatmap_rows(model):
        w.writerow([r["row"], r["col"], r["row_label"], r["col_label"],
                    format_float(r["abs_value"]), r["is_exact_zero"]])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
