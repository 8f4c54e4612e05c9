import csv
import io
import json
import math

import numpy as np
import pytest

from koopman_vb import harness
from koopman_vb.data import Dataset, save_csv
from koopman_vb.dictionary import Dictionary, ObservableSpec
from koopman_vb.exceptions import ConfigError, NumericError
from koopman_vb.harness import (
    HEATMAP_COLUMNS, NMSE_COLUMNS, SIZES_COLUMNS, ExperimentConfig, heatmap_export,
    make_dictionary, parse_snr, run_sweep, simulate, system_dims, write_results,
)
from koopman_vb.koopman import KoopmanModel, identify
from koopman_vb.vb import Priors


def _linear_csv(tmp_path, name, seed, m=120):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(m, 1))
    x = np.zeros((m + 1, 1))
    x[0] = 1.0
    for k in range(m):
        x[k + 1] = 0.5 * x[k] + u[k]
    path = tmp_path / name
    save_csv(Dataset(x, u, 0.1, ["x", "u"]), path)
    return path.name


def _csv_config(tmp_path, **kw):
    d = {
        "system": {"kind": "csv", "train": _linear_csv(tmp_path, "train.csv", 0),
                   "test": _linear_csv(tmp_path, "test.csv", 1), "n_states": 1, "n_inputs": 1},
        "dictionary": {},
        "methods": ["I"],
        "snr_grid": ["inf"],
        "mc_runs": 1,
        "epsilon_grid": [0.1],
    }
    d.update(kw)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return ExperimentConfig.from_json(path)


def _small_lorenz(**kw):
    d = {
        "system": {"kind": "lorenz", "n_steps": 400, "dt": 0.005},
        "dictionary": {"n_centers": 3, "rbf_exponents": [0.01, 1.0]},
        "priors": {"e": 0.1, "max_iter": 100},
        "methods": ["I", "II", "IV"],
        "snr_grid": [30, 40],
        "mc_runs": 2,
        "epsilon_grid": [0.01, 0.1, 0.25],
        "seed": 3,
    }
    d.update(kw)
    return ExperimentConfig.from_dict(d)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- config ----------------------------------------------------------------------


def test_parse_snr():
    assert parse_snr("inf") == math.inf and parse_snr(None) == math.inf
    assert parse_snr("30") == 30.0 and parse_snr(20) == 20.0


@pytest.mark.parametrize("bad", [
    {"mc_runs": 0}, {"snr_grid": []}, {"epsilon_grid": [1.0]}, {"methods": ["V"]},
    {"methods": []}, {"reduce_epsilon": 0.0}, {"system": {"kind": "pendulum"}},
    {"priors": {"e": -1}}, {"colour": 1},
])
def test_config_validation(bad):
    d = {"system": {"kind": "lorenz"}, "dictionary": {}}
    d.update(bad)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(d)


def test_config_defaults_and_paths(tmp_path):
    cfg = ExperimentConfig.from_dict({"system": {"kind": "usv"}, "dictionary": {}},
                                     base_dir=tmp_path)
    assert cfg.stls_lambda == 0.005 and cfg.reduce_epsilon == 0.01 and cfg.mc_runs == 25
    assert cfg.resolve("x/y") == tmp_path / "x/y"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"system": {"kind": "usv"}})
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(bad)


def test_system_dims_and_simulate():
    cfg = _small_lorenz()
    assert system_dims(cfg) == (3, 0)
    train, test = simulate(cfg), simulate(cfg, "test")
    assert train.states.shape == (401, 3)
    assert not np.array_equal(train.states[0], test.states[0])
    assert np.array_equal(test.states, simulate(cfg, "test").states)
    with pytest.raises(ConfigError):
        simulate(cfg, "valid")
    csv_cfg = ExperimentConfig.from_dict({"system": {"kind": "csv"}, "dictionary": {}})
    with pytest.raises(ConfigError):
        system_dims(csv_cfg)


def test_make_dictionary_fields():
    cfg = _small_lorenz()
    dic = make_dictionary(cfg, simulate(cfg), 0)
    assert len(dic) == 3 + 3 * 2
    cfg.dictionary = {"n_centres": 3}
    with pytest.raises(ConfigError):
        make_dictionary(cfg, simulate(cfg), 0)


def test_shipped_configs_parse():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    for name, L in (("lorenz.json", 23), ("usv.json", 28), ("wh.json", 46)):
        cfg = ExperimentConfig.from_json(root / name)
        train = simulate(cfg)
        assert len(make_dictionary(cfg, train, 0)) == L


# -- sweeps -----------------------------------------------------------------------


def test_single_run_single_method(tmp_path):
    cfg = _csv_config(tmp_path)
    res = run_sweep(cfg)
    assert len(res.nmse_rows) == 4  # full/reduced x train/test, one state
    for r in res.nmse_rows:
        assert r["ci95"] == 0.0 and r["n_ok"] == 1 and r["n_fail"] == 0
    assert res.nmse_lookup("I", math.inf, "full", "train", "x")["mean_nmse"] < 1e-10


@pytest.mark.parametrize("method", ["I", "II", "III", "IV"])
def test_noiseless_linear_system_exact(tmp_path, method):
    cfg = _csv_config(tmp_path, methods=[method])
    res = run_sweep(cfg)
    assert res.nmse_lookup(method, math.inf, "full", "train", "x")["mean_nmse"] < 1e-10


def test_lorenz_sweep_tables(tmp_path):
    cfg = _small_lorenz()
    res = run_sweep(cfg)
    assert not res.failures
    assert len(res.size_rows) == 2 * 2 * 3
    keys = {(r["snr_db"], r["epsilon"], r["run"]) for r in res.size_rows}
    assert len(keys) == 12
    by_run = {}
    for r in res.size_rows:
        by_run.setdefault((r["snr_db"], r["run"]), []).append((r["epsilon"], r["reduced_size"]))
    for rows in by_run.values():
        sizes = [s for _, s in sorted(rows)]
        assert all(b <= a for a, b in zip(sizes, sizes[1:]))
        assert all(3 <= s <= 9 for s in sizes)
    assert len(res.nmse_rows) == 3 * 2 * 2 * 2 * 3
    row = res.nmse_lookup("I", 40, "full", "test", "x")
    vals = res.per_run[("I", 40.0, "full", "test", 0)]
    assert row["mean_nmse"] == pytest.approx(np.mean(vals))
    assert row["ci95"] == pytest.approx(1.96 * np.std(vals, ddof=1) / math.sqrt(2))
    out = write_results(res, tmp_path / "out")
    assert list(_read(out / "nmse.csv")[0]) == NMSE_COLUMNS
    assert list(_read(out / "sizes.csv")[0]) == SIZES_COLUMNS
    names = sorted(p.name for p in (out / "models").iterdir())
    assert "IV_full_snr40.0.json" in names and "I_reduced_snr30.0.json" in names


def test_reduced_models_are_refit(tmp_path):
    cfg = _small_lorenz(snr_grid=[40], mc_runs=1, methods=["I"])
    res = run_sweep(cfg)
    full = res.models[("I", "full", 40.0)]
    red = res.models[("I", "reduced", 40.0)]
    kept = [full.dictionary.labels.index(lab) for lab in red.dictionary.labels]
    masked = full.K_F_hat[np.ix_(kept, kept)]
    assert red.K_F_hat.shape == masked.shape
    if len(kept) < len(full.dictionary):
        assert not np.allclose(red.K_F_hat, masked)


def test_sweep_is_deterministic(tmp_path):
    cfg = _small_lorenz(snr_grid=[30], mc_runs=2)
    a = write_results(run_sweep(cfg), tmp_path / "a")
    b = write_results(run_sweep(cfg), tmp_path / "b")
    for name in ("nmse.csv", "sizes.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_failures_are_recorded_not_fatal(tmp_path, monkeypatch):
    real = harness.fit_matrix

    def flaky(method, *a, **kw):
        if method == "II":
            raise NumericError("synthetic failure")
        return real(method, *a, **kw)

    monkeypatch.setattr(harness, "fit_matrix", flaky)
    cfg = _csv_config(tmp_path, methods=["I", "II"], mc_runs=2)
    res = run_sweep(cfg)
    assert len(res.failures) == 4
    row = res.nmse_lookup("II", math.inf, "full", "test", "x")
    assert row["n_ok"] == 0 and row["n_fail"] == 2 and math.isnan(row["mean_nmse"])
    assert res.nmse_lookup("I", math.inf, "full", "test", "x")["n_ok"] == 2


# -- heatmaps ---------------------------------------------------------------------


def _dic1():
    return Dictionary((ObservableSpec.identity(0), ObservableSpec.gaussian_rbf([0.0], 1.0)), (0,), 1, 1)


def test_heatmap_zero_matrix():
    text = heatmap_export(KoopmanModel(_dic1(), np.zeros((3, 2))))
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == HEATMAP_COLUMNS
    assert len(rows) == 3 * 2
    assert all(r["is_exact_zero"] == "1" for r in rows)
    assert rows[-1]["row_label"] == "u0"


def test_heatmap_method_iv_clip_floor(rng):
    x = np.zeros(200)
    u = rng.normal(size=199)
    for k in range(199):
        x[k + 1] = 0.5 * x[k] + u[k]
    d = Dataset(x[:, None], u[:, None], 1.0)
    model, res = identify(_dic1(), d, "IV", priors=Priors(delta=1e-8))
    rows = list(csv.DictReader(io.StringIO(heatmap_export(model))))
    floor = [r for r, g in zip(rows, res.Gamma.ravel()) if g == 1e-8]
    assert floor, "expected at least one clipped inclusion"
    for r in floor:
        assert r["is_exact_zero"] == "0" and float(r["abs_value"]) < 1e-6


def test_heatmap_from_sweep(tmp_path):
    cfg = _csv_config(tmp_path, methods=["I", "IV"])
    res = run_sweep(cfg)
    text = heatmap_export(res, "IV", "full", path=tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text() == text
    with pytest.raises(KeyError):
        heatmap_export(res, "III", "full")
