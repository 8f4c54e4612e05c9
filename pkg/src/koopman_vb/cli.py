"""Command line interface.

Every subcommand accepts ``--config``, ``--seed`` and ``--out``. Exit status
is 0 on success, 1 on usage or configuration errors and 2 on data or
numerical errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import load_csv, noisy_dataset, save_csv
from .dictionary import Dictionary, featurize
from .exceptions import ConfigError, DataError, KoopmanVBError, NumericError
from .graphred import export_edgelist, reduce_dictionary, threshold
from .harness import (ExperimentConfig, format_float, heatmap_export, make_dictionary,
                      parse_snr, run_sweep, simulate, system_dims, write_results)
from .koopman import METHODS, KoopmanModel, identify, nmse, predict_one_step
from .vb import Priors

logger = logging.getLogger("koopman_vb")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--seed", type=int, help="base seed (overrides the config)")
    p.add_argument("--out", type=Path, help="output file or directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="koopman-vb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", help="generate a trajectory CSV from a system config")
    _common(p)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--snr", help="add measurement noise at this SNR (dB)")

    p = sub.add_parser("featurize", help="build a dictionary (and design matrix) from data")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--design", type=Path, help="also write [Phi | targets] as CSV")

    p = sub.add_parser("fit", help="identify a Koopman model")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--dictionary", type=Path, help="dictionary JSON (default: build from config)")
    p.add_argument("--method", choices=METHODS, default="IV")
    p.add_argument("--stls-lambda", type=float)

    p = sub.add_parser("reduce", help="reduce a model's dictionary from its inclusion matrix")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--edgelist", type=Path, help="also write the thresholded graph")

    p = sub.add_parser("evaluate", help="one-step NMSE of a model on a dataset")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--snr", help="add measurement noise at this SNR (dB)")

    p = sub.add_parser("sweep", help="Monte-Carlo SNR sweep over methods and dictionaries")
    _common(p)

    p = sub.add_parser("export-heatmap", help="|K_F_hat| as CSV with an exact-zero mask")
    _common(p)
    p.add_argument("--model", type=Path, help="model JSON")
    p.add_argument("--results", type=Path, help="sweep output directory")
    p.add_argument("--method", choices=METHODS, default="IV")
    p.add_argument("--dict", dest="which", choices=("full", "reduced"), default="full")
    p.add_argument("--snr", help="SNR of the stored model (default: first found)")
    return parser


# -- helpers -----------------------------------------------------------------


def _config(args, required=True) -> ExperimentConfig | None:
    if args.config is None:
        if required:
            raise UsageError("--config is required")
        return None
    cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _snr(v):
    return None if v is None else parse_snr(v)


def _load_data(path, cfg=None, dic: Dictionary | None = None):
    if dic is not None:
        n_states, n_inputs = dic.n_states, dic.n_inputs
    elif cfg is not None:
        n_states, n_inputs = system_dims(cfg)
    else:
        raise UsageError("need --config or a dictionary to know the CSV layout")
    return load_csv(path, n_states, n_inputs)


# -- subcommands ---------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if cfg.system["kind"] == "csv":
        raise ConfigError("csv systems cannot be simulated")
    d = simulate(cfg, args.split)
    snr = _snr(args.snr)
    if snr is not None:
        d = noisy_dataset(d, snr, np.random.SeedSequence([cfg.seed, 3]))
    if args.out is None:
        raise UsageError("simulate needs --out")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(d, args.out)
    logger.info("wrote %d samples to %s", d.n_samples, args.out)
    return 0


def cmd_featurize(args) -> int:
    cfg = _config(args)
    d = _load_data(args.data, cfg)
    dic = make_dictionary(cfg, d, np.random.SeedSequence([cfg.seed, 4]))
    _emit(dic.to_json(), args.out)
    if args.design is not None:
        Phi, T = featurize(dic, d)
        labels = list(dic.labels) + [f"u{j}" for j in range(dic.n_inputs)]
        header = ",".join([f"phi:{s}" for s in labels] + [f"next:{s}" for s in dic.labels])
        np.savetxt(args.design, np.hstack([Phi, T]), delimiter=",", header=header,
                   comments="", fmt="%.17g")
    return 0


def cmd_fit(args) -> int:
    cfg = _config(args, required=args.dictionary is None)
    dic = Dictionary.from_json(args.dictionary) if args.dictionary else None
    d = _load_data(args.data, cfg, dic)
    if dic is None:
        dic = make_dictionary(cfg, d, np.random.SeedSequence([cfg.seed, 4]))
    priors = Priors.from_dict(cfg.priors) if cfg else Priors()
    lam = args.stls_lambda if args.stls_lambda is not None else (cfg.stls_lambda if cfg else 0.05)
    kw = {"priors": priors} if args.method == "IV" else {}
    if args.method == "II":
        kw["stls_lambda"] = lam
    model, _ = identify(dic, d, args.method, **kw)
    _emit(model.to_json(), args.out)
    return 0


def cmd_reduce(args) -> int:
    model = KoopmanModel.from_json(args.model)
    if model.inclusion is None:
        raise ConfigError("reduction needs a model with an inclusion matrix (method IV)")
    red, index_map = reduce_dictionary(model.dictionary, model.inclusion, args.epsilon)
    payload = {
        "epsilon": args.epsilon,
        "kept": sorted(index_map),
        "index_map": {str(k): v for k, v in sorted(index_map.items())},
        "dictionary": red.to_dict(),
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    if args.edgelist is not None:
        g = threshold(model.inclusion, args.epsilon)
        args.edgelist.write_text(export_edgelist(g, model.dictionary.labels))
    return 0


def cmd_evaluate(args) -> int:
    model = KoopmanModel.from_json(args.model)
    d = _load_data(args.data, dic=model.dictionary)
    snr = _snr(args.snr)
    if snr is not None:
        d = noisy_dataset(d, snr, np.random.SeedSequence([args.seed or 0, 3]))
    true, pred = predict_one_step(model, d)
    scores = nmse(true, pred)
    names = [d.column_names[i] if d.column_names else f"x{i}"
             for i in model.dictionary.output_state_indices]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state", "nmse"])
    for name, v in zip(names, scores):
        w.writerow([name, format_float(v)])
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = args.out if args.out is not None else cfg.resolve(cfg.output_dir)
    result = run_sweep(cfg)
    write_results(result, out)
    if result.failures:
        logger.warning("%d run(s) failed; see the n_fail column", len(result.failures))
    logger.info("results written to %s", out)
    return 0


def cmd_export_heatmap(args) -> int:
    if (args.model is None) == (args.results is None):
        raise UsageError("give exactly one of --model or --results")
    if args.model is not None:
        model = KoopmanModel.from_json(args.model)
    else:
        pattern = f"{args.method}_{args.which}_snr*.json"
        files = sorted((args.results / "models").glob(pattern))
        snr = _snr(args.snr)
        if snr is not None:
            files = [f for f in files if f.stem.endswith(f"snr{format_float(snr)}")]
        if not files:
            raise ConfigError(f"no stored model matching {pattern} in {args.results}")
        model = KoopmanModel.from_json(files[0])
    _emit(heatmap_export(model), args.out)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "featurize": cmd_featurize,
    "fit": cmd_fit,
    "reduce": cmd_reduce,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "export-heatmap": cmd_export_heatmap,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, NumericError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KoopmanVBError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
