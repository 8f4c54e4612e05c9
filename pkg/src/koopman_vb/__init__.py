"""Sparse Koopman/EDMD identification with spike-and-slab variational Bayes
and dictionary reduction through the graph of posterior inclusion probabilities."""
from .baselines import PinvRegressor, SBLRegressor, STLSRegressor, edmd_pinv, sbl, sbl_all, stls
from .data import (Dataset, SnapshotPairs, add_measurement_noise, load_csv, noisy_dataset,
                   save_csv, snapshot_pairs)
from .dictionary import (Dictionary, ObservableDictionary, ObservableSpec, build_dictionary,
                         delay_embed, design_matrix, evaluate, evaluate_batch, featurize,
                         kmeans_centers)
from .exceptions import (ConfigError, DataError, DegenerateSignalError, DivergenceError,
                         InsufficientDataError, KoopmanVBError, MalformedFileError, NumericError)
from .graphred import (Condensation, DictionaryReducer, InclusionGraph, ancestors,
                       reduce_dictionary, reduced_indices, scc, threshold)
from .harness import ExperimentConfig, SweepResult, heatmap_export, run_sweep, write_results
from .koopman import KoopmanModel, KoopmanRegressor, identify, nmse, predict_one_step, rollout
from .systems import (USVParams, WHParams, excitation, simulate_lorenz, simulate_usv,
                      simulate_wiener_hammerstein)
from .vb import FitResult, PosteriorState, Priors, SpikeSlabRegressor, fit_all, fit_target

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
