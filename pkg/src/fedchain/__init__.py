"""fedchain: decentralized federated learning over a simulated ledger."""

__version__ = "0.1.0"

from .network import (LayerShape, ModelParams, TrainConfig, hidden_width,
                      init_model, train_local)
from .datasets import (Dataset, SmoteConfig, load_csv, partition_clients,
                       save_csv, smote_expand, stratified_split, synth_generate)
from .codec import QuantizedUpdate, dequantize, quantize
from .contract import Address, AggregatorContract
from .ledger import Ledger, LedgerConfig
from .metrics import binary_metrics, confusion, multiclass_metrics
from .orchestrator import (ExperimentConfig, FederatedExperiment, RoundRecord,
                           evaluate, run_centralized_baseline, run_experiment)
from .bench import BenchResult, WorkloadSpec, run_workload, sweep
from .estimator import BotClassifier, SmoteOversampler

__all__ = [
    "Address", "AggregatorContract", "BenchResult", "BotClassifier",
    "Dataset", "ExperimentConfig", "FederatedExperiment", "LayerShape",
    "Ledger", "LedgerConfig", "ModelParams", "QuantizedUpdate", "RoundRecord",
    "SmoteConfig", "SmoteOversampler", "TrainConfig", "WorkloadSpec",
    "binary_metrics", "confusion", "dequantize", "evaluate", "hidden_width",
    "init_model", "load_csv", "multiclass_metrics", "partition_clients",
    "quantize", "run_centralized_baseline", "run_experiment", "run_workload",
    "save_csv", "smote_expand", "stratified_split", "sweep", "synth_generate",
    "train_local",
]
