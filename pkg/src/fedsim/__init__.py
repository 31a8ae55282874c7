"""fedsim: a deterministic simulator for personalized federated learning.

Provides a small float64 MLP engine, Non-IID data partitioners, a
client/server round loop with four local-update strategies (fedavg,
fedper, fedrep, fedah), and a CLI that writes CSV metrics and accuracy
curves.
"""

from .data import (
    ClientSplit,
    LabeledDataset,
    PartitionSpec,
    generate_synthetic,
    load_idx,
    partition,
    partition_dirichlet,
    partition_pathological,
    split_train_test,
)
from .errors import ConfigError, DataFormatError, ShapeError
from .federation import (
    ClientState,
    MetricsLog,
    RoundConfig,
    RoundRecord,
    ServerState,
    aggregate,
    run_experiment,
    run_round,
    sample_clients,
)
from .nn import (
    Batch,
    Gradients,
    Layer,
    Model,
    accuracy,
    forward,
    init_model,
    loss_and_grads,
    n_extractor_params,
    n_params,
    sgd_step,
)
from .strategies import (
    FedAH,
    FedAvg,
    FedPer,
    FedRep,
    LocalUpdateReport,
    Strategy,
    build_aggregated_head,
    learn_aggregation_weights,
    make_strategy,
    personalized_model,
)

__version__ = "0.1.0"
