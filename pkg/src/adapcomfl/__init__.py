"""Bandwidth-aware adaptive sketch compression for federated learning."""

from .bandwidth import (
    AwarenessBuffer,
    BandwidthTrace,
    LinkModel,
    PredictorState,
    generate_trace,
    load_traces,
    mae,
    make_predictor,
    observe,
    predict,
    train_mini_lstm,
    uplink_time,
    uplink_volume,
    write_traces,
)
from .config import ConfigError, ExperimentConfig, load_config
from .federation import (
    ClientState,
    aggregate,
    align,
    client_round,
    fedavg_aggregate,
    partition_noniid,
    sketchfl_client_round,
)
from .netsim import ExperimentResult, run_experiment, run_round
from .sketch import (
    AdaptiveSketch,
    AggregatedSketch,
    CollisionPolicy,
    HashFamily,
    compress,
    decompress,
    make_hash_family,
    make_injective_family,
    merge_bucket,
    position,
    rows_for_volume,
)

__version__ = "0.1.0"
