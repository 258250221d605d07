"""Round-driven simulation of synchronous federated training over bandwidth traces.

Each client owns a bandwidth trace. A round consumes ``train_seconds`` trace
samples per client as awareness data during local training; the sample right
after that window is the bandwidth actually available at upload time. The
server waits for every client, so a round lasts as long as its slowest
upload, and deadline misses are only recorded.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import bandwidth as bw
from . import federation as fed
from . import mlkit
from .config import ExperimentConfig, validate, ConfigError
from .sketch import (
    AggregatedSketch,
    CollisionPolicy,
    HashFamily,
    decompress,
    make_hash_family,
    make_injective_family,
    splitmix64,
)

log = logging.getLogger(__name__)


def derive_seed(seed: int, tag: str) -> int:
    """Stable 63-bit sub-seed for one named random stream of an experiment."""
    return splitmix64(seed ^ (zlib.crc32(tag.encode()) << 32)) >> 1


def synthetic_traces(seed: int, clients: int, duration_s: int, base_bw: float,
                     amplitude: float = 0.0, noise: float = 0.0, shift_prob: float = 0.0,
                     period_s: float = 86_400.0, spread: float = 1.0) -> list[bw.BandwidthTrace]:
    """One trace per client; client levels are spread log-uniformly over ``[base/spread, base*spread]``."""
    rng = np.random.default_rng(derive_seed(seed, "trace-levels"))
    factors = spread ** rng.uniform(-1.0, 1.0, size=clients)
    return [
        bw.generate_trace(
            derive_seed(seed, f"trace-{i}"), duration_s, base_bw * factors[i],
            amplitude * factors[i], noise * factors[i], shift_prob, period_s,
            client_id=str(i),
        )
        for i in range(clients)
    ]


@dataclass(frozen=True)
class RoundRecord:
    round: int
    clients: tuple[fed.ClientRecord, ...]
    accuracy: float
    client_mae: tuple[float, ...]
    round_time: float

    @property
    def mean_mae(self) -> float:
        return float(np.mean(self.client_mae))


@dataclass
class World:
    config: ExperimentConfig
    clients: list[fed.ClientState]
    family: HashFamily | None
    policy: CollisionPolicy
    link: bw.LinkModel
    settings: fed.RoundSettings
    test: mlkit.Dataset
    prev_agg: AggregatedSketch | None = None
    prev_global: mlkit.ModelWeights | None = None
    history: list[list[tuple[float, float]]] = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return self.clients[0].weights.n


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    n_params: int
    records: list[RoundRecord]
    summary: dict
    shard_digests: list[str]
    traces: list[bw.BandwidthTrace] = field(repr=False, default_factory=list)


def summarize(records: list[RoundRecord], algorithm: str, deadline_s: float) -> dict:
    """Scalar summary of a run; recomputable from the round records alone."""
    flat = [c for r in records for c in r.clients]
    preds = [c.b_pred for c in flat]
    trues = [c.b_true for c in flat]
    return {
        "algorithm": algorithm,
        "rounds": len(records),
        "clients": len(records[0].clients) if records else 0,
        "final_accuracy_pct": records[-1].accuracy if records else float("nan"),
        "mean_cr": float(np.mean([c.cr for c in flat])),
        "mean_d_prime_slots": float(np.mean([c.d_prime for c in flat])),
        "total_uplink_slots": int(sum(c.d_prime for c in flat)),
        "mean_uplink_time_s": float(np.mean([c.uplink_time for c in flat])),
        "mean_round_time_s": float(np.mean([r.round_time for r in records])),
        "deadline_s": deadline_s,
        "deadline_violations": int(sum(not c.deadline_met for c in flat)),
        "predictor_mae_mbps": bw.mae(preds, trues),
    }


def build_world(config: ExperimentConfig) -> tuple[World, list[bw.BandwidthTrace]]:
    errors = validate(config)
    if errors:
        raise ConfigError(errors)
    seed = config.seed
    dc, mc, sc, pc = config.data, config.model, config.sketch, config.predictor

    full = mlkit.make_synthetic_dataset(derive_seed(seed, "data"), dc.samples, dc.dims,
                                        dc.classes, dc.class_separation)
    order = np.random.default_rng(derive_seed(seed, "split")).permutation(len(full))
    n_test = max(1, int(round(dc.test_fraction * len(full))))
    test, train = full.subset(np.sort(order[:n_test])), full.subset(np.sort(order[n_test:]))
    shards = fed.partition_noniid(train, config.clients, dc.alpha, derive_seed(seed, "partition"))

    needed = config.rounds * config.train_seconds + 1
    if config.traces.path:
        traces = bw.load_traces(config.traces.path)
        if len(traces) < config.clients:
            raise ConfigError([f"traces.path: {config.traces.path} holds {len(traces)} "
                               f"traces, need {config.clients}"])
        traces = traces[: config.clients]
    else:
        tc = config.traces
        traces = synthetic_traces(seed, config.clients, needed, tc.base_bw, tc.amplitude,
                                  tc.noise, tc.shift_prob, tc.period_s, tc.spread)

    arch = mlkit.Architecture(mc.kind, dc.dims, dc.classes, mc.hidden)
    w0 = mlkit.init_weights(arch, derive_seed(seed, "model"))

    family = None
    if config.algorithm != "fedavg":
        max_rows = max(sc.row_max, sc.fixed_rows)
        hseed = sc.hash_seed if sc.hash_seed is not None else derive_seed(seed, "hash")
        make = make_injective_family if sc.injective else make_hash_family
        family = make(hseed, arch.size, sc.columns, max_rows)

    clients = []
    for i, (shard, trace) in enumerate(zip(shards, traces)):
        predictor = bw.make_predictor(pc.kind, pc.sequence_length, pc.hidden,
                                      derive_seed(seed, f"predictor-{i}"))
        clients.append(fed.ClientState(
            client_id=i,
            weights=w0,
            predictor=predictor,
            buffer=bw.AwarenessBuffer(pc.buffer_capacity),
            shard=shard,
            trace=trace,
            lr=mc.lr,
        ))

    world = World(
        config=config,
        clients=clients,
        family=family,
        policy=CollisionPolicy(sc.cv_threshold),
        link=bw.LinkModel(config.link.deadline_s, config.link.snr, config.link.bits_per_value),
        settings=fed.RoundSettings(
            row_min=sc.row_min, row_max=sc.row_max, fixed_rows=sc.fixed_rows,
            train_seconds=config.train_seconds, local_epochs=mc.local_epochs,
            batch_size=mc.batch_size, predictor_epochs=pc.epochs, predictor_lr=pc.lr,
        ),
        test=test,
        history=[[] for _ in clients],
    )
    return world, traces


def run_round(world: World, r: int) -> tuple[World, RoundRecord]:
    """Advance every client one round, aggregate, and evaluate the next global model."""
    if r >= world.config.rounds:
        raise ValueError(f"round {r} beyond configured {world.config.rounds} rounds")
    algorithm = world.config.algorithm
    states, records, uploads = [], [], []
    for state in world.clients:
        if algorithm == "fedavg":
            upload, state, rec = fed.fedavg_client_round(state, world.prev_global, world.link,
                                                         world.settings)
        else:
            step = fed.client_round if algorithm == "adapcomfl" else fed.sketchfl_client_round
            upload, state, rec = step(state, world.prev_agg, world.link, world.family,
                                      world.policy, world.settings)
        states.append(state)
        records.append(rec)
        uploads.append(upload)

    base = states[0].weights.w
    if any(not np.array_equal(s.weights.w, base) for s in states[1:]):
        raise RuntimeError(f"client models diverged in round {r}")

    if algorithm == "fedavg":
        prev_global = fed.fedavg_aggregate(uploads, [len(s.shard) for s in states])
        prev_agg = None
        model = prev_global
    else:
        prev_agg = fed.aggregate(uploads, [s.client_id for s in states])
        prev_global = None
        model = mlkit.ModelWeights(states[0].weights.arch,
                                   base - decompress(prev_agg, world.family))

    for hist, rec in zip(world.history, records):
        hist.append((rec.b_pred, rec.b_true))
    client_mae = tuple(bw.mae([p for p, _ in h], [t for _, t in h]) for h in world.history)

    record = RoundRecord(
        round=r,
        clients=tuple(records),
        accuracy=mlkit.evaluate(model, world.test),
        client_mae=client_mae,
        round_time=max(rec.uplink_time for rec in records),
    )
    world = replace(world, clients=states, prev_agg=prev_agg, prev_global=prev_global)
    log.debug("round %d acc=%.2f rows=%s", r, record.accuracy, [c.rows for c in records])
    return world, record


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    world, traces = build_world(config)
    records = []
    for r in range(config.rounds):
        world, rec = run_round(world, r)
        records.append(rec)
    return ExperimentResult(
        config=config,
        n_params=world.n_params,
        records=records,
        summary=summarize(records, config.algorithm, config.link.deadline_s),
        shard_digests=[c.shard.digest() for c in world.clients],
        traces=traces,
    )
