"""Client and server steps for adaptive-sketch federated learning and its baselines.

Every round a client applies last round's aggregate, trains locally while
filling its bandwidth buffer, forecasts its uplink bandwidth, turns the
forecast into a row budget and uploads a sketch of its update. The server
zero-pads the unequal sketches to the tallest one and averages each row over
the clients that actually sent it.

The uploaded update is ``g = w_start - w_after_local_training`` (for one
full-batch epoch that is ``lr * grad``), and clients apply
``w <- w - decompress(aggregate)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import bandwidth as bw
from . import mlkit
from .sketch import (
    AdaptiveSketch,
    AggregatedSketch,
    CollisionPolicy,
    HashFamily,
    compress,
    decompress,
    rows_for_volume,
)


class IncompatibleSketchError(ValueError):
    pass


@dataclass(frozen=True)
class RoundSettings:
    """Per-round knobs shared by all clients."""

    row_min: int = 3
    row_max: int = 10
    fixed_rows: int = 7
    train_seconds: int = 10
    local_epochs: int = 1
    batch_size: int | None = None
    predictor_epochs: int = 20
    predictor_lr: float = 0.05


@dataclass(frozen=True)
class ClientState:
    client_id: int
    weights: mlkit.ModelWeights
    predictor: bw.PredictorState
    buffer: bw.AwarenessBuffer
    shard: mlkit.Dataset
    trace: bw.BandwidthTrace
    lr: float
    trace_cursor: int = 0
    rounds_done: int = 0


@dataclass(frozen=True)
class ClientRecord:
    client_id: int
    b_pred: float
    b_true: float
    rows: int
    d_prime: int
    uplink_time: float
    deadline_met: bool
    cr: float


def _apply_aggregate(state: ClientState, prev_agg: AggregatedSketch | None,
                     family: HashFamily) -> mlkit.ModelWeights:
    if prev_agg is None:
        return state.weights
    step = decompress(prev_agg, family, state.weights.n)
    return mlkit.ModelWeights(state.weights.arch, state.weights.w - step)


def _sense_and_train(state: ClientState, weights: mlkit.ModelWeights,
                     settings: RoundSettings) -> tuple[ClientState, mlkit.ModelWeights, float, float]:
    """Local training with bandwidth awareness, then a bandwidth forecast.

    Returns the advanced state (buffer, cursor, predictor), the locally trained
    weights, the forecast and the realised bandwidth at the upload instant.
    """
    buffer = state.buffer
    for j in range(settings.train_seconds):
        buffer = bw.observe(buffer, state.trace.at(state.trace_cursor + j))
    cursor = state.trace_cursor + settings.train_seconds

    rng = np.random.default_rng([state.client_id, state.rounds_done])
    local = mlkit.train_local(weights, state.shard, state.lr, settings.local_epochs,
                              settings.batch_size, rng)

    predictor = state.predictor
    if predictor.kind == "mini_lstm" and len(buffer) > predictor.sequence_length:
        predictor = bw.train_mini_lstm(predictor, buffer, settings.predictor_epochs,
                                       settings.predictor_lr)
    b_pred = bw.predict(predictor, buffer)
    b_true = state.trace.at(cursor)

    advanced = replace(state, weights=weights, predictor=predictor, buffer=buffer,
                       trace_cursor=cursor, rounds_done=state.rounds_done + 1)
    return advanced, local, b_pred, b_true


def _record(state: ClientState, link: bw.LinkModel, b_pred: float, b_true: float,
            rows: int, d_prime: int) -> ClientRecord:
    t = bw.uplink_time(link, d_prime, b_true)
    return ClientRecord(
        client_id=state.client_id,
        b_pred=b_pred,
        b_true=b_true,
        rows=rows,
        d_prime=d_prime,
        uplink_time=t,
        deadline_met=bool(t <= link.deadline_s),
        cr=d_prime / state.weights.n,
    )


def client_round(
    state: ClientState,
    prev_agg: AggregatedSketch | None,
    link: bw.LinkModel,
    family: HashFamily,
    policy: CollisionPolicy = CollisionPolicy(),
    settings: RoundSettings = RoundSettings(),
) -> tuple[AdaptiveSketch, ClientState, ClientRecord]:
    """One adaptive client round: update, train, forecast, size, compress."""
    if state.weights.n != family.n:
        raise ValueError(f"model has {state.weights.n} parameters, hash family expects {family.n}")
    weights = _apply_aggregate(state, prev_agg, family)
    state, local, b_pred, b_true = _sense_and_train(state, weights, settings)
    budget = bw.uplink_volume(link, b_pred)
    rows = rows_for_volume(budget, family.b, settings.row_min, settings.row_max)
    sketch = compress(weights.w - local.w, rows, family, policy)
    return sketch, state, _record(state, link, b_pred, b_true, rows, sketch.volume)


def sketchfl_client_round(
    state: ClientState,
    prev_agg: AggregatedSketch | None,
    link: bw.LinkModel,
    family: HashFamily,
    policy: CollisionPolicy = CollisionPolicy(),
    settings: RoundSettings = RoundSettings(),
) -> tuple[AdaptiveSketch, ClientState, ClientRecord]:
    """Fixed-size sketch baseline: always ``settings.fixed_rows`` rows.

    The bandwidth forecast is still computed so it can be reported, but it
    never influences the upload.
    """
    if state.weights.n != family.n:
        raise ValueError(f"model has {state.weights.n} parameters, hash family expects {family.n}")
    weights = _apply_aggregate(state, prev_agg, family)
    state, local, b_pred, b_true = _sense_and_train(state, weights, settings)
    sketch = compress(weights.w - local.w, settings.fixed_rows, family, policy)
    return sketch, state, _record(state, link, b_pred, b_true, settings.fixed_rows, sketch.volume)


def fedavg_client_round(
    state: ClientState,
    prev_global: mlkit.ModelWeights | None,
    link: bw.LinkModel,
    settings: RoundSettings = RoundSettings(),
) -> tuple[mlkit.ModelWeights, ClientState, ClientRecord]:
    """Uncompressed baseline: adopt the global model, train, upload full weights."""
    weights = state.weights if prev_global is None else prev_global
    state, local, b_pred, b_true = _sense_and_train(state, weights, settings)
    return local, state, _record(state, link, b_pred, b_true, 0, weights.n)


def align(sketches: Sequence[AdaptiveSketch]) -> tuple[list[np.ndarray], int, np.ndarray]:
    """Zero-pad every sketch to the tallest one.

    Returns the padded matrices, ``a_max`` and the per-row contributor counts,
    taken from each sketch's declared row count.
    """
    if not sketches:
        raise ValueError("nothing to align")
    cols = {s.cols for s in sketches}
    seeds = {s.family_seed for s in sketches}
    if len(cols) != 1:
        raise IncompatibleSketchError(f"sketches disagree on column count: {sorted(cols)}")
    if len(seeds) != 1:
        raise IncompatibleSketchError(f"sketches built from different hash families: {sorted(seeds)}")
    (b,) = cols
    a_max = max(s.rows for s in sketches)
    padded = []
    for s in sketches:
        m = np.zeros((a_max, b))
        m[: s.rows] = s.cells
        padded.append(m)
    rows = np.array([s.rows for s in sketches])
    counts = np.array([(rows >= u).sum() for u in range(1, a_max + 1)], dtype=np.int64)
    return padded, a_max, counts


def aggregate(sketches: Sequence[AdaptiveSketch],
              client_ids: Sequence[int] | None = None) -> AggregatedSketch:
    """Row-wise average of the aligned sketches.

    With ``client_ids`` the sum runs in ascending id order, which makes the
    result bit-identical under any reordering of the input.
    """
    if client_ids is not None:
        if len(client_ids) != len(sketches):
            raise ValueError("one client id per sketch required")
        order = np.argsort(np.asarray(client_ids), kind="stable")
        sketches = [sketches[i] for i in order]
    padded, _, counts = align(sketches)
    total = np.zeros_like(padded[0])
    for m in padded:
        total += m
    return AggregatedSketch(
        cells=total / counts[:, None],
        row_counts=counts,
        family_seed=sketches[0].family_seed,
    )


def fedavg_aggregate(weights: Sequence[mlkit.ModelWeights],
                     sample_counts: Sequence[int]) -> mlkit.ModelWeights:
    """Sample-weighted mean of client models."""
    if not weights or len(weights) != len(sample_counts):
        raise ValueError("need one sample count per model")
    arch = weights[0].arch
    if any(w.arch != arch for w in weights):
        raise ValueError("models have different architectures")
    counts = np.asarray(sample_counts, dtype=float)
    if np.any(counts <= 0):
        raise ValueError("sample counts must be positive")
    shares = counts / counts.sum()
    total = np.zeros(arch.size)
    for share, w in zip(shares, weights):
        total += share * w.w
    return mlkit.ModelWeights(arch, total)


def partition_noniid(data: mlkit.Dataset, clients: int, alpha: float, seed: int,
                     max_retries: int = 100) -> list[mlkit.Dataset]:
    """Label-skewed split: each class is divided among clients by Dirichlet(alpha) shares.

    Draws are repeated until every client gets at least one sample.
    """
    if clients < 1:
        raise ValueError(f"clients must be >= 1, got {clients}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if clients > len(data):
        raise ValueError(f"{clients} clients but only {len(data)} samples")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        parts: list[list[np.ndarray]] = [[] for _ in range(clients)]
        for c in range(data.classes):
            idx = rng.permutation(np.flatnonzero(data.labels == c))
            shares = rng.dirichlet(np.full(clients, alpha))
            cuts = np.round(np.cumsum(shares)[:-1] * idx.size).astype(int)
            for i, piece in enumerate(np.split(idx, cuts)):
                parts[i].append(piece)
        index_sets = [np.sort(np.concatenate(p)) for p in parts]
        if all(s.size > 0 for s in index_sets):
            return [data.subset(s) for s in index_sets]
    raise RuntimeError(f"no partition with all {clients} shards non-empty after {max_retries} draws")
