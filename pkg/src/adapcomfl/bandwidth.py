"""Bandwidth traces, awareness buffers, next-value predictors and link arithmetic.

Bandwidth is in megabytes per second throughout. Upload budgets are counted
in value slots of ``bits_per_value`` bits each, so a sketch of ``a x b``
cells costs exactly ``a * b`` slots.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import lstm

BITS_PER_MEGABYTE = 8_000_000
TRACE_HEADER = ("client_id", "t_seconds", "bw_mbps")
PREDICTOR_KINDS = ("last_value", "window_ar", "mini_lstm")


class InsufficientDataError(ValueError):
    """Not enough bandwidth history for the requested predictor."""


class TraceFormatError(ValueError):
    pass


# --------------------------------------------------------------------------
# traces


@dataclass(frozen=True, eq=False)
class BandwidthTrace:
    client_id: str
    t: np.ndarray
    bw: np.ndarray
    source: str = "synthetic"

    def __post_init__(self):
        if self.t.shape != self.bw.shape or self.t.ndim != 1:
            raise ValueError("t and bw must be equal-length 1-d arrays")
        if self.t.size == 0:
            raise ValueError(f"trace {self.client_id!r} is empty")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError(f"trace {self.client_id!r} timestamps are not strictly increasing")
        if np.any(self.bw < 0) or not np.all(np.isfinite(self.bw)):
            raise ValueError(f"trace {self.client_id!r} has negative or non-finite bandwidth")

    def __len__(self):
        return self.bw.size

    def __eq__(self, other):
        if not isinstance(other, BandwidthTrace):
            return NotImplemented
        return (
            self.client_id == other.client_id
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.bw, other.bw)
        )

    def at(self, index: int) -> float:
        """Sample at ``index``; indices past the end wrap around."""
        return float(self.bw[index % self.bw.size])


def generate_trace(
    seed: int,
    duration_s: int,
    base_bw: float,
    daily_amplitude: float = 0.0,
    noise_std: float = 0.0,
    regime_shift_prob: float = 0.0,
    period_s: float = 86_400.0,
    ar_coef: float = 0.8,
    client_id: str = "0",
) -> BandwidthTrace:
    """1 Hz synthetic trace: base + sinusoid + AR(1) noise, with random level shifts.

    A regime shift multiplies the deterministic part by ``exp(N(0, 0.5^2))``
    and persists until the next shift. Samples are floored at 0.
    """
    if duration_s < 1:
        raise ValueError(f"duration_s must be >= 1, got {duration_s}")
    if base_bw <= 0:
        raise ValueError(f"base_bw must be positive, got {base_bw}")
    rng = np.random.default_rng(seed)
    t = np.arange(duration_s, dtype=np.int64)
    phase = rng.uniform(0, 2 * np.pi) if daily_amplitude else 0.0
    level = base_bw + daily_amplitude * np.sin(2 * np.pi * t / period_s + phase)

    innovations = rng.standard_normal(duration_s) * noise_std * math.sqrt(1 - ar_coef**2)
    noise = np.zeros(duration_s)
    for i in range(duration_s):
        noise[i] = (ar_coef * noise[i - 1] if i else 0.0) + innovations[i]

    shifts = rng.random(duration_s) < regime_shift_prob
    factors = np.exp(rng.normal(0.0, 0.5, size=duration_s))
    mult = np.ones(duration_s)
    current = 1.0
    for i in range(duration_s):
        if shifts[i]:
            current = factors[i]
        mult[i] = current

    bw = np.maximum(mult * level + noise, 0.0)
    return BandwidthTrace(client_id=client_id, t=t, bw=bw, source="synthetic")


def write_traces(traces: Iterable[BandwidthTrace], path: str | Path) -> None:
    ordered = sorted(traces, key=lambda tr: tr.client_id)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for tr in ordered:
            for t, bw in zip(tr.t, tr.bw):
                writer.writerow((tr.client_id, int(t), repr(float(bw))))


def load_traces(path: str | Path) -> list[BandwidthTrace]:
    """Read a trace CSV; one trace per client_id, ordered by client_id."""
    rows: dict[str, list[tuple[int, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceFormatError(f"{path}:1: expected header {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise TraceFormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            cid, t_raw, bw_raw = (x.strip() for x in row)
            try:
                t = int(t_raw)
                bw = float(bw_raw)
            except ValueError as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from None
            if not math.isfinite(bw) or bw < 0:
                raise TraceFormatError(f"{path}:{lineno}: bw_mbps must be a non-negative number")
            samples = rows.setdefault(cid, [])
            if samples and t <= samples[-1][0]:
                raise TraceFormatError(
                    f"{path}:{lineno}: t_seconds not increasing for client {cid!r}"
                )
            samples.append((t, bw))
    return [
        BandwidthTrace(
            client_id=cid,
            t=np.array([s[0] for s in samples], dtype=np.int64),
            bw=np.array([s[1] for s in samples], dtype=float),
            source="file",
        )
        for cid, samples in sorted(rows.items())
    ]


# --------------------------------------------------------------------------
# awareness buffer


@dataclass(frozen=True)
class AwarenessBuffer:
    capacity: int
    window: tuple[float, ...] = ()

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be positive, got {self.capacity}")

    def __len__(self):
        return len(self.window)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.window, dtype=float)


def observe(buffer: AwarenessBuffer, sample: float) -> AwarenessBuffer:
    if not sample >= 0:
        raise ValueError(f"bandwidth sample must be >= 0, got {sample}")
    window = (buffer.window + (float(sample),))[-buffer.capacity :]
    return replace(buffer, window=window)


# --------------------------------------------------------------------------
# predictors


@dataclass(frozen=True, eq=False)
class PredictorState:
    kind: str = "mini_lstm"
    sequence_length: int = 6
    hidden: tuple[int, ...] = (16, 8)
    params: np.ndarray | None = field(default=None, repr=False)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PREDICTOR_KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.sequence_length < 1:
            raise ValueError("sequence_length must be positive")

    @property
    def shape(self) -> lstm.LSTMShape:
        return lstm.LSTMShape(hidden=tuple(self.hidden))


def make_predictor(kind: str = "mini_lstm", sequence_length: int = 6,
                   hidden: Sequence[int] = (16, 8), seed: int = 0) -> PredictorState:
    state = PredictorState(kind=kind, sequence_length=sequence_length,
                           hidden=tuple(hidden), seed=seed)
    if kind == "mini_lstm":
        state = replace(state, params=lstm.init_params(state.shape, seed))
    return state


def _scale(history: np.ndarray) -> float:
    s = float(np.mean(np.abs(history)))
    return s if s > 0 else 1.0


def lstm_windows(history: np.ndarray, f: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding (input, label) pairs, each expressed relative to its last input.

    Window ``j`` is ``history[j:j+f]`` with label ``history[j+f]``; both are
    shifted by ``history[j+f-1]`` and divided by the mean absolute level of
    the whole history.
    """
    scale = _scale(history)
    count = history.size - f
    idx = np.arange(count)[:, None] + np.arange(f)[None, :]
    x = history[idx]
    anchor = x[:, -1:]
    y = history[f:]
    return (x - anchor) / scale, (y - anchor[:, 0]) / scale


def _line_extrapolate(values: np.ndarray) -> float:
    f = values.size
    if f == 1:
        return float(values[0])
    # fit offsets from the last sample so a flat window extrapolates exactly
    last = values[-1]
    d = values - last
    t = np.arange(f, dtype=float)
    t_mean = t.mean()
    d_mean = d.mean()
    slope = np.sum((t - t_mean) * (d - d_mean)) / np.sum((t - t_mean) ** 2)
    return float(last + (d_mean + slope * (f - t_mean)))


def predict(state: PredictorState, buffer: AwarenessBuffer) -> float:
    """Next-step bandwidth forecast from the buffer, clamped at 0."""
    history = buffer.as_array()
    need = 1 if state.kind == "last_value" else state.sequence_length
    if history.size < need:
        raise InsufficientDataError(
            f"{state.kind} needs {need} samples, buffer holds {history.size}"
        )
    if state.kind == "last_value":
        raw = float(history[-1])
    elif state.kind == "window_ar":
        raw = _line_extrapolate(history[-state.sequence_length :])
    else:
        if state.params is None:
            raise ValueError("mini_lstm predictor has no parameters")
        f = state.sequence_length
        scale = _scale(history)
        window = history[-f:]
        x = ((window - window[-1]) / scale)[None, :]
        y, _ = lstm.forward(state.shape, state.params, x)
        raw = float(window[-1] + scale * y[0])
    return max(raw, 0.0)


def train_mini_lstm(state: PredictorState, buffer: AwarenessBuffer,
                    epochs: int = 20, lr: float = 0.05) -> PredictorState:
    """Full-batch SGD on squared error over every sliding window of the buffer."""
    if state.kind != "mini_lstm":
        raise ValueError(f"cannot train a {state.kind} predictor")
    history = buffer.as_array()
    f = state.sequence_length
    if history.size < f + 1:
        raise InsufficientDataError(f"training needs {f + 1} samples, buffer holds {history.size}")
    if epochs == 0:
        return state
    x, y = lstm_windows(history, f)
    params = state.params.copy()
    for _ in range(epochs):
        _, grad = lstm.loss_and_grad(state.shape, params, x, y)
        params -= lr * grad
    return replace(state, params=params)


def lstm_buffer_loss(state: PredictorState, buffer: AwarenessBuffer) -> float:
    x, y = lstm_windows(buffer.as_array(), state.sequence_length)
    loss, _ = lstm.loss_and_grad(state.shape, state.params, x, y)
    return loss


# --------------------------------------------------------------------------
# link arithmetic


@dataclass(frozen=True)
class LinkModel:
    deadline_s: float = 0.5
    snr: float = 3.0
    bits_per_value: int = 32

    def __post_init__(self):
        if not self.deadline_s > 0:
            raise ValueError(f"deadline_s must be positive, got {self.deadline_s}")
        if not self.snr >= 0:
            raise ValueError(f"snr must be >= 0, got {self.snr}")
        if self.bits_per_value < 1:
            raise ValueError(f"bits_per_value must be positive, got {self.bits_per_value}")

    @property
    def spectral_factor(self) -> float:
        return math.log2(1.0 + self.snr)


def rate_bits(bw_mbps: float) -> float:
    return bw_mbps * BITS_PER_MEGABYTE


def uplink_time(link: LinkModel, volume: int, bw_true: float) -> float:
    """Seconds to push ``volume`` value slots at the realised bandwidth."""
    capacity = rate_bits(bw_true) * link.spectral_factor
    if capacity <= 0:
        return math.inf
    return volume * link.bits_per_value / capacity


def uplink_volume(link: LinkModel, bw_pred: float) -> int:
    """Whole value slots that fit in the deadline at the predicted bandwidth."""
    if bw_pred < 0:
        raise ValueError(f"bandwidth must be >= 0, got {bw_pred}")
    capacity = rate_bits(bw_pred) * link.spectral_factor
    if capacity <= 0:
        return 0
    slots = int(math.floor(link.deadline_s * capacity / link.bits_per_value))
    # rounding in the product can land one slot past the deadline
    while slots > 0 and uplink_time(link, slots, bw_pred) > link.deadline_s:
        slots -= 1
    return slots


def mae(predicted: Sequence[float], actual: Sequence[float]) -> float:
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape or p.ndim != 1:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("mae of empty sequences")
    return float(np.mean(np.abs(p - a)))
