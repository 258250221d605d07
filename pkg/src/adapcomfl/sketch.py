"""Elastic-row count sketch for flat gradient vectors.

Columns are fixed and shared by every party; the number of rows is chosen
per client from its predicted uplink budget. Collisions inside a bucket are
merged by a coefficient-of-variation rule instead of being summed, and no
sign hashing is used. Decompression takes the median of the queried cells.

Indices in the public ``position`` API are 1-based (row ``u``, key ``k``,
column ``v``). Internally everything is 0-based numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MASK64 = (1 << 64) - 1
MAX_COLUMNS = 1 << 32

SERIAL_MAGIC = "adapcomfl-sketch v1"


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def row_subseed(seed: int, u: int) -> int:
    """Sub-seed of row ``u`` (1-based); distinct rows get independent streams."""
    return splitmix64((seed & MASK64) ^ splitmix64(u))


def _row_table(seed: int, u: int, n: int, b: int) -> np.ndarray:
    # multiply-add-shift: top 32 bits of (a*k + c) mod 2^64, then
    # multiply-high range reduction onto [0, b)
    s = row_subseed(seed, u)
    a = np.uint64(s | 1)
    c = np.uint64(splitmix64(s))
    k = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = a * k + c
    hi = x >> np.uint64(32)
    return ((hi * np.uint64(b)) >> np.uint64(32)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class HashFamily:
    """Row-indexed hash functions from keys ``1..n`` onto columns ``1..b``.

    ``table[u - 1, k - 1] + 1`` is the column of key ``k`` in row ``u``.
    """

    seed: int
    n: int
    b: int
    max_rows: int
    table: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.table.shape != (self.max_rows, self.n):
            raise ValueError(
                f"hash table shape {self.table.shape} != ({self.max_rows}, {self.n})"
            )
        if self.table.size and (self.table.min() < 0 or self.table.max() >= self.b):
            raise ValueError("hash table entries must lie in [0, b)")
        self.table.setflags(write=False)

    @classmethod
    def from_table(cls, seed: int, b: int, rows: Sequence[Sequence[int]]) -> "HashFamily":
        """Build a family from explicit 1-based column tables, one per row."""
        table = np.asarray(rows, dtype=np.int64) - 1
        if table.ndim != 2:
            raise ValueError("rows must be a 2-d table")
        return cls(seed=seed, n=table.shape[1], b=b, max_rows=table.shape[0], table=table)

    def same_mapping(self, other: "HashFamily") -> bool:
        return (
            self.b == other.b
            and self.n == other.n
            and self.max_rows == other.max_rows
            and np.array_equal(self.table, other.table)
        )

    def is_injective(self, rows: int | None = None) -> bool:
        rows = self.max_rows if rows is None else rows
        return all(len(np.unique(self.table[u])) == self.n for u in range(rows))


def _check_dims(n: int, b: int, max_rows: int) -> None:
    for name, value in (("n", n), ("b", b), ("max_rows", max_rows)):
        if not isinstance(value, (int, np.integer)) or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")
    if b >= MAX_COLUMNS:
        raise ValueError(f"b must be below 2**32, got {b}")


def make_hash_family(seed: int, n: int, b: int, max_rows: int) -> HashFamily:
    _check_dims(n, b, max_rows)
    table = np.stack([_row_table(seed, u, n, b) for u in range(1, max_rows + 1)])
    return HashFamily(seed=seed, n=n, b=b, max_rows=max_rows, table=table)


def make_injective_family(seed: int, n: int, b: int, max_rows: int) -> HashFamily:
    """Collision-free family: each row is a seeded injection of keys into columns.

    Requires ``b >= n``. Used where a lossless sketch is wanted (tests,
    calibration runs).
    """
    _check_dims(n, b, max_rows)
    if b < n:
        raise ValueError(f"injective rows need b >= n (b={b}, n={n})")
    table = np.stack([
        np.random.default_rng(row_subseed(seed, u)).permutation(b)[:n]
        for u in range(1, max_rows + 1)
    ]).astype(np.int64)
    return HashFamily(seed=seed, n=n, b=b, max_rows=max_rows, table=table)


def position(family: HashFamily, u: int, k: int) -> int:
    """Column (1-based) of key ``k`` in row ``u``."""
    if not 1 <= u <= family.max_rows:
        raise ValueError(f"row u={u} outside [1, {family.max_rows}]")
    if not 1 <= k <= family.n:
        raise ValueError(f"key k={k} outside [1, {family.n}]")
    return int(family.table[u - 1, k - 1]) + 1


@dataclass(frozen=True)
class CollisionPolicy:
    cv_threshold: float = 0.5

    def __post_init__(self):
        if not self.cv_threshold >= 0:
            raise ValueError(f"cv_threshold must be >= 0, got {self.cv_threshold}")


def coefficient_of_variation(values: Sequence[float]) -> float:
    """Population std over |mean|; 0 with no spread, inf for a zero mean with spread."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("coefficient of variation of an empty bucket")
    mean = arr.mean()
    std = float(np.sqrt(np.mean((arr - mean) ** 2)))
    if std == 0.0:
        return 0.0
    if mean == 0.0:
        return math.inf
    return std / abs(mean)


def dominant(values: Sequence[float]) -> float:
    """Element of largest magnitude, sign kept; +x wins a tie against -x."""
    arr = np.asarray(values, dtype=float)
    mags = np.abs(arr)
    candidates = arr[mags == mags.max()]
    return float(candidates.max())


def merge_bucket(values: Sequence[float], policy: CollisionPolicy = CollisionPolicy()) -> float:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot merge an empty bucket")
    if coefficient_of_variation(arr) <= policy.cv_threshold:
        return float(arr.mean())
    return dominant(arr)


@dataclass(frozen=True, eq=False)
class AdaptiveSketch:
    """An ``rows x cols`` sketch of one client's gradient."""

    cells: np.ndarray
    family_seed: int

    def __post_init__(self):
        if self.cells.ndim != 2 or self.cells.shape[0] < 1 or self.cells.shape[1] < 1:
            raise ValueError(f"sketch cells must be a non-empty matrix, got {self.cells.shape}")

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    @property
    def volume(self) -> int:
        """Transmitted value slots, rows * cols."""
        return self.cells.size

    def __eq__(self, other):
        if not isinstance(other, AdaptiveSketch):
            return NotImplemented
        return self.family_seed == other.family_seed and np.array_equal(self.cells, other.cells)

    def to_text(self) -> str:
        return dump_sketch(self)


@dataclass(frozen=True, eq=False)
class AggregatedSketch:
    """Row-wise average of aligned client sketches.

    ``row_counts[u]`` is the number of clients whose sketch had a row ``u``.
    """

    cells: np.ndarray
    row_counts: np.ndarray
    family_seed: int

    def __post_init__(self):
        if self.cells.ndim != 2:
            raise ValueError("aggregated cells must be a matrix")
        if self.row_counts.shape != (self.cells.shape[0],):
            raise ValueError("row_counts must have one entry per row")
        if np.any(self.row_counts < 1):
            raise ValueError("every aggregated row needs at least one contributor")

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    @classmethod
    def single(cls, sketch: AdaptiveSketch) -> "AggregatedSketch":
        return cls(
            cells=sketch.cells.copy(),
            row_counts=np.ones(sketch.rows, dtype=np.int64),
            family_seed=sketch.family_seed,
        )


def _merge_row(g: np.ndarray, cols: np.ndarray, b: int, threshold: float) -> np.ndarray:
    counts = np.bincount(cols, minlength=b)
    occupied = counts > 0
    safe = np.where(occupied, counts, 1)
    means = np.bincount(cols, weights=g, minlength=b) / safe
    dev = g - means[cols]
    std = np.sqrt(np.bincount(cols, weights=dev * dev, minlength=b) / safe)

    eta = np.zeros(b)
    spread = std > 0
    with np.errstate(divide="ignore"):
        eta[spread] = np.where(means[spread] == 0.0, np.inf, std[spread] / np.abs(means[spread]))

    # dominant element per bucket: sort by column, then |g| desc, then g desc
    order = np.lexsort((-g, -np.abs(g), cols))
    sorted_cols = cols[order]
    first = np.flatnonzero(np.r_[True, sorted_cols[1:] != sorted_cols[:-1]])
    peak = np.zeros(b)
    peak[sorted_cols[first]] = g[order[first]]

    row = np.where(eta <= threshold, means, peak)
    row[~occupied] = 0.0
    return row


def compress(
    g: np.ndarray,
    rows: int,
    family: HashFamily,
    policy: CollisionPolicy = CollisionPolicy(),
) -> AdaptiveSketch:
    """Map ``g`` into a ``rows x family.b`` sketch, merging each bucket."""
    g = np.asarray(g, dtype=float)
    if g.shape != (family.n,):
        raise ValueError(f"gradient length {g.shape} does not match family n={family.n}")
    if not 1 <= rows <= family.max_rows:
        raise ValueError(f"rows={rows} outside [1, {family.max_rows}]")
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient contains non-finite values")
    cells = np.stack([
        _merge_row(g, family.table[u], family.b, policy.cv_threshold) for u in range(rows)
    ])
    return AdaptiveSketch(cells=cells, family_seed=family.seed)


def decompress(agg: AggregatedSketch, family: HashFamily, n: int | None = None) -> np.ndarray:
    """Per key, the median of its cells across all aggregated rows.

    Empty buckets hold 0 and take part in the median.
    """
    n = family.n if n is None else n
    if n != family.n:
        raise ValueError(f"n={n} does not match family n={family.n}")
    if agg.cols != family.b:
        raise ValueError(f"sketch has {agg.cols} columns, family has {family.b}")
    if agg.rows > family.max_rows:
        raise ValueError(f"sketch has {agg.rows} rows, family allows {family.max_rows}")
    queried = np.take_along_axis(agg.cells, family.table[: agg.rows], axis=1)
    return np.median(queried, axis=0)


def rows_for_volume(volume: int | float, b: int, row_min: int, row_max: int) -> int:
    """Rows that fit a budget of ``volume`` value slots, clamped to ``[row_min, row_max]``."""
    if row_min > row_max:
        raise ValueError(f"row_min={row_min} > row_max={row_max}")
    if b < 1:
        raise ValueError(f"b must be positive, got {b}")
    raw = int(max(volume, 0) // b)
    return min(max(raw, row_min), row_max)


def dump_sketch(sketch: AdaptiveSketch) -> str:
    """Text dump: magic line, ``seed``, ``shape``, then one row of cells per line.

    Cells are written with ``repr`` so the dump round-trips bit-exactly.
    """
    lines = [
        SERIAL_MAGIC,
        f"seed {sketch.family_seed}",
        f"shape {sketch.rows} {sketch.cols}",
    ]
    lines.extend(" ".join(repr(float(x)) for x in row) for row in sketch.cells)
    return "\n".join(lines) + "\n"


def load_sketch(text: str) -> AdaptiveSketch:
    lines = text.strip("\n").split("\n")
    if len(lines) < 3 or lines[0] != SERIAL_MAGIC:
        raise ValueError("not a sketch dump")
    key, seed = lines[1].split()
    if key != "seed":
        raise ValueError("missing seed line")
    key, rows, cols = lines[2].split()
    if key != "shape":
        raise ValueError("missing shape line")
    rows, cols = int(rows), int(cols)
    body = lines[3:]
    if len(body) != rows:
        raise ValueError(f"expected {rows} cell rows, found {len(body)}")
    cells = np.array([[float(x) for x in line.split()] for line in body], dtype=float)
    if cells.shape != (rows, cols):
        raise ValueError(f"cell block has shape {cells.shape}, header says ({rows}, {cols})")
    return AdaptiveSketch(cells=cells, family_seed=int(seed))
