"""Synthetic stream generators and the binary feature-file codec.

Two generator families cover the desk-scale experiments: a
piecewise-constant noisy time series with known change points, and a
task-incremental classification stream where each task draws from a
subset of Gaussian class clusters.  Both are pure functions of
(spec, seed).

Feature files carry externally computed embeddings: a fixed 23-byte
little-endian header (magic ``KOCL``, format version u16, feature dim m
u32, class count K u32, record count N u64, label kind u8) followed by N
records of m float32 values plus one label (u32 class id or float64
real).  Values are stored at 32-bit precision and promoted to 64-bit on
read; readers stream in constant memory.
"""

from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, DataFormatError, DomainError
from .stream import StreamChunk, chunk_arrays

MAGIC = b"KOCL"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHIIQB")
_RECORD_COUNT_OFFSET = 14  # magic + version + dim + class count
LABEL_CLASS = 0
LABEL_REAL = 1


# ---------------------------------------------------------------------------
# piecewise-constant time series


@dataclass(frozen=True)
class PiecewiseSeriesSpec:
    """Scalar series with segment-wise constant mean plus Gaussian noise.

    ``change_points[j]`` is the first index that takes
    ``segment_means[j + 1]``; indices are 0-based.  ``noise_var`` may be
    zero for an exact step function.
    """

    segment_means: tuple
    change_points: tuple
    noise_var: float
    length: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "segment_means", tuple(float(v) for v in self.segment_means))
        object.__setattr__(self, "change_points", tuple(int(v) for v in self.change_points))
        if len(self.segment_means) < 1:
            raise ConfigError("need at least one segment mean")
        if len(self.change_points) != len(self.segment_means) - 1:
            raise ConfigError(
                f"{len(self.segment_means)} segments need "
                f"{len(self.segment_means) - 1} change points, got {len(self.change_points)}"
            )
        if self.length < 1:
            raise ConfigError(f"length must be >= 1, got {self.length}")
        bounds = (0,) + self.change_points + (self.length,)
        if any(b >= e for b, e in zip(bounds, bounds[1:])):
            raise ConfigError(
                "change points must be strictly increasing within (0, length)"
            )
        if self.noise_var < 0.0:
            raise ConfigError(f"noise_var must be >= 0, got {self.noise_var}")

    def means_array(self) -> np.ndarray:
        """Noiseless per-step mean, shape (length,)."""
        out = np.empty(self.length)
        bounds = (0,) + self.change_points + (self.length,)
        for mean, lo, hi in zip(self.segment_means, bounds, bounds[1:]):
            out[lo:hi] = mean
        return out


def benchmark_series_spec() -> PiecewiseSeriesSpec:
    """The standard changepoint benchmark: 3058 points over 8 segments."""
    return PiecewiseSeriesSpec(
        segment_means=(1.3, 1.0, 1.3, 0.95, 0.6, 0.25, 0.8, 0.5),
        change_points=(451, 709, 958, 1547, 2147, 2769, 2957),
        noise_var=0.01,
        length=3058,
    )


def gen_piecewise_series(spec: PiecewiseSeriesSpec, seed) -> np.ndarray:
    """Realize the series: segment means plus i.i.d. Gaussian noise."""
    means = spec.means_array()
    if spec.noise_var == 0.0:
        return means
    rng = np.random.default_rng(seed)
    return means + math.sqrt(spec.noise_var) * rng.standard_normal(spec.length)


# ---------------------------------------------------------------------------
# task-incremental classification stream


@dataclass(frozen=True)
class SyntheticClassSpec:
    """Gaussian class clusters revealed task by task.

    Each task is a (class subset, duration) pair; within a task, labels
    are drawn uniformly from the subset and features are the class
    center plus isotropic noise.  The subsets must jointly cover
    [0, num_classes).
    """

    num_classes: int
    dim: int
    tasks: tuple
    center_scale: float = 1.0
    noise_scale: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        tasks = tuple(
            (tuple(int(c) for c in classes), int(duration))
            for classes, duration in self.tasks
        )
        object.__setattr__(self, "tasks", tasks)
        if self.num_classes < 1 or self.dim < 1:
            raise ConfigError("num_classes and dim must be >= 1")
        if not tasks:
            raise ConfigError("need at least one task")
        covered = set()
        for classes, duration in tasks:
            if duration < 1:
                raise ConfigError(f"task duration must be >= 1, got {duration}")
            if not classes:
                raise ConfigError("task class subset must be non-empty")
            if any(not 0 <= c < self.num_classes for c in classes):
                raise ConfigError("task classes must lie in [0, num_classes)")
            covered.update(classes)
        if covered != set(range(self.num_classes)):
            raise ConfigError("tasks must jointly cover every class")
        if self.center_scale < 0.0 or self.noise_scale < 0.0:
            raise ConfigError("center_scale and noise_scale must be >= 0")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")

    @property
    def total_points(self) -> int:
        return sum(duration for _, duration in self.tasks)

    @property
    def task_boundaries(self) -> tuple:
        """Stream indices where a new task begins (excludes index 0)."""
        starts = np.cumsum([duration for _, duration in self.tasks])[:-1]
        return tuple(int(s) for s in starts)


def task_incremental_spec(
    num_tasks: int = 10,
    classes_per_task: int = 10,
    dim: int = 32,
    points_per_task: int = 500,
    *,
    center_scale: float = 1.0,
    noise_scale: float = 0.5,
    seed: int = 0,
) -> SyntheticClassSpec:
    """Consecutive disjoint class blocks, one block per task."""
    tasks = tuple(
        (tuple(range(t * classes_per_task, (t + 1) * classes_per_task)), points_per_task)
        for t in range(num_tasks)
    )
    return SyntheticClassSpec(
        num_classes=num_tasks * classes_per_task,
        dim=dim,
        tasks=tasks,
        center_scale=center_scale,
        noise_scale=noise_scale,
        seed=seed,
    )


def gen_class_points(spec: SyntheticClassSpec) -> tuple[np.ndarray, np.ndarray]:
    """All (features, labels) of the stream, tasks concatenated in order."""
    rng = np.random.default_rng(spec.seed)
    centers = spec.center_scale * rng.standard_normal((spec.num_classes, spec.dim))
    feats = []
    labels = []
    for classes, duration in spec.tasks:
        cls = rng.choice(np.array(classes, dtype=np.int64), size=duration)
        feats.append(centers[cls] + spec.noise_scale * rng.standard_normal((duration, spec.dim)))
        labels.append(cls)
    return np.concatenate(feats, axis=0), np.concatenate(labels)


def gen_class_stream(spec: SyntheticClassSpec, chunk_size: int) -> Iterator[StreamChunk]:
    """The stream as consecutive chunks (chunks may straddle task boundaries)."""
    features, labels = gen_class_points(spec)
    return chunk_arrays(features, labels, chunk_size)


# ---------------------------------------------------------------------------
# binary feature files


@dataclass(frozen=True)
class FeatureFileHeader:
    dim: int
    num_classes: int
    num_records: int
    label_kind: int

    @property
    def record_size(self) -> int:
        return 4 * self.dim + (4 if self.label_kind == LABEL_CLASS else 8)


def _record_dtype(dim: int, label_kind: int) -> np.dtype:
    label = "<u4" if label_kind == LABEL_CLASS else "<f8"
    return np.dtype([("phi", "<f4", (dim,)), ("label", label)])


class FeatureFileReader:
    """Sequential reader; memory use is bounded by the batch size."""

    def __init__(self, path):
        self._file = open(path, "rb")
        try:
            self.header = self._read_header(path)
        except Exception:
            self._file.close()
            raise
        self._dtype = _record_dtype(self.header.dim, self.header.label_kind)
        self._consumed = 0

    def _read_header(self, path) -> FeatureFileHeader:
        raw = self._file.read(HEADER.size)
        if len(raw) < HEADER.size:
            raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes)")
        magic, version, dim, num_classes, num_records, label_kind = HEADER.unpack(raw)
        if magic != MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != FORMAT_VERSION:
            raise DataFormatError(
                f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}"
            )
        if dim < 1:
            raise DataFormatError(f"{path}: feature dim must be >= 1, got {dim}")
        if num_classes < 1:
            raise DataFormatError(f"{path}: class count must be >= 1, got {num_classes}")
        if label_kind not in (LABEL_CLASS, LABEL_REAL):
            raise DataFormatError(f"{path}: unknown label kind {label_kind}")
        header = FeatureFileHeader(dim, num_classes, num_records, label_kind)
        body = os.fstat(self._file.fileno()).st_size - HEADER.size
        expected = num_records * header.record_size
        if body != expected:
            raise DataFormatError(
                f"{path}: body is {body} bytes but header declares {num_records} "
                f"records ({expected} bytes); file ends inside record "
                f"{body // header.record_size}"
            )
        return header

    @property
    def dim(self) -> int:
        return self.header.dim

    @property
    def num_classes(self) -> int:
        return self.header.num_classes

    @property
    def num_records(self) -> int:
        return self.header.num_records

    @property
    def label_kind(self) -> int:
        return self.header.label_kind

    def _read_batch(self, count: int) -> np.ndarray | None:
        remaining = self.header.num_records - self._consumed
        if remaining == 0:
            return None
        batch = np.fromfile(self._file, dtype=self._dtype, count=min(count, remaining))
        if self.header.label_kind == LABEL_CLASS:
            bad = np.nonzero(batch["label"] >= self.header.num_classes)[0]
            if bad.size:
                raise DataFormatError(
                    f"record {self._consumed + int(bad[0])}: class label "
                    f"{int(batch['label'][bad[0]])} out of range "
                    f"[0, {self.header.num_classes})"
                )
        self._consumed += len(batch)
        return batch

    def iter_points(self, batch_size: int = 1024) -> Iterator[tuple]:
        """Yield (phi as float64, label) pairs in stream order."""
        while True:
            batch = self._read_batch(batch_size)
            if batch is None:
                return
            for rec in batch:
                phi = rec["phi"].astype(np.float64)
                if self.header.label_kind == LABEL_CLASS:
                    yield phi, int(rec["label"])
                else:
                    yield phi, float(rec["label"])

    def iter_chunks(self, chunk_size: int) -> Iterator[StreamChunk]:
        """Yield consecutive StreamChunks of at most ``chunk_size`` records."""
        if chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {chunk_size}")
        chunk_index = 0
        while True:
            start = self._consumed
            batch = self._read_batch(chunk_size)
            if batch is None:
                return
            if self.header.label_kind == LABEL_CLASS:
                labels = batch["label"].astype(np.int64)
            else:
                labels = batch["label"].astype(np.float64)
            yield StreamChunk(
                features=batch["phi"].astype(np.float64),
                labels=labels,
                chunk_index=chunk_index,
                source_indices=np.arange(start, start + len(batch), dtype=np.int64),
            )
            chunk_index += 1

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "FeatureFileReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_feature_file(path) -> Iterator[tuple]:
    """Lazy stream of (phi, label) pairs from a feature file."""
    reader = FeatureFileReader(path)
    try:
        yield from reader.iter_points()
    finally:
        reader.close()


class FeatureFileWriter:
    """Incremental writer; the record count is patched into the header on close."""

    def __init__(self, path, dim: int, num_classes: int, label_kind: int):
        if dim < 1:
            raise ConfigError(f"feature dim must be >= 1, got {dim}")
        if num_classes < 1:
            raise ConfigError(f"class count must be >= 1, got {num_classes}")
        if label_kind not in (LABEL_CLASS, LABEL_REAL):
            raise ConfigError(f"unknown label kind {label_kind}")
        self.dim = dim
        self.num_classes = num_classes
        self.label_kind = label_kind
        self.count = 0
        self._dtype = _record_dtype(dim, label_kind)
        self._file = open(path, "wb")
        self._file.write(HEADER.pack(MAGIC, FORMAT_VERSION, dim, num_classes, 0, label_kind))

    def append(self, phi: np.ndarray, label) -> None:
        phi = np.asarray(phi, dtype=np.float64)
        if phi.shape != (self.dim,):
            raise DomainError(f"feature vector must have shape ({self.dim},), got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise DomainError("non-finite feature vector")
        rec = np.zeros(1, dtype=self._dtype)
        rec["phi"][0] = phi.astype("<f4")
        if self.label_kind == LABEL_CLASS:
            label = int(label)
            if not 0 <= label < self.num_classes:
                raise DomainError(
                    f"class label {label} out of range [0, {self.num_classes})"
                )
            rec["label"][0] = label
        else:
            label = float(label)
            if not math.isfinite(label):
                raise DomainError("non-finite real label")
            rec["label"][0] = label
        self._file.write(rec.tobytes())
        self.count += 1

    def close(self) -> None:
        if self._file.closed:
            return
        self._file.seek(_RECORD_COUNT_OFFSET)
        self._file.write(struct.pack("<Q", self.count))
        self._file.close()

    def __enter__(self) -> "FeatureFileWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_feature_file(
    path, records: Iterable[tuple], *, dim: int, num_classes: int, label_kind: int
) -> int:
    """Write (phi, label) pairs to ``path``; returns the record count."""
    with FeatureFileWriter(path, dim, num_classes, label_kind) as writer:
        for phi, label in records:
            writer.append(phi, label)
        return writer.count


# ---------------------------------------------------------------------------
# text ingest and feature preprocessing


def read_csv_features(path) -> tuple[int, int, list]:
    """Tiny hand-made test format: header line ``m,K``, rows ``f_1,...,f_m,label``.

    Returns (dim, num_classes, list of (phi, label)) with labels as floats;
    the caller casts per mode.
    """
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = rows[0]
    if len(header) != 2:
        raise DataFormatError(f"{path}: header must be 'm,K', got {header!r}")
    try:
        dim, num_classes = int(header[0]), int(header[1])
    except ValueError as err:
        raise DataFormatError(f"{path}: header must be 'm,K', got {header!r}") from err
    if dim < 1 or num_classes < 1:
        raise DataFormatError(f"{path}: header values must be >= 1, got {header!r}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 1:
            raise DataFormatError(
                f"{path}:{lineno}: expected {dim} features + label, got {len(row)} fields"
            )
        try:
            values = [float(v) for v in row]
        except ValueError as err:
            raise DataFormatError(f"{path}:{lineno}: non-numeric field") from err
        out.append((np.array(values[:-1]), values[-1]))
    return dim, num_classes, out


def normalize_rows(features: np.ndarray) -> np.ndarray:
    """Scale each row to unit L2 norm; all-zero rows pass through."""
    features = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(features, axis=-1, keepdims=True)
    return np.divide(features, norms, out=features.copy(), where=norms > 0)
