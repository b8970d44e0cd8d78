"""Prequential protocol driver over chunked streams.

Each chunk of b points is processed in three phases:

1. every point is scored against the current state as i.i.d. predictions
   (no intra-chunk information leaks into scoring);
2. optionally one calibration (alpha) gradient step on the chunk-mean
   loss;
3. a sequential Kalman pass through the chunk, with per-point delta
   updates and the drift transition applied either at every point
   (AlwaysMarkov) or only at the chunk's last point (LastStepMarkov).

Online metrics accumulate from the phase-1 scores only, so every stream
point is counted exactly once and always before it is trained on.  An
optional FIFO replay buffer appends recent past points to the right of
each chunk; replayed points are scored and trained like any others but
never contribute to metrics.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

import numpy as np

from .classification import ClassifierFilter, floored_log
from .errors import ConfigError, DomainError, KoclError, NumericError
from .regression import RegressionFilter

logger = logging.getLogger(__name__)

Filter = RegressionFilter | ClassifierFilter


class TransitionMode(Enum):
    ALWAYS = "always"
    LAST_STEP = "last"


@dataclass
class StreamChunk:
    """A block of b (feature vector, label) pairs revealed at one step.

    ``source_indices`` carries each row's position in the underlying
    stream; when absent it is synthesized as ``chunk_index * b + row``.
    Replay-augmented chunks keep the replayed points' original indices.
    """

    features: np.ndarray
    labels: np.ndarray
    chunk_index: int
    source_indices: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2:
            raise DomainError(f"chunk features must be 2-D, got shape {self.features.shape}")
        if self.features.shape[0] < 1:
            raise DomainError("chunk must contain at least one point")
        if self.labels.shape != (self.features.shape[0],):
            raise DomainError(
                f"chunk has {self.features.shape[0]} rows but {self.labels.shape} labels"
            )
        if self.source_indices is not None:
            self.source_indices = np.asarray(self.source_indices, dtype=np.int64)
            if self.source_indices.shape != (self.features.shape[0],):
                raise DomainError("source_indices length must match chunk size")

    def __len__(self) -> int:
        return self.features.shape[0]

    def with_indices(self, start: int) -> "StreamChunk":
        """Copy of the chunk with source indices filled in from ``start``."""
        if self.source_indices is not None:
            return self
        idx = start + np.arange(len(self), dtype=np.int64)
        return StreamChunk(self.features, self.labels, self.chunk_index, idx)


@dataclass(frozen=True)
class ReplayConfig:
    capacity: int = 100
    sample_size: int = 10

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ConfigError(f"replay capacity must be >= 1, got {self.capacity}")
        if not 0 <= self.sample_size <= self.capacity:
            raise ConfigError(
                f"replay sample_size must lie in [0, capacity], got {self.sample_size}"
            )


@dataclass(frozen=True)
class RunConfig:
    """Protocol settings for one run; filter hyperparameters live on the filter."""

    transition_mode: TransitionMode = TransitionMode.ALWAYS
    chunk_size: int = 10
    replay: ReplayConfig | None = None
    learn_delta: bool = True
    learn_alpha: bool = False
    alpha_per_point: bool = False
    seed: int = 0
    delta_lr: float | None = None
    alpha_lr: float | None = None

    def __post_init__(self) -> None:
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.delta_lr is not None and self.delta_lr <= 0:
            raise ConfigError(f"delta_lr must be > 0, got {self.delta_lr}")
        if self.alpha_lr is not None and self.alpha_lr <= 0:
            raise ConfigError(f"alpha_lr must be > 0, got {self.alpha_lr}")


class ReplayBuffer:
    """FIFO memory of the most recent stream points, eviction by recency."""

    def __init__(self, capacity: int = 100):
        if capacity < 1:
            raise ConfigError(f"replay capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def add(self, index: int, phi: np.ndarray, label) -> None:
        self._items.append((int(index), np.array(phi, dtype=np.float64), label))

    def indices(self) -> list[int]:
        return [item[0] for item in self._items]

    def sample(self, k: int, rng: np.random.Generator) -> list[tuple]:
        """Uniform sample of min(k, len) items without replacement."""
        k = min(k, len(self._items))
        if k == 0:
            return []
        picks = rng.choice(len(self._items), size=k, replace=False)
        return [self._items[i] for i in picks]


@dataclass(frozen=True)
class StepTrace:
    """Per-point record; ``counted`` marks points that feed the metrics."""

    index: int
    label: float
    log_predictive: float
    correct: bool | None
    predicted: int | None
    replayed: bool
    counted: bool
    gamma: float
    alpha: float | None
    pred_mean: float | None = None
    pred_std: float | None = None


@dataclass(frozen=True)
class ChunkStats:
    chunk_index: int
    running_accuracy: float
    cumulative_log_predictive: float
    gamma: float
    alpha: float | None


@dataclass
class OnlineMetrics:
    """Running prequential totals: accuracy over stream points and summed
    per-point log predictive scores, each score computed before that
    point's training."""

    n_seen: int = 0
    n_correct: int = 0
    cumulative_log_predictive: float = 0.0
    chunk_history: list[ChunkStats] = field(default_factory=list)

    @property
    def running_accuracy(self) -> float:
        return self.n_correct / self.n_seen if self.n_seen else 0.0

    @property
    def average_log_predictive(self) -> float:
        return self.cumulative_log_predictive / self.n_seen if self.n_seen else 0.0


@dataclass(frozen=True)
class ChunkResult:
    """Metrics delta plus per-point trace from one processed chunk."""

    steps: list[StepTrace]
    n_counted: int
    n_correct: int
    sum_log_predictive: float


@dataclass
class StreamResult:
    metrics: OnlineMetrics
    steps: list[StepTrace]

    def gamma_trace(self) -> np.ndarray:
        """Per stream point gamma after that point's training step."""
        return np.array([s.gamma for s in self.steps if s.counted])

    def score_trace(self) -> np.ndarray:
        return np.array([s.log_predictive for s in self.steps if s.counted])


def replay_augment(
    chunk: StreamChunk,
    buffer: ReplayBuffer,
    sample_size: int,
    seed,
) -> StreamChunk:
    """Sample past points and append them to the right of the chunk.

    The buffer is sampled before the chunk's own points are added to it,
    so replayed points always precede the current chunk in stream order.
    The original points then enter the buffer; replayed copies do not.
    """
    if sample_size < 0:
        raise DomainError(f"sample_size must be >= 0, got {sample_size}")
    chunk = chunk.with_indices(chunk.chunk_index * len(chunk))
    sampled = []
    if sample_size > 0 and len(buffer) > 0:
        sampled = buffer.sample(sample_size, np.random.default_rng(seed))
    for idx, phi, label in zip(
        chunk.source_indices, chunk.features, chunk.labels
    ):
        buffer.add(int(idx), phi, label)
    if not sampled:
        return chunk
    extra_feats = np.stack([item[1] for item in sampled])
    extra_labels = np.array([item[2] for item in sampled], dtype=chunk.labels.dtype)
    extra_idx = np.array([item[0] for item in sampled], dtype=np.int64)
    return StreamChunk(
        features=np.concatenate([chunk.features, extra_feats], axis=0),
        labels=np.concatenate([chunk.labels, extra_labels]),
        chunk_index=chunk.chunk_index,
        source_indices=np.concatenate([chunk.source_indices, extra_idx]),
    )


def _validate_chunk(filt: Filter, chunk: StreamChunk) -> np.ndarray:
    """Check dimensions and label domain before any state mutation.

    Returns the labels as int64 (classification) or float64 (regression).
    """
    if chunk.features.shape[1] != filt.dim:
        raise DomainError(
            f"chunk features have dim {chunk.features.shape[1]}, filter expects {filt.dim}"
        )
    if not np.all(np.isfinite(chunk.features)):
        raise NumericError("non-finite feature values in chunk")
    labels = np.asarray(chunk.labels)
    if isinstance(filt, ClassifierFilter):
        as_int = labels.astype(np.int64)
        if not np.all(as_int == labels):
            raise DomainError("classification labels must be integers")
        if as_int.min() < 0 or as_int.max() >= filt.num_classes:
            raise DomainError(
                f"labels must lie in [0, {filt.num_classes}), got range "
                f"[{as_int.min()}, {as_int.max()}]"
            )
        return as_int
    as_float = labels.astype(np.float64)
    if not np.all(np.isfinite(as_float)):
        raise NumericError("non-finite regression targets in chunk")
    return as_float


def run_chunk(
    filt: Filter,
    chunk: StreamChunk,
    cfg: RunConfig,
    *,
    replay_buffer: ReplayBuffer | None = None,
) -> ChunkResult:
    """Process one chunk through the three-phase protocol.

    Replay augmentation happens first when a buffer is supplied; only
    the original (non-replayed) points contribute to the returned
    metrics delta.
    """
    is_classifier = isinstance(filt, ClassifierFilter)
    if cfg.learn_alpha and not is_classifier:
        raise ConfigError("alpha calibration applies only to classification filters")
    _validate_chunk(filt, chunk)
    n_original = len(chunk)
    if replay_buffer is not None and cfg.replay is not None:
        seed = np.random.SeedSequence(entropy=(cfg.seed, 1, chunk.chunk_index))
        chunk = replay_augment(chunk, replay_buffer, cfg.replay.sample_size, seed)
    else:
        chunk = chunk.with_indices(chunk.chunk_index * n_original)
    labels = _validate_chunk(filt, chunk)
    n_total = len(chunk)

    # phase 1: score everything against the current state
    scores = np.empty(n_total)
    seeds: list = [None] * n_total
    predicted: list[int | None] = [None] * n_total
    correct: list[bool | None] = [None] * n_total
    pred_mean: list[float | None] = [None] * n_total
    pred_std: list[float | None] = [None] * n_total
    for p in range(n_total):
        phi = chunk.features[p]
        if is_classifier:
            seeds[p] = filt.next_step_seed()
            probs = filt.predict_probs(phi, seeds[p])
            scores[p] = floored_log(probs[labels[p]])
            predicted[p] = int(np.argmax(probs))
            correct[p] = predicted[p] == int(labels[p])
        else:
            pred = filt.predict(phi)
            scores[p] = pred.log_density(float(labels[p]))
            pred_mean[p] = pred.mean
            pred_std[p] = float(np.sqrt(pred.variance))

    # phase 2: one calibration step on the chunk-mean loss
    if is_classifier and cfg.learn_alpha and not cfg.alpha_per_point:
        alpha_grads = [
            filt.delta_alpha_gradients(chunk.features[p], int(labels[p]), seeds[p])[1]
            for p in range(n_total)
        ]
        filt.apply_alpha_step(float(np.mean(alpha_grads)))

    # phase 3: sequential Kalman pass with per-point delta updates
    steps: list[StepTrace] = []
    alpha_pointwise = is_classifier and cfg.learn_alpha and cfg.alpha_per_point
    for p in range(n_total):
        phi = chunk.features[p]
        if cfg.learn_delta or alpha_pointwise:
            if is_classifier:
                d_delta, d_alpha = filt.delta_alpha_gradients(phi, int(labels[p]), seeds[p])
            else:
                d_delta, d_alpha = filt.delta_gradient(phi, float(labels[p])), 0.0
            if cfg.learn_delta:
                filt.apply_delta_step(d_delta)
            if alpha_pointwise:
                filt.apply_alpha_step(d_alpha)
        do_transition = cfg.transition_mode is TransitionMode.ALWAYS or p == n_total - 1
        if is_classifier:
            filt.advance(phi, int(labels[p]), transition=do_transition)
        else:
            filt.advance(phi, float(labels[p]), transition=do_transition)
        steps.append(
            StepTrace(
                index=int(chunk.source_indices[p]),
                label=labels[p].item(),
                log_predictive=float(scores[p]),
                correct=correct[p],
                predicted=predicted[p],
                replayed=p >= n_original,
                counted=p < n_original,
                gamma=filt.gamma,
                alpha=filt.alpha if is_classifier else None,
                pred_mean=pred_mean[p],
                pred_std=pred_std[p],
            )
        )

    n_correct = sum(1 for p in range(n_original) if correct[p])
    return ChunkResult(
        steps=steps,
        n_counted=n_original,
        n_correct=n_correct,
        sum_log_predictive=float(scores[:n_original].sum()),
    )


def run_stream(
    filt: Filter,
    chunks: Iterable[StreamChunk],
    cfg: RunConfig,
) -> StreamResult:
    """Run the prequential protocol over a whole stream of chunks.

    On an error mid-stream the exception is re-raised with a
    ``partial_result`` attribute holding the trace accumulated so far.
    """
    if cfg.delta_lr is not None:
        filt.delta_lr = cfg.delta_lr
    if cfg.alpha_lr is not None and isinstance(filt, ClassifierFilter):
        filt.alpha_lr = cfg.alpha_lr
    buffer = ReplayBuffer(cfg.replay.capacity) if cfg.replay is not None else None
    metrics = OnlineMetrics()
    steps: list[StepTrace] = []
    for chunk in chunks:
        chunk = chunk.with_indices(metrics.n_seen)
        try:
            result = run_chunk(filt, chunk, cfg, replay_buffer=buffer)
        except KoclError as err:
            err.partial_result = StreamResult(metrics=metrics, steps=steps)
            raise
        metrics.n_seen += result.n_counted
        metrics.n_correct += result.n_correct
        metrics.cumulative_log_predictive += result.sum_log_predictive
        metrics.chunk_history.append(
            ChunkStats(
                chunk_index=chunk.chunk_index,
                running_accuracy=metrics.running_accuracy,
                cumulative_log_predictive=metrics.cumulative_log_predictive,
                gamma=filt.gamma,
                alpha=filt.alpha if isinstance(filt, ClassifierFilter) else None,
            )
        )
        steps.extend(result.steps)
    logger.debug(
        "stream done: %d points, accuracy %.4f, avg log predictive %.4f",
        metrics.n_seen,
        metrics.running_accuracy,
        metrics.average_log_predictive,
    )
    return StreamResult(metrics=metrics, steps=steps)


def chunk_arrays(
    features: np.ndarray,
    labels: np.ndarray,
    chunk_size: int,
    *,
    start_chunk_index: int = 0,
) -> Iterator[StreamChunk]:
    """Split flat arrays into consecutive chunks (last one may be short)."""
    if chunk_size < 1:
        raise ConfigError(f"chunk_size must be >= 1, got {chunk_size}")
    features = np.asarray(features)
    labels = np.asarray(labels)
    n = features.shape[0]
    for ci, lo in enumerate(range(0, n, chunk_size)):
        hi = min(lo + chunk_size, n)
        yield StreamChunk(
            features=features[lo:hi],
            labels=labels[lo:hi],
            chunk_index=start_chunk_index + ci,
            source_indices=np.arange(lo, hi, dtype=np.int64),
        )


def chunk_pairs(pairs: Iterable[tuple], chunk_size: int) -> Iterator[StreamChunk]:
    """Lazily group an iterable of (phi, label) pairs into chunks."""
    if chunk_size < 1:
        raise ConfigError(f"chunk_size must be >= 1, got {chunk_size}")
    feats: list[np.ndarray] = []
    labs: list = []
    chunk_index = 0
    seen = 0
    for phi, label in pairs:
        feats.append(np.asarray(phi, dtype=np.float64))
        labs.append(label)
        if len(feats) == chunk_size:
            yield StreamChunk(
                features=np.stack(feats),
                labels=np.array(labs),
                chunk_index=chunk_index,
                source_indices=np.arange(seen, seen + len(feats), dtype=np.int64),
            )
            seen += len(feats)
            chunk_index += 1
            feats, labs = [], []
    if feats:
        yield StreamChunk(
            features=np.stack(feats),
            labels=np.array(labs),
            chunk_index=chunk_index,
            source_indices=np.arange(seen, seen + len(feats), dtype=np.int64),
        )
