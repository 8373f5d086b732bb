"""Deterministic streaming input pipeline: interleave -> shuffle buffer -> batch.

Every stage is a generator driven by a seeded ``numpy.random.Generator`` so
that, drained from a single thread, the whole pipeline is a pure function of
its sources, configuration and seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .cycleio import read_cycle
from .dataprep import MASK_VALUE, CycleSegment, WindowSpec, make_windows, pad_startup
from .errors import DataError


class TrainExample(NamedTuple):
    startup: np.ndarray  # [720, 4], shared between all windows of one cell/cycle
    window: np.ndarray  # [4, 3]
    target: float
    provenance: tuple  # (electrolyzer, cycle, cell, window offset)

    @property
    def startup_key(self) -> tuple:
        return self.provenance[:3]


@dataclass
class PipelineConfig:
    buffer_capacity: int = 65536
    batch_size: int = 1024
    stride: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.buffer_capacity < 1:
            raise DataError("buffer_capacity must be >= 1")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.stride < 1:
            raise DataError("stride must be >= 1")


class CycleSource:
    """Iterates the training examples of one cycle file, cell by cell.

    Accepts either a path (read lazily, on first iteration) or an already
    decoded :class:`CycleSegment`. Windows whose target voltage is missing
    are skipped. Padded startups are built once and shared by reference.
    """

    def __init__(self, cycle, stride: int = 64):
        self._path = None if isinstance(cycle, CycleSegment) else Path(cycle)
        self._cycle = cycle if isinstance(cycle, CycleSegment) else None
        self.spec = WindowSpec(stride=stride)
        self._startups = None

    @property
    def cycle(self) -> CycleSegment:
        if self._cycle is None:
            self._cycle = read_cycle(self._path)
        return self._cycle

    def startups(self) -> list[np.ndarray]:
        if self._startups is None:
            c = self.cycle
            self._startups = []
            for j in range(c.n_cells):
                padded = pad_startup(c.cell_startup(j))
                padded.setflags(write=False)
                self._startups.append(padded)
        return self._startups

    def __iter__(self) -> Iterator[TrainExample]:
        c = self.cycle
        if not c.scaled:
            raise DataError("training sources must hold scaled cycles")
        startups = self.startups()
        for j, cell in enumerate(c.cell_ids):
            windows, targets, offsets = make_windows(c.cell_operation(j), self.spec)
            for w, y, o in zip(windows, targets, offsets):
                if y == MASK_VALUE:
                    continue
                yield TrainExample(startups[j], w, float(y), (c.electrolyzer_id, c.cycle_index, cell, int(o)))

    def __len__(self):
        return sum(1 for _ in self)


def interleave(sources: Iterable[Iterable], seed) -> Iterator:
    """Merge sources by repeatedly drawing a uniformly random non-exhausted one."""
    rng = np.random.default_rng(seed)
    iters, heads = [], []
    for s in sources:
        it = iter(s)
        for head in it:
            iters.append(it)
            heads.append(head)
            break
    while iters:
        k = int(rng.integers(len(iters)))
        yield heads[k]
        for nxt in iters[k]:
            heads[k] = nxt
            break
        else:
            del iters[k], heads[k]


class ShuffleBuffer:
    """Bounded-memory shuffle; ``peak_occupancy`` records the largest fill seen."""

    def __init__(self, stream: Iterable, capacity: int, seed):
        if capacity < 1:
            raise DataError("capacity must be >= 1")
        self.stream = stream
        self.capacity = capacity
        self.seed = seed
        self.peak_occupancy = 0

    def __iter__(self):
        rng = np.random.default_rng(self.seed)
        buf = []
        for item in self.stream:
            if len(buf) < self.capacity:
                buf.append(item)
                self.peak_occupancy = max(self.peak_occupancy, len(buf))
                continue
            j = int(rng.integers(self.capacity))
            yield buf[j]
            buf[j] = item
        while buf:
            j = int(rng.integers(len(buf)))
            buf[j], buf[-1] = buf[-1], buf[j]
            yield buf.pop()


def shuffle_buffer(stream: Iterable, capacity: int, seed) -> ShuffleBuffer:
    return ShuffleBuffer(stream, capacity, seed)


def batch(stream: Iterable, batch_size: int) -> Iterator[list]:
    if batch_size < 1:
        raise DataError("batch_size must be >= 1")
    current = []
    for item in stream:
        current.append(item)
        if len(current) == batch_size:
            yield current
            current = []
    if current:
        yield current


@dataclass
class Batch:
    """Array view of a list of examples; startups are deduplicated per cell/cycle."""

    startups: np.ndarray  # [U, 720, 4]
    startup_index: np.ndarray  # [B] -> row of ``startups``
    windows: np.ndarray  # [B, 4, 3]
    targets: np.ndarray  # [B]
    provenance: list

    def __len__(self):
        return self.targets.size


def collate(examples: list[TrainExample]) -> Batch:
    keys: dict = {}
    startups, index = [], np.empty(len(examples), dtype=np.int64)
    for i, ex in enumerate(examples):
        key = ex.startup_key
        slot = keys.get(key)
        if slot is None:
            slot = keys[key] = len(startups)
            startups.append(ex.startup)
        index[i] = slot
    return Batch(
        startups=np.stack(startups) if startups else np.empty((0, 720, 4)),
        startup_index=index,
        windows=np.stack([ex.window for ex in examples]) if examples else np.empty((0, 4, 3)),
        targets=np.array([ex.target for ex in examples], dtype=float),
        provenance=[ex.provenance for ex in examples],
    )


def epoch_seeds(seed: int, epoch: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    root = np.random.SeedSequence([int(seed) & (2**64 - 1), int(epoch)])
    return tuple(root.spawn(2))


def epoch_batches(sources: list, cfg: PipelineConfig, epoch: int = 0, monitor: list | None = None):
    """interleave -> shuffle -> batch for one epoch; yields :class:`Batch` objects.

    If ``monitor`` is a list, the epoch's :class:`ShuffleBuffer` is appended to
    it so callers can inspect its occupancy afterwards.
    """
    s_inter, s_shuf = epoch_seeds(cfg.seed, epoch)
    shuffled = ShuffleBuffer(interleave(sources, s_inter), cfg.buffer_capacity, s_shuf)
    if monitor is not None:
        monitor.append(shuffled)
    for group in batch(shuffled, cfg.batch_size):
        yield collate(group)
