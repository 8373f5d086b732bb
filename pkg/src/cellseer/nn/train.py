"""Mini-batch training of the encoder/predictor with validation early stopping."""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataprep import MASK_VALUE, WindowSpec, make_windows
from ..errors import DataError, NumericalError
from ..pipeline import CycleSource, PipelineConfig, epoch_batches
from .adam import AdamState, adam_step
from .model import ArchConfig, EncoderPredictor

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    arch: ArchConfig = field(default_factory=ArchConfig)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 100
    patience: int = 5
    seed: int = 0
    batch_size: int = 1024
    buffer_capacity: int = 65536
    stride: int = 64
    val_stride: int | None = None
    train_electrolyzers: list | None = None
    val_electrolyzers: list | None = None

    def __post_init__(self):
        if isinstance(self.arch, dict):
            self.arch = ArchConfig.from_dict(self.arch)
        if self.epochs < 1 or self.patience < 0:
            raise DataError("epochs must be >= 1 and patience >= 0")

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.buffer_capacity, self.batch_size, self.stride, self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class TrainResult:
    model: EncoderPredictor
    history: list  # (epoch, train_mse, val_mse)
    best_epoch: int
    steps: int
    optimizer: AdamState


def validation_mse(model: EncoderPredictor, sources, stride: int) -> float:
    """Mean squared error over every window of ``sources`` (no shuffling)."""
    spec = WindowSpec(stride=stride)
    total, count = 0.0, 0
    for src in sources:
        cycle = src.cycle
        codes = model.encode(np.stack(src.startups()))
        for j in range(cycle.n_cells):
            windows, targets, _ = make_windows(cycle.cell_operation(j), spec)
            keep = targets != MASK_VALUE
            if not keep.any():
                continue
            pred = model.predict(windows[keep], np.repeat(codes[j:j + 1], keep.sum(), axis=0))
            err = pred - targets[keep]
            total += float(err @ err)
            count += int(keep.sum())
    if count == 0:
        raise DataError("validation set has no windows")
    return total / count


def _electrolyzers(sources) -> set:
    return {s.cycle.electrolyzer_id for s in sources}


def train(model: EncoderPredictor, train_sources: list[CycleSource], val_sources: list[CycleSource],
          cfg: TrainConfig, on_epoch=None) -> TrainResult:
    """Train in place and return the best-validation parameters.

    Stops once validation MSE has failed to improve for more than
    ``cfg.patience`` consecutive epochs (``patience=0`` stops at the first
    non-improving epoch).
    """
    if not train_sources or not val_sources:
        raise DataError("need at least one training and one validation cycle")
    overlap = _electrolyzers(train_sources) & _electrolyzers(val_sources)
    if overlap:
        raise DataError(f"electrolyzers {sorted(overlap)} appear in both training and validation")
    pipe = cfg.pipeline()
    val_stride = cfg.val_stride or cfg.stride
    opt = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    best_val, best_epoch, best_params = np.inf, -1, None
    history, wait = [], 0
    for epoch in range(cfg.epochs):
        sse, n = 0.0, 0
        for b in epoch_batches(train_sources, pipe, epoch):
            loss, grads = model.loss_and_grads(b.startups, b.startup_index, b.windows, b.targets)
            if not np.isfinite(loss):
                raise NumericalError(f"training loss became non-finite at epoch {epoch}")
            adam_step(model.params, grads, opt)
            sse += loss * len(b)
            n += len(b)
        if n == 0:
            raise DataError("training sources produced no examples")
        train_mse = sse / n
        val_mse = validation_mse(model, val_sources, val_stride)
        history.append((epoch, train_mse, val_mse))
        log.info("epoch %d train_mse=%.3e val_mse=%.3e", epoch, train_mse, val_mse)
        if on_epoch is not None:
            on_epoch(epoch, train_mse, val_mse)
        if val_mse < best_val:
            best_val, best_epoch, wait = val_mse, epoch, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            wait += 1
            if wait > cfg.patience:
                break
    model.params = best_params
    return TrainResult(model, history, best_epoch, opt.t, opt)


def write_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse"])
        for epoch, tr, va in history:
            w.writerow([epoch, repr(float(tr)), repr(float(va))])


def read_history(path) -> list:
    with open(Path(path)) as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["epoch"]), float(r["train_mse"]), float(r["val_mse"])) for r in rows]
