"""End-to-end synthetic study: simulate, prepare, train, evaluate, detect, embed.

The same building blocks back the CLI commands; :func:`run_study` strings them
together on an in-memory plant so a whole experiment runs from one call.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .baseline import ParametricConstants, fit_cycle, parametric_predict
from .dataprep import MASK_VALUE, ScalerConfig, WindowSpec, make_windows, prepare_streams, unscale_frame
from .errors import DataError
from .evalkit import (
    DetectionRecord,
    ErrorStats,
    FaultThreshold,
    abs_error_series,
    degradation_ordering_score,
    detect_fault,
    embedding_report,
    fault_threshold,
    inter_cycle_stats,
    intra_cycle_stats,
)
from .nn.model import EncoderPredictor
from .nn.train import TrainConfig, TrainResult, train
from .pipeline import CycleSource
from .simkit import ElectrolyzerTruth, FaultSpec, PlantConfig, inject_fault, simulate_electrolyzer

log = logging.getLogger(__name__)

MODELS = ("nn", "parametric")


def default_train_config() -> TrainConfig:
    """Training settings sized for a desktop CPU run of the study."""
    return TrainConfig(batch_size=256, stride=32, lr=1e-3, epochs=8, patience=2, seed=0)


@dataclass
class StudyConfig:
    plant: PlantConfig = field(default_factory=lambda: PlantConfig(electrolyzer_count=6))
    seed: int = 42
    train_electrolyzers: tuple[int, ...] = (0, 1, 2, 3)
    val_electrolyzers: tuple[int, ...] = (4,)
    test_electrolyzers: tuple[int, ...] = (5,)
    training: TrainConfig = field(default_factory=default_train_config)
    scaler: ScalerConfig = field(default_factory=ScalerConfig)
    constants: ParametricConstants = field(default_factory=ParametricConstants)
    tolerance_mv: float = 10.0
    persistence_min: int = 5
    # Fault scenario: cell index within the first test electrolyzer, its cycle,
    # and minutes between the fault and the end of that cycle.
    fault_cell: int = 0
    fault_cycle: int = -1
    fault_margin_min: float = 60.0

    def __post_init__(self):
        groups = [set(self.train_electrolyzers), set(self.val_electrolyzers), set(self.test_electrolyzers)]
        if any(a & b for i, a in enumerate(groups) for b in groups[i + 1:]):
            raise DataError("train, validation and test electrolyzers must be disjoint")
        if max(set().union(*groups)) >= self.plant.electrolyzer_count:
            raise DataError("electrolyzer index beyond the simulated plant")


# -- per-cycle predictions --------------------------------------------------------

@dataclass
class CyclePrediction:
    """Predicted and measured volts on a cycle's operation rows (from the 4th row on)."""

    electrolyzer_id: str
    cycle_index: int
    cell_ids: list[str]
    minutes: np.ndarray      # [r]
    predicted: np.ndarray    # [r, m] volts
    measured: np.ndarray     # [r, m] volts, NaN where missing

    def divergence(self, j: int) -> np.ndarray:
        return abs_error_series(self.predicted[:, j], self.measured[:, j])


def _operation_rows(cycle, window_len: int) -> slice:
    return slice(cycle.startup_len + window_len - 1, cycle.n_rows)


def nn_predict_cycle(model: EncoderPredictor, cycle, scaler: ScalerConfig) -> CyclePrediction:
    """Network predictions on every operation row of a scaled cycle (stride 1)."""
    if not cycle.scaled:
        raise DataError("network predictions need a scaled cycle")
    spec = WindowSpec(stride=1)
    codes = model.encode(np.stack(CycleSource(cycle).startups()))
    rows = _operation_rows(cycle, spec.window_len)
    lo, hi = scaler.bounds["V"]
    m = cycle.n_cells
    predicted = np.empty((cycle.n_rows - rows.start, m))
    for j in range(m):
        windows, _, _ = make_windows(cycle.cell_operation(j), spec)
        y = model.predict(windows, np.repeat(codes[j:j + 1], len(windows), axis=0))
        predicted[:, j] = lo + y * (hi - lo)
    measured_scaled = cycle.volts[rows]
    measured = np.where(measured_scaled == MASK_VALUE, np.nan, lo + measured_scaled * (hi - lo))
    return CyclePrediction(cycle.electrolyzer_id, cycle.cycle_index, list(cycle.cell_ids),
                           cycle.minutes[rows].astype(float), predicted, measured)


def parametric_predict_cycle(cycle, scaler: ScalerConfig, consts: ParametricConstants,
                             window_len: int = 4) -> CyclePrediction:
    """Per-cell startup fits evaluated on the same rows the network is scored on."""
    raw = unscale_frame(cycle, scaler) if cycle.scaled else cycle
    fits = fit_cycle(raw, consts)
    rows = _operation_rows(raw, window_len)
    I, T, X = raw.features[rows].T
    predicted = np.column_stack([parametric_predict(f, consts, I, T, X) for f in fits])
    return CyclePrediction(raw.electrolyzer_id, raw.cycle_index, list(raw.cell_ids),
                           raw.minutes[rows].astype(float), predicted, raw.volts[rows].copy())


def error_tables(predictions: list[CyclePrediction]) -> tuple[ErrorStats, ErrorStats, list[float]]:
    """Inter- and intra-cycle statistics over every (cell, cycle) combination."""
    series = [p.divergence(j) for p in predictions for j in range(len(p.cell_ids))]
    series = [s[~np.isnan(s)] for s in series]
    series = [s for s in series if s.size]
    means = [float(s.mean()) for s in series]
    return inter_cycle_stats(means), intra_cycle_stats(series), means


# -- study ------------------------------------------------------------------------

@dataclass
class FaultOutcome:
    spec: FaultSpec
    thresholds: dict[str, FaultThreshold]
    detections: dict[str, DetectionRecord | None]
    divergence: dict[str, tuple[np.ndarray, np.ndarray]]  # model -> (minutes, mV) over the fault window

    def lead_hours(self, name: str) -> float | None:
        d = self.detections[name]
        return None if d is None else d.lead_time


@dataclass
class StudyResult:
    config: StudyConfig
    training: TrainResult
    inter: dict[str, ErrorStats]
    intra: dict[str, ErrorStats]
    fault: FaultOutcome
    ordering: list[tuple[int, float]]  # (cycle index, |rho|) on the test electrolyzer(s)
    embeddings: list[dict]
    timings: dict[str, float]

    @property
    def error_ratio(self) -> float:
        return self.inter["nn"].mu / self.inter["parametric"].mu


def simulate_and_prepare(cfg: StudyConfig, indices):
    """``{e: (cycles, truth, raw)}``; raw streams are kept for test electrolyzers only."""
    out = {}
    for e in indices:
        raw, truth = simulate_electrolyzer(cfg.plant, cfg.seed, e)
        cycles = prepare_streams(raw, cfg.scaler)
        out[e] = (cycles, truth, raw if e in cfg.test_electrolyzers else None)
        log.info("electrolyzer E%d: %d validated cycles", e, len(cycles))
    return out


def match_truth(cycle, truth: ElectrolyzerTruth):
    """Truth record of the simulated cycle that contains this segment's first minute."""
    t0 = float(cycle.minutes[0])
    for tc in truth.cycles:
        if tc.start_min - 1 <= t0 <= tc.end_min:
            return tc
    raise DataError(f"no simulated cycle contains minute {t0}")


def place_fault(cfg: StudyConfig, truth: ElectrolyzerTruth, cell_ids) -> FaultSpec:
    tc = truth.cycles[cfg.fault_cycle]
    return FaultSpec(cell_ids[cfg.fault_cell], fault_time=float(np.floor(tc.end_min - cfg.fault_margin_min)))


def run_fault_scenario(cfg: StudyConfig, model: EncoderPredictor, raw, truth: ElectrolyzerTruth,
                       intra: dict[str, ErrorStats]) -> FaultOutcome:
    spec = place_fault(cfg, truth, raw.cell_ids)
    faulty = prepare_streams(inject_fault(raw, spec), cfg.scaler)
    cycle = next(c for c in faulty if c.minutes[0] <= spec.start_time and c.minutes[-1] >= spec.fault_time)
    j = cycle.cell_ids.index(spec.cell_id)
    preds = {"nn": nn_predict_cycle(model, cycle, cfg.scaler),
             "parametric": parametric_predict_cycle(cycle, cfg.scaler, cfg.constants)}
    thresholds, detections, divergence = {}, {}, {}
    for name, p in preds.items():
        thresholds[name] = fault_threshold(intra[name], cfg.tolerance_mv)
        inside = (p.minutes >= spec.start_time) & (p.minutes <= spec.fault_time)
        t, d = p.minutes[inside], p.divergence(j)[inside]
        divergence[name] = (t, d)
        detections[name] = detect_fault(d, thresholds[name], cfg.persistence_min, times=t,
                                        cell_id=spec.cell_id, fault_time=spec.fault_time)
    return FaultOutcome(spec, thresholds, detections, divergence)


def run_study(cfg: StudyConfig | None = None, on_epoch=None) -> StudyResult:
    cfg = cfg or StudyConfig()
    timings = {}
    t0 = time.perf_counter()
    used = sorted({*cfg.train_electrolyzers, *cfg.val_electrolyzers, *cfg.test_electrolyzers})
    data = simulate_and_prepare(cfg, used)
    timings["simulate_prepare_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tc = cfg.training
    train_src = [CycleSource(c, tc.stride) for e in cfg.train_electrolyzers for c in data[e][0]]
    val_src = [CycleSource(c, tc.stride) for e in cfg.val_electrolyzers for c in data[e][0]]
    model = EncoderPredictor(tc.arch, seed=tc.seed)
    result = train(model, train_src, val_src, tc, on_epoch=on_epoch)
    timings["train_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    test_cycles = [c for e in cfg.test_electrolyzers for c in data[e][0]]
    preds = {"nn": [nn_predict_cycle(model, c, cfg.scaler) for c in test_cycles],
             "parametric": [parametric_predict_cycle(c, cfg.scaler, cfg.constants) for c in test_cycles]}
    inter, intra = {}, {}
    for name in MODELS:
        inter[name], intra[name], _ = error_tables(preds[name])
    timings["evaluate_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    e_fault = cfg.test_electrolyzers[0]
    _, truth, raw = data[e_fault]
    fault = run_fault_scenario(cfg, model, raw, truth, intra)
    timings["fault_s"] = time.perf_counter() - t0

    ordering = []
    for e in cfg.test_electrolyzers:
        cycles, truth, _ = data[e]
        for c in cycles:
            codes = model.encode(np.stack(CycleSource(c).startups()))
            degradation = [cell.degradation for cell in match_truth(c, truth).cells]
            ordering.append((c.cycle_index, degradation_ordering_score(codes, degradation)))
    embeddings = embedding_report(model, test_cycles)
    return StudyResult(cfg, result, inter, intra, fault, ordering, embeddings, timings)
