"""Synthetic electrolyzer plant.

Generates multi-rate sensor telemetry (current, temperature, caustic
concentration and per-cell voltage) for a set of electrolyzers, together with
the ground-truth cell parameters needed to score models against. The truth
model is the expert parametric equation with an extra quadratic load term, a
first-order response lag and slow equilibrium-voltage drift.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import DataError

__all__ = [
    "SimConstants",
    "PlantConfig",
    "CellGroundTruth",
    "CycleTruth",
    "ElectrolyzerTruth",
    "OperatingSchedule",
    "FaultSpec",
    "RawStreams",
    "SimulationResult",
    "steady_cell_voltage",
    "lag_filter",
    "fault_offset",
    "generate_schedule",
    "simulate_electrolyzer",
    "simulate_plant",
    "inject_fault",
    "write_streams",
    "read_streams",
    "write_truth",
    "read_truth",
]

FEATURES = ("I", "T", "X")
MINUTE = 60.0
DAY = 86400.0


@dataclass(frozen=True)
class SimConstants:
    """Plant-wide constants of the voltage equation."""

    Ct: float = 0.0016
    Cx: float = -0.0031
    A: float = 2.721

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("membrane area A must be positive")


@dataclass
class PlantConfig:
    electrolyzer_count: int = 1
    cells_per_electrolyzer: int = 16
    cycles_per_electrolyzer: int = 8
    schedule_seed: int = 0
    noise_std: float = 0.001
    lag_tau: float = 3.0
    nonlinearity_gamma: float = 0.004
    degradation_rate_range: tuple[float, float] = (2e-5, 1.5e-4)
    # Schedule knobs, all in minutes.
    startup_minutes: tuple[float, float] = (60.0, 240.0)
    operation_minutes: tuple[float, float] = (3600.0, 5760.0)
    gap_minutes: tuple[float, float] = (120.0, 1440.0)
    operation_current: tuple[float, float] = (7.0, 16.0)
    peak_current: tuple[float, float] = (16.1, 16.3)
    # Cell population knobs.
    u0_range: tuple[float, float] = (2.28, 2.32)
    k_range: tuple[float, float] = (0.115, 0.125)
    gamma_spread: float = 0.1
    age_days_range: tuple[float, float] = (0.0, 1460.0)
    # Acquisition knobs.
    cell_loop_s: float = 2.0
    sensor_periods_s: dict = field(default_factory=lambda: {"I": 5.0, "T": 13.0, "X": 29.0})
    dropout_prob: float = 0.0
    constants: SimConstants = field(default_factory=SimConstants)

    def __post_init__(self):
        for name in ("startup_minutes", "operation_minutes", "gap_minutes", "operation_current",
                     "peak_current", "u0_range", "k_range", "age_days_range",
                     "degradation_rate_range"):
            setattr(self, name, tuple(float(v) for v in getattr(self, name)))
        if isinstance(self.constants, dict):
            self.constants = SimConstants(**self.constants)
        self.validate()

    def validate(self):
        if self.electrolyzer_count < 1 or self.cells_per_electrolyzer < 1:
            raise DataError("electrolyzer and cell counts must be >= 1")
        if self.cycles_per_electrolyzer < 0:
            raise DataError("cycles_per_electrolyzer must be >= 0")
        if self.noise_std < 0:
            raise DataError("noise_std must be >= 0")
        if not self.lag_tau > 0:
            raise DataError("lag_tau must be > 0")
        for name in ("degradation_rate_range", "startup_minutes", "operation_minutes",
                     "gap_minutes", "operation_current", "peak_current", "u0_range",
                     "k_range", "age_days_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise DataError(f"{name}: min {lo} > max {hi}")
        if self.degradation_rate_range[0] < 0:
            raise DataError("degradation rates must be >= 0")
        if self.gap_minutes[0] <= 10:
            raise DataError("shutdown gaps must exceed 10 minutes to delimit cycles")
        if self.cell_loop_s <= 0 or any(p <= 0 for p in self.sensor_periods_s.values()):
            raise DataError("sampling periods must be positive")
        if self.cycles_per_electrolyzer == 0:
            return
        # Schedules that can never yield a valid cycle are rejected up front.
        if self.peak_current[0] <= 16.0:
            raise DataError("peak startup current must exceed 16 kA")
        if self.startup_minutes[0] <= 0 or self.startup_minutes[1] > 700:
            raise DataError("startup ramps must last between 0 and 700 minutes")
        if self.operation_minutes[0] < self.startup_minutes[1] + 10:
            raise DataError("operation phase must outlast the startup phase")

    @classmethod
    def from_dict(cls, raw: dict) -> "PlantConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"unknown plant config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_json(cls, path) -> "PlantConfig":
        path = Path(path)
        if not path.exists():
            raise DataError(f"missing plant config {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out


@dataclass
class CellGroundTruth:
    """Truth parameters of one cell, referenced to a point in time.

    ``u0`` already includes the degradation accumulated up to the reference
    time (``degradation`` volts); ``drift_rate`` keeps adding from there.
    """

    cell_id: str
    u0: float
    k: float
    drift_rate: float
    gamma: float
    age_days: float = 0.0
    degradation: float = 0.0

    def __post_init__(self):
        if not self.u0 > 0 or not self.k > 0 or self.drift_rate < 0:
            raise DataError(f"invalid cell truth for {self.cell_id}")


@dataclass
class CycleTruth:
    index: int
    start_min: float
    end_min: float
    startup_min: float
    cells: list[CellGroundTruth]


@dataclass
class FaultSpec:
    """Piecewise-linear voltage offset preceding a cell failure.

    All times in minutes. The offset ramps from 0 to ``plateau_offset`` over
    ``ramp1_duration``, holds for ``plateau_duration`` then ramps to
    ``final_offset`` over ``ramp2_duration``, reaching it at ``fault_time``.
    """

    cell_id: str
    fault_time: float
    ramp1_duration: float = 20 * 60.0
    plateau_duration: float = 12 * 60.0
    ramp2_duration: float = 16 * 60.0
    plateau_offset: float = 0.06
    final_offset: float = 0.25

    def __post_init__(self):
        if min(self.ramp1_duration, self.plateau_duration, self.ramp2_duration) <= 0:
            raise DataError("fault phase durations must be positive")
        if self.plateau_offset == 0 and self.final_offset == 0:
            return
        if not 0 < self.plateau_offset < self.final_offset:
            raise DataError("need 0 < plateau_offset < final_offset")
        if self.ramp2_slope <= self.ramp1_slope:
            raise DataError("second ramp must be steeper than the first")

    @property
    def start_time(self) -> float:
        return self.fault_time - self.ramp1_duration - self.plateau_duration - self.ramp2_duration

    @property
    def plateau_start(self) -> float:
        return self.start_time + self.ramp1_duration

    @property
    def plateau_end(self) -> float:
        return self.plateau_start + self.plateau_duration

    @property
    def ramp1_slope(self) -> float:
        return self.plateau_offset / self.ramp1_duration

    @property
    def ramp2_slope(self) -> float:
        return (self.final_offset - self.plateau_offset) / self.ramp2_duration


@dataclass
class ElectrolyzerTruth:
    electrolyzer_id: str
    cycles: list[CycleTruth]
    faults: list[FaultSpec] = field(default_factory=list)


@dataclass
class OperatingSchedule:
    """Current set-points as piecewise-linear knots, plus cycle boundaries.

    Temperature and concentration are not scheduled directly: they follow the
    current through first-order plant dynamics (see ``_plant_states``).
    """

    knot_minutes: np.ndarray
    knot_current: np.ndarray
    cycle_bounds: list[tuple[float, float]]  # (start, end) minutes
    startup_minutes: list[float]
    initial_temperature: list[float]

    def current_at(self, minutes):
        return np.interp(minutes, self.knot_minutes, self.knot_current)


@dataclass
class RawStreams:
    """Raw sensor samples of one electrolyzer; timestamps in seconds.

    ``voltages`` holds one column per cell position, sampled on the shared
    ``voltage_times`` loop; NaN marks a dropped reading.
    """

    electrolyzer_id: str
    cell_ids: list[str]
    sensors: dict[str, tuple[np.ndarray, np.ndarray]]
    voltage_times: np.ndarray
    voltages: np.ndarray

    @property
    def n_cells(self) -> int:
        return len(self.cell_ids)

    def copy(self) -> "RawStreams":
        return RawStreams(
            self.electrolyzer_id,
            list(self.cell_ids),
            {k: (t.copy(), v.copy()) for k, (t, v) in self.sensors.items()},
            self.voltage_times.copy(),
            self.voltages.copy(),
        )


@dataclass
class SimulationResult:
    streams: list[RawStreams]
    truth: list[ElectrolyzerTruth]


def steady_cell_voltage(cell: CellGroundTruth, I, T, X, elapsed=0.0, consts: SimConstants = SimConstants()):
    """Noise-free steady-state voltage; ``elapsed`` is in days since the cell's reference time."""
    z = np.asarray(I, dtype=float) / consts.A
    load = cell.k + (90.0 - np.asarray(T, dtype=float)) * consts.Ct \
        + (32.0 - np.asarray(X, dtype=float)) * consts.Cx + cell.gamma * z
    return (cell.u0 + cell.drift_rate * np.asarray(elapsed, dtype=float)) + load * z


def lag_filter(prev, target, tau, dt):
    """One step of a first-order lag: move ``prev`` toward ``target``."""
    if not tau > 0 or not dt > 0:
        raise ValueError("tau and dt must be positive")
    return prev + (target - prev) * (1.0 - math.exp(-dt / tau))


def _lag_series(target: np.ndarray, tau: float, dt: float, initial) -> np.ndarray:
    """Apply ``lag_filter`` along axis 0 of ``target`` with state ``initial``."""
    a = math.exp(-dt / tau)
    zi = a * np.atleast_1d(np.asarray(initial, dtype=float))
    if target.ndim == 1:
        y, _ = lfilter([1.0 - a], [1.0, -a], target, zi=zi)
        return y
    y, _ = lfilter([1.0 - a], [1.0, -a], target, axis=0, zi=zi[None, :])
    return y


def fault_offset(spec: FaultSpec, minutes) -> np.ndarray:
    """Additive voltage offset of ``spec`` at the given times (0 outside the window)."""
    t = np.asarray(minutes, dtype=float)
    knots_t = [spec.start_time, spec.plateau_start, spec.plateau_end, spec.fault_time]
    knots_v = [0.0, spec.plateau_offset, spec.plateau_offset, spec.final_offset]
    out = np.interp(t, knots_t, knots_v)
    out[(t < spec.start_time) | (t > spec.fault_time)] = 0.0
    return out


def _spawn(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *keys]))


def generate_schedule(config: PlantConfig, electrolyzer: int = 0) -> OperatingSchedule:
    """Draw the current profile of every cycle of one electrolyzer."""
    rng = _spawn(config.schedule_seed, electrolyzer, 1)
    knots_t: list[float] = []
    knots_i: list[float] = []
    bounds, startups, temps = [], [], []
    t = 0.0
    for _ in range(config.cycles_per_electrolyzer):
        start = t
        ramp = rng.uniform(*config.startup_minutes)
        i0 = rng.uniform(0.8, 1.5)
        peak = rng.uniform(*config.peak_current)
        shape = rng.uniform(0.8, 1.25)
        u = np.linspace(0.0, 1.0, max(int(ramp // 5), 2) + 1)
        knots_t.extend(start + u * ramp)
        knots_i.extend(i0 + (peak - i0) * u**shape)
        t = start + ramp
        end = t + rng.uniform(*config.operation_minutes)
        lo, hi = config.operation_current
        while t < end:
            level = rng.uniform(lo, hi)
            t = min(t + rng.uniform(15.0, 60.0), end)
            knots_t.append(t)
            knots_i.append(level)
            if t >= end:
                break
            t = min(t + rng.uniform(60.0, 480.0), end)
            knots_t.append(t)
            knots_i.append(level)
        bounds.append((start, end))
        startups.append(ramp)
        temps.append(rng.uniform(74.0, 78.0))
        t = end + rng.uniform(*config.gap_minutes)
    return OperatingSchedule(
        np.asarray(knots_t), np.asarray(knots_i), bounds, startups, temps
    )


def _plant_states(schedule: OperatingSchedule, cycle: int, minutes: np.ndarray, dt_min: float):
    """Current, temperature and concentration on a regular grid inside one cycle."""
    current = schedule.current_at(minutes)
    t_target = 70.0 + 1.1 * current
    temperature = _lag_series(t_target, 90.0, dt_min, schedule.initial_temperature[cycle])
    x_target = 31.9 + 0.05 * current + 0.1 * np.sin(2 * np.pi * minutes / (3 * 1440.0) + cycle)
    concentration = _lag_series(x_target, 60.0, dt_min, x_target[0])
    return current, temperature, concentration


def _draw_cells(config: PlantConfig, rng: np.random.Generator, electrolyzer: int):
    m = config.cells_per_electrolyzer
    cells = []
    for j in range(m):
        cells.append(dict(
            cell_id=f"E{electrolyzer}-P{j:03d}",
            u0=rng.uniform(*config.u0_range),
            k=rng.uniform(*config.k_range),
            gamma=config.nonlinearity_gamma * (1.0 + config.gamma_spread * rng.uniform(-1.0, 1.0)),
            drift_rate=rng.uniform(*config.degradation_rate_range),
            age_days=rng.uniform(*config.age_days_range),
        ))
    return cells


def _cell_truth_at(base: dict, minutes_since_start: float) -> CellGroundTruth:
    age = base["age_days"] + minutes_since_start / 1440.0
    deg = base["drift_rate"] * age
    return CellGroundTruth(
        cell_id=base["cell_id"], u0=base["u0"] + deg, k=base["k"], drift_rate=base["drift_rate"],
        gamma=base["gamma"], age_days=age, degradation=deg,
    )


def simulate_electrolyzer(config: PlantConfig, seed: int, electrolyzer: int = 0):
    """Simulate one electrolyzer; returns ``(RawStreams, ElectrolyzerTruth)``."""
    config.validate()
    schedule = generate_schedule(config, electrolyzer)
    rng = _spawn(seed, electrolyzer, 2)
    base_cells = _draw_cells(config, rng, electrolyzer)
    cell_ids = [c["cell_id"] for c in base_cells]
    consts = config.constants
    m = len(base_cells)
    dt_s = config.cell_loop_s
    dt_min = dt_s / MINUTE

    v_times, v_values = [], []
    sensor_t = {k: [] for k in FEATURES}
    sensor_v = {k: [] for k in FEATURES}
    cycles = []
    for c, (start, end) in enumerate(schedule.cycle_bounds):
        truths = [_cell_truth_at(b, start) for b in base_cells]
        cycles.append(CycleTruth(c, start, end, schedule.startup_minutes[c], truths))

        grid_s = np.arange(start * MINUTE, end * MINUTE, dt_s)
        grid_min = grid_s / MINUTE
        current, temperature, concentration = _plant_states(schedule, c, grid_min, dt_min)
        elapsed_days = (grid_min - start) / 1440.0
        steady = np.empty((grid_s.size, m))
        for j, cell in enumerate(truths):
            steady[:, j] = steady_cell_voltage(cell, current, temperature, concentration, elapsed_days, consts)
        volts = _lag_series(steady, config.lag_tau, dt_min, steady[0])
        if config.noise_std > 0:
            volts = volts + rng.normal(0.0, config.noise_std, size=volts.shape)
        if config.dropout_prob > 0:
            minute_idx = np.floor(grid_min).astype(np.int64)
            uniq = np.unique(minute_idx)
            dropped = rng.random((uniq.size, m)) < config.dropout_prob
            pos = np.searchsorted(uniq, minute_idx)
            volts[dropped[pos]] = np.nan
        v_times.append(grid_s)
        v_values.append(volts)

        states = {"I": current, "T": temperature, "X": concentration}
        for name in FEATURES:
            period = float(config.sensor_periods_s[name])
            phase = rng.uniform(0.0, period)
            ts = np.arange(start * MINUTE + phase, end * MINUTE, period)
            vals = np.interp(ts, grid_s, states[name])
            if config.dropout_prob > 0:
                minute_idx = np.floor(ts / MINUTE).astype(np.int64)
                uniq, pos = np.unique(minute_idx, return_inverse=True)
                keep = ~(rng.random(uniq.size) < config.dropout_prob)[pos]
                ts, vals = ts[keep], vals[keep]
            sensor_t[name].append(ts)
            sensor_v[name].append(vals)

    def cat(parts, shape_tail=()):
        return np.concatenate(parts) if parts else np.empty((0, *shape_tail))

    streams = RawStreams(
        electrolyzer_id=f"E{electrolyzer}",
        cell_ids=cell_ids,
        sensors={k: (cat(sensor_t[k]), cat(sensor_v[k])) for k in FEATURES},
        voltage_times=cat(v_times),
        voltages=cat(v_values, (m,)),
    )
    return streams, ElectrolyzerTruth(f"E{electrolyzer}", cycles)


def simulate_plant(config: PlantConfig, seed: int) -> SimulationResult:
    """Simulate every electrolyzer of the plant.

    Pure function of ``(config, seed)``. For large plants prefer calling
    :func:`simulate_electrolyzer` one electrolyzer at a time to bound memory.
    """
    streams, truth = [], []
    for e in range(config.electrolyzer_count):
        s, t = simulate_electrolyzer(config, seed, e)
        streams.append(s)
        truth.append(t)
    return SimulationResult(streams, truth)


def inject_fault(streams: RawStreams, spec: FaultSpec, max_gap_minutes: float = 10.0) -> RawStreams:
    """Return a copy of ``streams`` with the fault offset added to one cell."""
    if spec.cell_id not in streams.cell_ids:
        raise DataError(f"unknown cell {spec.cell_id!r}")
    j = streams.cell_ids.index(spec.cell_id)
    out = streams.copy()
    minutes = out.voltage_times / MINUTE
    inside = (minutes >= spec.start_time) & (minutes <= spec.fault_time)
    if not inside.any():
        raise DataError("fault window contains no samples")
    span = minutes[inside]
    if span[0] - spec.start_time > max_gap_minutes or spec.fault_time - span[-1] > max_gap_minutes \
            or (span.size > 1 and np.diff(span).max() > max_gap_minutes):
        raise DataError("fault window overlaps a shutdown gap")
    out.voltages[inside, j] += fault_offset(spec, span)
    return out


# -- file interfaces --------------------------------------------------------

def write_streams(streams: RawStreams, directory) -> Path:
    """One ``timestamp_s,value`` CSV per sensor, under ``directory/<electrolyzer>``."""
    root = Path(directory) / streams.electrolyzer_id
    root.mkdir(parents=True, exist_ok=True)
    for name in FEATURES:
        t, v = streams.sensors[name]
        _write_csv(root / f"{name}.csv", t, v)
    for j, cell in enumerate(streams.cell_ids):
        col = streams.voltages[:, j]
        ok = ~np.isnan(col)
        _write_csv(root / f"V_{cell}.csv", streams.voltage_times[ok], col[ok])
    (root / "cells.json").write_text(json.dumps(streams.cell_ids))
    return root


def _write_csv(path: Path, t: np.ndarray, v: np.ndarray):
    with open(path, "w") as fh:
        fh.write("timestamp_s,value\n")
        if t.size:
            np.savetxt(fh, np.column_stack([t, v]), fmt="%.17g", delimiter=",")


def _read_csv(path: Path):
    if not path.exists():
        raise DataError(f"missing stream file {path}")
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "timestamp_s,value":
            raise DataError(f"{path}: unexpected header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        return np.empty(0), np.empty(0)
    return data[:, 0].copy(), data[:, 1].copy()


def read_streams(directory) -> RawStreams:
    """Inverse of :func:`write_streams`; voltages are re-gridded on the union of cell timestamps."""
    root = Path(directory)
    cells_file = root / "cells.json"
    if not cells_file.exists():
        raise DataError(f"{root} is not a stream directory (no cells.json)")
    cell_ids = json.loads(cells_file.read_text())
    sensors = {name: _read_csv(root / f"{name}.csv") for name in FEATURES}
    per_cell = [_read_csv(root / f"V_{c}.csv") for c in cell_ids]
    times = np.unique(np.concatenate([t for t, _ in per_cell])) if per_cell else np.empty(0)
    volts = np.full((times.size, len(cell_ids)), np.nan)
    for j, (t, v) in enumerate(per_cell):
        volts[np.searchsorted(times, t), j] = v
    return RawStreams(root.name, cell_ids, sensors, times, volts)


def _truth_to_dict(truth: ElectrolyzerTruth) -> dict:
    return {
        "electrolyzer_id": truth.electrolyzer_id,
        "cycles": [
            {
                "index": c.index, "start_min": c.start_min, "end_min": c.end_min,
                "startup_min": c.startup_min,
                "cells": [dataclasses.asdict(cell) for cell in c.cells],
            }
            for c in truth.cycles
        ],
        "faults": [dataclasses.asdict(f) for f in truth.faults],
    }


def write_truth(truths: list[ElectrolyzerTruth], path) -> None:
    Path(path).write_text(json.dumps({"electrolyzers": [_truth_to_dict(t) for t in truths]}, indent=1))


def read_truth(path) -> list[ElectrolyzerTruth]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing truth file {path}")
    raw = json.loads(path.read_text())
    out = []
    for e in raw["electrolyzers"]:
        cycles = [
            CycleTruth(c["index"], c["start_min"], c["end_min"], c["startup_min"],
                       [CellGroundTruth(**cell) for cell in c["cells"]])
            for c in e["cycles"]
        ]
        out.append(ElectrolyzerTruth(e["electrolyzer_id"], cycles, [FaultSpec(**f) for f in e["faults"]]))
    return out
