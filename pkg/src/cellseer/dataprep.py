"""From raw multi-rate streams to minute-aligned, scaled, cycle-structured data.

The steps, in order: :func:`align_to_minute`, :func:`detect_possible_cycles`,
:func:`validate_cycles`, :func:`scale_frame`, then per cell
:func:`pad_startup` (encoder input) and :func:`make_windows` (predictor input).
Missing observations are NaN in engineering units and exactly ``-1`` once
scaled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError
from .simkit import FEATURES, RawStreams

MASK_VALUE = -1.0
STARTUP_LEN = 720
WINDOW_LEN = 4
CURRENT_THRESHOLD = 16.0
GAP_MINUTES = 10


@dataclass
class AlignedFrame:
    """Minute-indexed table of shared features and per-cell voltages."""

    electrolyzer_id: str
    minutes: np.ndarray  # int64, strictly increasing
    features: np.ndarray  # [n, 3] -> I, T, X
    volts: np.ndarray  # [n, m]
    cell_ids: list[str]
    scaled: bool = False

    def __len__(self):
        return self.minutes.size


@dataclass
class CycleSegment:
    """One validated cycle: rows ``[0, startup_len)`` are the startup phase."""

    electrolyzer_id: str
    cycle_index: int
    minutes: np.ndarray
    features: np.ndarray
    volts: np.ndarray
    startup_len: int
    cell_ids: list[str]
    scaled: bool = False

    @property
    def n_rows(self) -> int:
        return self.minutes.size

    @property
    def operation_len(self) -> int:
        return self.n_rows - self.startup_len

    @property
    def n_cells(self) -> int:
        return len(self.cell_ids)

    @property
    def startup(self) -> slice:
        return slice(0, self.startup_len)

    @property
    def operation(self) -> slice:
        return slice(self.startup_len, self.n_rows)

    def cell_table(self, j: int) -> np.ndarray:
        """[n, 4] array of (I, T, X, V_j) over the whole cycle."""
        return np.column_stack([self.features, self.volts[:, j]])

    def cell_startup(self, j: int) -> np.ndarray:
        return self.cell_table(j)[self.startup]

    def cell_operation(self, j: int) -> np.ndarray:
        return self.cell_table(j)[self.operation]


@dataclass
class ScalerConfig:
    """Min-max bounds per feature, shared by every electrolyzer.

    ``guard`` is the tolerated excursion beyond a bound, as a fraction of the
    feature's range; values inside the guard are clamped, beyond it rejected.
    """

    bounds: dict = field(default_factory=lambda: {
        "I": (0.0, 17.5), "T": (50.0, 100.0), "X": (28.0, 34.0), "V": (2.0, 3.6),
    })
    mask_value: float = MASK_VALUE
    guard: float = 0.0

    def __post_init__(self):
        self.bounds = {k: (float(v[0]), float(v[1])) for k, v in self.bounds.items()}
        missing = {"I", "T", "X", "V"} - set(self.bounds)
        if missing:
            raise DataError(f"scaler bounds missing for {sorted(missing)}")
        for name, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise DataError(f"scaler bounds for {name}: need min < max, got ({lo}, {hi})")
        if self.mask_value != MASK_VALUE:
            raise DataError("mask value is fixed at -1")
        if self.guard < 0:
            raise DataError("guard must be >= 0")

    def to_dict(self) -> dict:
        return {"bounds": {k: list(v) for k, v in self.bounds.items()},
                "mask_value": self.mask_value, "guard": self.guard}

    @classmethod
    def from_dict(cls, raw: dict) -> "ScalerConfig":
        return cls(**raw)


@dataclass(frozen=True)
class WindowSpec:
    stride: int = 64
    window_len: int = WINDOW_LEN

    def __post_init__(self):
        if self.window_len != WINDOW_LEN:
            raise DataError("window length is fixed at 4 time-steps")
        if self.stride < 1:
            raise DataError("stride must be >= 1")


# -- alignment ----------------------------------------------------------------

def _bucket_means(times: np.ndarray, values: np.ndarray):
    """Per-minute mean of ``values`` (NaN ignored); returns ``(minutes, means)``."""
    if times.size == 0:
        return np.empty(0, dtype=np.int64), np.empty((0,) + values.shape[1:])
    if np.any(np.diff(times) < 0):
        raise DataError("stream timestamps must be nondecreasing")
    buckets = np.floor(times / 60.0).astype(np.int64)
    starts = np.flatnonzero(np.r_[True, buckets[1:] != buckets[:-1]])
    finite = np.isfinite(values)
    sums = np.add.reduceat(np.where(finite, values, 0.0), starts, axis=0)
    counts = np.add.reduceat(finite.astype(np.int64), starts, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return buckets[starts], means


def align_to_minute(raw: RawStreams) -> AlignedFrame:
    """Downsample every stream to per-minute means on a shared minute index.

    A row exists for every minute in which any sensor reported; a feature
    with no sample in that minute is NaN. No interpolation across minutes.
    """
    per_feature = [_bucket_means(*raw.sensors[name]) for name in FEATURES]
    v_minutes, v_means = _bucket_means(raw.voltage_times, raw.voltages)
    all_minutes = [m for m, _ in per_feature] + [v_minutes]
    minutes = np.unique(np.concatenate(all_minutes)) if any(m.size for m in all_minutes) \
        else np.empty(0, dtype=np.int64)
    n, m = minutes.size, raw.n_cells
    features = np.full((n, 3), np.nan)
    volts = np.full((n, m), np.nan)
    for col, (mins, means) in enumerate(per_feature):
        features[np.searchsorted(minutes, mins), col] = means
    if v_minutes.size:
        volts[np.searchsorted(minutes, v_minutes)] = v_means
    return AlignedFrame(raw.electrolyzer_id, minutes, features, volts, list(raw.cell_ids))


# -- cycles -------------------------------------------------------------------

def detect_possible_cycles(times, max_gap: float = GAP_MINUTES) -> list[tuple[int, int]]:
    """Split a minute index wherever consecutive stamps differ by more than ``max_gap``.

    Returns half-open ``(start, stop)`` row ranges that partition the input.
    """
    times = np.asarray(times)
    if times.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(times) > max_gap) + 1
    edges = np.r_[0, cuts, times.size]
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def validate_cycles(candidates, frame: AlignedFrame, threshold: float = CURRENT_THRESHOLD,
                    max_startup: float = STARTUP_LEN) -> list[CycleSegment]:
    """Keep candidates that reach ``threshold`` kA within ``max_startup`` minutes
    and whose operation phase is at least as long as their startup phase."""
    out = []
    for start, stop in candidates:
        current = frame.features[start:stop, 0]
        above = np.flatnonzero(current > threshold)  # NaN compares False
        if above.size == 0:
            continue
        idx = int(above[0])
        if frame.minutes[start + idx] - frame.minutes[start] > max_startup:
            continue
        if (stop - start) - idx < idx:
            continue
        out.append(CycleSegment(
            electrolyzer_id=frame.electrolyzer_id,
            cycle_index=len(out),
            minutes=frame.minutes[start:stop].copy(),
            features=frame.features[start:stop].copy(),
            volts=frame.volts[start:stop].copy(),
            startup_len=idx,
            cell_ids=list(frame.cell_ids),
            scaled=frame.scaled,
        ))
    return out


def extract_cycles(frame: AlignedFrame) -> list[CycleSegment]:
    return validate_cycles(detect_possible_cycles(frame.minutes), frame)


# -- scaling --------------------------------------------------------------------

def _scale(values: np.ndarray, lo: float, hi: float, guard: float, name: str) -> np.ndarray:
    missing = np.isnan(values)
    span = hi - lo
    present = values[~missing]
    if present.size:
        worst_lo, worst_hi = present.min(), present.max()
        if worst_lo < lo - guard * span or worst_hi > hi + guard * span:
            raise DataError(
                f"feature {name} has values in [{worst_lo:.6g}, {worst_hi:.6g}] outside "
                f"scaler range [{lo}, {hi}]"
            )
    out = np.clip((values - lo) / span, 0.0, 1.0)
    out[missing] = MASK_VALUE
    return out


def scale_frame(frame, cfg: ScalerConfig):
    """Min-max scale features and voltages; NaN becomes ``-1``.

    Works on :class:`AlignedFrame` and :class:`CycleSegment` alike.
    """
    if frame.scaled:
        raise DataError("frame is already scaled")
    features = np.column_stack([
        _scale(frame.features[:, c], *cfg.bounds[name], cfg.guard, name)
        for c, name in enumerate(FEATURES)
    ]) if frame.features.size else frame.features.copy()
    volts = _scale(frame.volts, *cfg.bounds["V"], cfg.guard, "V")
    return replace(frame, features=features, volts=volts, scaled=True)


def unscale_feature(values, name: str, cfg: ScalerConfig) -> np.ndarray:
    """Inverse scaling for feature ``name``; mask entries come back as NaN."""
    values = np.asarray(values, dtype=float)
    lo, hi = cfg.bounds[name]
    out = lo + values * (hi - lo)
    return np.where(values == MASK_VALUE, np.nan, out)


def unscale_voltage(v_scaled, cfg: ScalerConfig):
    """Scaled voltage back to volts. The mask value is not a voltage."""
    v = np.asarray(v_scaled, dtype=float)
    if np.any(v == MASK_VALUE):
        raise DataError("cannot unscale the mask value -1")
    lo, hi = cfg.bounds["V"]
    out = lo + v * (hi - lo)
    return float(out) if out.ndim == 0 else out


def unscale_frame(frame, cfg: ScalerConfig):
    if not frame.scaled:
        raise DataError("frame is not scaled")
    features = np.column_stack([
        unscale_feature(frame.features[:, c], name, cfg) for c, name in enumerate(FEATURES)
    ]) if frame.features.size else frame.features.copy()
    volts = unscale_feature(frame.volts, "V", cfg)
    return replace(frame, features=features, volts=volts, scaled=False)


# -- model inputs ----------------------------------------------------------------

def pad_startup(startup: np.ndarray, length: int = STARTUP_LEN) -> np.ndarray:
    """Append ``-1`` rows so the startup spans exactly ``length`` time-steps."""
    startup = np.asarray(startup, dtype=float)
    t = startup.shape[0]
    if t > length:
        raise DataError(f"startup has {t} rows, more than the {length} allowed")
    out = np.full((length,) + startup.shape[1:], MASK_VALUE)
    out[:t] = startup
    return out


def make_windows(operation: np.ndarray, spec: WindowSpec = WindowSpec()):
    """Strided 4-step windows over a cell's scaled (I, T, X, V) operation table.

    Returns ``(windows [k, 4, 3], targets [k], offsets [k])``; the voltage
    column never enters a window, it only supplies the target at each
    window's last step.
    """
    operation = np.asarray(operation, dtype=float)
    n = operation.shape[0]
    if n < spec.window_len:
        return np.empty((0, spec.window_len, 3)), np.empty(0), np.empty(0, dtype=np.int64)
    offsets = np.arange(0, n - spec.window_len + 1, spec.stride)
    view = sliding_window_view(operation[:, :3], spec.window_len, axis=0)  # [n-3, 3, 4]
    windows = np.ascontiguousarray(view[offsets].transpose(0, 2, 1))
    targets = operation[offsets + spec.window_len - 1, 3].copy()
    return windows, targets, offsets


def prepare_streams(raw: RawStreams, cfg: ScalerConfig) -> list[CycleSegment]:
    """Align, cut into validated cycles and scale one electrolyzer's streams."""
    frame = align_to_minute(raw)
    return [scale_frame(c, cfg) for c in extract_cycles(frame)]


def load_json_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing config file {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc
