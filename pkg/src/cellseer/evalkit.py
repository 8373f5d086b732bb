"""Error statistics, fault threshold, divergence-based detection and embedding scores."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import spearmanr

from .errors import DataError, ShapeError

PERCENTILES = (25, 50, 75, 90, 95, 99)
STAT_ROWS = ("mu", "sigma", "P25", "P50", "P75", "P90", "P95", "P99")


@dataclass
class ErrorStats:
    """Absolute-error summary in mV."""

    mu: float
    sigma: float
    P25: float
    P50: float
    P75: float
    P90: float
    P95: float
    P99: float

    def as_row(self) -> list[float]:
        return [getattr(self, k) for k in STAT_ROWS]

    @classmethod
    def from_values(cls, values) -> "ErrorStats":
        """Mean, population std and linearly interpolated percentiles; NaN ignored."""
        v = np.asarray(values, dtype=float).ravel()
        v = v[~np.isnan(v)]
        if v.size == 0:
            raise DataError("no values to summarise")
        pct = np.percentile(v, PERCENTILES, method="linear")
        return cls(float(v.mean()), float(v.std()), *map(float, pct))


@dataclass
class FaultThreshold:
    base: float
    tolerance: float
    value: float


@dataclass
class DetectionRecord:
    cell_id: str
    first_exceed_time: float
    persistence_met_time: float
    fault_time: float | None = None

    @property
    def lead_time(self) -> float | None:
        """Hours between signaling and the fault, when the fault time is known."""
        if self.fault_time is None:
            return None
        return (self.fault_time - self.persistence_met_time) / 60.0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lead_time_h"] = self.lead_time
        return out


def abs_error_series(predicted, measured) -> np.ndarray:
    """Elementwise ``|predicted - measured|`` in mV from volts; NaN propagates."""
    predicted = np.asarray(predicted, dtype=float)
    measured = np.asarray(measured, dtype=float)
    if predicted.shape != measured.shape:
        raise ShapeError("series lengths differ", expected=measured.shape, found=predicted.shape)
    return np.abs(predicted - measured) * 1000.0


def inter_cycle_stats(combo_means) -> ErrorStats:
    """Statistics across (cell, cycle) combinations of their mean absolute error."""
    combo_means = np.asarray(combo_means, dtype=float)
    if combo_means.size == 0:
        raise DataError("no (cell, cycle) combinations")
    return ErrorStats.from_values(combo_means)


def intra_cycle_stats(combo_series) -> ErrorStats:
    """Per-combination statistics, each averaged over all combinations."""
    combo_series = list(combo_series)
    if not combo_series:
        raise DataError("no (cell, cycle) combinations")
    rows = np.array([ErrorStats.from_values(s).as_row() for s in combo_series])
    return ErrorStats(*map(float, rows.mean(axis=0)))


def round_half_up(x: float) -> float:
    return float(math.floor(x + 0.5))


def fault_threshold(intra: ErrorStats, tolerance: float = 10.0) -> FaultThreshold:
    """Detection threshold: intra-cycle P99 plus a tolerance, rounded to the nearest mV."""
    if tolerance < 0:
        raise DataError("tolerance must be >= 0")
    return FaultThreshold(intra.P99, tolerance, round_half_up(intra.P99 + tolerance))


def detect_fault(divergence, threshold: FaultThreshold | float, persistence: int = 5,
                 times=None, cell_id: str = "", fault_time: float | None = None) -> DetectionRecord | None:
    """First time the divergence stays above the threshold for ``persistence`` samples.

    ``divergence`` is in mV, one sample per minute; NaN samples break a run.
    ``times`` (minutes) defaults to the sample index.
    """
    if persistence < 1:
        raise DataError("persistence must be >= 1")
    value = threshold.value if isinstance(threshold, FaultThreshold) else float(threshold)
    d = np.asarray(divergence, dtype=float)
    t = np.arange(d.size, dtype=float) if times is None else np.asarray(times, dtype=float)
    above = d > value  # NaN compares False
    run = 0
    for idx in range(d.size):
        run = run + 1 if above[idx] else 0
        if run == persistence:
            return DetectionRecord(cell_id, float(t[idx - persistence + 1]), float(t[idx]), fault_time)
    return None


def principal_projection(codes) -> np.ndarray:
    """Project codes onto their first principal direction."""
    codes = np.asarray(codes, dtype=float)
    centred = codes - codes.mean(axis=0)
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    if s[0] <= 1e-15:
        raise DataError("all codes are identical; principal direction undefined")
    return centred @ vt[0]


def degradation_ordering_score(codes, degradation) -> float:
    """|Spearman rho| between degradation and position along the codes' first principal axis."""
    codes = np.asarray(codes, dtype=float)
    degradation = np.asarray(degradation, dtype=float)
    if codes.shape[0] < 3 or codes.shape[0] != degradation.size:
        raise DataError("need >= 3 cells with one degradation value each")
    proj = principal_projection(codes)
    if np.ptp(degradation) == 0:
        raise DataError("degradation values are all equal; rank correlation undefined")
    rho = spearmanr(proj, degradation).statistic
    return float(abs(rho))


def embedding_report(model, cycles) -> list[dict]:
    """One row per (cycle, cell) with its 2-D code."""
    from .pipeline import CycleSource

    rows = []
    for cycle in cycles:
        codes = model.encode(np.stack(CycleSource(cycle).startups()))
        for j, cell in enumerate(cycle.cell_ids):
            rows.append({"electrolyzer": cycle.electrolyzer_id, "cycle": cycle.cycle_index,
                         "cell": cell, "code_x": float(codes[j, 0]), "code_y": float(codes[j, 1])})
    return rows


# -- exports --------------------------------------------------------------------

def write_stats_table(stats: dict[str, ErrorStats], path) -> None:
    """CSV with one row per statistic and one column per model (mV)."""
    names = list(stats)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stat", *[f"{n}_mV" for n in names]])
        for i, row in enumerate(STAT_ROWS):
            w.writerow([row, *[f"{stats[n].as_row()[i]:.3f}" for n in names]])


def read_stats_table(path) -> dict[str, ErrorStats]:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    names = [h[:-3] for h in rows[0][1:]]
    values = {n: {} for n in names}
    for r in rows[1:]:
        for n, v in zip(names, r[1:]):
            values[n][r[0]] = float(v)
    return {n: ErrorStats(**v) for n, v in values.items()}


def write_detections(records, path) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_dict() if isinstance(r, DetectionRecord) else r for r in records], fh, indent=1)


def write_embeddings(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["electrolyzer", "cycle", "cell", "code_x", "code_y"])
        for r in rows:
            w.writerow([r["electrolyzer"], r["cycle"], r["cell"], repr(r["code_x"]), repr(r["code_y"])])


def read_embeddings(path) -> list[dict]:
    with open(path) as fh:
        return [{"electrolyzer": r["electrolyzer"], "cycle": int(r["cycle"]), "cell": r["cell"],
                 "code_x": float(r["code_x"]), "code_y": float(r["code_y"])} for r in csv.DictReader(fh)]
