"""Expert parametric voltage model and its per-cell, per-cycle least-squares fit.

    V = u0 + [k + (90 - T) * Ct + (32 - X) * Cx] * I / A

``u0`` and ``k`` are fitted on each cell's startup observations; the other
constants are plant-wide. Everything here works in engineering units.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import IdentifiabilityError


@dataclass(frozen=True)
class ParametricConstants:
    Ct: float = 0.0016
    Cx: float = -0.0031
    A: float = 2.721

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("membrane area A must be positive")


@dataclass
class ParametricFit:
    u0: float
    k: float
    cell_id: str = ""
    cycle_index: int = -1
    electrolyzer_id: str = ""
    residual_rms: float = float("nan")
    n_obs: int = 0


def _correction(T, X, consts):
    return (90.0 - T) * consts.Ct + (32.0 - X) * consts.Cx


def parametric_predict(fit: ParametricFit, consts: ParametricConstants, I, T, X):
    I, T, X = (np.asarray(a, dtype=float) for a in (I, T, X))
    out = fit.u0 + (fit.k + _correction(T, X, consts)) * I / consts.A
    return float(out) if out.ndim == 0 else out


def parametric_fit(obs, consts: ParametricConstants = ParametricConstants(), **ids) -> ParametricFit:
    """Least-squares ``(u0, k)`` from rows of ``(I, T, X, V)``.

    Rows with any NaN are dropped. Raises :class:`IdentifiabilityError` when
    fewer than two usable rows remain or ``I`` does not vary.
    """
    obs = np.asarray(obs, dtype=float).reshape(-1, 4)
    obs = obs[np.all(np.isfinite(obs), axis=1)]
    if obs.shape[0] < 2:
        raise IdentifiabilityError(f"need at least 2 observations, got {obs.shape[0]}")
    I, T, X, V = obs.T
    z = I / consts.A
    if np.ptp(z) <= 1e-12 * max(1.0, np.abs(z).max()):
        raise IdentifiabilityError("current does not vary; load resistance is unidentifiable")
    y = V - _correction(T, X, consts) * z
    design = np.column_stack([np.ones_like(z), z])
    (u0, k), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ np.array([u0, k])
    return ParametricFit(float(u0), float(k), residual_rms=float(np.sqrt(np.mean(resid**2))),
                         n_obs=int(obs.shape[0]), **ids)


def fit_cycle(cycle, consts: ParametricConstants = ParametricConstants()) -> list[ParametricFit]:
    """One fit per cell from an unscaled :class:`CycleSegment`'s startup rows."""
    if cycle.scaled:
        raise ValueError("fit_cycle expects engineering units; unscale first")
    fits = []
    for j, cell in enumerate(cycle.cell_ids):
        fits.append(parametric_fit(cycle.cell_startup(j), consts, cell_id=cell,
                                   cycle_index=cycle.cycle_index, electrolyzer_id=cycle.electrolyzer_id))
    return fits


def write_fit_table(fits, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["electrolyzer", "cycle", "cell", "u0", "k", "residual_rms"])
        for f in fits:
            w.writerow([f.electrolyzer_id, f.cycle_index, f.cell_id, repr(f.u0), repr(f.k), repr(f.residual_rms)])


def read_fit_table(path) -> list[ParametricFit]:
    with open(path) as fh:
        return [
            ParametricFit(float(r["u0"]), float(r["k"]), r["cell"], int(r["cycle"]), r["electrolyzer"],
                          float(r["residual_rms"]))
            for r in csv.DictReader(fh)
        ]
