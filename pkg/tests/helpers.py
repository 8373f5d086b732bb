"""Independent oracles shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from cellseer.dataprep import AlignedFrame, CycleSegment


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def brute_force_cycles(minutes, current, gap=10, threshold=16, max_startup=720):
    """Reference cycle finder written without the library's helpers.

    Walks the timeline row by row, closing a candidate whenever two stamps
    are more than ``gap`` apart, then re-checks the three conditions on each
    candidate with plain loops. Returns ``(start_row, stop_row, startup_len)``.
    """
    groups, current_group = [], []
    for i in range(len(minutes)):
        if current_group and minutes[i] - minutes[current_group[-1]] > gap:
            groups.append(current_group)
            current_group = []
        current_group.append(i)
    if current_group:
        groups.append(current_group)
    found = []
    for rows in groups:
        idx = None
        for k, r in enumerate(rows):
            if not np.isnan(current[r]) and current[r] > threshold:
                idx = k
                break
        if idx is None:
            continue
        if minutes[rows[idx]] - minutes[rows[0]] > max_startup:
            continue
        if len(rows) - idx < idx:
            continue
        found.append((rows[0], rows[-1] + 1, idx))
    return found


def frame_from(minutes, current, n_cells=2, eid="E0") -> AlignedFrame:
    minutes = np.asarray(minutes, dtype=np.int64)
    n = minutes.size
    features = np.column_stack([np.asarray(current, dtype=float), np.full(n, 80.0), np.full(n, 32.0)])
    volts = np.full((n, n_cells), 2.9)
    return AlignedFrame(eid, minutes, features, volts, [f"{eid}-P{j:03d}" for j in range(n_cells)])


def random_timeline(rng: np.random.Generator):
    """Minute stamps with random gaps and a current trace with random crossings."""
    n_seg = int(rng.integers(1, 5))
    minutes, current = [], []
    t = int(rng.integers(0, 100))
    for _ in range(n_seg):
        length = int(rng.integers(1, 1600))
        step = rng.choice([1, 2, 5, 9, 10, 11], p=[0.9, 0.04, 0.02, 0.015, 0.015, 0.01], size=length)
        stamps = t + np.cumsum(step)
        cross = int(rng.integers(0, length + 300))
        cur = np.where(np.arange(length) >= cross, rng.uniform(15.5, 17, length), rng.uniform(0, 16, length))
        cur[rng.random(length) < 0.02] = np.nan
        minutes.append(stamps)
        current.append(cur)
        t = int(stamps[-1]) + int(rng.choice([5, 11, 30, 500]))
    return np.concatenate(minutes), np.concatenate(current)


def synthetic_cycle(rng, n_cells=3, startup=30, operation=120, eid="E0", index=0, scaled=True) -> CycleSegment:
    n = startup + operation
    features = rng.uniform(0.05, 0.95, size=(n, 3)) if scaled else np.column_stack([
        rng.uniform(7, 16, n), rng.uniform(70, 90, n), rng.uniform(30, 33, n)])
    volts = rng.uniform(0.3, 0.7, size=(n, n_cells)) if scaled else rng.uniform(2.5, 3.2, size=(n, n_cells))
    return CycleSegment(eid, index, np.arange(n, dtype=np.int64) + 1000 * index, features, volts, startup,
                        [f"{eid}-P{j:03d}" for j in range(n_cells)], scaled)
