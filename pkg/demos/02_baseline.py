"""Fit the parametric voltage model on each startup and score it on operation."""

import numpy as np

from cellseer.baseline import ParametricConstants
from cellseer.dataprep import ScalerConfig, prepare_streams
from cellseer.simkit import PlantConfig, simulate_electrolyzer
from cellseer.study import error_tables, parametric_predict_cycle

plant = PlantConfig(electrolyzer_count=1, cells_per_electrolyzer=4, cycles_per_electrolyzer=3)
raw, _ = simulate_electrolyzer(plant, seed=42, electrolyzer=0)
scaler = ScalerConfig()
preds = [parametric_predict_cycle(c, scaler, ParametricConstants()) for c in prepare_streams(raw, scaler)]
inter, intra, _ = error_tables(preds)
print(f"parametric inter-cycle MAE {inter.mu:.2f} mV, intra-cycle P99 {intra.P99:.2f} mV")
print("first cycle, cell 0, first five predictions (V):", np.round(preds[0].predicted[:5, 0], 4))
