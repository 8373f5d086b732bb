"""Simulate one small electrolyzer and cut its telemetry into scaled cycles."""

from cellseer.dataprep import ScalerConfig, prepare_streams
from cellseer.simkit import PlantConfig, simulate_electrolyzer

plant = PlantConfig(electrolyzer_count=1, cells_per_electrolyzer=4, cycles_per_electrolyzer=3)
raw, truth = simulate_electrolyzer(plant, seed=42, electrolyzer=0)
cycles = prepare_streams(raw, ScalerConfig())

print(f"{truth.electrolyzer_id}: {len(truth.cycles)} simulated cycles, {len(cycles)} validated")
for c in cycles:
    print(f"  cycle {c.cycle_index}: {c.n_rows} minutes, startup {c.startup_len} min, cells {c.cell_ids}")
