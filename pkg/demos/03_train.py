"""Train a small encoder/predictor on two electrolyzers and validate on a third."""

from cellseer.dataprep import ScalerConfig, prepare_streams
from cellseer.nn.model import ArchConfig, EncoderPredictor
from cellseer.nn.train import TrainConfig, train
from cellseer.pipeline import CycleSource
from cellseer.simkit import PlantConfig, simulate_electrolyzer

plant = PlantConfig(electrolyzer_count=3, cells_per_electrolyzer=4, cycles_per_electrolyzer=2)
cfg = TrainConfig(arch=ArchConfig(6, 4, 2, 6, 6, 4), epochs=3, patience=2, batch_size=128, stride=32)
sources = {e: [CycleSource(c, cfg.stride) for c in prepare_streams(simulate_electrolyzer(plant, 42, e)[0], ScalerConfig())]
           for e in range(3)}
model = EncoderPredictor(cfg.arch, seed=cfg.seed)
result = train(model, sources[0] + sources[1], sources[2], cfg,
               on_epoch=lambda e, tr, va: print(f"epoch {e}: train {tr:.3e}  val {va:.3e}"))
print("best epoch:", result.best_epoch)
