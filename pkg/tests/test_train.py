import numpy as np
import pytest

from cellseer.errors import DataError
from cellseer.nn.model import EncoderPredictor
from cellseer.nn.train import TrainConfig, read_history, train, validation_mse, write_history
from cellseer.pipeline import CycleSource

from conftest import SMALL_ARCH
from helpers import synthetic_cycle


def sources(rng, eid, n=1, **kw):
    return [CycleSource(synthetic_cycle(rng, n_cells=1, startup=10, operation=40, eid=eid, index=i, **kw), 1)
            for i in range(n)]


def test_overfit_constant_response(rng):
    tr, va = sources(rng, "E0"), sources(rng, "E1")
    for s in tr + va:
        s.cycle.volts[:] = 0.42
    cfg = TrainConfig(arch=SMALL_ARCH, lr=1e-2, epochs=200, patience=200, batch_size=64, stride=1)
    res = train(EncoderPredictor(SMALL_ARCH, seed=0), tr, va, cfg)
    assert min(h[1] for h in res.history) <= 1e-4


def test_patience_zero_stops_at_first_non_improving_epoch(rng):
    tr, va = sources(rng, "E0", 2), sources(rng, "E1")
    cfg = TrainConfig(arch=SMALL_ARCH, lr=5e-2, epochs=50, patience=0, batch_size=8, stride=1)
    res = train(EncoderPredictor(SMALL_ARCH, seed=0), tr, va, cfg)
    vals = [h[2] for h in res.history]
    assert all(b < a for a, b in zip(vals[:-2], vals[1:-1]))
    if len(vals) < 50:
        assert vals[-1] >= min(vals[:-1])
    assert res.best_epoch == int(np.argmin(vals))


def test_best_parameters_restored(rng):
    tr, va = sources(rng, "E0", 2), sources(rng, "E1")
    cfg = TrainConfig(arch=SMALL_ARCH, epochs=4, patience=4, batch_size=16, stride=2)
    res = train(EncoderPredictor(SMALL_ARCH, seed=0), tr, va, cfg)
    best = min(h[2] for h in res.history)
    assert validation_mse(res.model, va, cfg.stride) == pytest.approx(best, rel=1e-12)


def test_training_is_deterministic(rng, tmp_path):
    tr, va = sources(rng, "E0", 2), sources(rng, "E1")
    cfg = TrainConfig(arch=SMALL_ARCH, epochs=3, batch_size=16, stride=2, buffer_capacity=20, seed=4)
    a = train(EncoderPredictor(SMALL_ARCH, seed=4), tr, va, cfg)
    b = train(EncoderPredictor(SMALL_ARCH, seed=4), tr, va, cfg)
    assert a.history == b.history
    assert all(a.model.params[k].tobytes() == b.model.params[k].tobytes() for k in a.model.params)
    write_history(a.history, tmp_path / "h.csv")
    assert read_history(tmp_path / "h.csv") == a.history


def test_overlapping_electrolyzers_rejected(rng):
    with pytest.raises(DataError):
        train(EncoderPredictor(SMALL_ARCH), sources(rng, "E0"), sources(rng, "E0"),
              TrainConfig(arch=SMALL_ARCH, epochs=1))


def test_config_roundtrip_and_validation():
    cfg = TrainConfig(arch=SMALL_ARCH, epochs=3, train_electrolyzers=["E0"])
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(DataError):
        TrainConfig.from_dict({"learning_rate": 1})
    with pytest.raises(DataError):
        TrainConfig(patience=-1)
