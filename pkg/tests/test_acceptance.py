"""Acceptance suite: one test per criterion, each run at its stated tolerance.

Criteria 6-8 share a single end-to-end study (simulate six electrolyzers,
train on four, validate on one, test on the sixth) built once per session.
"""

import json
import time

import numpy as np
import pytest

from cellseer.baseline import ParametricConstants, ParametricFit, parametric_fit, parametric_predict
from cellseer.cli import main as cli_main
from cellseer.cycleio import decode_cycle, encode_cycle
from cellseer.dataprep import STARTUP_LEN, extract_cycles, pad_startup
from cellseer.errors import FormatError, ShapeError
from cellseer.evalkit import ErrorStats, fault_threshold
from cellseer.nn.adam import AdamState, adam_step
from cellseer.nn.layers import dense_backward, dense_forward, lstm_backward, lstm_forward
from cellseer.nn.model import ArchConfig, EncoderPredictor
from cellseer.nn.weightsio import decode_weights, encode_weights
from cellseer.pipeline import ShuffleBuffer, batch, interleave
from cellseer.study import StudyConfig, run_study

from conftest import TINY_ARCH
from helpers import brute_force_cycles, frame_from, numeric_grad, random_timeline, rel_error, synthetic_cycle

H = 1e-5
GRAD_TOL = 1e-4


@pytest.mark.criterion(1)
def test_gradient_suite(criterion_detail):
    assert TINY_ARCH.n_params() <= 200
    t0 = time.perf_counter()
    worst = {"dense": 0.0, "lstm": 0.0, "composed": 0.0}
    for seed in range(20):
        rng = np.random.default_rng(seed)
        # dense
        W, b, x = rng.normal(size=(4, 3)), rng.normal(size=3), rng.normal(size=(5, 4))
        up = rng.normal(size=(5, 3))
        act = ("tanh", "sigmoid", "identity")[seed % 3]
        f = lambda: float(np.sum(dense_forward(W, b, x, act)[0] * up))  # noqa: E731
        grads = dense_backward(W, dense_forward(W, b, x, act)[1], up)
        for g, arr in zip(grads, (x, W, b)):
            worst["dense"] = max(worst["dense"], rel_error(g, numeric_grad(f, arr, H)))
        # LSTM with a masked tail on one sequence
        n, h, B, T = 3, 3, 2, 5
        W, b, x = rng.normal(size=(n + h, 4 * h)) * 0.5, rng.normal(size=4 * h) * 0.5, rng.normal(size=(B, T, n))
        mask = np.zeros((B, T), bool)
        mask[1, 3:] = True
        up_seq, up_last = rng.normal(size=(B, T, h)), rng.normal(size=(B, h))

        def f():
            hs, hl, _ = lstm_forward(W, b, x, mask)
            return float(np.sum(hs * up_seq) + np.sum(hl * up_last))

        grads = lstm_backward(W, lstm_forward(W, b, x, mask)[2], up_seq, up_last)
        for g, arr in zip(grads, (x, W, b)):
            worst["lstm"] = max(worst["lstm"], rel_error(g, numeric_grad(f, arr, H)))
        # encoder + predictor, end to end through the loss
        model = EncoderPredictor(TINY_ARCH, seed=seed)
        startups = rng.uniform(0, 1, size=(2, 8, 4))
        startups[0, 5:] = -1.0
        batch_ = (startups, rng.integers(0, 2, size=4), rng.uniform(0, 1, size=(4, 4, 3)), rng.uniform(0, 1, 4))
        _, grads = model.loss_and_grads(*batch_)
        for name, p in model.params.items():
            num = numeric_grad(lambda: model.loss_and_grads(*batch_)[0], p, H)
            worst["composed"] = max(worst["composed"], rel_error(grads[name], num))
    elapsed = time.perf_counter() - t0
    criterion_detail(", ".join(f"{k} max rel err {v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f} s")
    assert max(worst.values()) < GRAD_TOL
    assert elapsed < 60


@pytest.mark.criterion(2)
def test_masking_invariance(criterion_detail):
    rng = np.random.default_rng(2)
    model = EncoderPredictor(ArchConfig(), seed=2)
    lengths = rng.integers(10, 701, size=50)
    mismatches = 0
    for t in lengths:
        s = rng.uniform(0, 1, size=(int(t), 4))
        padded = pad_startup(s)
        assert padded.shape == (STARTUP_LEN, 4)
        mismatches += not np.array_equal(model.encode(padded), model.encode(s))
    criterion_detail(f"{len(lengths) - mismatches}/50 startups bit-identical")
    assert mismatches == 0


@pytest.mark.criterion(3)
def test_baseline_recovery(criterion_detail):
    consts = ParametricConstants()
    rng = np.random.default_rng(3)
    worst_param, worst_orth = 0.0, 0.0
    for _ in range(200):
        u0, k = rng.uniform(1.8, 2.6), rng.uniform(0.05, 0.3)
        n = int(rng.integers(2, 60))
        I, T, X = rng.uniform(0.5, 16.3, n), rng.uniform(60, 95, n), rng.uniform(29, 34, n)
        V = parametric_predict(ParametricFit(u0, k), consts, I, T, X)
        fit = parametric_fit(np.column_stack([I, T, X, V]), consts)
        worst_param = max(worst_param, abs(fit.u0 - u0), abs(fit.k - k))
        noisy = V + rng.normal(0, 0.005, n)
        fit = parametric_fit(np.column_stack([I, T, X, noisy]), consts)
        r = noisy - parametric_predict(fit, consts, I, T, X)
        worst_orth = max(worst_orth, abs(r.sum()), abs(r @ (I / consts.A)))
    criterion_detail(f"max |param error| {worst_param:.1e}, max |residual . [1, I/A]| {worst_orth:.1e}")
    assert worst_param < 1e-9 and worst_orth < 1e-9


@pytest.mark.criterion(4)
def test_cycle_detection_oracle(criterion_detail):
    rng = np.random.default_rng(4)
    agree, total_cycles = 0, 0
    for _ in range(1000):
        minutes, current = random_timeline(rng)
        segs = extract_cycles(frame_from(minutes, current))
        got = []
        for s in segs:
            start = int(np.searchsorted(minutes, s.minutes[0]))
            got.append((start, start + s.n_rows, s.startup_len))
        ref = brute_force_cycles(minutes, current)
        agree += got == ref
        total_cycles += len(ref)
    criterion_detail(f"{agree}/1000 timelines agree ({total_cycles} reference cycles)")
    assert agree == 1000


@pytest.mark.criterion(5)
def test_threshold_law(criterion_detail):
    base = dict(mu=0.0, sigma=0.0, P25=0.0, P50=0.0, P75=0.0, P90=0.0, P95=0.0)
    nn = fault_threshold(ErrorStats(**base, P99=22.213), 10.0).value
    par = fault_threshold(ErrorStats(**base, P99=39.088), 10.0).value
    criterion_detail(f"thresholds {nn:g} / {par:g} mV")
    assert nn == 32 and par == 49


@pytest.fixture(scope="session")
def study():
    t0 = time.perf_counter()
    result = run_study(StudyConfig())
    result.timings["total_s"] = time.perf_counter() - t0
    return result


@pytest.mark.criterion(6)
def test_end_to_end_error_reduction(study, criterion_detail):
    nn, par = study.inter["nn"].mu, study.inter["parametric"].mu
    total = study.timings["total_s"]
    criterion_detail(f"test MAE nn {nn:.2f} mV vs parametric {par:.2f} mV, ratio {nn / par:.3f} (<= 0.7); "
                     f"study wall time {total / 60:.1f} min on this machine")
    assert nn <= 0.7 * par
    assert total < 30 * 60


@pytest.mark.criterion(7)
def test_fault_lead_time(study, criterion_detail):
    f = study.fault
    nn, par = f.detections["nn"], f.detections["parametric"]
    nn_lead, par_lead = f.lead_hours("nn"), f.lead_hours("parametric")
    criterion_detail(
        f"thresholds nn {f.thresholds['nn'].value:g} / parametric {f.thresholds['parametric'].value:g} mV; "
        f"lead nn {nn_lead if nn_lead is None else round(nn_lead, 1)} h vs parametric "
        f"{par_lead if par_lead is None else round(par_lead, 1)} h; plateau ends "
        f"{(f.spec.fault_time - f.spec.plateau_end) / 60:.0f} h before the fault")
    assert nn is not None
    assert par_lead is None or nn_lead >= par_lead
    assert nn.persistence_met_time < f.spec.plateau_end
    assert nn.persistence_met_time >= f.spec.start_time


@pytest.mark.criterion(8)
def test_embedding_ordering(study, criterion_detail):
    rhos = [rho for _, rho in study.ordering]
    criterion_detail(f"|rho| per test cycle {', '.join(f'{r:.2f}' for r in rhos)}")
    assert len(rhos) >= 3
    assert all(r >= 0.8 for r in rhos)


@pytest.mark.criterion(9)
def test_pipeline_laws(criterion_detail):
    rng = np.random.default_rng(9)
    worst_peak_ratio = 0.0
    for _ in range(100):
        sizes = rng.integers(0, 60, size=int(rng.integers(1, 8)))
        sources = [[(i, j) for j in range(n)] for i, n in enumerate(sizes)]
        capacity, bsize, seed = int(rng.integers(1, 80)), int(rng.integers(1, 40)), int(rng.integers(2**32))

        def run():
            buf = ShuffleBuffer(interleave(sources, seed), capacity, seed + 1)
            out = [x for b in batch(buf, bsize) for x in b]
            return out, buf.peak_occupancy

        out, peak = run()
        assert sorted(out) == sorted(x for s in sources for x in s)
        assert run() == (out, peak)
        assert peak <= capacity
        worst_peak_ratio = max(worst_peak_ratio, peak / capacity)
    criterion_detail(f"100 configurations; permutation + reproducibility hold; max occupancy/capacity {worst_peak_ratio:.2f}")


@pytest.mark.criterion(10)
def test_training_determinism(tmp_path, criterion_detail):
    plant = {"electrolyzer_count": 2, "cells_per_electrolyzer": 3, "cycles_per_electrolyzer": 2,
             "startup_minutes": [60, 90], "operation_minutes": [400, 500]}
    train = {"arch": {"enc_lstm": 6, "enc_dense": 4, "code": 2, "pred_lstm1": 6, "pred_lstm2": 6, "pred_dense": 4},
             "epochs": 3, "patience": 3, "batch_size": 64, "stride": 4, "buffer_capacity": 200, "seed": 11}
    (tmp_path / "plant.json").write_text(json.dumps(plant))
    (tmp_path / "train.json").write_text(json.dumps(train))
    assert cli_main(["simulate", "--config", str(tmp_path / "plant.json"), "--seed", "10",
                     "--out", str(tmp_path / "sim")]) == 0
    assert cli_main(["prepare", "--data", str(tmp_path / "sim"), "--out", str(tmp_path / "cyc")]) == 0
    outputs = []
    for run in ("a", "b"):
        assert cli_main(["train", "--data", str(tmp_path / "cyc"), "--config", str(tmp_path / "train.json"),
                         "--out", str(tmp_path / run)]) == 0
        outputs.append(((tmp_path / run / "weights.celw").read_bytes(), (tmp_path / run / "history.csv").read_bytes()))
    criterion_detail(f"weights {len(outputs[0][0])} bytes, history {len(outputs[0][1])} bytes, identical across runs")
    assert outputs[0] == outputs[1]


@pytest.mark.criterion(11)
def test_format_roundtrips(criterion_detail):
    rng = np.random.default_rng(11)
    structured = 0
    for i in range(50):
        c = synthetic_cycle(rng, n_cells=int(rng.integers(1, 5)), startup=int(rng.integers(1, 50)),
                            operation=int(rng.integers(50, 200)), index=i)
        c.volts[rng.random(c.volts.shape) < 0.05] = -1.0
        data = encode_cycle(c)
        back = decode_cycle(data)
        assert encode_cycle(back) == data
        assert back.features.tobytes() == c.features.tobytes() and back.volts.tobytes() == c.volts.tobytes()

        model = EncoderPredictor(TINY_ARCH, seed=i)
        opt = AdamState()
        adam_step(model.params, {k: rng.normal(size=v.shape) for k, v in model.params.items()}, opt)
        wdata = encode_weights(model.params, TINY_ARCH, opt)
        params, arch, opt2 = decode_weights(wdata, TINY_ARCH)
        assert encode_weights(params, arch, opt2) == wdata

        for blob, decode in ((data, decode_cycle), (wdata, decode_weights)):
            for _ in range(10):
                bad = bytearray(blob[: int(rng.integers(0, len(blob)))] if rng.random() < 0.5 else blob)
                for j in rng.integers(0, max(len(bad), 1), size=int(rng.integers(0, 4))):
                    if len(bad):
                        bad[j] = int(rng.integers(256))
                if bytes(bad) == blob:
                    continue
                try:
                    decode(bytes(bad))
                except (FormatError, ShapeError):
                    structured += 1
    criterion_detail(f"100 files roundtrip bit-exactly; {structured} corrupted/truncated variants "
                     f"raised structured errors")
