"""Encoder/predictor network.

The encoder reads a cell's padded startup ``[720, 4]`` (I, T, X, V) through a
masked LSTM and two dense layers down to a 2-D code in (0, 1)^2. The
predictor repeats that code over a 4-step window of (I, T, X), runs two
stacked LSTMs and two dense layers, and emits the scaled voltage at the
window's last step. Measured voltage never enters the predictor.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..dataprep import MASK_VALUE
from ..errors import DataError, ShapeError
from .layers import (
    dense_backward,
    dense_forward,
    lstm_backward,
    lstm_forward,
    step_mask,
    trim_masked_tail,
)

STARTUP_FEATURES = 4
WINDOW_FEATURES = 3


@dataclass(frozen=True)
class ArchConfig:
    enc_lstm: int = 32
    enc_dense: int = 16
    code: int = 2
    pred_lstm1: int = 32
    pred_lstm2: int = 32
    pred_dense: int = 16

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ArchConfig":
        return cls(**raw)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter block names and shapes, in canonical order."""
        e, d, k = self.enc_lstm, self.enc_dense, self.code
        p1, p2, pd = self.pred_lstm1, self.pred_lstm2, self.pred_dense
        n_pred = WINDOW_FEATURES + k
        return {
            "encoder.lstm.W": (STARTUP_FEATURES + e, 4 * e),
            "encoder.lstm.b": (4 * e,),
            "encoder.dense1.W": (e, d),
            "encoder.dense1.b": (d,),
            "encoder.dense2.W": (d, k),
            "encoder.dense2.b": (k,),
            "predictor.lstm1.W": (n_pred + p1, 4 * p1),
            "predictor.lstm1.b": (4 * p1,),
            "predictor.lstm2.W": (p1 + p2, 4 * p2),
            "predictor.lstm2.b": (4 * p2,),
            "predictor.dense1.W": (p2, pd),
            "predictor.dense1.b": (pd,),
            "predictor.dense2.W": (pd, 1),
            "predictor.dense2.b": (1,),
        }

    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.shapes().values()))


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_weights(arch: ArchConfig, seed) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, LSTM forget-gate biases at 1."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in arch.shapes().items():
        if name.endswith(".W"):
            if ".lstm" in name:
                h = shape[1] // 4
                bound = glorot_bound(shape[0], h)
            else:
                bound = glorot_bound(*shape)
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            b = np.zeros(shape)
            if ".lstm" in name:
                b[: shape[0] // 4] = 1.0
            params[name] = b
    return params


def check_params(params: dict, arch: ArchConfig):
    for name, shape in arch.shapes().items():
        if name not in params:
            raise ShapeError(f"missing parameter block {name}")
        if params[name].shape != shape:
            raise ShapeError(f"parameter block {name}", expected=shape, found=params[name].shape)


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeError("prediction/target mismatch", expected=target.shape, found=pred.shape)
    if pred.size == 0:
        raise DataError("empty batch")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


class EncoderPredictor:
    """Parameters plus forward/backward passes of the full network."""

    def __init__(self, arch: ArchConfig = ArchConfig(), params: dict | None = None, seed=0):
        self.arch = arch
        self.params = init_weights(arch, seed) if params is None else params
        check_params(self.params, arch)

    # -- encoder --------------------------------------------------------------

    def _encode(self, startups):
        startups = np.asarray(startups, dtype=float)
        if startups.ndim != 3 or startups.shape[-1] != STARTUP_FEATURES:
            raise ShapeError("startups must be [U, T, 4]", found=startups.shape)
        p = self.params
        x, mask = trim_masked_tail(startups, step_mask(startups, MASK_VALUE))
        _, h, c_lstm = lstm_forward(p["encoder.lstm.W"], p["encoder.lstm.b"], x, mask)
        y1, c_d1 = dense_forward(p["encoder.dense1.W"], p["encoder.dense1.b"], h, "tanh")
        code, c_d2 = dense_forward(p["encoder.dense2.W"], p["encoder.dense2.b"], y1, "sigmoid")
        return code, (c_lstm, c_d1, c_d2)

    def encode(self, startups) -> np.ndarray:
        """Codes ``[U, 2]`` for startups ``[U, T, 4]`` (or a single ``[T, 4]``)."""
        startups = np.asarray(startups, dtype=float)
        if startups.ndim == 2:
            return self._encode(startups[None])[0][0]
        return self._encode(startups)[0]

    def _encode_backward(self, cache, dcode, grads):
        p = self.params
        c_lstm, c_d1, c_d2 = cache
        dy1, grads["encoder.dense2.W"], grads["encoder.dense2.b"] = dense_backward(p["encoder.dense2.W"], c_d2, dcode)
        dh, grads["encoder.dense1.W"], grads["encoder.dense1.b"] = dense_backward(p["encoder.dense1.W"], c_d1, dy1)
        _, grads["encoder.lstm.W"], grads["encoder.lstm.b"] = lstm_backward(p["encoder.lstm.W"], c_lstm, None, dh)

    # -- predictor ------------------------------------------------------------

    def _predict(self, windows, codes):
        windows = np.asarray(windows, dtype=float)
        codes = np.asarray(codes, dtype=float)
        if windows.ndim != 3 or windows.shape[-1] != WINDOW_FEATURES:
            raise ShapeError("windows must be [B, 4, 3]", found=windows.shape)
        if codes.shape != (windows.shape[0], self.arch.code):
            raise ShapeError("codes do not match windows", expected=(windows.shape[0], self.arch.code),
                             found=codes.shape)
        p = self.params
        steps = windows.shape[1]
        x = np.concatenate([windows, np.repeat(codes[:, None, :], steps, axis=1)], axis=2)
        hs1, _, c1 = lstm_forward(p["predictor.lstm1.W"], p["predictor.lstm1.b"], x)
        _, h2, c2 = lstm_forward(p["predictor.lstm2.W"], p["predictor.lstm2.b"], hs1)
        y1, c_d1 = dense_forward(p["predictor.dense1.W"], p["predictor.dense1.b"], h2, "tanh")
        y, c_d2 = dense_forward(p["predictor.dense2.W"], p["predictor.dense2.b"], y1, "sigmoid")
        return y[:, 0], (c1, c2, c_d1, c_d2)

    def predict(self, windows, codes) -> np.ndarray:
        """Scaled voltage for each window ``[B, 4, 3]`` given its cell code ``[B, 2]``."""
        return self._predict(windows, codes)[0]

    def _predict_backward(self, cache, dy, grads):
        p = self.params
        c1, c2, c_d1, c_d2 = cache
        dy1, grads["predictor.dense2.W"], grads["predictor.dense2.b"] = dense_backward(
            p["predictor.dense2.W"], c_d2, dy[:, None])
        dh2, grads["predictor.dense1.W"], grads["predictor.dense1.b"] = dense_backward(
            p["predictor.dense1.W"], c_d1, dy1)
        dhs1, grads["predictor.lstm2.W"], grads["predictor.lstm2.b"] = lstm_backward(
            p["predictor.lstm2.W"], c2, None, dh2)
        dx, grads["predictor.lstm1.W"], grads["predictor.lstm1.b"] = lstm_backward(
            p["predictor.lstm1.W"], c1, dhs1, None)
        return dx[:, :, WINDOW_FEATURES:].sum(axis=1)

    # -- joint ----------------------------------------------------------------

    def forward(self, startups, startup_index, windows):
        codes = self.encode(startups)
        return self.predict(windows, codes[startup_index])

    def loss_and_grads(self, startups, startup_index, windows, targets):
        """Batch MSE and gradients for every parameter block.

        The encoder runs once per distinct startup; gradients of all windows
        sharing a startup are summed into that startup's code gradient.
        """
        codes, enc_cache = self._encode(startups)
        pred, pred_cache = self._predict(windows, codes[startup_index])
        loss, dpred = mse_loss(pred, targets)
        grads: dict[str, np.ndarray] = {}
        dcodes_per_window = self._predict_backward(pred_cache, dpred, grads)
        dcodes = np.zeros_like(codes)
        np.add.at(dcodes, startup_index, dcodes_per_window)
        self._encode_backward(enc_cache, dcodes, grads)
        return loss, {name: grads[name] for name in self.params}
