"""Autocorrelation-method linear prediction."""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
import scipy.signal

from .errors import DegenerateRecursionError
from .models import LpcModel

LOGGER = logging.getLogger(__name__)


def autocorrelation(frame: Sequence[float], max_lag: int) -> np.ndarray:
    """Biased estimate r(k) = Σ_{n=k}^{N-1} x(n)·x(n-k) for k = 0..max_lag."""
    x = np.asarray(frame, dtype=np.float64)
    n = x.size
    r = np.zeros(max_lag + 1)
    for k in range(min(max_lag, n - 1) + 1):
        r[k] = np.dot(x[k:], x[:n - k])
    return r


def levinson_durbin(r: Sequence[float], order: int) -> LpcModel:
    """Solve the Toeplitz normal equations of order ``order`` for r(0..order)."""
    r = np.asarray(r, dtype=np.float64)
    if r.size < order + 1:
        raise ValueError(f"need {order + 1} autocorrelation lags, got {r.size}")
    if r[0] < 0:
        raise ValueError("r(0) must be non-negative")
    if r[0] == 0.0:
        LOGGER.debug("zero-energy frame; using the zero order-%d predictor", order)
        return LpcModel.zero(order)

    a = np.zeros(order)
    k = np.zeros(order)
    err = r[0]
    for i in range(order):
        acc = r[i + 1] - np.dot(a[:i], r[i:0:-1])
        ki = acc / err
        prev = a[:i].copy()
        a[:i] = prev - ki * prev[::-1]
        a[i] = ki
        k[i] = ki
        err = err * (1.0 - ki * ki)
        if not err > 0.0:
            LOGGER.debug("reflection coefficients so far: %s", k[:i + 1])
            raise DegenerateRecursionError(
                f"prediction error {err!r} at step {i + 1} of {order}"
            )
    return LpcModel(order=order, coeffs=a, reflection=k, residual_energy=float(err))


def analysis_window(length: int, name: str = "rectangular") -> np.ndarray:
    if name == "rectangular":
        return np.ones(length)
    return scipy.signal.get_window(name, length, fftbins=False)


def analyze(frame: Sequence[float], order: int, window: str = "rectangular") -> LpcModel:
    """Fit an order-``order`` model to one frame."""
    x = np.asarray(frame, dtype=np.float64)
    if window != "rectangular":
        x = x * analysis_window(x.size, window)
    return levinson_durbin(autocorrelation(x, order), order)


def lpc_predict(model: LpcModel, history: Sequence[float]) -> float:
    """Σ a_i·history[p−i]; ``history`` holds the p most recent samples, newest last."""
    h = np.asarray(history, dtype=np.float64)
    if h.size != model.order:
        raise ValueError(f"history must have {model.order} samples, got {h.size}")
    return float(np.dot(model.coeffs[::-1], h))


def lag_matrix(frame: np.ndarray, history: np.ndarray, order: int) -> np.ndarray:
    """Row n holds the ``order`` samples preceding frame[n], newest last."""
    frame = np.asarray(frame, dtype=np.float64)
    history = np.asarray(history, dtype=np.float64)
    if history.size < order:
        history = np.concatenate([np.zeros(order - history.size), history])
    ext = np.concatenate([history[history.size - order:], frame])
    return np.lib.stride_tricks.sliding_window_view(ext, order)[: frame.size]


def lpc_predict_open_loop(model: LpcModel, frame: np.ndarray, history: np.ndarray) -> np.ndarray:
    return lag_matrix(frame, history, model.order) @ model.coeffs[::-1]
