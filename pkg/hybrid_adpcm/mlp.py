"""10x2x1 perceptron predictor trained with Levenberg-Marquardt.

Parameters travel as a flat 25-vector in the order documented on
:class:`~hybrid_adpcm.models.MlpModel`; the Jacobian columns and the LM update
use that same order.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import TrainConfig
from .errors import TrainingError
from .lpc import lag_matrix, lpc_predict_open_loop
from .models import LpcModel, MlpModel, TrainSet
from .signal import energy_ratio_db

LOGGER = logging.getLogger(__name__)

N_IN = MlpModel.N_INPUTS
N_HID = MlpModel.N_HIDDEN
N_PARAMS = MlpModel.PARAM_COUNT
GAIN_CEILING_DB = 80.0

Predictor = Union[LpcModel, MlpModel]


def _split(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    n_w = N_IN * N_HID
    return (
        theta[:n_w].reshape(N_HID, N_IN),
        theta[n_w:n_w + N_HID],
        theta[n_w + N_HID:n_w + 2 * N_HID],
        theta[-1],
    )


def _outputs(theta: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    w_hidden, b_hidden, w_out, b_out = _split(theta)
    hidden = np.tanh(inputs @ w_hidden.T + b_hidden)
    return hidden @ w_out + b_out


def _jacobian(theta: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    w_hidden, b_hidden, w_out, _ = _split(theta)
    hidden = np.tanh(inputs @ w_hidden.T + b_hidden)
    slope = (1.0 - hidden * hidden) * w_out
    n_w = N_IN * N_HID
    jac = np.empty((inputs.shape[0], N_PARAMS))
    for j in range(N_HID):
        jac[:, j * N_IN:(j + 1) * N_IN] = slope[:, j:j + 1] * inputs
    jac[:, n_w:n_w + N_HID] = slope
    jac[:, n_w + N_HID:n_w + 2 * N_HID] = hidden
    jac[:, -1] = 1.0
    return jac


def forward(model: MlpModel, input: Sequence[float]) -> float:
    """b_out + Σ_j w_out[j]·tanh(b_hidden[j] + w_hidden[j]·input)."""
    x = np.asarray(input, dtype=np.float64)
    if x.size != N_IN:
        raise ValueError(f"input must have {N_IN} samples, got {x.size}")
    hidden = np.tanh(model.w_hidden @ x + model.b_hidden)
    return float(model.b_out + np.dot(model.w_out, hidden))


def forward_batch(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    return _outputs(model.to_vector(), np.asarray(inputs, dtype=np.float64))


def jacobian(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """∂output/∂θ for each input row, shape (N, 25)."""
    return _jacobian(model.to_vector(), np.atleast_2d(np.asarray(inputs, dtype=np.float64)))


def jacobian_row(model: MlpModel, input: Sequence[float]) -> np.ndarray:
    x = np.asarray(input, dtype=np.float64)
    if x.size != N_IN:
        raise ValueError(f"input must have {N_IN} samples, got {x.size}")
    return jacobian(model, x.reshape(1, N_IN))[0]


def build_train_set(history: np.ndarray, frame: np.ndarray) -> TrainSet:
    """Pairs (10 preceding samples, next sample) for every sample of ``frame``."""
    frame = np.asarray(frame, dtype=np.float64)
    return TrainSet(inputs=lag_matrix(frame, history, N_IN), targets=frame)


def lm_train(
    model: MlpModel,
    data: TrainSet,
    cfg: TrainConfig,
    trace: Optional[List[float]] = None,
) -> Tuple[MlpModel, float]:
    """Run exactly ``cfg.epochs`` Levenberg-Marquardt epochs.

    Each epoch solves (JᵀJ + λI)δ = Jᵀe and keeps the step only if the SSE
    drops; a rejected step raises λ and retries, at most ``cfg.max_retries``
    times. If ``trace`` is given the MSE after every epoch is appended to it.
    """
    if len(data) == 0:
        raise ValueError("training set is empty")
    inputs, targets = data.inputs, data.targets
    n = len(data)

    theta = model.to_vector().copy()
    resid = targets - _outputs(theta, inputs)
    sse = float(resid @ resid)
    if not np.isfinite(sse):
        raise TrainingError("non-finite initial loss")

    lam = cfg.lambda_init
    eye = np.eye(N_PARAMS)
    for _ in range(cfg.epochs):
        jac = _jacobian(theta, inputs)
        hess = jac.T @ jac
        grad = jac.T @ resid
        for _ in range(cfg.max_retries):
            try:
                delta = np.linalg.solve(hess + lam * eye, grad)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None and np.all(np.isfinite(delta)):
                candidate = theta + delta
                cand_resid = targets - _outputs(candidate, inputs)
                cand_sse = float(cand_resid @ cand_resid)
                if np.isfinite(cand_sse) and cand_sse < sse:
                    theta, resid, sse = candidate, cand_resid, cand_sse
                    lam = lam * cfg.lambda_down
                    break
            lam = min(lam * cfg.lambda_up, cfg.lambda_max)
        if trace is not None:
            trace.append(sse / n)

    return MlpModel.from_vector(theta), sse / n


def init_generator(seed: int, frame_index: int, start: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, frame_index, start); no state carries between frames."""
    counter = (int(frame_index) << 128) | (int(start) << 192)
    return np.random.Generator(np.random.Philox(key=int(seed), counter=counter))


def initial_model(cfg: TrainConfig, frame_index: int, start: int) -> MlpModel:
    gen = init_generator(cfg.seed, frame_index, start)
    return MlpModel.from_vector(gen.uniform(-cfg.init_scale, cfg.init_scale, size=N_PARAMS))


def predict_open_loop(model: Predictor, frame: np.ndarray, history: np.ndarray) -> np.ndarray:
    """Predictions for every sample of ``frame`` from the true past samples."""
    if isinstance(model, LpcModel):
        return lpc_predict_open_loop(model, frame, history)
    return forward_batch(model, lag_matrix(frame, history, N_IN))


def prediction_gain(model: Predictor, frame: Sequence[float], history: Sequence[float]) -> float:
    """Open-loop 10·log10(Σx² / Σ(x − x̂)²) in dB; 0 dB for a silent frame, capped at 80 dB."""
    x = np.asarray(frame, dtype=np.float64)
    if x.size == 0:
        raise ValueError("frame is empty")
    signal_energy = float(x @ x)
    if signal_energy == 0.0:
        return 0.0
    err = x - predict_open_loop(model, x, np.asarray(history, dtype=np.float64))
    return energy_ratio_db(signal_energy, float(err @ err), (-np.inf, GAIN_CEILING_DB))


@dataclass(frozen=True)
class StartResult:
    start: int
    model: Optional[MlpModel]
    mse: float
    gain_db: float


def _run_start(
    data: TrainSet,
    frame: np.ndarray,
    history: np.ndarray,
    cfg: TrainConfig,
    frame_index: int,
    start: int,
    trace: Optional[List[float]] = None,
) -> StartResult:
    try:
        model, mse = lm_train(initial_model(cfg, frame_index, start), data, cfg, trace)
    except TrainingError:
        return StartResult(start, None, float("nan"), float("-inf"))
    gain = prediction_gain(model, frame, history)
    if not np.isfinite(mse) or np.isnan(gain):
        return StartResult(start, None, float("nan"), float("-inf"))
    return StartResult(start, model, mse, gain)


def multistart_train_report(
    frame_history: np.ndarray,
    frame: np.ndarray,
    cfg: TrainConfig,
    frame_index: int,
    traces: Optional[List[List[float]]] = None,
) -> StartResult:
    """Train ``cfg.n_starts`` seeded candidates and keep the best open-loop gain.

    If ``traces`` is given it is refilled with one per-epoch MSE list per start.
    """
    frame = np.array(frame, dtype=np.float64)
    history = np.array(frame_history, dtype=np.float64)
    if frame.size == 0:
        raise ValueError("training frame is empty")
    data = build_train_set(history, frame)

    if traces is not None:
        traces[:] = [[] for _ in range(cfg.n_starts)]

    def run(start: int) -> StartResult:
        trace = None if traces is None else traces[start]
        return _run_start(data, frame, history, cfg, frame_index, start, trace)

    if cfg.workers > 1 and cfg.n_starts > 1:
        with ThreadPoolExecutor(max_workers=min(cfg.workers, cfg.n_starts)) as pool:
            results = list(pool.map(run, range(cfg.n_starts)))
    else:
        results = [run(s) for s in range(cfg.n_starts)]

    best: Optional[StartResult] = None
    for result in results:
        if result.model is None:
            continue
        if best is None or result.gain_db > best.gain_db:
            best = result
    if best is None:
        raise TrainingError(f"all {cfg.n_starts} starts diverged on frame {frame_index}")

    LOGGER.debug(
        "frame %d: start %d selected (gain %.2f dB, mse %.3e)",
        frame_index, best.start, best.gain_db, best.mse,
    )
    return best


def multistart_train(
    frame_history: np.ndarray,
    frame: np.ndarray,
    cfg: TrainConfig,
    frame_index: int,
) -> MlpModel:
    return multistart_train_report(frame_history, frame, cfg, frame_index).model
