"""Closed-loop ADPCM coder with a per-frame switched LPC/MLP predictor.

Encoder and decoder share every state transition in this module: the
per-frame model adaptation (:func:`adapt_models`), the per-sample loop step
and the predictor selection. The decoder only differs in where the codes
come from, which is what keeps the two trajectories bit-identical.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from . import bitstream
from .config import CodecConfig, MLP_INPUT_ORDER, TrainConfig, tunables_digest
from .errors import DegenerateRecursionError, DigestMismatchError, SignalError, StreamError, TrainingError
from .lpc import analyze, lpc_predict
from .mlp import forward, multistart_train_report
from .models import (
    CodingMode,
    Code,
    EncodedStream,
    FrameRecord,
    LoopState,
    LpcModel,
    MlpModel,
    PredictorKind,
    Selection,
    SignalBuffer,
    StreamHeader,
)
from .quant import adapt, dequantize, initial_state, quantize
from .signal import frames

LOGGER = logging.getLogger(__name__)

RECON_MIN = -1.0
RECON_MAX = 1.0 - 2.0 ** -15

Predictor = Union[LpcModel, MlpModel]


class FrameTrial(NamedTuple):
    codes: np.ndarray
    reconstructed: np.ndarray
    state: LoopState
    zero_fallback_at: Optional[int] = None


class HybridChoice(NamedTuple):
    selection: Selection
    codes: np.ndarray
    reconstructed: np.ndarray
    state: LoopState
    lpc_error: float
    mlp_error: Optional[float]


@dataclass
class AdaptedModels:
    lpc: LpcModel
    mlp: Optional[MlpModel]
    train_mse: Optional[float] = None
    fallbacks: List[str] = field(default_factory=list)


@dataclass
class EncodeReport:
    stream: EncodedStream
    reconstruction: SignalBuffer
    frames: List[FrameRecord]

    @property
    def mlp_usage_fraction(self) -> float:
        if not self.frames:
            return 0.0
        used = sum(1 for r in self.frames if r.selection is Selection.MLP)
        return used / len(self.frames)


def _bind(model: Predictor) -> Callable[[np.ndarray], float]:
    """Predict from the full history buffer (newest last)."""
    if isinstance(model, LpcModel):
        order = model.order
        return lambda history: lpc_predict(model, history[history.size - order:])
    return lambda history: forward(model, history[history.size - MLP_INPUT_ORDER:])


def _zero_prediction(history: np.ndarray) -> float:
    return 0.0


def initial_loop_state(cfg: CodecConfig) -> LoopState:
    size = cfg.history_len
    return LoopState(
        history=np.zeros(size),
        lpc=LpcModel.zero(cfg.lpc_order),
        mlp=None,
        quant=initial_state(cfg.nq, cfg.quant),
        previous_frame=np.zeros(0),
        previous_history=np.zeros(size),
    )


def _run_loop(
    predictor: Predictor,
    loop: LoopState,
    length: int,
    frame: Optional[np.ndarray] = None,
    codes: Optional[np.ndarray] = None,
) -> FrameTrial:
    """One pass of the closed loop; codes are produced from ``frame`` or replayed from ``codes``."""
    size = loop.history.size
    buf = np.empty(size + length)
    buf[:size] = loop.history
    out_codes = np.empty(length, dtype=np.int64)
    predict = _bind(predictor)
    q = loop.quant
    fallback_at: Optional[int] = None

    for i in range(length):
        x_hat = predict(buf[i:i + size])
        if not math.isfinite(x_hat):
            if fallback_at is None:
                fallback_at = i
                LOGGER.warning("non-finite prediction at sample %d; zero predictor for the rest of the frame", i)
            predict = _zero_prediction
            x_hat = 0.0
        if codes is None:
            code = quantize(float(frame[i]) - x_hat, q)
        else:
            code = Code.unpack(int(codes[i]), q.nq)
        rec = x_hat + dequantize(code, q)
        buf[size + i] = min(max(rec, RECON_MIN), RECON_MAX)
        out_codes[i] = code.pack(q.nq)
        q = adapt(q, code)

    reconstructed = buf[size:].copy()
    state = replace(
        loop,
        history=buf[length:].copy(),
        quant=q,
        previous_frame=reconstructed,
        previous_history=loop.history,
    )
    return FrameTrial(out_codes, reconstructed, state, fallback_at)


def encode_frame(frame: np.ndarray, predictor: Predictor, loop: LoopState) -> FrameTrial:
    """predict → residual → quantize → inverse-quantize → add → update history, per sample."""
    frame = np.asarray(frame, dtype=np.float64)
    return _run_loop(predictor, loop, frame.size, frame=frame)


def decode_frame(codes: np.ndarray, predictor: Predictor, loop: LoopState) -> FrameTrial:
    codes = np.asarray(codes, dtype=np.int64)
    return _run_loop(predictor, loop, codes.size, codes=codes)


def _squared_error(frame: np.ndarray, reconstructed: np.ndarray) -> float:
    diff = frame - reconstructed
    return float(diff @ diff)


def choose_predictor(
    frame: np.ndarray,
    lpc: LpcModel,
    mlp: Optional[MlpModel],
    loop: LoopState,
) -> HybridChoice:
    """Trial-encode with both predictors from the same entry state; keep the smaller in-loop error (tie → LPC)."""
    frame = np.asarray(frame, dtype=np.float64)
    lpc_trial = encode_frame(frame, lpc, loop)
    lpc_error = _squared_error(frame, lpc_trial.reconstructed)
    if mlp is None:
        return HybridChoice(Selection.LPC, lpc_trial.codes, lpc_trial.reconstructed, lpc_trial.state, lpc_error, None)

    mlp_trial = encode_frame(frame, mlp, loop)
    mlp_error = _squared_error(frame, mlp_trial.reconstructed)
    if mlp_error < lpc_error:
        return HybridChoice(Selection.MLP, mlp_trial.codes, mlp_trial.reconstructed, mlp_trial.state, lpc_error, mlp_error)
    return HybridChoice(Selection.LPC, lpc_trial.codes, lpc_trial.reconstructed, lpc_trial.state, lpc_error, mlp_error)


def _fit_lpc(frame: np.ndarray, cfg: CodecConfig, previous: LpcModel, fallbacks: List[str]) -> LpcModel:
    try:
        return analyze(frame, cfg.lpc_order, cfg.lpc_window)
    except DegenerateRecursionError as exc:
        LOGGER.warning("degenerate LPC recursion (%s); keeping previous model", exc)
        fallbacks.append("lpc_degenerate")
        return previous


def _fit_mlp(
    history: np.ndarray,
    frame: np.ndarray,
    train: TrainConfig,
    frame_index: int,
    fallbacks: List[str],
) -> Tuple[Optional[MlpModel], Optional[float]]:
    try:
        result = multistart_train_report(history, frame, train, frame_index)
    except TrainingError as exc:
        LOGGER.warning("MLP training failed on frame %d: %s", frame_index, exc)
        fallbacks.append("mlp_training_failed")
        return None, None
    return result.model, result.mse


def adapt_models(
    state: LoopState,
    frame_index: int,
    cfg: CodecConfig,
    raw_frame: Optional[np.ndarray] = None,
    raw_history: Optional[np.ndarray] = None,
) -> AdaptedModels:
    """Coefficients for frame ``frame_index``.

    Backward: from the previous decoded frame and its decoded prefix (frame 0
    gets the zero LPC and no MLP). Forward: from the raw frame and the raw
    samples before it.
    """
    wants_mlp = cfg.predictor_kind is not PredictorKind.LPC_ONLY
    train = cfg.effective_train()
    out = AdaptedModels(lpc=state.lpc, mlp=None)

    if cfg.coding_mode is CodingMode.BACKWARD:
        if frame_index == 0:
            out.lpc = LpcModel.zero(cfg.lpc_order)
            return out
        source, prefix = state.previous_frame, state.previous_history
    else:
        source, prefix = raw_frame, raw_history

    source = np.array(source, dtype=np.float64)
    prefix = np.array(prefix[prefix.size - MLP_INPUT_ORDER:], dtype=np.float64)
    out.lpc = _fit_lpc(source, cfg, state.lpc, out.fallbacks)
    if wants_mlp:
        out.mlp, out.train_mse = _fit_mlp(prefix, source, train, frame_index, out.fallbacks)
    return out


def _committed_predictor(
    kind: PredictorKind,
    mode: CodingMode,
    selection: Selection,
    models: AdaptedModels,
) -> Predictor:
    if kind is PredictorKind.LPC_ONLY or selection is Selection.LPC:
        return models.lpc
    if models.mlp is not None:
        return models.mlp
    # mlp-only without a trained network: forward transmits the zero MLP, backward uses the frame's LPC
    return MlpModel.zero() if mode is CodingMode.FORWARD else models.lpc


def _forward_params(kind: PredictorKind, models: AdaptedModels) -> List[float]:
    params: List[float] = []
    if kind in (PredictorKind.LPC_ONLY, PredictorKind.HYBRID):
        params.extend(models.lpc.coeffs.tolist())
    if kind in (PredictorKind.MLP_ONLY, PredictorKind.HYBRID):
        mlp = models.mlp if models.mlp is not None else MlpModel.zero()
        params.extend(mlp.to_vector().tolist())
    return params


def _state_for_frame(state: LoopState, models: AdaptedModels, mode: CodingMode) -> LoopState:
    mlp = models.mlp
    if mode is CodingMode.FORWARD and mlp is None:
        mlp = MlpModel.zero()
    return replace(state, lpc=models.lpc, mlp=mlp)


def make_header(cfg: CodecConfig, sample_count: int, source_bit_depth: int) -> StreamHeader:
    return StreamHeader(
        mode=cfg.coding_mode,
        predictor=cfg.predictor_kind,
        nq=cfg.nq,
        lpc_order=cfg.lpc_order,
        frame_len=cfg.frame_len,
        seed=cfg.seed,
        sample_count=sample_count,
        source_bit_depth=source_bit_depth,
        tunables_digest=tunables_digest(cfg),
        version=bitstream.VERSION,
    )


def encode_with_report(signal: SignalBuffer, cfg: CodecConfig) -> EncodeReport:
    cfg.validate()
    samples = signal.samples
    if samples.size == 0:
        raise SignalError("cannot encode an empty signal")

    kind, mode = cfg.predictor_kind, cfg.coding_mode
    writer = bitstream.BitWriter()
    state = initial_loop_state(cfg)
    reconstruction = np.empty(samples.size)
    records: List[FrameRecord] = []

    for frame in frames(samples, cfg.frame_len):
        x = np.array(frame.samples, dtype=np.float64)
        models = adapt_models(
            state, frame.index, cfg, raw_frame=x, raw_history=frame.history(cfg.history_len)
        )
        state = _state_for_frame(state, models, mode)
        digest = state.digest()
        if cfg.trace_state:
            LOGGER.debug("encoder frame %d state %s", frame.index, digest)

        if mode is CodingMode.FORWARD:
            writer.write_floats(_forward_params(kind, models))

        lpc_error: Optional[float] = None
        mlp_error: Optional[float] = None
        if kind is PredictorKind.HYBRID:
            choice = choose_predictor(x, models.lpc, models.mlp, state)
            selection, codes, rec, state = choice.selection, choice.codes, choice.reconstructed, choice.state
            lpc_error, mlp_error = choice.lpc_error, choice.mlp_error
            writer.write(int(selection), 1)
        else:
            selection = Selection.LPC if kind is PredictorKind.LPC_ONLY else Selection.MLP
            trial = encode_frame(x, _committed_predictor(kind, mode, selection, models), state)
            codes, rec, state = trial.codes, trial.reconstructed, trial.state
            if trial.zero_fallback_at is not None:
                models.fallbacks.append("zero_predictor")

        writer.write_array(codes, cfg.nq)
        reconstruction[frame.start:frame.start + x.size] = rec
        committed = _squared_error(x, rec)
        if cfg.trace_state and mlp_error is not None:
            assert committed == min(lpc_error, mlp_error), "hybrid committed a losing trial"

        records.append(
            FrameRecord(
                index=frame.index,
                length=x.size,
                selection=selection,
                committed_error=committed,
                lpc_error=lpc_error,
                mlp_error=mlp_error,
                train_mse=models.train_mse,
                fallbacks=models.fallbacks,
                state_digest=digest,
            )
        )
        LOGGER.debug(
            "frame %d: %s, error %.3e", frame.index, selection.name, committed
        )

    stream = EncodedStream(
        header=make_header(cfg, samples.size, signal.source_bit_depth),
        payload=writer.getvalue(),
        payload_bits=writer.bit_count,
    )
    recon_signal = SignalBuffer(
        reconstruction, sample_rate_hz=signal.sample_rate_hz, source_bit_depth=signal.source_bit_depth
    )
    return EncodeReport(stream=stream, reconstruction=recon_signal, frames=records)


def encode(signal: SignalBuffer, cfg: CodecConfig) -> EncodedStream:
    return encode_with_report(signal, cfg).stream


def decoder_config(header: StreamHeader, local: Optional[CodecConfig] = None) -> CodecConfig:
    """Header fields on top of the decoder's own tunables; fails if the tunables disagree."""
    local = local or CodecConfig()
    cfg = replace(
        local,
        mode=header.mode.value,
        predictor=header.predictor.value,
        nq=header.nq,
        lpc_order=header.lpc_order,
        frame_len=header.frame_len,
        seed=header.seed,
    )
    if tunables_digest(cfg) != header.tunables_digest:
        raise DigestMismatchError(
            "stream was encoded with different quantizer/training tunables "
            f"(stream {header.tunables_digest:016x}, local {tunables_digest(cfg):016x})"
        )
    return cfg


def _read_forward_models(
    reader: bitstream.BitReader, cfg: CodecConfig, previous: LpcModel
) -> AdaptedModels:
    kind = cfg.predictor_kind
    params = reader.read_floats(bitstream.forward_param_count(kind, cfg.lpc_order))
    if not np.all(np.isfinite(params)):
        raise StreamError("non-finite predictor parameters in forward payload")
    models = AdaptedModels(lpc=previous, mlp=None)
    offset = 0
    if kind in (PredictorKind.LPC_ONLY, PredictorKind.HYBRID):
        coeffs = params[:cfg.lpc_order]
        models.lpc = LpcModel(cfg.lpc_order, coeffs, np.zeros(cfg.lpc_order), 0.0)
        offset = cfg.lpc_order
    if kind in (PredictorKind.MLP_ONLY, PredictorKind.HYBRID):
        models.mlp = MlpModel.from_vector(params[offset:])
    return models


def decode_with_report(
    stream: EncodedStream,
    cfg: Optional[CodecConfig] = None,
    sample_rate_hz: int = 8000,
) -> Tuple[SignalBuffer, List[FrameRecord]]:
    header = stream.header
    cfg = decoder_config(header, cfg)
    kind, mode = cfg.predictor_kind, cfg.coding_mode
    n, size = header.sample_count, header.frame_len

    reader = bitstream.BitReader(stream.payload)
    state = initial_loop_state(cfg)
    out = np.empty(n)
    records: List[FrameRecord] = []

    for index, start in enumerate(range(0, n, size)):
        length = min(size, n - start)
        if mode is CodingMode.FORWARD:
            models = _read_forward_models(reader, cfg, state.lpc)
        else:
            models = adapt_models(state, index, cfg)
        state = _state_for_frame(state, models, mode)
        digest = state.digest()
        if cfg.trace_state:
            LOGGER.debug("decoder frame %d state %s", index, digest)

        if kind is PredictorKind.HYBRID:
            selection = Selection(reader.read(1))
            if selection is Selection.MLP and models.mlp is None:
                raise StreamError(f"frame {index} selects the MLP but none is available")
        else:
            selection = Selection.LPC if kind is PredictorKind.LPC_ONLY else Selection.MLP
        codes = reader.read_array(length, cfg.nq)
        trial = decode_frame(codes, _committed_predictor(kind, mode, selection, models), state)
        state = trial.state
        out[start:start + length] = trial.reconstructed
        records.append(
            FrameRecord(
                index=index,
                length=length,
                selection=selection,
                committed_error=float("nan"),
                train_mse=models.train_mse,
                fallbacks=models.fallbacks,
                state_digest=digest,
            )
        )

    signal = SignalBuffer(out, sample_rate_hz=sample_rate_hz, source_bit_depth=header.source_bit_depth)
    return signal, records


def decode(stream: EncodedStream, cfg: Optional[CodecConfig] = None, sample_rate_hz: int = 8000) -> SignalBuffer:
    return decode_with_report(stream, cfg, sample_rate_hz)[0]
