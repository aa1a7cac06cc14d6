from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .errors import SignalError


class CodingMode(str, Enum):
    BACKWARD = "backward"
    FORWARD = "forward"


class PredictorKind(str, Enum):
    LPC_ONLY = "lpc"
    MLP_ONLY = "mlp"
    HYBRID = "hybrid"


class Selection(IntEnum):
    """Value of the per-frame switch bit."""

    LPC = 0
    MLP = 1


def _frozen_array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


# --- Signal ---


@dataclass(frozen=True)
class SignalBuffer:
    """Mono waveform normalized to [-1, 1)."""

    samples: np.ndarray
    sample_rate_hz: int = 8000
    source_bit_depth: int = 12

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise SignalError(f"signal must be mono (1-d), got shape {samples.shape}")
        if samples.size:
            if not np.all(np.isfinite(samples)):
                raise SignalError("signal contains non-finite samples")
            if samples.min() < -1.0 or samples.max() >= 1.0:
                raise SignalError("samples must lie in [-1.0, 1.0)")
        if self.sample_rate_hz <= 0:
            raise SignalError(f"sample rate must be positive: {self.sample_rate_hz}")
        if not 8 <= self.source_bit_depth <= 32:
            raise SignalError(f"bit depth must be in 8..32: {self.source_bit_depth}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class Frame:
    """A view on one coding frame with access to the samples preceding it."""

    index: int
    start: int
    samples: np.ndarray
    source: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return int(self.samples.size)

    def history(self, order: int) -> np.ndarray:
        """The ``order`` samples before the frame, zero-filled before signal start."""
        out = np.zeros(order, dtype=np.float64)
        take = min(order, self.start)
        if take:
            out[order - take:] = self.source[self.start - take:self.start]
        return out


@dataclass(frozen=True)
class SegSnrReport:
    segsnr_db: float
    std_db: float
    segment_count: int
    segment_len: int = 200
    clamp_db: Tuple[float, float] = (0.0, 80.0)
    segment_snrs: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)


# --- Predictors ---


@dataclass(frozen=True)
class LpcModel:
    """Order-p predictor x̂(n) = Σ a_i·x(n−i)."""

    order: int
    coeffs: np.ndarray
    reflection: np.ndarray
    residual_energy: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", _frozen_array(self.coeffs, 1))
        object.__setattr__(self, "reflection", _frozen_array(self.reflection, 1))
        if self.coeffs.size != self.order or self.reflection.size != self.order:
            raise ValueError(f"LPC arrays must have length {self.order}")

    @classmethod
    def zero(cls, order: int) -> "LpcModel":
        return cls(order, np.zeros(order), np.zeros(order), 0.0)


@dataclass(frozen=True)
class MlpModel:
    """10x2x1 perceptron: tanh hidden layer, linear output.

    Flat parameter order (used by the Jacobian and the LM update alike):
    ``w_hidden[0, 0..9], w_hidden[1, 0..9], b_hidden[0..1], w_out[0..1], b_out``.
    """

    w_hidden: np.ndarray
    b_hidden: np.ndarray
    w_out: np.ndarray
    b_out: float

    N_INPUTS = 10
    N_HIDDEN = 2
    PARAM_COUNT = N_INPUTS * N_HIDDEN + N_HIDDEN + N_HIDDEN + 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "w_hidden", _frozen_array(self.w_hidden, 2))
        object.__setattr__(self, "b_hidden", _frozen_array(self.b_hidden, 1))
        object.__setattr__(self, "w_out", _frozen_array(self.w_out, 1))
        object.__setattr__(self, "b_out", float(self.b_out))
        if self.w_hidden.shape != (self.N_HIDDEN, self.N_INPUTS):
            raise ValueError(f"w_hidden must be {self.N_HIDDEN}x{self.N_INPUTS}")
        if self.b_hidden.size != self.N_HIDDEN or self.w_out.size != self.N_HIDDEN:
            raise ValueError(f"b_hidden and w_out must have {self.N_HIDDEN} entries")
        if not np.all(np.isfinite(self.to_vector())):
            raise ValueError("MLP parameters must be finite")

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.w_hidden.ravel(), self.b_hidden, self.w_out, [self.b_out]]
        )

    @classmethod
    def from_vector(cls, theta: np.ndarray) -> "MlpModel":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != cls.PARAM_COUNT:
            raise ValueError(f"expected {cls.PARAM_COUNT} parameters, got {theta.size}")
        n_w = cls.N_INPUTS * cls.N_HIDDEN
        h = cls.N_HIDDEN
        return cls(
            w_hidden=theta[:n_w].reshape(h, cls.N_INPUTS),
            b_hidden=theta[n_w:n_w + h],
            w_out=theta[n_w + h:n_w + 2 * h],
            b_out=float(theta[-1]),
        )

    @classmethod
    def zero(cls) -> "MlpModel":
        return cls.from_vector(np.zeros(cls.PARAM_COUNT))


@dataclass(frozen=True)
class TrainSet:
    """One-step-ahead training pairs; each input row is the 10 past samples, newest last."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", _frozen_array(self.inputs, 2))
        object.__setattr__(self, "targets", _frozen_array(self.targets, 1))
        if self.inputs.shape[0] != self.targets.size:
            raise ValueError("inputs and targets must have equal length")

    def __len__(self) -> int:
        return int(self.targets.size)


# --- Quantizer ---


@dataclass(frozen=True)
class QuantState:
    nq: int
    step: float
    step_min: float
    step_max: float
    multipliers: Tuple[float, ...]

    @property
    def levels(self) -> int:
        """Number of magnitude levels, 2^(nq-1)."""
        return 1 << (self.nq - 1)


class Code(NamedTuple):
    """Quantizer output; packs to nq bits as sign bit (1 = negative) then magnitude MSB first."""

    sign: int
    magnitude: int

    def pack(self, nq: int) -> int:
        return ((1 if self.sign < 0 else 0) << (nq - 1)) | self.magnitude

    @classmethod
    def unpack(cls, value: int, nq: int) -> "Code":
        sign = -1 if (value >> (nq - 1)) & 1 else 1
        return cls(sign, value & ((1 << (nq - 1)) - 1))


# --- Bitstream ---


@dataclass(frozen=True)
class StreamHeader:
    mode: CodingMode
    predictor: PredictorKind
    nq: int
    lpc_order: int
    frame_len: int
    seed: int
    sample_count: int
    source_bit_depth: int
    tunables_digest: int
    version: int = 1


@dataclass(frozen=True)
class EncodedStream:
    header: StreamHeader
    payload: bytes
    payload_bits: int

    @property
    def frame_count(self) -> int:
        n, L = self.header.sample_count, self.header.frame_len
        return (n + L - 1) // L

    def bits_per_sample(self) -> float:
        if self.header.sample_count == 0:
            return 0.0
        return self.payload_bits / self.header.sample_count


# --- Codec loop ---


@dataclass(frozen=True)
class LoopState:
    """Everything encoder and decoder must agree on before a frame."""

    history: np.ndarray
    lpc: LpcModel
    mlp: Optional[MlpModel]
    quant: QuantState
    previous_frame: np.ndarray
    previous_history: np.ndarray

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.history).tobytes())
        h.update(np.float64(self.quant.step).tobytes())
        h.update(np.ascontiguousarray(self.lpc.coeffs).tobytes())
        if self.mlp is not None:
            h.update(self.mlp.to_vector().tobytes())
        h.update(np.ascontiguousarray(self.previous_frame).tobytes())
        return h.hexdigest()[:16]


@dataclass
class FrameRecord:
    index: int
    length: int
    selection: Selection
    committed_error: float
    lpc_error: Optional[float] = None
    mlp_error: Optional[float] = None
    train_mse: Optional[float] = None
    fallbacks: List[str] = field(default_factory=list)
    state_digest: str = ""


# --- Evaluation ---


@dataclass
class CorpusEntry:
    path: Path
    format: str
    bit_depth: int
    label: str


@dataclass
class CorpusManifest:
    root: Path
    entries: List[CorpusEntry] = field(default_factory=list)


@dataclass
class EvalRow:
    kind: str  # "file" | "mean_over_files" | "pooled_segments"
    label: str
    mode: str
    predictor: str
    lpc_order: int
    nq: int
    frame_len: int
    segsnr_db: Optional[float] = None
    std_db: Optional[float] = None
    segment_count: int = 0
    mlp_usage_fraction: Optional[float] = None
    encode_wall_time: Optional[float] = None
    error: str = ""

    def sort_key(self) -> tuple:
        return (
            self.mode,
            self.predictor,
            self.lpc_order,
            self.nq,
            self.frame_len,
            self.kind != "file",
            self.kind,
            self.label,
        )
