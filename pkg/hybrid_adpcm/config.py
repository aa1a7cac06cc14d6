from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Tuple

from .errors import ConfigError
from .models import CodingMode, PredictorKind

MLP_INPUT_ORDER = 10


def _default_multipliers() -> Dict[str, List[float]]:
    # Jayant & Noll step multipliers, indexed by magnitude level.
    four = [0.9, 0.9, 0.9, 0.9, 1.2, 1.6, 2.0, 2.4]
    return {
        "2": [0.8, 1.6],
        "3": [0.9, 0.9, 1.25, 1.75],
        "4": four,
        "5": [m for m in four for _ in range(2)],
    }


@dataclass
class QuantConfig:
    step_init: float = 2.0 ** -7
    step_min: float = 2.0 ** -15
    step_max: float = 0.5
    multipliers: Dict[str, List[float]] = field(default_factory=_default_multipliers)

    def table(self, nq: int) -> Tuple[float, ...]:
        try:
            return tuple(float(m) for m in self.multipliers[str(nq)])
        except KeyError:
            raise ConfigError(f"no multiplier table for nq={nq}") from None


@dataclass
class TrainConfig:
    """Levenberg-Marquardt and multistart settings for the MLP predictor."""

    epochs: int = 6
    n_starts: int = 5
    lambda_init: float = 1e-2
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    lambda_max: float = 1e10
    max_retries: int = 10
    init_scale: float = 0.2
    seed: int = 0
    workers: int = 1  # threads for multistart; does not affect results


@dataclass
class CodecConfig:
    mode: str = CodingMode.BACKWARD.value
    predictor: str = PredictorKind.HYBRID.value
    lpc_order: int = 10
    lpc_window: str = "rectangular"  # or "hamming"
    frame_len: int = 100
    nq: int = 4
    seed: int = 0
    trace_state: bool = False
    quant: QuantConfig = field(default_factory=QuantConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def coding_mode(self) -> CodingMode:
        return CodingMode(self.mode)

    @property
    def predictor_kind(self) -> PredictorKind:
        return PredictorKind(self.predictor)

    @property
    def history_len(self) -> int:
        return max(self.lpc_order, MLP_INPUT_ORDER)

    def effective_train(self) -> TrainConfig:
        """TrainConfig keyed by the stream seed."""
        return replace(self.train, seed=self.seed)

    def validate(self) -> "CodecConfig":
        try:
            CodingMode(self.mode)
            kind = PredictorKind(self.predictor)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 2 <= self.nq <= 5:
            raise ConfigError(f"nq must be in 2..5, got {self.nq}")
        if self.lpc_order < 1 or self.lpc_order > 255:
            raise ConfigError(f"lpc_order must be in 1..255, got {self.lpc_order}")
        if kind is PredictorKind.HYBRID and self.lpc_order != 10:
            raise ConfigError("hybrid predictor requires lpc_order = 10")
        if self.frame_len < MLP_INPUT_ORDER or self.frame_len > 0xFFFF:
            raise ConfigError(
                f"frame_len must be in {MLP_INPUT_ORDER}..65535, got {self.frame_len}"
            )
        if self.lpc_window not in ("rectangular", "hamming"):
            raise ConfigError(f"unknown LPC window: {self.lpc_window}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        _validate_quant(self.quant, self.nq)
        _validate_train(self.train)
        return self


@dataclass
class EvalConfig:
    segment_len: int = 200
    clamp_db: Tuple[float, float] = (0.0, 80.0)
    workers: int = 1
    sweep_lengths: List[int] = field(default_factory=lambda: list(range(10, 301, 10)))


def _validate_quant(quant: QuantConfig, nq: int) -> None:
    table = quant.table(nq)
    if len(table) != 1 << (nq - 1):
        raise ConfigError(f"multiplier table for nq={nq} must have {1 << (nq - 1)} entries")
    if any(m <= 0 for m in table):
        raise ConfigError("multipliers must be positive")
    if any(b < a for a, b in zip(table, table[1:])):
        raise ConfigError("multipliers must be non-decreasing in magnitude level")
    if not 0 < quant.step_min <= quant.step_max:
        raise ConfigError("step bounds must satisfy 0 < step_min <= step_max")
    if not quant.step_min <= quant.step_init <= quant.step_max:
        raise ConfigError("step_init must lie within [step_min, step_max]")


def _validate_train(train: TrainConfig) -> None:
    if train.epochs < 1 or train.n_starts < 1:
        raise ConfigError("epochs and n_starts must be >= 1")
    if not train.lambda_down < 1 < train.lambda_up:
        raise ConfigError("LM schedule requires lambda_down < 1 < lambda_up")
    if train.lambda_down <= 0 or train.lambda_init <= 0 or train.lambda_max <= 0:
        raise ConfigError("LM damping parameters must be positive")
    if train.init_scale <= 0:
        raise ConfigError("init_scale must be positive")
    if train.max_retries < 1:
        raise ConfigError("max_retries must be >= 1")


def _merge(target: Any, data: Dict[str, Any]) -> None:
    for key, value in data.items():
        if not hasattr(target, key):
            continue
        current = getattr(target, key)
        if isinstance(value, dict) and hasattr(current, "__dataclass_fields__"):
            _merge(current, value)
        else:
            setattr(target, key, value)


def load_config(path: str | Path | None) -> Tuple[CodecConfig, EvalConfig]:
    """Load codec and evaluation settings from JSON, falling back to defaults.

    The file holds the codec keys at top level plus an optional ``eval`` section.
    """
    codec, evaluation = CodecConfig(), EvalConfig()
    if path is None:
        return codec, evaluation

    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None

    eval_data = data.pop("eval", None) or {}
    _merge(codec, data)
    _merge(evaluation, eval_data)
    evaluation.clamp_db = tuple(evaluation.clamp_db)
    return codec, evaluation


def _canonical_tunables(cfg: CodecConfig) -> str:
    # JSON may deliver 10 where the dataclass default is 10.0; normalize by declared type.
    train = {
        f.name: repr(float(getattr(cfg.train, f.name)))
        if f.type == "float"
        else int(getattr(cfg.train, f.name))
        for f in fields(cfg.train)
        if f.name not in ("seed", "workers")
    }
    payload = {
        "lpc_window": cfg.lpc_window,
        "multipliers": [repr(float(m)) for m in cfg.quant.table(cfg.nq)],
        "step_init": repr(float(cfg.quant.step_init)),
        "step_max": repr(float(cfg.quant.step_max)),
        "step_min": repr(float(cfg.quant.step_min)),
        "train": train,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def fnv1a_64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def tunables_digest(cfg: CodecConfig) -> int:
    """Digest of every setting the decoder must share with the encoder but that the header does not carry."""
    return fnv1a_64(_canonical_tunables(cfg).encode("utf-8"))
