"""PCM ingestion and emission, framing, and segmental SNR."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
import soundfile as sf

from .errors import SignalError
from .models import Frame, SegSnrReport, SignalBuffer

LOGGER = logging.getLogger(__name__)

PCM_FORMATS = ("raw16le", "wav")

# Container width of the integer WAV subtypes we accept.
_WAV_CONTAINER_BITS = {
    "PCM_S8": 8,
    "PCM_U8": 8,
    "PCM_16": 16,
    "PCM_24": 24,
    "PCM_32": 32,
}

ArrayLike = Union[SignalBuffer, np.ndarray]


def _as_array(x: ArrayLike) -> np.ndarray:
    if isinstance(x, SignalBuffer):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def to_pcm_ints(samples: np.ndarray, bit_depth: int) -> np.ndarray:
    """Scale to signed integers of ``bit_depth`` bits, rounding and saturating."""
    full_scale = float(1 << (bit_depth - 1))
    scaled = np.round(np.asarray(samples, dtype=np.float64) * full_scale)
    return np.clip(scaled, -full_scale, full_scale - 1).astype(np.int64)


def from_pcm_ints(values: np.ndarray, bit_depth: int) -> np.ndarray:
    full_scale = 1 << (bit_depth - 1)
    values = np.asarray(values, dtype=np.int64)
    if values.size and (values.min() < -full_scale or values.max() > full_scale - 1):
        raise SignalError(f"sample values exceed the declared {bit_depth}-bit range")
    return values.astype(np.float64) / float(full_scale)


def _read_raw16le(path: Path) -> np.ndarray:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise SignalError(f"cannot read {path}: {exc}") from None
    if len(data) % 2:
        raise SignalError(f"raw16le file has odd byte length: {path}")
    return np.frombuffer(data, dtype="<i2").astype(np.int64)


def _read_wav(path: Path) -> Tuple[np.ndarray, int]:
    try:
        info = sf.info(str(path))
    except RuntimeError as exc:
        raise SignalError(f"malformed wav header in {path}: {exc}") from None
    if info.channels != 1:
        raise SignalError(f"only mono wav is supported, {path} has {info.channels} channels")
    container = _WAV_CONTAINER_BITS.get(info.subtype)
    if container is None or info.format != "WAV":
        raise SignalError(f"wav must be integer PCM, got {info.format}/{info.subtype}")
    try:
        data, rate = sf.read(str(path), dtype="int32", always_2d=False)
    except RuntimeError as exc:
        raise SignalError(f"cannot read {path}: {exc}") from None
    # libsndfile left-justifies integers in int32; shift back to the stored value.
    return np.asarray(data, dtype=np.int64) >> (32 - container), int(rate)


def load_pcm(
    path: str | Path,
    format: str = "raw16le",
    source_bit_depth: int = 12,
    sample_rate_hz: int = 8000,
) -> SignalBuffer:
    """Read mono integer PCM and scale it by 1/2^(source_bit_depth-1).

    ``sample_rate_hz`` applies to raw input only; wav files carry their own rate.
    """
    path = Path(path)
    if format not in PCM_FORMATS:
        raise SignalError(f"unknown PCM format: {format}")
    if not path.is_file():
        raise SignalError(f"no such file: {path}")

    if format == "raw16le":
        if source_bit_depth > 16:
            raise SignalError("raw16le cannot hold more than 16 bits per sample")
        values = _read_raw16le(path)
    else:
        values, sample_rate_hz = _read_wav(path)

    samples = from_pcm_ints(values, source_bit_depth)
    LOGGER.debug("Loaded %d samples from %s (%d-bit)", samples.size, path, source_bit_depth)
    return SignalBuffer(samples, sample_rate_hz=sample_rate_hz, source_bit_depth=source_bit_depth)


def save_pcm(signal: SignalBuffer, path: str | Path, format: str = "raw16le") -> None:
    """Write ``signal`` at its source bit depth; values are clipped to the representable range."""
    path = Path(path)
    if format not in PCM_FORMATS:
        raise SignalError(f"unknown PCM format: {format}")
    bit_depth = signal.source_bit_depth
    values = to_pcm_ints(signal.samples, bit_depth)

    try:
        if format == "raw16le":
            if bit_depth > 16:
                raise SignalError("raw16le cannot hold more than 16 bits per sample")
            path.write_bytes(values.astype("<i2").tobytes())
            return
        if bit_depth <= 16:
            subtype, container = "PCM_16", 16
        elif bit_depth <= 24:
            subtype, container = "PCM_24", 24
        else:
            subtype, container = "PCM_32", 32
        data = (values << (32 - container)).astype(np.int32)
        sf.write(str(path), data, signal.sample_rate_hz, subtype=subtype, format="WAV")
    except (OSError, RuntimeError) as exc:
        raise SignalError(f"cannot write {path}: {exc}") from None


def frames(signal: ArrayLike, frame_len: int) -> List[Frame]:
    """Split into consecutive non-overlapping frames; the last one may be short."""
    if frame_len < 1:
        raise ValueError(f"frame_len must be >= 1, got {frame_len}")
    samples = _as_array(signal)
    return [
        Frame(index=i, start=start, samples=samples[start:start + frame_len], source=samples)
        for i, start in enumerate(range(0, samples.size, frame_len))
    ]


def energy_ratio_db(signal_energy: float, error_energy: float, clamp_db: Tuple[float, float]) -> float:
    """10·log10(signal/error) clamped; zero error hits the ceiling, zero signal the floor."""
    floor, ceiling = clamp_db
    if error_energy <= 0.0:
        return float(ceiling)
    if signal_energy <= 0.0:
        return float(floor)
    return float(np.clip(10.0 * np.log10(signal_energy / error_energy), floor, ceiling))


def segment_snrs(
    original: ArrayLike,
    decoded: ArrayLike,
    segment_len: int = 200,
    clamp_db: Tuple[float, float] = (0.0, 80.0),
) -> np.ndarray:
    x = _as_array(original)
    y = _as_array(decoded)
    if x.size != y.size:
        raise SignalError(f"length mismatch: {x.size} vs {y.size}")
    if segment_len < 1 or x.size < segment_len:
        raise SignalError(f"signal of {x.size} samples is shorter than one {segment_len}-sample segment")

    count = x.size // segment_len
    xs = x[:count * segment_len].reshape(count, segment_len)
    ds = xs - y[:count * segment_len].reshape(count, segment_len)
    signal_energy = np.sum(xs * xs, axis=1)
    error_energy = np.sum(ds * ds, axis=1)
    return np.array(
        [energy_ratio_db(s, e, clamp_db) for s, e in zip(signal_energy, error_energy)]
    )


def segsnr(
    original: ArrayLike,
    decoded: ArrayLike,
    segment_len: int = 200,
    clamp_db: Tuple[float, float] = (0.0, 80.0),
) -> SegSnrReport:
    """Mean and std of per-segment SNR over full segments; a trailing partial segment is dropped."""
    clamp_db = (float(clamp_db[0]), float(clamp_db[1]))
    snrs = segment_snrs(original, decoded, segment_len, clamp_db)
    return SegSnrReport(
        segsnr_db=float(np.mean(snrs)),
        std_db=float(np.std(snrs)),
        segment_count=int(snrs.size),
        segment_len=segment_len,
        clamp_db=clamp_db,
        segment_snrs=snrs,
    )
