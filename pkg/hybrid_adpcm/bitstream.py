"""Stream header and bit-packed frame payload.

Layout (integers little-endian)::

    magic "AHPC" | version u16 | mode u8 | predictor u8 | nq u8 | lpc_order u8
    | frame_len u16 | seed u64 | sample_count u64 | source_bit_depth u8
    | tunables digest u64 | payload bits, zero-padded to a byte at the end only

Per frame the payload holds, in order: the forward-mode parameters (float64
each, bytes of the little-endian encoding written MSB first), the selection
bit (hybrid only), then one nq-bit code per sample.
"""
from __future__ import annotations

import struct
from typing import Iterable, List

import numpy as np

from .errors import BadMagicError, StreamError, TruncatedStreamError
from .models import CodingMode, EncodedStream, MlpModel, PredictorKind, StreamHeader

MAGIC = b"AHPC"
VERSION = 1
HEADER = struct.Struct("<4sHBBBBHQQBQ")

_MODE_IDS = {CodingMode.BACKWARD: 0, CodingMode.FORWARD: 1}
_PREDICTOR_IDS = {PredictorKind.LPC_ONLY: 0, PredictorKind.MLP_ONLY: 1, PredictorKind.HYBRID: 2}


class BitWriter:
    def __init__(self) -> None:
        self._chunks: List[np.ndarray] = []
        self.bit_count = 0

    def write(self, value: int, nbits: int) -> None:
        self.write_array(np.array([value], dtype=np.uint64), nbits)

    def write_array(self, values: Iterable[int], nbits: int) -> None:
        """Append each value as ``nbits`` bits, most significant first."""
        values = np.asarray(values, dtype=np.uint64)
        if values.size == 0 or nbits == 0:
            return
        shifts = np.arange(nbits, dtype=np.uint64)[::-1]
        bits = ((values[:, None] >> shifts) & np.uint64(1)).astype(np.uint8).ravel()
        self._chunks.append(bits)
        self.bit_count += bits.size

    def write_floats(self, values: Iterable[float]) -> None:
        raw = np.asarray(list(values), dtype="<f8").tobytes()
        self.write_array(np.frombuffer(raw, dtype=np.uint8), 8)

    def getvalue(self) -> bytes:
        if not self._chunks:
            return b""
        return np.packbits(np.concatenate(self._chunks)).tobytes()


class BitReader:
    def __init__(self, data: bytes) -> None:
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        self.position = 0

    def _take(self, count: int) -> np.ndarray:
        end = self.position + count
        if end > self._bits.size:
            raise TruncatedStreamError(
                f"payload ends at bit {self._bits.size}, needed {end}"
            )
        chunk = self._bits[self.position:end]
        self.position = end
        return chunk

    def read(self, nbits: int) -> int:
        return int(self.read_array(1, nbits)[0])

    def read_array(self, count: int, nbits: int) -> np.ndarray:
        if count == 0:
            return np.zeros(0, dtype=np.int64)
        bits = self._take(count * nbits).reshape(count, nbits).astype(np.int64)
        weights = 1 << np.arange(nbits - 1, -1, -1, dtype=np.int64)
        return bits @ weights

    def read_floats(self, count: int) -> np.ndarray:
        raw = self.read_array(count * 8, 8).astype(np.uint8).tobytes()
        return np.frombuffer(raw, dtype="<f8").copy()


def forward_param_count(predictor: PredictorKind, lpc_order: int) -> int:
    """Float64 values transmitted per frame in forward mode."""
    count = 0
    if predictor in (PredictorKind.LPC_ONLY, PredictorKind.HYBRID):
        count += lpc_order
    if predictor in (PredictorKind.MLP_ONLY, PredictorKind.HYBRID):
        count += MlpModel.PARAM_COUNT
    return count


def expected_payload_bits(header: StreamHeader) -> int:
    n, size = header.sample_count, header.frame_len
    frame_count = (n + size - 1) // size
    per_frame = 0
    if header.predictor is PredictorKind.HYBRID:
        per_frame += 1
    if header.mode is CodingMode.FORWARD:
        per_frame += 64 * forward_param_count(header.predictor, header.lpc_order)
    return frame_count * per_frame + n * header.nq


def pack_header(header: StreamHeader) -> bytes:
    return HEADER.pack(
        MAGIC,
        header.version,
        _MODE_IDS[header.mode],
        _PREDICTOR_IDS[header.predictor],
        header.nq,
        header.lpc_order,
        header.frame_len,
        header.seed,
        header.sample_count,
        header.source_bit_depth,
        header.tunables_digest,
    )


def unpack_header(data: bytes) -> StreamHeader:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("not an AHPC stream")
    if len(data) < HEADER.size:
        raise TruncatedStreamError(f"header needs {HEADER.size} bytes, got {len(data)}")
    (_, version, mode_id, predictor_id, nq, lpc_order, frame_len, seed,
     sample_count, bit_depth, digest) = HEADER.unpack_from(data)
    if version != VERSION:
        raise StreamError(f"unsupported stream version {version}")
    modes = {v: k for k, v in _MODE_IDS.items()}
    predictors = {v: k for k, v in _PREDICTOR_IDS.items()}
    if mode_id not in modes or predictor_id not in predictors:
        raise StreamError(f"bad mode/predictor ids {mode_id}/{predictor_id}")
    if not 2 <= nq <= 5 or frame_len == 0 or lpc_order == 0:
        raise StreamError("header fields out of range")
    return StreamHeader(
        mode=modes[mode_id],
        predictor=predictors[predictor_id],
        nq=nq,
        lpc_order=lpc_order,
        frame_len=frame_len,
        seed=seed,
        sample_count=sample_count,
        source_bit_depth=bit_depth,
        tunables_digest=digest,
        version=version,
    )


def to_bytes(stream: EncodedStream) -> bytes:
    return pack_header(stream.header) + stream.payload


def from_bytes(data: bytes) -> EncodedStream:
    header = unpack_header(data)
    payload = bytes(data[HEADER.size:])
    bits = expected_payload_bits(header)
    needed = (bits + 7) // 8
    if len(payload) < needed:
        raise TruncatedStreamError(
            f"payload has {len(payload)} bytes, header implies {needed}"
        )
    if len(payload) > needed:
        raise StreamError(f"{len(payload) - needed} unexpected trailing bytes")
    return EncodedStream(header=header, payload=payload, payload_bits=bits)
