import numpy as np
import pytest

from hybrid_adpcm import bitstream
from hybrid_adpcm.bitstream import BitReader, BitWriter, expected_payload_bits, pack_header, unpack_header
from hybrid_adpcm.errors import BadMagicError, StreamError, TruncatedStreamError
from hybrid_adpcm.models import CodingMode, EncodedStream, PredictorKind, StreamHeader


def _header(**overrides) -> StreamHeader:
    fields = dict(
        mode=CodingMode.BACKWARD,
        predictor=PredictorKind.HYBRID,
        nq=4,
        lpc_order=10,
        frame_len=100,
        seed=2 ** 64 - 1,
        sample_count=250,
        source_bit_depth=12,
        tunables_digest=0x0123456789ABCDEF,
    )
    fields.update(overrides)
    return StreamHeader(**fields)


def test_header_layout():
    data = pack_header(_header())
    assert len(data) == bitstream.HEADER.size == 37
    assert data[:4] == b"AHPC"
    assert data[4:6] == b"\x01\x00"
    assert unpack_header(data) == _header()


@pytest.mark.parametrize("mode", list(CodingMode))
@pytest.mark.parametrize("predictor", list(PredictorKind))
def test_header_enums(mode, predictor):
    header = _header(mode=mode, predictor=predictor, lpc_order=25 if predictor is PredictorKind.LPC_ONLY else 10)
    assert unpack_header(pack_header(header)) == header


def test_bad_magic():
    data = bytearray(pack_header(_header()))
    data[0] ^= 0xFF
    with pytest.raises(BadMagicError, match="not an AHPC stream"):
        unpack_header(bytes(data))
    with pytest.raises(BadMagicError):
        unpack_header(b"")


def test_short_header():
    with pytest.raises(TruncatedStreamError):
        unpack_header(pack_header(_header())[:20])


def test_unsupported_version_and_fields():
    data = bytearray(pack_header(_header()))
    data[4] = 2
    with pytest.raises(StreamError, match="version"):
        unpack_header(bytes(data))
    with pytest.raises(StreamError):
        unpack_header(pack_header(_header(nq=7)))
    data = bytearray(pack_header(_header()))
    data[6] = 9  # mode id
    with pytest.raises(StreamError):
        unpack_header(bytes(data))


def test_bit_writer_msb_first():
    writer = BitWriter()
    writer.write(1, 1)
    writer.write_array([0b1010, 0b0011], 4)
    assert writer.bit_count == 9
    assert writer.getvalue() == bytes([0b11010001, 0b10000000])


def test_bit_reader_inverts_writer(rng):
    values = rng.integers(0, 32, 333)
    writer = BitWriter()
    writer.write(0, 1)
    writer.write_array(values, 5)
    writer.write_floats([0.1, -np.pi, 1e-300])
    reader = BitReader(writer.getvalue())
    assert reader.read(1) == 0
    np.testing.assert_array_equal(reader.read_array(333, 5), values)
    np.testing.assert_array_equal(reader.read_floats(3), [0.1, -np.pi, 1e-300])


def test_bit_reader_truncation():
    reader = BitReader(b"\xff")
    reader.read_array(2, 4)
    with pytest.raises(TruncatedStreamError):
        reader.read(1)


def test_expected_payload_bits():
    assert expected_payload_bits(_header()) == 3 + 250 * 4
    assert expected_payload_bits(_header(predictor=PredictorKind.LPC_ONLY)) == 1000
    forward_hybrid = _header(mode=CodingMode.FORWARD)
    assert expected_payload_bits(forward_hybrid) == 3 * (1 + 64 * 35) + 1000
    forward_mlp = _header(mode=CodingMode.FORWARD, predictor=PredictorKind.MLP_ONLY)
    assert expected_payload_bits(forward_mlp) == 3 * 64 * 25 + 1000
    assert expected_payload_bits(_header(sample_count=0)) == 0


def test_from_bytes_checks_payload_length():
    header = _header(sample_count=10, predictor=PredictorKind.LPC_ONLY)
    payload = bytes(5)
    stream = bitstream.from_bytes(pack_header(header) + payload)
    assert stream == EncodedStream(header, payload, 40)
    with pytest.raises(TruncatedStreamError):
        bitstream.from_bytes(pack_header(header) + payload[:4])
    with pytest.raises(StreamError, match="trailing"):
        bitstream.from_bytes(pack_header(header) + payload + b"\x00")
