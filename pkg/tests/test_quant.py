import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from hybrid_adpcm.config import QuantConfig
from hybrid_adpcm.models import Code, QuantState
from hybrid_adpcm.quant import adapt, dequantize, initial_state, quantize

NQS = [2, 3, 4, 5]


def _state(nq: int = 4, step: float = 0.01) -> QuantState:
    return QuantState(nq, step, 2.0 ** -15, 0.5, QuantConfig().table(nq))


def test_quantize_examples():
    q = _state(4, 0.01)
    assert quantize(0.034, q) == Code(1, 3)
    assert quantize(-0.5, q) == Code(-1, 7)
    assert quantize(0.0, q) == Code(1, 0)
    assert quantize(-0.0, q) == Code(1, 0)


def test_dequantize_examples():
    q = _state(4, 0.01)
    assert dequantize(Code(1, 3), q) == pytest.approx(0.035)
    assert dequantize(Code(-1, 7), q) == pytest.approx(-0.075)
    assert dequantize(Code(1, 0), q) == pytest.approx(0.005)


def test_adapt_examples():
    assert adapt(_state(4, 0.01), Code(1, 0)).step == pytest.approx(0.009)
    assert adapt(_state(4, 0.01), Code(-1, 7)).step == pytest.approx(0.024)
    floor = adapt(_state(4, 2.0 ** -15), Code(1, 0))
    assert floor.step == 2.0 ** -15
    ceiling = adapt(_state(4, 0.5), Code(1, 7))
    assert ceiling.step == 0.5


def test_initial_state_from_config():
    q = initial_state(3, QuantConfig())
    assert q.step == 2.0 ** -7
    assert q.levels == 4
    assert q.multipliers == (0.9, 0.9, 1.25, 1.75)


def test_quantize_saturates_huge_residuals():
    q = _state(2, 2.0 ** -15)
    assert quantize(1e300, q) == Code(1, 1)
    assert quantize(-math.inf, q) == Code(-1, 1)


@pytest.mark.parametrize("nq", NQS)
def test_code_packing_covers_every_value(nq):
    for value in range(1 << nq):
        code = Code.unpack(value, nq)
        assert code.sign in (-1, 1)
        assert 0 <= code.magnitude < 1 << (nq - 1)
        assert code.pack(nq) == value
    # sign bit first, 1 = negative
    assert Code(-1, 0).pack(nq) == 1 << (nq - 1)


@pytest.mark.parametrize("nq", NQS)
def test_requantizing_a_level_returns_its_code(nq):
    for step in (2.0 ** -15, 0.003, 0.5):
        q = _state(nq, step)
        for value in range(1 << nq):
            code = Code.unpack(value, nq)
            assert quantize(dequantize(code, q), q) == code


@pytest.mark.parametrize("nq", NQS)
def test_reconstruction_error_bound(nq):
    for step in (2.0 ** -15, 0.001, 0.04, 0.5):
        q = _state(nq, step)
        levels = 1 << (nq - 1)
        for e in np.linspace(-2 * levels * step, 2 * levels * step, 801):
            err = abs(e - dequantize(quantize(e, q), q))
            if abs(e) < levels * step:
                assert err <= step / 2 + 1e-12 * max(1.0, abs(e))
            else:
                assert err <= abs(e) - (levels - 0.5) * step + 1e-12


@given(
    nq=st.sampled_from(NQS),
    e=st.floats(min_value=-4.0, max_value=4.0, allow_nan=False),
    step=st.floats(min_value=2.0 ** -15, max_value=0.5),
)
def test_quantizer_is_odd_symmetric(nq, e, step):
    assume(e != 0.0)
    q = _state(nq, step)
    pos, neg = quantize(abs(e), q), quantize(-abs(e), q)
    assert pos.magnitude == neg.magnitude
    assert dequantize(pos, q) == -dequantize(neg, q)


@given(
    nq=st.sampled_from(NQS),
    values=st.lists(st.integers(min_value=0, max_value=31), min_size=1, max_size=200),
)
def test_step_stays_within_bounds(nq, values):
    q = initial_state(nq, QuantConfig())
    for v in values:
        q = adapt(q, Code.unpack(v % (1 << nq), nq))
        assert 2.0 ** -15 <= q.step <= 0.5


@pytest.mark.parametrize("nq", NQS)
def test_step_bounds_over_long_random_walk(nq):
    gen = np.random.default_rng(nq)
    q = initial_state(nq, QuantConfig())
    for v in gen.integers(0, 1 << nq, 20000):
        q = adapt(q, Code.unpack(int(v), nq))
        assert 2.0 ** -15 <= q.step <= 0.5


@pytest.mark.acceptance
def test_step_bounds_over_a_million_codes():
    gen = np.random.default_rng(0)
    q = initial_state(4, QuantConfig())
    lo, hi = q.step, q.step
    for v in gen.integers(0, 16, 1_000_000):
        q = adapt(q, Code.unpack(int(v), 4))
        lo, hi = min(lo, q.step), max(hi, q.step)
    assert lo >= 2.0 ** -15
    assert hi <= 0.5
