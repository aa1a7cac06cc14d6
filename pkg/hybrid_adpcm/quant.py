"""Mid-rise residual quantizer with Jayant step-size adaptation."""
from __future__ import annotations

import math
from dataclasses import replace

from .config import QuantConfig
from .models import Code, QuantState


def initial_state(nq: int, quant: QuantConfig) -> QuantState:
    return QuantState(
        nq=nq,
        step=float(quant.step_init),
        step_min=float(quant.step_min),
        step_max=float(quant.step_max),
        multipliers=quant.table(nq),
    )


def quantize(e: float, state: QuantState) -> Code:
    """Sign of ``e`` (zero counts as positive) and floor(|e|/Δ), saturated at the top level."""
    sign = -1 if e < 0 else 1
    ratio = abs(e) / state.step
    if ratio >= state.levels:
        return Code(sign, state.levels - 1)
    return Code(sign, math.floor(ratio))


def dequantize(code: Code, state: QuantState) -> float:
    return code.sign * (code.magnitude + 0.5) * state.step


def adapt(state: QuantState, code: Code) -> QuantState:
    """Scale Δ by the multiplier of the code's magnitude level and clamp to the bounds."""
    step = state.step * state.multipliers[code.magnitude]
    return replace(state, step=min(max(step, state.step_min), state.step_max))
