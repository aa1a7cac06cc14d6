"""Synthetic test signals: AR processes, saturated AR processes and voiced-like pulse trains."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.signal

from .errors import SignalError
from .models import CorpusEntry, SignalBuffer
from .signal import from_pcm_ints, save_pcm, to_pcm_ints

LOGGER = logging.getLogger(__name__)

SIGNAL_KINDS = ("noise", "ar", "tanh_ar", "voiced")


def ar_from_poles(poles: Sequence[complex]) -> np.ndarray:
    """Predictor coefficients a_1..a_p of x(n) = Σ a_i x(n-i) + e(n) with the given poles."""
    poly = np.real(np.poly(np.asarray(poles)))
    return -poly[1:]


def random_stable_ar(order: int, rng: np.random.Generator, max_radius: float = 0.95) -> np.ndarray:
    """Random AR(order) coefficients from conjugate pole pairs inside ``max_radius``."""
    poles: List[complex] = []
    for _ in range(order // 2):
        radius = rng.uniform(0.6, max_radius)
        angle = rng.uniform(0.05 * np.pi, 0.95 * np.pi)
        pole = radius * np.exp(1j * angle)
        poles.extend([pole, np.conj(pole)])
    if order % 2:
        poles.append(rng.uniform(-max_radius, max_radius))
    return ar_from_poles(poles)


def ar_process(
    n: int,
    coeffs: Sequence[float],
    rng: np.random.Generator,
    innovation_std: float = 1.0,
    burn_in: int = 500,
) -> np.ndarray:
    a = np.asarray(coeffs, dtype=np.float64)
    e = rng.normal(0.0, innovation_std, n + burn_in)
    x = scipy.signal.lfilter([1.0], np.concatenate([[1.0], -a]), e)
    return x[burn_in:]


def linear_gain(coeffs: Sequence[float], length: int = 4096) -> float:
    """Output/innovation standard deviation ratio of the all-pole filter, from its impulse response."""
    a = np.asarray(coeffs, dtype=np.float64)
    impulse = np.zeros(length)
    impulse[0] = 1.0
    h = scipy.signal.lfilter([1.0], np.concatenate([[1.0], -a]), impulse)
    return float(np.sqrt(h @ h))


def tanh_ar_process(
    n: int,
    coeffs: Sequence[float],
    rng: np.random.Generator,
    drive: float = 2.5,
    burn_in: int = 500,
) -> np.ndarray:
    """x(n) = tanh(Σ a_i x(n-i) + e(n)), saturation inside the recursion.

    The innovation is scaled so that the same recursion without the tanh would
    have standard deviation ``drive``; above 1 the state spends much of its time
    in saturation and the one-step predictor is far from linear.
    """
    a = np.asarray(coeffs, dtype=np.float64)
    p = a.size
    e = rng.normal(0.0, drive / linear_gain(a), n + burn_in)
    x = np.zeros(p + n + burn_in)
    taps = a[::-1]
    for t in range(n + burn_in):
        x[p + t] = np.tanh(np.dot(taps, x[t:t + p]) + e[t])
    return x[p + burn_in:]


def voiced(
    n: int,
    rng: np.random.Generator,
    sample_rate_hz: int = 8000,
    f0_hz: float = 120.0,
    formants_hz: Sequence[float] = (700.0, 1220.0, 2600.0),
    bandwidth_hz: float = 90.0,
    jitter: float = 0.01,
) -> np.ndarray:
    """Glottal-like pulse train with jittered period through an all-pole vocal-tract filter."""
    excitation = np.zeros(n)
    t = 0.0
    while t < n:
        excitation[int(t)] = 1.0
        t += sample_rate_hz / f0_hz * (1.0 + jitter * rng.standard_normal())
    excitation += 0.01 * rng.standard_normal(n)
    radius = np.exp(-np.pi * bandwidth_hz / sample_rate_hz)
    poles: List[complex] = []
    for f in formants_hz:
        pole = radius * np.exp(2j * np.pi * f / sample_rate_hz)
        poles.extend([pole, np.conj(pole)])
    a = ar_from_poles(poles)
    return scipy.signal.lfilter([1.0], np.concatenate([[1.0], -a]), excitation)


def normalize(x: np.ndarray, peak: float = 0.9) -> np.ndarray:
    top = np.max(np.abs(x)) if x.size else 0.0
    if top == 0:
        return np.zeros_like(x)
    return x * (peak / top)


def make_signal(
    kind: str,
    n: int,
    rng: np.random.Generator,
    sample_rate_hz: int = 8000,
    bit_depth: int = 12,
    order: int = 10,
    peak: float = 0.9,
) -> SignalBuffer:
    """One synthetic signal, normalized and quantized to ``bit_depth`` like a real recording."""
    if kind == "noise":
        x = rng.standard_normal(n)
    elif kind == "ar":
        x = ar_process(n, random_stable_ar(order, rng), rng)
    elif kind == "tanh_ar":
        x = tanh_ar_process(n, random_stable_ar(order, rng), rng)
    elif kind == "voiced":
        x = voiced(n, rng, sample_rate_hz, f0_hz=rng.uniform(90.0, 220.0))
    else:
        raise ValueError(f"unknown signal kind {kind!r}; expected one of {SIGNAL_KINDS}")
    samples = from_pcm_ints(to_pcm_ints(normalize(x, peak), bit_depth), bit_depth)
    return SignalBuffer(samples, sample_rate_hz=sample_rate_hz, source_bit_depth=bit_depth)


def generate_corpus(
    out_dir: Path,
    per_kind: int = 5,
    duration_s: float = 2.0,
    seed: int = 0,
    kinds: Sequence[str] = SIGNAL_KINDS,
    sample_rate_hz: int = 8000,
    bit_depth: int = 12,
    manifest_name: Optional[str] = "manifest.csv",
) -> List[CorpusEntry]:
    """Write ``per_kind`` wav files per kind and, optionally, a manifest beside them."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SignalError(f"cannot create {out_dir}: {exc}") from None
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    entries: List[CorpusEntry] = []
    counters: Dict[str, int] = {}
    for kind in kinds:
        for _ in range(per_kind):
            idx = counters.get(kind, 0)
            counters[kind] = idx + 1
            label = f"{kind}_{idx:02d}"
            path = out_dir / f"{label}.wav"
            save_pcm(make_signal(kind, n, rng, sample_rate_hz, bit_depth), path, "wav")
            entries.append(CorpusEntry(path=path, format="wav", bit_depth=bit_depth, label=label))
    if manifest_name:
        lines = [f"{e.path.name},{e.format},{e.bit_depth},{e.label}" for e in entries]
        try:
            (out_dir / manifest_name).write_text("\n".join(lines) + "\n", encoding="utf-8")
        except OSError as exc:
            raise SignalError(f"cannot write {out_dir / manifest_name}: {exc}") from None
    LOGGER.info("Wrote %d synthetic signals to %s", len(entries), out_dir)
    return entries
