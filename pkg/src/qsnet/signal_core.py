"""Shared numeric types, Gaussian symbol sources, TDM framing and SNU calibration.

Conventions used throughout the simulator:

* Quadrature values are expressed in shot-noise units (SNU): one vacuum
  quadrature fluctuation has variance 1 after matched-filter demodulation.
* A symbol (x, p) is the complex amplitude of one coherent state; a source of
  modulation variance ``v_a`` draws x and p independently from N(0, v_a / 2),
  so Var(x) + Var(p) = v_a.
* A `ComplexWaveform` stores the field envelope in raw sample units together
  with ``snu_scale``, the raw per-sample variance of one vacuum quadrature
  unit.  For a waveform produced by the pulse-shaping chain this equals the
  number of samples per symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .errors import InsufficientData, InvalidArgument

# Slot kinds in a framed symbol stream.
SLOT_SYNC = 0
SLOT_PILOT = 1
SLOT_QUANTUM = 2

_SYNC_WORD_SEED = 0x51AD
DEFAULT_SYNC_WORD_LEN = 64


@dataclass
class ComplexWaveform:
    """Uniformly sampled complex baseband/passband signal.

    Attributes:
        samples: complex field envelope in raw sample units.
        sample_rate: sampling rate in Hz.
        snu_scale: raw per-sample variance of one vacuum quadrature unit.
    """

    samples: np.ndarray
    sample_rate: float
    snu_scale: float = 1.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.size == 0:
            raise InvalidArgument("waveform must contain at least one sample")
        if self.sample_rate <= 0:
            raise InvalidArgument("sample_rate must be positive")
        if self.snu_scale <= 0:
            raise InvalidArgument("snu_scale must be positive")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def power(self) -> float:
        """Mean |sample|^2 in raw units."""
        return float(np.mean(np.abs(self.samples) ** 2))


@dataclass
class SymbolSequence:
    """Pair of Gaussian quadrature sequences with their nominal variance (SNU)."""

    x: np.ndarray
    p: np.ndarray
    variance: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.x.shape != self.p.shape:
            raise InvalidArgument("x and p must have equal length")
        if self.variance < 0:
            raise InvalidArgument("variance must be non-negative")

    def __len__(self) -> int:
        return self.x.size

    @property
    def complex_amplitudes(self) -> np.ndarray:
        return self.x + 1j * self.p


def gaussian_symbols(n: int, variance: float, seed: int) -> SymbolSequence:
    """Draw n zero-mean Gaussian symbols of total modulation variance `variance`.

    Each quadrature is N(0, variance / 2) so the coherent amplitudes satisfy
    E|x + jp|^2 = variance.  Bitwise reproducible for a fixed seed.
    """
    if n < 1:
        raise InvalidArgument("n must be >= 1")
    if variance <= 0:
        raise InvalidArgument("variance must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    sigma = np.sqrt(variance / 2.0)
    x = rng.normal(0.0, sigma, size=n)
    p = rng.normal(0.0, sigma, size=n)
    return SymbolSequence(x=x, p=p, variance=variance)


def default_sync_word(length: int = DEFAULT_SYNC_WORD_LEN,
                      amplitude: float = 1.0) -> np.ndarray:
    """Fixed pseudo-random QPSK-like pattern with a sharp correlation peak.

    The pattern is a deterministic constant of the library (seeded PRNG), so
    every transmitter and receiver agrees on it.
    """
    rng = np.random.Generator(np.random.PCG64(_SYNC_WORD_SEED))
    phases = rng.integers(0, 4, size=length) * (np.pi / 2.0) + np.pi / 4.0
    return amplitude * np.exp(1j * phases)


@dataclass
class FrameLayout:
    """TDM layout: one pilot ahead of every `pilot_period` quantum symbols.

    The sync word is prepended once per frame.  Pilots are transmitted as
    (x, p) = (pilot_amplitude, 0).
    """

    pilot_period: int = 10
    pilot_amplitude: float = 10.0
    sync_word: np.ndarray = field(default_factory=default_sync_word)
    symbols_per_frame: int = 0  # 0: derived from the payload when framing

    def __post_init__(self):
        if self.pilot_period < 2:
            raise InvalidArgument("pilot_period must be >= 2")
        if self.pilot_amplitude <= 0:
            raise InvalidArgument("pilot_amplitude must be positive")
        self.sync_word = np.asarray(self.sync_word, dtype=complex)
        if self.symbols_per_frame and self.sync_word.size >= self.symbols_per_frame:
            raise InvalidArgument("sync word must be shorter than the frame")

    def scaled_sync_word(self) -> np.ndarray:
        """Sync word rescaled to the pilot amplitude (unit-RMS base pattern)."""
        rms = np.sqrt(np.mean(np.abs(self.sync_word) ** 2))
        return self.sync_word * (self.pilot_amplitude / rms)

    def pilot_rate(self, symbol_rate: float) -> float:
        """Rate at which pilot symbols occur in the framed stream."""
        return symbol_rate / (self.pilot_period + 1)


@dataclass
class QuadratureFrame:
    """Framed per-symbol (x, p) values plus the slot map that locates
    sync / pilot / quantum positions."""

    x: np.ndarray
    p: np.ndarray
    slot_kind: np.ndarray  # SLOT_* per symbol
    layout: FrameLayout

    def __post_init__(self):
        if not (self.x.size == self.p.size == self.slot_kind.size):
            raise InvalidArgument("frame arrays must have equal length")

    def __len__(self) -> int:
        return self.x.size

    @property
    def complex_amplitudes(self) -> np.ndarray:
        return self.x + 1j * self.p

    @property
    def pilot_indices(self) -> np.ndarray:
        return np.flatnonzero(self.slot_kind == SLOT_PILOT)

    @property
    def quantum_indices(self) -> np.ndarray:
        return np.flatnonzero(self.slot_kind == SLOT_QUANTUM)

    @property
    def n_quantum(self) -> int:
        return int(np.count_nonzero(self.slot_kind == SLOT_QUANTUM))


def slot_map_for_quantum(layout: FrameLayout, n_quantum: int) -> np.ndarray:
    """Slot kinds for a frame carrying `n_quantum` payload symbols.

    The payload repeats [pilot, q_1 .. q_pilot_period]; the final group may be
    shorter but always starts with a pilot.  The sync word leads the frame.
    """
    if n_quantum < 1:
        raise InvalidArgument("a frame needs at least one quantum symbol")
    period = layout.pilot_period
    n_groups = -(-n_quantum // period)  # ceil
    n_sync = layout.sync_word.size
    kind = np.full(n_sync + n_groups + n_quantum, SLOT_QUANTUM, dtype=np.int8)
    kind[:n_sync] = SLOT_SYNC
    payload_pos = n_sync + np.arange(n_groups) * (period + 1)
    kind[payload_pos] = SLOT_PILOT
    return kind


def slot_map_for_length(layout: FrameLayout, total_symbols: int) -> np.ndarray:
    """Reconstruct the slot kinds of a frame from its total symbol count."""
    kind = slot_map_for_quantum(
        layout, quantum_symbols_for_frame(layout, total_symbols))
    if kind.size != total_symbols:
        raise InvalidArgument(
            f"length {total_symbols} is not a whole frame for this layout")
    return kind


def quantum_symbols_for_frame(layout: FrameLayout, total_symbols: int) -> int:
    """Quantum payload count of a frame with `total_symbols` slots.

    Useful for sizing a run to an FFT-friendly frame length; not every total
    is reachable (the payload cannot be congruent to 1 modulo
    pilot_period + 1).
    """
    n_sync = layout.sync_word.size
    payload = total_symbols - n_sync
    if payload < 2:
        raise InvalidArgument("stream too short to hold a frame")
    n_groups = -(-payload // (layout.pilot_period + 1))
    return payload - n_groups


def build_frame(symbols: SymbolSequence, layout: FrameLayout) -> QuadratureFrame:
    """Interleave pilots into the quantum payload and prepend the sync word."""
    n_q = len(symbols)
    if n_q == 0:
        raise InvalidArgument("cannot frame an empty symbol sequence")
    kind = slot_map_for_quantum(layout, n_q)
    sync = layout.scaled_sync_word()

    x = np.zeros(kind.size)
    p = np.zeros(kind.size)
    x[kind == SLOT_SYNC] = sync.real
    p[kind == SLOT_SYNC] = sync.imag
    x[kind == SLOT_PILOT] = layout.pilot_amplitude
    q = kind == SLOT_QUANTUM
    x[q] = symbols.x
    p[q] = symbols.p
    return QuadratureFrame(x=x, p=p, slot_kind=kind, layout=layout)


def deframe(frame: QuadratureFrame) -> SymbolSequence:
    """Recover the quantum payload from a frame (inverse of `build_frame`)."""
    idx = frame.quantum_indices
    if idx.size == 0:
        raise InvalidArgument("frame holds no quantum symbols")
    return SymbolSequence(x=frame.x[idx], p=frame.p[idx], variance=float(
        np.var(frame.x[idx]) + np.var(frame.p[idx])))


def snu_calibrate(noise_only: ComplexWaveform, matched_filter_len: int) -> float:
    """Measure the raw per-sample variance of one vacuum quadrature unit.

    `noise_only` must be a receiver output with zero signal power.  The
    returned value is the `snu_scale` that makes a subsequent vacuum-only
    demodulation read variance 1.0 per quadrature.

    Args:
        noise_only: detector output with no signal applied.
        matched_filter_len: samples per symbol of the demodulation chain.
    """
    if matched_filter_len < 2:
        raise InvalidArgument("matched_filter_len must be >= 2")
    if noise_only.samples.size < 100 * matched_filter_len:
        raise InsufficientData(
            f"need at least {100 * matched_filter_len} samples, "
            f"got {noise_only.samples.size}")
    sps = int(matched_filter_len)
    n_sym = noise_only.samples.size // sps
    r = dsp.matched_filter_decimate(noise_only.samples[:n_sym * sps], sps)
    # Per-quadrature symbol variance equals (per-sample variance) / sps for
    # white noise through this chain, so scale back up to per-sample units.
    sym_var = 0.5 * (np.var(r.real) + np.var(r.imag))
    return float(sym_var * sps)
