"""Frequency-domain pulse shaping and filtering helpers.

All pulse shaping uses a root-raised-cosine (RRC) response applied on the
FFT grid of the whole symbol block (circular convolution).  The RRC spectrum
has finite support, so the tx/rx cascade is exactly Nyquist on the discrete
grid: symbol-spaced samples of the cascaded impulse response vanish to float
precision, and a matched pair has unit gain at symbol centers and unit noise
power gain for white noise.
"""

from __future__ import annotations

import numpy as np
from scipy import fft as sp_fft

from .errors import InvalidArgument

RRC_ROLLOFF = 0.3


def _fft(x):
    return sp_fft.fft(x, workers=-1)


def _ifft(x):
    return sp_fft.ifft(x, workers=-1)


def rrc_response(freqs_hz: np.ndarray, symbol_rate_hz: float,
                 rolloff: float = RRC_ROLLOFF) -> np.ndarray:
    """Amplitude response of a root-raised-cosine filter, peak 1 at f = 0.

    Support is |f| <= symbol_rate * (1 + rolloff) / 2; identically zero
    outside.
    """
    f = np.abs(np.asarray(freqs_hz, dtype=float))
    f_lo = 0.5 * symbol_rate_hz * (1.0 - rolloff)
    f_hi = 0.5 * symbol_rate_hz * (1.0 + rolloff)
    h = np.zeros_like(f)
    h[f <= f_lo] = 1.0
    mid = (f > f_lo) & (f < f_hi)
    h[mid] = np.sqrt(0.5 * (1.0 + np.cos(np.pi * (f[mid] - f_lo) / (rolloff * symbol_rate_hz))))
    return h


def occupied_bandwidth(symbol_rate_hz: float, rolloff: float = RRC_ROLLOFF) -> float:
    """Two-sided spectral support of the shaped signal in Hz."""
    return symbol_rate_hz * (1.0 + rolloff)


def samples_per_symbol(sample_rate_hz: float, symbol_rate_hz: float) -> int:
    sps = sample_rate_hz / symbol_rate_hz
    if abs(sps - round(sps)) > 1e-9 or round(sps) < 2:
        raise InvalidArgument(
            f"sample rate {sample_rate_hz} Hz must be an integer multiple (>= 2) "
            f"of the symbol rate {symbol_rate_hz} Hz")
    return int(round(sps))


def shape_symbols(symbols: np.ndarray, sps: int,
                  rolloff: float = RRC_ROLLOFF) -> np.ndarray:
    """Upsample complex symbols by `sps` and apply the RRC transmit filter.

    The transmit gain is chosen so that the matched receive chain
    (`matched_filter_decimate`) recovers the symbols with unit gain while
    white noise of per-sample quadrature variance `sps` maps to unit variance
    per recovered quadrature.  A single unit symbol at zero carrier therefore
    produces a constant waveform of value 1 + 0j.
    """
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.size == 0:
        raise InvalidArgument("cannot shape an empty symbol block")
    n = symbols.size * sps
    up = np.zeros(n, dtype=complex)
    up[::sps] = symbols
    h = float(sps) * rrc_response(np.fft.fftfreq(n), 1.0 / sps, rolloff)
    return _ifft(_fft(up) * h)


def matched_filter_decimate(samples: np.ndarray, sps: int,
                            rolloff: float = RRC_ROLLOFF) -> np.ndarray:
    """Apply the RRC matched filter and sample at symbol centers.

    Inverse of `shape_symbols` for a noiseless loopback; preserves the
    variance of white noise whose per-sample quadrature variance equals
    `sps` (one shot-noise unit per recovered quadrature).
    """
    samples = np.asarray(samples, dtype=complex)
    if samples.size % sps != 0:
        raise InvalidArgument("sample count must be a whole number of symbols")
    h = rrc_response(np.fft.fftfreq(samples.size), 1.0 / sps, rolloff)
    filtered = _ifft(_fft(samples) * h)
    return filtered[::sps]


def carrier_phasor(n_samples: int, carrier_hz: float, sample_rate_hz: float,
                   sign: int = +1) -> np.ndarray:
    """exp(+-j 2 pi f_c t) on the sample grid."""
    t = np.arange(n_samples) / sample_rate_hz
    return np.exp(sign * 2j * np.pi * carrier_hz * t)


def bandpass_mask(n_samples: int, sample_rate_hz: float, center_hz: float,
                  bandwidth_hz: float, transition_frac: float = 0.1) -> np.ndarray:
    """Zero-phase FFT band-pass mask: unity over the passband, raised-cosine
    transitions of width `transition_frac * bandwidth` outside it, zero beyond."""
    f = np.fft.fftfreq(n_samples, d=1.0 / sample_rate_hz)
    off = np.abs(f - center_hz)
    half = 0.5 * bandwidth_hz
    trans = transition_frac * bandwidth_hz
    mask = np.zeros(n_samples)
    mask[off <= half] = 1.0
    edge = (off > half) & (off < half + trans)
    mask[edge] = 0.5 * (1.0 + np.cos(np.pi * (off[edge] - half) / trans))
    return mask


def power_db(x: float, ref: float = 1.0) -> float:
    if x <= 0:
        return -np.inf
    return 10.0 * np.log10(x / ref)
