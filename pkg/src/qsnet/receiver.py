"""Center-node reception: shot-noise-limited heterodyne detection, band
selection against the registry, coherent demodulation to baseband quadratures
and frame synchronization by cross-correlation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dsp
from .errors import IllegalBand, InvalidArgument, SyncFailure
from .node import BandRegistry
from .signal_core import ComplexWaveform


@dataclass
class DetectorParams:
    """Heterodyne receiver model.

    quantum_efficiency: eta, common to both quadrature arms.
    electronic_noise_snu: v_el, per measured quadrature, in SNU.
    bandwidth_hz: usable detection bandwidth (validated against carriers).
    """

    quantum_efficiency: float = 0.42
    electronic_noise_snu: float = 0.18
    bandwidth_hz: float = 400e6

    def __post_init__(self):
        if not 0.0 < self.quantum_efficiency <= 1.0:
            raise InvalidArgument("quantum_efficiency must lie in (0, 1]")
        if self.electronic_noise_snu < 0:
            raise InvalidArgument("electronic_noise_snu must be >= 0")
        if self.bandwidth_hz <= 0:
            raise InvalidArgument("bandwidth_hz must be positive")


@dataclass
class QuadratureStream:
    """Demodulated per-symbol quadratures in SNU."""

    x: np.ndarray
    p: np.ndarray
    symbol_rate: float
    frame_offset: Optional[int] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.x.size != self.p.size:
            raise InvalidArgument("x and p must have equal length")
        if self.symbol_rate <= 0:
            raise InvalidArgument("symbol_rate must be positive")

    def __len__(self) -> int:
        return self.x.size

    @property
    def complex_values(self) -> np.ndarray:
        return self.x + 1j * self.p


def detect(waveform: ComplexWaveform, det: DetectorParams,
           seed: int) -> ComplexWaveform:
    """Heterodyne detection of the incoming field.

    Both quadratures are measured simultaneously, which splits the signal
    amplitude by sqrt(2) and adds one full vacuum unit per quadrature; the
    detector further scales by sqrt(eta) and adds electronic noise v_el:

        out = sqrt(eta / 2) * in + n,   Var(Re n) = Var(Im n) = 1 + v_el  [SNU]

    Deterministic for a fixed seed.  The waveform's SNU calibration fixes the
    raw noise scale.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    n = waveform.samples.size
    sigma = np.sqrt((1.0 + det.electronic_noise_snu) * waveform.snu_scale)
    noise = sigma * (rng.normal(size=n) + 1j * rng.normal(size=n))
    out = np.sqrt(det.quantum_efficiency / 2.0) * waveform.samples + noise
    return ComplexWaveform(samples=out, sample_rate=waveform.sample_rate,
                           snu_scale=waveform.snu_scale)


def band_select(waveform: ComplexWaveform, registry: BandRegistry,
                node_id: int) -> ComplexWaveform:
    """Band-pass the registered band of one node (zero-phase FFT mask).

    Unregistered node ids are rejected: quantum traffic on an unlisted band
    is treated as illegal rather than silently demodulated.
    """
    if not registry.is_registered(node_id):
        raise IllegalBand(f"node {node_id} has no registered band")
    entry = registry.band(node_id)
    mask = dsp.bandpass_mask(waveform.samples.size, waveform.sample_rate,
                             entry.carrier_hz, entry.bandwidth_hz)
    filtered = dsp._ifft(dsp._fft(waveform.samples) * mask)
    return ComplexWaveform(samples=filtered, sample_rate=waveform.sample_rate,
                           snu_scale=waveform.snu_scale)


def demodulate(waveform: ComplexWaveform, carrier_hz: float,
               baseband_hz: float) -> QuadratureStream:
    """Coherently demodulate one carrier to per-symbol quadratures in SNU.

    Multiplies by e^{-j w t} (the cos/sin product pair of a dual-quadrature
    mixer), matched-filters with the transmit root-raised-cosine and samples
    at symbol centers.  The matched filter removes the double-frequency
    terms, so no separate low-pass stage is needed.
    """
    fs = waveform.sample_rate
    if carrier_hz + baseband_hz / 2.0 > fs / 2.0:
        raise InvalidArgument("carrier outside the waveform Nyquist range")
    if dsp.occupied_bandwidth(baseband_hz) > fs:
        raise InvalidArgument("symbol rate too wide for the sampled bandwidth")
    sps = dsp.samples_per_symbol(fs, baseband_hz)
    z = waveform.samples * dsp.carrier_phasor(waveform.samples.size,
                                              carrier_hz, fs, sign=-1)
    symbols = dsp.matched_filter_decimate(z, sps)
    # Normalize so one vacuum quadrature unit reads variance 1.
    symbols = symbols / np.sqrt(waveform.snu_scale / sps)
    return QuadratureStream(x=symbols.real, p=symbols.imag,
                            symbol_rate=baseband_hz)


@dataclass(frozen=True)
class SyncResult:
    offset: int
    peak_to_sidelobe: float


def frame_sync(stream: QuadratureStream, sync_word: np.ndarray,
               min_peak_to_sidelobe: float = 3.0) -> SyncResult:
    """Locate the sync word by normalized circular cross-correlation.

    The correlation magnitude is used, so a global phase rotation of the
    stream does not move the peak.  Raises SyncFailure when the peak does not
    dominate its sidelobes.  Also records the offset on the stream.
    """
    sync_word = np.asarray(sync_word, dtype=complex)
    m = sync_word.size
    r = stream.complex_values
    if r.size < m:
        raise InvalidArgument("stream shorter than the sync word")

    fr = np.fft.fft(r)
    template = np.zeros(r.size, dtype=complex)
    template[:m] = sync_word
    corr = np.fft.ifft(fr * np.conj(np.fft.fft(template)))
    # Rolling window energy of the stream (circular), for normalization.
    window = np.zeros(r.size)
    window[:m] = 1.0
    energy = np.fft.ifft(np.fft.fft(np.abs(r) ** 2) * np.conj(np.fft.fft(window))).real
    energy = np.maximum(energy, 1e-300)
    norm = np.abs(corr) / np.sqrt(energy * np.sum(np.abs(sync_word) ** 2))

    peak = int(np.argmax(norm))
    guard = max(2, m // 2)
    off_peak = norm.copy()
    idx = (np.arange(-guard, guard + 1) + peak) % r.size
    off_peak[idx] = 0.0
    sidelobe = float(np.max(off_peak))
    psr = float(norm[peak] / max(sidelobe, 1e-12))
    if psr < min_peak_to_sidelobe:
        raise SyncFailure(
            f"correlation peak-to-sidelobe {psr:.2f} below {min_peak_to_sidelobe}")
    stream.frame_offset = peak
    return SyncResult(offset=peak, peak_to_sidelobe=psr)
