"""Spectrum Phase Monitoring: per-band castdown/splitting detection,
pilot-based vibration phase demodulation, phase unwrapping, phase-to-length
conversion, strain PSD and shot-noise-limit precision checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import signal as sp_signal

from .channel import FiberConstants
from .errors import (BaselineRequired, InsufficientData, InvalidArgument,
                     PhaseEstimateUnreliable)
from .node import BandRegistry
from .qkd import MIN_PILOT_SNR, pilot_snr
from .receiver import QuadratureStream
from .signal_core import SLOT_PILOT, ComplexWaveform, FrameLayout, slot_map_for_length

CASTDOWN_THRESHOLD_DB = 3.0
SPLITTING_THRESHOLD_DB = 6.0
MIN_STRAIN_SAMPLES = 4096


@dataclass
class BandStatus:
    """Spectrum health of one registered band."""

    node_id: int
    in_band_power_db: float            # relative to baseline
    castdown: bool
    splitting: bool
    splitting_sidebands_hz: list[float] = field(default_factory=list)

    @property
    def vibrating(self) -> bool:
        return self.castdown or self.splitting


@dataclass
class VibrationTrace:
    """Recovered vibration waveform of one node.

    The static channel phase is removed (series is mean-centered); length
    change is exactly proportional to phase through the fiber constants.
    """

    unwrapped_phase_rad: np.ndarray
    length_change_m: np.ndarray
    sample_rate: float
    max_phase_rad: float

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise InvalidArgument("sample_rate must be positive")


@dataclass
class PrecisionReport:
    """Monte-Carlo pilot phase precision against the standard quantum limit."""

    photon_number: float
    measured_phase_std: float
    quantum_limit: float
    ratio: float
    quadrature_variances: tuple[float, float]
    trials: int
    seed: int


@dataclass
class StrainPsd:
    """Welch PSD of a phase series plus its noise floor and strain resolution."""

    freqs_hz: np.ndarray
    psd_rad2_per_hz: np.ndarray
    noise_floor_rad2_per_hz: float
    strain_resolution_per_sqrt_hz: float
    gauge_length_m: float


def _welch_complex(samples: np.ndarray, fs: float, nperseg: int):
    freqs, psd = sp_signal.welch(samples, fs=fs, window="hann", nperseg=nperseg,
                                 noverlap=nperseg // 2, detrend=False,
                                 return_onesided=False)
    order = np.argsort(freqs)
    return freqs[order], psd[order]


def _auto_nperseg(n_samples: int) -> int:
    """Longest power-of-two segment that still leaves >= 8 Welch averages."""
    nperseg = 4096
    while nperseg * 8 <= n_samples and nperseg < 65536:
        nperseg *= 2
    return min(nperseg, n_samples)


def band_powers(detected: ComplexWaveform, registry: BandRegistry,
                nperseg: int | None = None) -> dict[int, float]:
    """Welch-integrated power inside each registered band (baseline capture)."""
    if nperseg is None:
        nperseg = _auto_nperseg(detected.samples.size)
    nperseg = min(nperseg, detected.samples.size)
    freqs, psd = _welch_complex(detected.samples, detected.sample_rate, nperseg)
    df = freqs[1] - freqs[0]
    powers = {}
    for node_id, entry in sorted(registry.entries.items()):
        sel = np.abs(freqs - entry.carrier_hz) <= entry.bandwidth_hz / 2.0
        powers[node_id] = float(np.sum(psd[sel]) * df)
    return powers


def _detect_splitting(freqs, psd, carrier_hz, half_span_hz, comb_spacing_hz,
                      threshold_db):
    """Find symmetric sideband pairs around the pilot carrier line.

    Known TDM comb lines (multiples of the pilot group rate) are excluded
    before thresholding against the local median floor.
    """
    df = freqs[1] - freqs[0]
    offsets = freqs - carrier_hz
    span = (np.abs(offsets) > 2.5 * df) & (np.abs(offsets) < half_span_hz)
    if comb_spacing_hz and comb_spacing_hz > 0:
        comb_distance = np.abs(offsets - comb_spacing_hz *
                               np.round(offsets / comb_spacing_hz))
        span &= comb_distance > 3.0 * df
    if not np.any(span):
        return []
    floor = float(np.median(psd[span]))
    if floor <= 0:
        return []
    gain = 10.0 ** (threshold_db / 10.0)

    sidebands = []
    pos = span & (offsets > 0)
    for i in np.flatnonzero(pos):
        off = offsets[i]
        j = int(np.argmin(np.abs(offsets + off)))
        if not span[j]:
            continue
        pair_min = min(psd[i], psd[j])
        if pair_min > gain * floor:
            sidebands.append(float(off))
    # Collapse adjacent bins into one reported offset per cluster.
    collapsed = []
    for off in sorted(sidebands):
        if not collapsed or off - collapsed[-1] > 2.5 * df:
            collapsed.append(off)
    return collapsed


def spectrum_monitor(detected: ComplexWaveform, registry: BandRegistry,
                     baseline: dict[int, float],
                     pilot_comb_hz: float | None = None,
                     castdown_threshold_db: float = CASTDOWN_THRESHOLD_DB,
                     splitting_threshold_db: float = SPLITTING_THRESHOLD_DB,
                     nperseg: int | None = None) -> list[BandStatus]:
    """Check every registered band for castdown and pilot-line splitting.

    `baseline` maps node id to the in-band power captured by `band_powers`
    on a vibration-free interval.  `pilot_comb_hz` is the pilot group rate;
    its harmonics are excluded from the sideband search.
    """
    if baseline is None or not baseline:
        raise BaselineRequired("capture per-band baseline powers first")
    missing = [nid for nid in registry.entries if nid not in baseline]
    if missing:
        raise BaselineRequired(f"baseline missing for nodes {missing}")

    if nperseg is None:
        nperseg = _auto_nperseg(detected.samples.size)
    nperseg = min(nperseg, detected.samples.size)
    freqs, psd = _welch_complex(detected.samples, detected.sample_rate, nperseg)
    df = freqs[1] - freqs[0]

    statuses = []
    for node_id, entry in sorted(registry.entries.items()):
        sel = np.abs(freqs - entry.carrier_hz) <= entry.bandwidth_hz / 2.0
        power = float(np.sum(psd[sel]) * df)
        ref = baseline[node_id]
        rel_db = 10.0 * np.log10(power / ref) if ref > 0 else 0.0
        castdown = rel_db < -castdown_threshold_db

        half_span = pilot_comb_hz / 2.0 if pilot_comb_hz else entry.bandwidth_hz / 8.0
        sidebands = _detect_splitting(freqs, psd, entry.carrier_hz, half_span,
                                      pilot_comb_hz, splitting_threshold_db)
        statuses.append(BandStatus(
            node_id=node_id, in_band_power_db=float(rel_db), castdown=bool(castdown),
            splitting=bool(len(sidebands) > 0),
            splitting_sidebands_hz=sidebands))
    return statuses


@dataclass
class PilotPhaseSeries:
    """Wrapped per-pilot phase with its sampling rate."""

    wrapped_rad: np.ndarray
    sample_rate: float
    positions: np.ndarray
    snr: float


def demodulate_phase(stream: QuadratureStream,
                     layout: FrameLayout) -> PilotPhaseSeries:
    """Per-pilot wrapped phase in (-pi, pi] via the two-argument arctangent
    of the measured pilot quadratures, atan2(P, X)."""
    offset = stream.frame_offset or 0
    kind = slot_map_for_length(layout, len(stream))
    positions = np.flatnonzero(kind == SLOT_PILOT)
    if positions.size == 0:
        raise InvalidArgument("layout yields no pilot slots")
    values = stream.complex_values[(offset + positions) % len(stream)]
    snr = pilot_snr(values) if values.size >= 8 else np.inf
    if snr < MIN_PILOT_SNR:
        raise PhaseEstimateUnreliable(f"pilot SNR {snr:.2f} below {MIN_PILOT_SNR}")
    return PilotPhaseSeries(
        wrapped_rad=np.angle(values),
        sample_rate=layout.pilot_rate(stream.symbol_rate),
        positions=positions, snr=float(snr))


def unwrap_phase(wrapped: np.ndarray) -> np.ndarray:
    """Standard nearest-multiple unwrapping: each step is brought within pi
    of its predecessor by adding integer multiples of 2 pi; the first sample
    is left unchanged."""
    wrapped = np.asarray(wrapped, dtype=float)
    if not np.all(np.isfinite(wrapped)):
        raise InvalidArgument("phase series must be finite")
    return np.unwrap(wrapped)


def phase_to_length(phase: np.ndarray, fiber: FiberConstants) -> np.ndarray:
    """Convert optical phase to fiber length change (meters), inverting the
    photoelastic length-to-phase relation."""
    return np.asarray(phase, dtype=float) / fiber.phase_per_meter()


def make_vibration_trace(unwrapped: np.ndarray, sample_rate: float,
                         fiber: FiberConstants) -> VibrationTrace:
    """Mean-center an unwrapped phase series and attach its length conversion."""
    centered = np.asarray(unwrapped, dtype=float)
    centered = centered - np.mean(centered)
    return VibrationTrace(
        unwrapped_phase_rad=centered,
        length_change_m=phase_to_length(centered, fiber),
        sample_rate=sample_rate,
        max_phase_rad=float(np.max(np.abs(centered))) if centered.size else 0.0)


def strain_psd(phase: np.ndarray, sample_rate: float, gauge_length_m: float,
               fiber: FiberConstants | None = None,
               nperseg: int = 4096) -> StrainPsd:
    """Welch PSD of a phase series with a tone-robust noise floor estimate.

    The floor is the median PSD outside detected spectral lines; strain
    resolution is sqrt(floor) converted through the photoelastic relation
    over the gauge length.
    """
    phase = np.asarray(phase, dtype=float)
    if phase.size < MIN_STRAIN_SAMPLES:
        raise InsufficientData(
            f"need at least {MIN_STRAIN_SAMPLES} samples, got {phase.size}")
    if gauge_length_m <= 0:
        raise InvalidArgument("gauge_length_m must be positive")
    fiber = fiber or FiberConstants()

    nperseg = min(nperseg, phase.size)
    freqs, psd = sp_signal.welch(phase, fs=sample_rate, window="hann",
                                 nperseg=nperseg, noverlap=nperseg // 2,
                                 detrend="constant")
    # Exclude DC leakage and detected tones (anything 10 dB over the global
    # median, plus 3 bins either side) from the floor estimate.
    keep = np.ones(freqs.size, dtype=bool)
    keep[:3] = False
    rough = np.median(psd[keep])
    tones = np.flatnonzero(psd > 10.0 * rough)
    for t in tones:
        keep[max(0, t - 3):t + 4] = False
    floor = float(np.median(psd[keep])) if np.any(keep) else float(rough)

    resolution = np.sqrt(floor) / (fiber.phase_per_meter() * gauge_length_m)
    return StrainPsd(freqs_hz=freqs, psd_rad2_per_hz=psd,
                     noise_floor_rad2_per_hz=floor,
                     strain_resolution_per_sqrt_hz=float(resolution),
                     gauge_length_m=gauge_length_m)


@dataclass
class SensingReport:
    """Per-node outcome of one SPM pass."""

    node_id: int
    band_status: Optional[BandStatus] = None
    vibration: Optional[VibrationTrace] = None
    strain: Optional[StrainPsd] = None
    qkd_suspended: bool = False
    error: Optional[str] = None


def process_node_sensing(sim, node_id: int,
                         band_status: Optional[BandStatus]) -> SensingReport:
    """Vibration recovery for one node: demodulate the pilot phase, unwrap,
    convert to length and characterize the strain spectrum."""
    from . import pipeline
    from .errors import QsnetError

    config = sim.config
    try:
        stream = pipeline.receive_node(sim, node_id)
        series = demodulate_phase(stream, config.frame)
        unwrapped = unwrap_phase(series.wrapped_rad)
        trace = make_vibration_trace(unwrapped, series.sample_rate, config.fiber)

        suspended = False
        if series.wrapped_rad.size >= 2:
            k = min(5, unwrapped.size)
            smooth = np.convolve(unwrapped, np.ones(k) / k, mode="valid")
            if smooth.size >= 2:
                suspended = bool(np.max(np.abs(np.diff(smooth)))
                                 > config.qkd.suspend_threshold_rad)

        strain = None
        if unwrapped.size >= MIN_STRAIN_SAMPLES:
            strain = strain_psd(trace.unwrapped_phase_rad, series.sample_rate,
                                sim.nodes[node_id].config.pzt.wound_fiber_m,
                                fiber=config.fiber)
        return SensingReport(node_id=node_id, band_status=band_status,
                             vibration=trace, strain=strain,
                             qkd_suspended=suspended)
    except QsnetError as exc:
        return SensingReport(node_id=node_id, band_status=band_status,
                             error=str(exc))


def run_spm(config, seed: int | None = None) -> list[SensingReport]:
    """Run the monitoring protocol over one simulated block: capture the
    vibration-free baseline, flag castdown/splitting per band, then recover
    and convert each node's vibration waveform."""
    from . import pipeline

    sim = pipeline.simulate(config, seed)
    return run_spm_on(sim)


def run_spm_on(sim) -> list[SensingReport]:
    config = sim.config
    baseline = band_powers(sim.baseline_detected, sim.registry)
    statuses = spectrum_monitor(
        sim.detected, sim.registry, baseline,
        pilot_comb_hz=config.frame.pilot_rate(config.rep_rate_hz),
        castdown_threshold_db=config.monitor.castdown_threshold_db,
        splitting_threshold_db=config.monitor.splitting_threshold_db)
    by_id = {s.node_id: s for s in statuses}
    return [process_node_sensing(sim, nid, by_id.get(nid))
            for nid in sorted(sim.nodes)]


def precision_check(pilot_amplitude_snu: float, trials: int,
                    seed: int) -> PrecisionReport:
    """Monte-Carlo pilot phase precision at shot-noise-limited detection.

    Simulates heterodyne measurements of a pilot of amplitude A (SNU): the
    measured mean is A / sqrt(2) per quadrature pair with unit vacuum noise
    on each quadrature.  The measured phase spread is compared against the
    standard quantum limit 1 / sqrt(N_s) with N_s = A^2 / 2.
    """
    if trials < 1000:
        raise InsufficientData("need at least 1000 trials")
    if pilot_amplitude_snu <= 0:
        raise InvalidArgument("pilot amplitude must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    mean = pilot_amplitude_snu / np.sqrt(2.0)
    x = mean + rng.normal(size=trials)
    p = rng.normal(size=trials)
    phases = np.arctan2(p, x)
    measured = float(np.std(phases))
    n_s = pilot_amplitude_snu**2 / 2.0
    limit = 1.0 / np.sqrt(n_s)
    return PrecisionReport(
        photon_number=n_s, measured_phase_std=measured, quantum_limit=limit,
        ratio=measured / limit,
        quadrature_variances=(float(np.var(x)), float(np.var(p))),
        trials=trials, seed=seed)
