"""Pilot-based phase recovery, channel parameter estimation and the
asymptotic secret key rate for heterodyne reverse reconciliation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (AlignmentError, InsufficientData, InvalidArgument,
                     PhaseEstimateUnreliable)
from .receiver import DetectorParams, QuadratureStream
from .signal_core import (SLOT_PILOT, SLOT_QUANTUM, FrameLayout,
                          SymbolSequence, slot_map_for_length)

MIN_PILOT_SNR = 3.0
MIN_ESTIMATION_SYMBOLS = 10_000


@dataclass
class PhaseTrace:
    """Per-pilot phase estimates interpolated across a whole frame.

    Positions are frame-relative symbol indices; `offset` maps them onto the
    stream (stream index = (offset + position) mod stream length).
    """

    pilot_positions: np.ndarray
    pilot_phase: np.ndarray        # unwrapped, after optional smoothing
    pilot_phase_raw: np.ndarray    # unwrapped, per-pilot (no smoothing)
    pilot_values: np.ndarray       # complex pilot measurements
    per_symbol: np.ndarray         # interpolated phase for every frame index
    quantum_positions: np.ndarray
    offset: int
    pilot_snr: float

    def max_pilot_step(self, threshold: float) -> float:
        """Largest inter-pilot phase change, measured after just enough
        complex averaging that shot noise alone cannot trip `threshold`."""
        return max_smoothed_step(self.pilot_values, self.pilot_snr, threshold)


def max_smoothed_step(values: np.ndarray, snr: float, threshold: float) -> float:
    """Max phase step between consecutive (smoothed) complex measurements.

    The averaging window is the smallest that keeps a 4.5-sigma noise step
    below threshold / 2 given the per-sample SNR, so the statistic responds
    to real phase slew, not to detection noise.
    """
    values = np.asarray(values)
    if values.size < 2:
        return 0.0
    # step noise std ~ 1 / sqrt(snr * k); require 4.5 sigma <= threshold / 2
    needed = (9.0 / threshold) ** 2 / max(snr, 1e-6)
    k = int(min(max(1, np.ceil(needed)), max(1, values.size // 4)))
    if k > 1:
        smooth = np.convolve(values, np.ones(k) / k, mode="valid")
    else:
        smooth = values
    if smooth.size < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(np.unwrap(np.angle(smooth))))))


@dataclass
class ChannelEstimate:
    """Estimated channel transmittance, excess noise and modulation variance."""

    t_hat: float
    eps_hat: float
    v_a_hat: float
    n_used: int
    eps_negative: bool = False
    slope: float = 0.0

    def __post_init__(self):
        if self.n_used <= 0:
            raise InvalidArgument("n_used must be positive")
        self.eps_negative = bool(self.eps_hat < 0)


@dataclass
class SkrReport:
    """Secret key rate report for one node.

    `k_r` is bits per symbol before the repetition rate multiplies it into
    bits per second.  A negative `k_r` is reported with the abort flag set.
    """

    node_id: Optional[int] = None
    i_ab: Optional[float] = None
    chi_be: Optional[float] = None
    k_r: Optional[float] = None
    k_bits_per_s: Optional[float] = None
    lambdas: Optional[tuple[float, float, float, float, float]] = None
    abcd: Optional[tuple[float, float, float, float]] = None
    inputs: dict = field(default_factory=dict)
    abort: bool = False
    qkd_suspended: bool = False
    estimate: Optional[ChannelEstimate] = None
    sync_offset: Optional[int] = None
    seed: Optional[int] = None
    error: Optional[str] = None


def entropy_g(x: float) -> float:
    """G(x) = (x + 1) log2(x + 1) - x log2 x, continuously extended to G(0) = 0."""
    if x <= 0.0:
        return 0.0
    return float((x + 1.0) * np.log2(x + 1.0) - x * np.log2(x))


def heterodyne_detection_noise(det: DetectorParams) -> float:
    """chi_het = [1 + (1 - eta) + 2 v_el] / eta, referred to the detector input."""
    eta = det.quantum_efficiency
    return (1.0 + (1.0 - eta) + 2.0 * det.electronic_noise_snu) / eta


def secret_key_rate(v_a: float, transmittance: float, excess_noise: float,
                    det: DetectorParams, beta: float,
                    rep_rate_hz: float) -> SkrReport:
    """Asymptotic secret key rate for reverse reconciliation with heterodyne
    detection, from the closed-form symplectic eigenvalues.

    Negative rates are reported, not clamped; the abort flag marks a session
    that a real system would terminate.
    """
    if not 0.0 < transmittance <= 1.0:
        raise InvalidArgument("transmittance must lie in (0, 1]")
    if v_a <= 0:
        raise InvalidArgument("v_a must be positive")
    if excess_noise < 0:
        raise InvalidArgument("excess_noise must be >= 0")
    if not 0.0 < beta <= 1.0:
        raise InvalidArgument("beta must lie in (0, 1]")
    if rep_rate_hz <= 0:
        raise InvalidArgument("rep_rate_hz must be positive")

    T = transmittance
    eps = excess_noise
    V = v_a + 1.0
    chi_line = 1.0 / T - 1.0 + eps
    chi_het = heterodyne_detection_noise(det)
    chi_tot = chi_line + chi_het / T

    i_ab = float(np.log2((V + chi_tot) / (1.0 + chi_tot)))

    A = V**2 * (1.0 - 2.0 * T) + 2.0 * T + T**2 * (V + chi_line) ** 2
    B = T**2 * (V * chi_line + 1.0) ** 2
    denom = (T * (V + chi_tot)) ** 2
    C = (A * chi_het**2 + B + 1.0
         + 2.0 * chi_het * (V * np.sqrt(B) + T * (V + chi_line))
         + 2.0 * T * (V**2 - 1.0)) / denom
    D = ((V + np.sqrt(B) * chi_het) ** 2) / denom

    def _pair(s, q):
        disc = np.sqrt(max(s**2 - 4.0 * q, 0.0))
        hi = np.sqrt(max(0.5 * (s + disc), 0.0))
        lo = np.sqrt(max(0.5 * (s - disc), 0.0))
        return float(hi), float(lo)

    l1, l2 = _pair(A, B)
    l3, l4 = _pair(C, D)
    l5 = 1.0

    chi_be = (entropy_g((l1 - 1.0) / 2.0) + entropy_g((l2 - 1.0) / 2.0)
              - entropy_g((l3 - 1.0) / 2.0) - entropy_g((l4 - 1.0) / 2.0)
              - entropy_g((l5 - 1.0) / 2.0))
    k_r = beta * i_ab - chi_be

    return SkrReport(
        i_ab=i_ab, chi_be=chi_be, k_r=float(k_r),
        k_bits_per_s=float(rep_rate_hz * k_r),
        lambdas=(l1, l2, l3, l4, l5),
        abcd=(float(A), float(B), float(C), float(D)),
        inputs={"v_a": v_a, "transmittance": T, "excess_noise": eps,
                "quantum_efficiency": det.quantum_efficiency,
                "electronic_noise_snu": det.electronic_noise_snu,
                "beta": beta, "rep_rate_hz": rep_rate_hz},
        abort=bool(k_r < 0.0),
    )


def _pilot_values(stream: QuadratureStream, layout: FrameLayout,
                  kind: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Complex pilot measurements and their frame positions."""
    offset = stream.frame_offset or 0
    positions = np.flatnonzero(kind == SLOT_PILOT)
    values = stream.complex_values[(offset + positions) % len(stream)]
    return values, positions


def pilot_snr(values: np.ndarray) -> float:
    """Per-pilot SNR estimate, robust to (slow) phase rotation.

    Noise power comes from consecutive-pilot differences, which cancel the
    signal when the phase moves little between pilots; the signal power is
    the excess of mean |v|^2 over twice that noise.  Reads ~0 on pure noise.
    """
    values = np.asarray(values)
    if values.size < 2:
        return np.inf
    noise_var = float(np.mean(np.abs(np.diff(values)) ** 2)) / 4.0
    if noise_var <= 0:
        return np.inf
    amp_sq = float(np.mean(np.abs(values) ** 2)) - 2.0 * noise_var
    return max(amp_sq, 0.0) / (2.0 * noise_var)


def pilot_phase_estimate(stream: QuadratureStream, layout: FrameLayout,
                         smooth_pilots: int = 1) -> PhaseTrace:
    """Estimate the channel phase at every pilot slot and interpolate.

    The phase is the two-argument arctangent of the measured pilot
    quadratures, atan2(P, X), which covers the full circle; the per-pilot
    series is unwrapped before linear interpolation across the intervening
    quantum symbols.

    smooth_pilots: width of a moving average applied to the complex pilot
    values before the angle is taken (1 = none, 0 = fit one global constant,
    appropriate for a static channel).
    """
    if stream.frame_offset is None:
        raise InvalidArgument("run frame_sync first (frame_offset unset)")
    kind = slot_map_for_length(layout, len(stream))
    values, positions = _pilot_values(stream, layout, kind)
    if positions.size == 0:
        raise InvalidArgument("layout yields no pilot slots")

    # Reliability scales with the averaging window: a static fit integrates
    # every pilot, a width-W smoother integrates W of them.
    snr = pilot_snr(values) if values.size >= 8 else np.inf
    window = values.size if smooth_pilots == 0 else max(1, min(smooth_pilots,
                                                               values.size))
    if snr * window < MIN_PILOT_SNR:
        raise PhaseEstimateUnreliable(
            f"pilot SNR {snr:.2f} x window {window} below {MIN_PILOT_SNR}")

    raw = np.unwrap(np.angle(values))
    if smooth_pilots == 0:
        smoothed = np.full(positions.size, np.angle(np.sum(values)))
    elif smooth_pilots > 1 and values.size > 1:
        k = min(smooth_pilots, values.size)
        kernel = np.ones(k)
        counts = np.convolve(np.ones(values.size), kernel, mode="same")
        avg = np.convolve(values, kernel, mode="same") / counts
        smoothed = np.unwrap(np.angle(avg))
    else:
        smoothed = raw

    per_symbol = np.interp(np.arange(kind.size, dtype=float),
                           positions.astype(float), smoothed)
    return PhaseTrace(
        pilot_positions=positions, pilot_phase=smoothed, pilot_phase_raw=raw,
        per_symbol=per_symbol,
        quantum_positions=np.flatnonzero(kind == SLOT_QUANTUM),
        offset=int(stream.frame_offset), pilot_snr=float(snr))


def phase_correct(stream: QuadratureStream, trace: PhaseTrace) -> QuadratureStream:
    """Rotate every quantum symbol by the negated phase estimate and strip
    pilots and sync, leaving the quantum payload in transmit order."""
    n = len(stream)
    idx = (trace.offset + trace.quantum_positions) % n
    rotated = stream.complex_values[idx] * np.exp(-1j * trace.per_symbol[trace.quantum_positions])
    return QuadratureStream(x=rotated.real, p=rotated.imag,
                            symbol_rate=stream.symbol_rate, frame_offset=0)


def estimate_params(alice: SymbolSequence, bob: QuadratureStream,
                    det: DetectorParams) -> ChannelEstimate:
    """Estimate (T, eps, V_A) from aligned transmit/receive data.

    Per-quadrature regression slope t_q = sum(a b) / sum(a^2); the heterodyne
    measurement reads sqrt(eta T / 2) per transmitted amplitude unit, so
    T = 2 t^2 / eta, and eps = (Var(b - t a) - 1 - v_el) / t^2 averaged over
    both quadratures.  A negative eps estimate is reported as-is and flagged.
    """
    n = len(alice)
    if n != len(bob):
        raise InvalidArgument("alice and bob sequences must have equal length")
    if n < MIN_ESTIMATION_SYMBOLS:
        raise InsufficientData(
            f"need at least {MIN_ESTIMATION_SYMBOLS} symbols, got {n}")

    a_x, a_p = alice.x, alice.p
    b_x, b_p = bob.x, bob.p

    corr_x = np.corrcoef(a_x, b_x)[0, 1]
    corr_p = np.corrcoef(a_p, b_p)[0, 1]
    if 0.5 * (abs(corr_x) + abs(corr_p)) < 0.1:
        raise AlignmentError(
            f"lag-0 correlation {0.5 * (abs(corr_x) + abs(corr_p)):.3f} "
            "suggests misaligned sequences")

    t_x = np.dot(a_x, b_x) / np.dot(a_x, a_x)
    t_p = np.dot(a_p, b_p) / np.dot(a_p, a_p)
    t = 0.5 * (t_x + t_p)

    eta = det.quantum_efficiency
    v_el = det.electronic_noise_snu
    t_hat = 2.0 * t**2 / eta

    resid = 0.5 * (np.var(b_x - t * a_x) + np.var(b_p - t * a_p))
    eps_hat = (resid - 1.0 - v_el) / t**2

    v_a_hat = float(np.var(alice.x) + np.var(alice.p))
    return ChannelEstimate(t_hat=float(t_hat), eps_hat=float(eps_hat),
                           v_a_hat=v_a_hat, n_used=n, slope=float(t))


def recover_node_key(sim, node_id: int) -> SkrReport:
    """Receive-side protocol for one node: isolate the band, demodulate,
    synchronize, phase-correct via pilots, estimate the channel and evaluate
    the key rate.

    Failures are captured in the report rather than raised, so one bad node
    cannot take down the other sessions.  A pilot phase slew above the
    recoverability threshold suspends the node's key exchange (the node
    would be told to keep transmitting pilots only).
    """
    from . import pipeline
    from .errors import QsnetError

    config = sim.config
    truth = sim.nodes[node_id]
    try:
        stream = pipeline.receive_node(sim, node_id)
        trace = pilot_phase_estimate(stream, config.frame,
                                     smooth_pilots=config.qkd.pilot_smoothing)
        if trace.max_pilot_step() > config.qkd.suspend_threshold_rad:
            return SkrReport(node_id=node_id, qkd_suspended=True, abort=True,
                             sync_offset=trace.offset, seed=sim.seed)
        corrected = phase_correct(stream, trace)
        fraction = config.qkd.estimation_fraction
        n_est = len(truth.symbols) if fraction >= 1.0 else max(
            MIN_ESTIMATION_SYMBOLS, int(fraction * len(truth.symbols)))
        alice = SymbolSequence(x=truth.symbols.x[:n_est],
                               p=truth.symbols.p[:n_est],
                               variance=truth.symbols.variance)
        bob = QuadratureStream(x=corrected.x[:n_est], p=corrected.p[:n_est],
                               symbol_rate=corrected.symbol_rate,
                               frame_offset=0)
        estimate = estimate_params(alice, bob, config.detector)
        report = secret_key_rate(
            v_a=estimate.v_a_hat,
            transmittance=min(estimate.t_hat, 1.0),
            excess_noise=max(estimate.eps_hat, 0.0),
            det=config.detector, beta=config.beta,
            rep_rate_hz=config.rep_rate_hz)
        report.node_id = node_id
        report.estimate = estimate
        report.sync_offset = trace.offset
        report.seed = sim.seed
        return report
    except QsnetError as exc:
        return SkrReport(node_id=node_id, error=str(exc), abort=True,
                         seed=sim.seed)


def run_qkd_session(config, seed: int | None = None) -> list[SkrReport]:
    """Simulate one block and run the point-to-multipoint key exchange for
    every registered node (reconciliation and privacy amplification enter
    only through the efficiency beta)."""
    from . import pipeline

    sim = pipeline.simulate(config, seed)
    return [recover_node_key(sim, nid) for nid in sorted(sim.nodes)]
