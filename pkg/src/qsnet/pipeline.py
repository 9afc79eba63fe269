"""End-to-end physical simulation shared by the QKD and sensing front ends:
per-node modulation, vibrating channel, combining and heterodyne detection,
plus a vibration-free twin run used as the spectrum-monitoring baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import channel as ch
from . import node as nd
from . import receiver as rx
from . import signal_core as sc
from .scenario import ScenarioConfig, VibrationEvent


@dataclass
class NodeTruth:
    """Ground truth of one simulated node (for estimation checks)."""

    config: nd.NodeConfig
    symbols: sc.SymbolSequence
    frame: sc.QuadratureFrame
    transmittance: float
    static_phase_rad: float
    excess_noise_snu: float
    vibration_phase: Optional[np.ndarray]  # waveform rate, radians
    symbol_seed: int
    noise_seed: int


@dataclass
class NetworkSimulation:
    """One simulated block: the detected waveform, its vibration-free twin
    and per-node ground truth."""

    config: ScenarioConfig
    registry: nd.BandRegistry
    detected: sc.ComplexWaveform
    baseline_detected: sc.ComplexWaveform
    nodes: dict[int, NodeTruth]
    seed: int
    detector_seed: int

    @property
    def sample_rate(self) -> float:
        return self.detected.sample_rate

    def truth(self, node_id: int) -> NodeTruth:
        return self.nodes[node_id]

    def pilot_times(self, node_id: int) -> np.ndarray:
        """Times of the pilot slots of a node's frame on the waveform clock."""
        frame = self.nodes[node_id].frame
        shift = self.config.frame_offset_symbols
        positions = (frame.pilot_indices + shift) % len(frame)
        return np.sort(positions) / self.config.rep_rate_hz

    def ground_truth_phase_at(self, node_id: int, times_s: np.ndarray) -> np.ndarray:
        """Vibration phase applied to a node, sampled at the given times."""
        truth = self.nodes[node_id]
        if truth.vibration_phase is None:
            return np.zeros(np.asarray(times_s).size)
        t_axis = np.arange(truth.vibration_phase.size) / self.sample_rate
        return np.interp(times_s, t_axis, truth.vibration_phase)


def _event_waveform(event: VibrationEvent, t: np.ndarray) -> np.ndarray:
    """Unit-amplitude waveform of an event on the time axis `t`."""
    w = np.sin(2.0 * np.pi * event.frequency_hz * (t - event.onset_s)
               + event.phase_rad)
    if event.shape == "sine":
        return np.where(t >= event.onset_s, w, 0.0)
    duration = event.duration_s or (t[-1] - event.onset_s)
    ramp = min(2.0 / event.frequency_hz, 0.25 * duration)
    env = np.zeros_like(t)
    inside = (t >= event.onset_s) & (t <= event.onset_s + duration)
    rel = t[inside] - event.onset_s
    env[inside] = np.minimum(1.0, np.minimum(rel / ramp, (duration - rel) / ramp))
    return w * env


def node_vibration_phase(config: ScenarioConfig, node: nd.NodeConfig,
                         n_samples: int) -> Optional[np.ndarray]:
    """Total vibration-induced optical phase for one node at waveform rate.

    PZT events convert voltage to phase through the piezo and photoelastic
    models; seismic events arrive delayed by the source-node distance over
    the wave speed (plus the node-center fiber flight time) and attenuated
    inversely with distance.
    """
    t = np.arange(n_samples) / config.sample_rate_hz
    total = None
    for event in config.vibration_events:
        if event.kind == "pzt":
            if event.node_id != node.node_id:
                continue
            voltage = event.amplitude_v * _event_waveform(event, t)
            phase = ch.pzt_phase(voltage, node.pzt, config.fiber)
        else:
            dx = node.position_xy[0] - event.position_xy[0]
            dy = node.position_xy[1] - event.position_xy[1]
            distance = float(np.hypot(dx, dy))
            delay = distance / event.speed_mps \
                + node.fiber_length_m / config.fiber.light_speed_fiber_mps
            gamma = event.attenuation_ref_m / max(distance, 1e-9)
            phase = event.magnitude_rad * gamma * _event_waveform(
                event, t - delay)
        total = phase if total is None else total + phase
    return total


def channel_state_for(config: ScenarioConfig, index: int, noise_seed: int,
                      static_phase: float, n_samples: int,
                      with_vibration: bool = True) -> ch.ChannelState:
    node = config.nodes[index]
    vibration = node_vibration_phase(config, node, n_samples) \
        if with_vibration else None
    return ch.ChannelState(
        transmittance=config.node_transmittance(index),
        static_phase_rad=static_phase,
        vibration_phase=vibration,
        vibration_rate=config.sample_rate_hz if vibration is not None else 0.0,
        excess_noise_snu=config.excess_noise_snu[index],
        castdown_db=config.castdown_db if with_vibration else 0.0,
        activity_threshold=config.activity_threshold_rad_per_s,
        noise_seed=noise_seed)


def simulate(config: ScenarioConfig, seed: int | None = None) -> NetworkSimulation:
    """Run the transmit-side physics once and detect the combined field.

    Deterministic for a fixed (config, seed): per-node and detector seeds are
    spawned from one seed sequence in node-id order.  When vibration events
    are present, a twin run with identical noise draws but no vibration
    provides the monitoring baseline.
    """
    if seed is None:
        seed = config.seed
    order = sorted(range(len(config.nodes)), key=lambda i: config.nodes[i].node_id)
    ss = np.random.SeedSequence(seed)
    spawned = ss.spawn(len(order) + 1)
    detector_seed = int(spawned[-1].generate_state(1)[0])

    registry = config.registry()
    layout = config.frame
    has_events = bool(config.vibration_events)

    combined = None
    combined_base = None
    truths: dict[int, NodeTruth] = {}

    for slot, index in enumerate(order):
        node = config.nodes[index]
        states = spawned[slot].generate_state(3)
        symbol_seed = int(states[0])
        noise_seed = int(states[1])
        if config.static_phase_rad[index] is not None:
            theta = float(config.static_phase_rad[index])
        else:
            theta = float(np.random.Generator(
                np.random.PCG64(int(states[2]))).uniform(-np.pi, np.pi))

        symbols = sc.gaussian_symbols(config.n_symbols,
                                      node.modulation_variance, symbol_seed)
        frame = sc.build_frame(symbols, layout)
        wave = nd.modulate_node(frame, node, config.sample_rate_hz)
        if config.frame_offset_symbols:
            sps = int(round(config.sample_rate_hz / node.baseband_hz))
            wave.samples = np.roll(wave.samples,
                                   config.frame_offset_symbols * sps)

        state = channel_state_for(config, index, noise_seed, theta,
                                  wave.samples.size, with_vibration=True)
        out = ch.propagate(wave, state)
        combined = out if combined is None else ch.combine([combined, out])

        if has_events:
            base_state = channel_state_for(config, index, noise_seed, theta,
                                           wave.samples.size,
                                           with_vibration=False)
            base = ch.propagate(wave, base_state)
            combined_base = base if combined_base is None \
                else ch.combine([combined_base, base])

        truths[node.node_id] = NodeTruth(
            config=node, symbols=symbols, frame=frame,
            transmittance=state.transmittance, static_phase_rad=theta,
            excess_noise_snu=state.excess_noise_snu,
            vibration_phase=state.vibration_phase,
            symbol_seed=symbol_seed, noise_seed=noise_seed)

    detected = rx.detect(combined, config.detector, detector_seed)
    if has_events:
        baseline = rx.detect(combined_base, config.detector, detector_seed)
    else:
        baseline = detected
    return NetworkSimulation(config=config, registry=registry,
                             detected=detected, baseline_detected=baseline,
                             nodes=truths, seed=seed,
                             detector_seed=detector_seed)


def receive_node(sim: NetworkSimulation, node_id: int) -> rx.QuadratureStream:
    """Receive-side chain for one node: band select, demodulate, frame sync."""
    node = sim.nodes[node_id].config
    selected = rx.band_select(sim.detected, sim.registry, node_id)
    stream = rx.demodulate(selected, node.carrier_hz, node.baseband_hz)
    rx.frame_sync(stream, sim.config.frame.scaled_sync_word())
    return stream
