"""Child-node modulator: carrier up-conversion of a framed quadrature stream
onto the node's registered FDM band, and band registration bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import dsp
from .channel import PztParams
from .errors import BandConflict, DuplicateNode, InvalidArgument, InvalidSampleRate
from .signal_core import ComplexWaveform, QuadratureFrame


@dataclass
class NodeConfig:
    """Static description of one child node."""

    node_id: int
    carrier_hz: float
    baseband_hz: float            # symbol rate
    fiber_length_m: float = 10e3
    modulation_variance: float = 12.0  # SNU
    position_xy: tuple[float, float] = (0.0, 0.0)
    pzt: PztParams = field(default_factory=PztParams)

    def __post_init__(self):
        if self.carrier_hz <= self.baseband_hz / 2:
            raise InvalidArgument("carrier must exceed half the symbol rate")
        if self.fiber_length_m < 0:
            raise InvalidArgument("fiber_length_m must be >= 0")
        if self.modulation_variance <= 0:
            raise InvalidArgument("modulation_variance must be positive")

    def occupied_bandwidth(self) -> float:
        return dsp.occupied_bandwidth(self.baseband_hz)


@dataclass(frozen=True)
class BandEntry:
    carrier_hz: float
    bandwidth_hz: float
    registered: bool = True


@dataclass
class BandRegistry:
    """Frequency bands registered with the center node.

    Only registered bands may be selected at the receiver; any other node id
    is rejected as an illegal band.
    """

    entries: dict[int, BandEntry] = field(default_factory=dict)

    def band(self, node_id: int) -> BandEntry:
        return self.entries[node_id]

    def is_registered(self, node_id: int) -> bool:
        return node_id in self.entries and self.entries[node_id].registered


def register_band(registry: BandRegistry, node: NodeConfig,
                  bandwidth_hz: float | None = None) -> BandRegistry:
    """Register a node's band; reject overlaps and duplicate ids.

    Returns a new registry; the input registry is not modified.  The default
    bandwidth is the spectral support of the node's pulse-shaped signal.
    """
    bw = node.occupied_bandwidth() if bandwidth_hz is None else float(bandwidth_hz)
    if bw <= 0:
        raise InvalidArgument("bandwidth must be positive")
    if node.node_id in registry.entries:
        raise DuplicateNode(f"node {node.node_id} already registered")
    for other_id, entry in registry.entries.items():
        if abs(entry.carrier_hz - node.carrier_hz) < 0.5 * (entry.bandwidth_hz + bw):
            raise BandConflict(
                f"band of node {node.node_id} ({node.carrier_hz} Hz) overlaps "
                f"node {other_id} ({entry.carrier_hz} Hz)")
    entries = dict(registry.entries)
    entries[node.node_id] = BandEntry(carrier_hz=node.carrier_hz, bandwidth_hz=bw)
    return BandRegistry(entries=entries)


def modulate_node(frame: QuadratureFrame, node: NodeConfig,
                  sample_rate: float) -> ComplexWaveform:
    """Pulse-shape a frame and up-convert it to the node's carrier.

    The waveform realizes x cos(w t) - p sin(w t) in its real part and
    x sin(w t) + p cos(w t) in its imaginary part, i.e. (x + jp) e^{jwt}
    shaped by the root-raised-cosine transmit filter.  Amplitudes are
    calibrated so that matched demodulation recovers the symbols with unit
    gain (one SNU in equals one SNU out before channel loss).
    """
    if len(frame) == 0:
        raise InvalidArgument("cannot modulate an empty frame")
    if sample_rate < 2.0 * (node.carrier_hz + node.baseband_hz / 2.0):
        raise InvalidSampleRate(
            f"sample rate {sample_rate} Hz below Nyquist for carrier "
            f"{node.carrier_hz} Hz with symbol rate {node.baseband_hz} Hz")
    sps = dsp.samples_per_symbol(sample_rate, node.baseband_hz)
    baseband = dsp.shape_symbols(frame.complex_amplitudes, sps)
    phasor = dsp.carrier_phasor(baseband.size, node.carrier_hz, sample_rate)
    return ComplexWaveform(samples=baseband * phasor, sample_rate=sample_rate,
                           snu_scale=float(sps))


def with_scaled_frequencies(node: NodeConfig, factor: float) -> NodeConfig:
    """Node with carrier and symbol rate scaled by `factor` (profile switch)."""
    return replace(node, carrier_hz=node.carrier_hz * factor,
                   baseband_hz=node.baseband_hz * factor)
