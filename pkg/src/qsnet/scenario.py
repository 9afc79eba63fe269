"""Scenario ingestion and validation.

A scenario is a YAML document with the following top-level keys (defaults in
parentheses; every physical constant can be overridden):

    name: str                     scenario label
    profile: desk-scale | paper-scale
    seed: int                     base seed for the whole run
    sample_rate_hz: float
    n_symbols: int                quantum symbols per node and frame
    rep_rate_hz: float            symbol rate R, common to all nodes
    network_capacity: int         N, sizes the 1/N return splitter
    beta: float                   reconciliation efficiency (0.98)
    detector: {quantum_efficiency, electronic_noise_snu, bandwidth_hz}
    fiber: {wavelength_m, refractive_index, poisson_ratio, p11, p12,
            attenuation_db_per_km, light_speed_fiber_mps}
    frame: {pilot_period, pilot_amplitude, sync_word_len}
    pzt: {d_coeff, outer_radius_m, thickness_m, wound_fiber_m}
    nodes: [{node_id, carrier_hz, fiber_length_m, modulation_variance,
             position_xy}]
    channel: {excess_noise_snu (scalar or per-node list),
              transmittance_override (null, scalar or per-node list),
              static_phase_rad (random or per-node list), castdown_db,
              activity_threshold_rad_per_s}
    qkd: {pilot_smoothing (0 = static fit), suspend_threshold_rad (pi/4),
          estimation_fraction (1.0)}
    vibration_events: [{kind: pzt|seismic, ...}]
    geometry: {wave_speed_mps}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .channel import FiberConstants, PztParams
from .errors import ScenarioError
from .localize import NetworkGeometry
from .node import BandRegistry, NodeConfig, register_band
from .receiver import DetectorParams
from .signal_core import FrameLayout, default_sync_word

PROFILES = ("desk-scale", "paper-scale")


@dataclass
class VibrationEvent:
    """One vibration stimulus.

    kind "pzt": sinusoid (or windowed burst) of voltage on one node's PZT.
    kind "seismic": source at `position_xy` whose phase waveform reaches
    every node delayed by distance / speed and attenuated inversely with
    distance.
    """

    kind: str
    frequency_hz: float
    node_id: Optional[int] = None          # pzt
    amplitude_v: float = 0.0              # pzt: voltage amplitude
    position_xy: Optional[tuple[float, float]] = None  # seismic
    speed_mps: float = 6000.0             # seismic wave speed
    magnitude_rad: float = 0.0            # seismic: phase amplitude at d_ref
    attenuation_ref_m: float = 1000.0
    shape: str = "sine"                   # sine | burst
    phase_rad: float = 0.0
    onset_s: float = 0.0
    duration_s: Optional[float] = None    # burst only

    def __post_init__(self):
        if self.kind not in ("pzt", "seismic"):
            raise ScenarioError(f"unknown vibration kind {self.kind!r}",
                                "vibration_events.kind")
        if self.shape not in ("sine", "burst"):
            raise ScenarioError(f"unknown waveform shape {self.shape!r}",
                                "vibration_events.shape")
        if self.frequency_hz <= 0:
            raise ScenarioError("frequency_hz must be positive",
                                "vibration_events.frequency_hz")
        if self.kind == "pzt" and self.node_id is None:
            raise ScenarioError("pzt event needs node_id", "vibration_events")
        if self.kind == "seismic" and self.position_xy is None:
            raise ScenarioError("seismic event needs position_xy",
                                "vibration_events")


@dataclass
class QkdSettings:
    pilot_smoothing: int = 0              # 0: one static phase per frame
    suspend_threshold_rad: float = math.pi / 4.0
    estimation_fraction: float = 1.0


@dataclass
class MonitorSettings:
    castdown_threshold_db: float = 3.0
    splitting_threshold_db: float = 6.0


@dataclass
class ScenarioConfig:
    """Fully validated scenario; all defaults resolved."""

    name: str
    profile: str
    seed: int
    sample_rate_hz: float
    n_symbols: int
    rep_rate_hz: float
    network_capacity: int
    beta: float
    nodes: list[NodeConfig]
    detector: DetectorParams
    fiber: FiberConstants
    frame: FrameLayout
    excess_noise_snu: list[float]
    transmittance_override: list[Optional[float]]
    static_phase_rad: list[Optional[float]]  # None: seeded random
    castdown_db: float = 6.0
    activity_threshold_rad_per_s: float = 2.0 * math.pi
    qkd: QkdSettings = field(default_factory=QkdSettings)
    monitor: MonitorSettings = field(default_factory=MonitorSettings)
    vibration_events: list[VibrationEvent] = field(default_factory=list)
    wave_speed_mps: float = 6000.0
    frame_offset_symbols: int = 0

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ScenarioError(f"profile must be one of {PROFILES}", "profile")
        if self.network_capacity < len(self.nodes):
            raise ScenarioError("network_capacity below node count",
                                "network_capacity")
        if not 0.0 < self.beta <= 1.0:
            raise ScenarioError("beta must lie in (0, 1]", "beta")
        if self.n_symbols < 1:
            raise ScenarioError("n_symbols must be >= 1", "n_symbols")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate node ids", "nodes")
        for node in self.nodes:
            if node.baseband_hz != self.rep_rate_hz:
                raise ScenarioError(
                    f"node {node.node_id} symbol rate differs from rep_rate_hz",
                    "nodes")
        for name in ("excess_noise_snu", "transmittance_override",
                     "static_phase_rad"):
            if len(getattr(self, name)) != len(self.nodes):
                raise ScenarioError(f"{name} must have one entry per node", name)
        # Band overlap and Nyquist validation via the registry machinery.
        try:
            registry = BandRegistry()
            for node in sorted(self.nodes, key=lambda n: n.node_id):
                registry = register_band(registry, node)
        except Exception as exc:
            raise ScenarioError(str(exc), "nodes") from exc
        for node in self.nodes:
            if self.sample_rate_hz < 2.0 * (node.carrier_hz + node.baseband_hz / 2.0):
                raise ScenarioError(
                    f"sample rate below Nyquist for node {node.node_id}",
                    "sample_rate_hz")
        for event in self.vibration_events:
            if event.kind == "pzt" and event.node_id not in ids:
                raise ScenarioError(f"event references unknown node {event.node_id}",
                                    "vibration_events")

    def registry(self) -> BandRegistry:
        registry = BandRegistry()
        for node in sorted(self.nodes, key=lambda n: n.node_id):
            registry = register_band(registry, node)
        return registry

    def geometry(self) -> Optional[NetworkGeometry]:
        if len(self.nodes) < 3:
            return None
        ordered = sorted(self.nodes, key=lambda n: n.node_id)
        try:
            return NetworkGeometry(
                node_ids=[n.node_id for n in ordered],
                node_positions=[tuple(n.position_xy) for n in ordered],
                fiber_lengths_m=[n.fiber_length_m for n in ordered],
                wave_speed_mps=self.wave_speed_mps,
                fiber_light_speed_mps=self.fiber.light_speed_fiber_mps)
        except Exception:
            return None

    def node_transmittance(self, index: int) -> float:
        override = self.transmittance_override[index]
        if override is not None:
            return float(override)
        node = self.nodes[index]
        return self.fiber.transmittance(node.fiber_length_m,
                                        self.network_capacity)


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ScenarioError(f"missing required key {key!r}", context)
    return mapping[key]


def _per_node(value, n_nodes: int, name: str) -> list:
    if value is None or np.isscalar(value):
        return [value] * n_nodes
    value = list(value)
    if len(value) != n_nodes:
        raise ScenarioError(f"{name} needs one entry per node", name)
    return value


def scenario_from_dict(doc: dict, name: str = "inline") -> ScenarioConfig:
    """Build and validate a ScenarioConfig from a parsed YAML document."""
    if not isinstance(doc, dict) or not doc:
        raise ScenarioError("scenario document is empty or not a mapping")

    try:
        det = DetectorParams(**doc.get("detector", {}))
        fiber = FiberConstants(**doc.get("fiber", {}))
        pzt = PztParams(**doc.get("pzt", {}))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc), "detector/fiber/pzt") from exc

    frame_doc = dict(doc.get("frame", {}))
    sync_len = int(frame_doc.pop("sync_word_len", 64))
    try:
        frame = FrameLayout(sync_word=default_sync_word(sync_len), **frame_doc)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc), "frame") from exc

    rep_rate = float(_require(doc, "rep_rate_hz", "rep_rate_hz"))
    nodes_doc = _require(doc, "nodes", "nodes")
    if not isinstance(nodes_doc, list) or not nodes_doc:
        raise ScenarioError("nodes must be a non-empty list", "nodes")
    nodes = []
    for i, nd in enumerate(nodes_doc):
        try:
            nodes.append(NodeConfig(
                node_id=int(_require(nd, "node_id", f"nodes[{i}]")),
                carrier_hz=float(_require(nd, "carrier_hz", f"nodes[{i}]")),
                baseband_hz=float(nd.get("baseband_hz", rep_rate)),
                fiber_length_m=float(nd.get("fiber_length_m", 10e3)),
                modulation_variance=float(nd.get("modulation_variance", 12.0)),
                position_xy=tuple(nd.get("position_xy", (0.0, 0.0))),
                pzt=pzt))
        except (TypeError, ValueError) as exc:
            raise ScenarioError(str(exc), f"nodes[{i}]") from exc

    chan = doc.get("channel", {})
    qkd_doc = doc.get("qkd", {})
    mon_doc = doc.get("monitor", {})
    events = [VibrationEvent(**ev) for ev in doc.get("vibration_events", [])]
    geo_doc = doc.get("geometry", {})

    try:
        return ScenarioConfig(
            name=str(doc.get("name", name)),
            profile=str(doc.get("profile", "desk-scale")),
            seed=int(doc.get("seed", 1)),
            sample_rate_hz=float(_require(doc, "sample_rate_hz", "sample_rate_hz")),
            n_symbols=int(_require(doc, "n_symbols", "n_symbols")),
            rep_rate_hz=rep_rate,
            network_capacity=int(doc.get("network_capacity", len(nodes))),
            beta=float(doc.get("beta", 0.98)),
            nodes=nodes,
            detector=det,
            fiber=fiber,
            frame=frame,
            excess_noise_snu=[float(v or 0.0) for v in _per_node(
                chan.get("excess_noise_snu", 0.0), len(nodes),
                "channel.excess_noise_snu")],
            transmittance_override=[
                None if v is None else float(v) for v in _per_node(
                    chan.get("transmittance_override"), len(nodes),
                    "channel.transmittance_override")],
            static_phase_rad=[
                None if v in (None, "random") else float(v) for v in _per_node(
                    chan.get("static_phase_rad"), len(nodes),
                    "channel.static_phase_rad")],
            castdown_db=float(chan.get("castdown_db", 6.0)),
            activity_threshold_rad_per_s=float(
                chan.get("activity_threshold_rad_per_s", 2.0 * math.pi)),
            qkd=QkdSettings(**qkd_doc),
            monitor=MonitorSettings(**mon_doc),
            vibration_events=events,
            wave_speed_mps=float(geo_doc.get("wave_speed_mps", 6000.0)),
            frame_offset_symbols=int(doc.get("frame_offset_symbols", 0)),
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(str(exc)) from exc


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Load, validate and default-fill a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"no such file: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"YAML parse error: {exc}") from exc
    if doc is None:
        raise ScenarioError("scenario file is empty", str(path))
    return scenario_from_dict(doc, name=path.stem)


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (paper_3node, desk_3node,
    eq_triangle)."""
    here = Path(__file__).parent / "scenarios" / f"{name}.yaml"
    if not here.exists():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return here
