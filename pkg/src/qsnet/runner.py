"""Full-run orchestration: QKD session + SPM sensing + localization over one
simulated block, and machine-readable report emission."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import localize as loc
from . import pipeline, qkd, sensing
from .errors import IOErrorQsnet, QsnetError
from .scenario import ScenarioConfig


@dataclass
class RunArtifacts:
    """Everything one run produced, plus the metadata to reproduce it."""

    skr_reports: list[qkd.SkrReport]
    sensing_reports: list[sensing.SensingReport]
    event_estimates: list[loc.EventEstimate]
    run_metadata: dict
    waveform_dumps: list[str] = field(default_factory=list)

    @property
    def failed_nodes(self) -> list[int]:
        bad = [r.node_id for r in self.skr_reports if r.error]
        bad += [r.node_id for r in self.sensing_reports if r.error]
        return sorted({nid for nid in bad if nid is not None})


def run(config: ScenarioConfig, out_dir: str | Path | None = None,
        seed: int | None = None, dump_waveforms: bool = False) -> RunArtifacts:
    """Execute the whole pipeline for one scenario block.

    Simulates once, recovers every node's key-rate report and sensing report
    from the same detected waveform, localizes a common vibration event when
    at least three nodes recovered one, and (optionally) writes the report
    tree under `out_dir`.  Deterministic per (config, seed).
    """
    sim = pipeline.simulate(config, seed)
    sensing_reports = sensing.run_spm_on(sim)
    suspended = {r.node_id for r in sensing_reports if r.qkd_suspended}

    skr_reports = []
    for nid in sorted(sim.nodes):
        if nid in suspended:
            skr_reports.append(qkd.SkrReport(node_id=nid, qkd_suspended=True,
                                             abort=True, seed=sim.seed))
        else:
            skr_reports.append(qkd.recover_node_key(sim, nid))

    event_estimates: list[loc.EventEstimate] = []
    geometry = config.geometry()
    has_seismic = any(ev.kind == "seismic" for ev in config.vibration_events)
    traces = {r.node_id: r.vibration for r in sensing_reports
              if r.vibration is not None}
    if geometry is not None and has_seismic and len(traces) >= 3:
        try:
            delays = loc.tdoa(traces)
            estimate = loc.locate(delays, geometry)
            estimate.magnitude = loc.magnitude(traces, estimate, geometry).magnitude
            event_estimates.append(estimate)
        except QsnetError:
            pass  # no common event recovered; reports still stand

    artifacts = RunArtifacts(
        skr_reports=skr_reports,
        sensing_reports=sensing_reports,
        event_estimates=event_estimates,
        run_metadata={
            "scenario": config.name,
            "profile": config.profile,
            "seed": sim.seed,
            "detector_seed": sim.detector_seed,
            "version": __version__,
            "n_symbols": config.n_symbols,
            "nodes": sorted(sim.nodes),
        })
    if out_dir is not None:
        emit_report(artifacts, out_dir, sim=sim if dump_waveforms else None)
    return artifacts


def _to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return None  # bulk series go to CSV tables, not the JSON report
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _to_jsonable(v) for k, v in dataclasses.asdict(obj).items()
                if not isinstance(v, np.ndarray)}
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_table(path: Path, header: tuple[str, str],
                col_a: np.ndarray, col_b: np.ndarray) -> None:
    """Two-column numeric table: one header line, then value,value rows."""
    lines = [f"{header[0]},{header[1]}"]
    lines += [f"{float(a)!r},{float(b)!r}" for a, b in zip(col_a, col_b)]
    path.write_text("\n".join(lines) + "\n")


def emit_report(artifacts: RunArtifacts, out_dir: str | Path,
                sim: Optional[pipeline.NetworkSimulation] = None) -> list[Path]:
    """Write report.json plus two-column tables for every plottable series."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        tables = out / "tables"
        tables.mkdir(exist_ok=True)
    except OSError as exc:
        raise IOErrorQsnet(f"cannot create output directory {out}: {exc}") from exc

    written = []
    report = {
        "run_metadata": artifacts.run_metadata,
        "skr_reports": [_to_jsonable(r) for r in artifacts.skr_reports],
        "sensing_reports": [_to_jsonable(r) for r in artifacts.sensing_reports],
        "event_estimates": [_to_jsonable(e) for e in artifacts.event_estimates],
        "waveform_dumps": artifacts.waveform_dumps,
    }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    written.append(report_path)

    for r in artifacts.sensing_reports:
        if r.vibration is not None:
            t = np.arange(r.vibration.unwrapped_phase_rad.size) / r.vibration.sample_rate
            p = tables / f"node{r.node_id}_phase.csv"
            write_table(p, ("time_s", "phase_rad"), t, r.vibration.unwrapped_phase_rad)
            written.append(p)
            p = tables / f"node{r.node_id}_length.csv"
            write_table(p, ("time_s", "length_m"), t, r.vibration.length_change_m)
            written.append(p)
        if r.strain is not None:
            p = tables / f"node{r.node_id}_strain_psd.csv"
            write_table(p, ("freq_hz", "psd_rad2_per_hz"),
                        r.strain.freqs_hz, r.strain.psd_rad2_per_hz)
            written.append(p)

    if sim is not None:
        from scipy import signal as sp_signal
        freqs, psd = sp_signal.welch(
            sim.detected.samples, fs=sim.sample_rate, window="hann",
            nperseg=min(16384, sim.detected.samples.size), detrend=False,
            return_onesided=False)
        order = np.argsort(freqs)
        p = tables / "detected_spectrum.csv"
        write_table(p, ("freq_hz", "psd_per_hz"), freqs[order], psd[order])
        written.append(p)
        dump = out / "detected_waveform.npy"
        np.save(dump, sim.detected.samples)
        artifacts.waveform_dumps.append(str(dump))
        written.append(dump)

    return written


def skr_sweep(config: ScenarioConfig, lengths_km: np.ndarray) -> list[dict]:
    """Closed-form SKR of each node as a function of fiber length."""
    rows = []
    for km in lengths_km:
        t = config.fiber.transmittance(km * 1e3, config.network_capacity)
        for i, node in enumerate(config.nodes):
            report = qkd.secret_key_rate(
                v_a=node.modulation_variance, transmittance=t,
                excess_noise=config.excess_noise_snu[i], det=config.detector,
                beta=config.beta, rep_rate_hz=config.rep_rate_hz)
            rows.append({"length_km": float(km), "node_id": node.node_id,
                         "k_r": report.k_r, "k_bits_per_s": report.k_bits_per_s,
                         "abort": report.abort})
    return rows
