"""Vibration source localization: TDOA by cross-correlation, position from
the three-circle system with fiber-delay corrections, magnitude from the
per-node phase amplitudes and an attenuation model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import (GeometryError, InvalidArgument, LocalizationFailure,
                     NoCommonEvent)
from .sensing import VibrationTrace

MIN_CORRELATION_PEAK = 0.5
MAX_RESIDUAL_M = 10.0
SOLVER_TOL_M = 1e-6
SOLVER_MAX_ITER = 100


@dataclass
class NetworkGeometry:
    """Node layout for multilateration.

    `node_ids` orders the positions and fiber lengths; the wave speed is the
    mechanical (seismic) speed, `fiber_light_speed_mps` the optical speed
    used for the fiber-delay corrections.
    """

    node_ids: list[int]
    node_positions: list[tuple[float, float]]
    fiber_lengths_m: list[float]
    wave_speed_mps: float
    center_position: tuple[float, float] = (0.0, 0.0)
    fiber_light_speed_mps: float = 2.0e8

    def __post_init__(self):
        n = len(self.node_ids)
        if not (len(self.node_positions) == len(self.fiber_lengths_m) == n):
            raise GeometryError("node ids, positions and fiber lengths must align")
        if n < 3:
            raise GeometryError("localization needs at least 3 nodes")
        if self.wave_speed_mps <= 0:
            raise GeometryError("wave_speed_mps must be positive")
        p = np.asarray(self.node_positions, dtype=float)
        # Collinearity check: the largest triangle area over node triples.
        area = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                for k in range(j + 1, n):
                    u, w = p[j] - p[i], p[k] - p[i]
                    area = max(area, abs(u[0] * w[1] - u[1] * w[0]) / 2.0)
        span = np.max(np.ptp(p, axis=0))
        if area < 1e-9 * max(span, 1.0) ** 2:
            raise GeometryError("node positions are collinear")

    def index_of(self, node_id: int) -> int:
        return self.node_ids.index(node_id)


@dataclass
class EventEstimate:
    """Localized vibration event."""

    position: tuple[float, float]
    arrival_times_s: dict[int, float]
    tdoa_s: dict[tuple[int, int], float]
    residual_m: float
    magnitude: Optional[float] = None
    ambiguous: bool = False
    alternates: list[tuple[float, float]] = field(default_factory=list)


def _refine_peak(corr: np.ndarray, peak: int) -> float:
    """Parabolic interpolation of a correlation peak (sub-sample offset)."""
    if peak == 0 or peak == corr.size - 1:
        return float(peak)
    a, b, c = corr[peak - 1], corr[peak], corr[peak + 1]
    denom = a - 2.0 * b + c
    if denom == 0:
        return float(peak)
    return float(peak + 0.5 * (a - c) / denom)


def tdoa(traces: dict[int, VibrationTrace]) -> dict[tuple[int, int], float]:
    """Pairwise arrival-time differences by cross-correlation.

    Returns dt[(j, k)] > 0 when node j's trace lags node k's; antisymmetric
    by construction (dt[(k, j)] = -dt[(j, k)]).  Peaks are refined by
    parabolic interpolation.
    """
    ids = sorted(traces)
    if len(ids) < 2:
        raise InvalidArgument("tdoa needs at least two traces")
    rate = traces[ids[0]].sample_rate
    for nid in ids:
        if traces[nid].sample_rate != rate:
            raise InvalidArgument("all traces must share one sample rate")

    out: dict[tuple[int, int], float] = {}
    for i, j_id in enumerate(ids):
        for k_id in ids[i + 1:]:
            a = traces[j_id].unwrapped_phase_rad
            b = traces[k_id].unwrapped_phase_rad
            a = a - np.mean(a)
            b = b - np.mean(b)
            corr = np.correlate(a, b, mode="full")
            norm = np.sqrt(np.dot(a, a) * np.dot(b, b))
            if norm <= 0:
                raise NoCommonEvent(f"empty trace for pair ({j_id}, {k_id})")
            peak = int(np.argmax(corr))
            if corr[peak] / norm < MIN_CORRELATION_PEAK:
                raise NoCommonEvent(
                    f"correlation peak {corr[peak] / norm:.2f} below "
                    f"{MIN_CORRELATION_PEAK} for pair ({j_id}, {k_id})")
            lag = _refine_peak(corr, peak) - (b.size - 1)
            dt = lag / rate
            out[(j_id, k_id)] = dt
            out[(k_id, j_id)] = -dt
    return out


def _relative_delays(tdoa_s: dict[tuple[int, int], float],
                     geometry: NetworkGeometry) -> np.ndarray:
    """Per-node arrival offsets (relative to the first node) from pairwise
    waveform delays, including the fiber-delay corrections
    t_j - t_k = dt_jk + (L_j - L_k) / c."""
    ids = geometry.node_ids
    n = len(ids)
    rows, rhs = [], []
    for (j, k), dt in sorted(tdoa_s.items()):
        if j not in ids or k not in ids or j == k:
            continue
        row = np.zeros(n)
        row[geometry.index_of(j)] = 1.0
        row[geometry.index_of(k)] = -1.0
        lj = geometry.fiber_lengths_m[geometry.index_of(j)]
        lk = geometry.fiber_lengths_m[geometry.index_of(k)]
        rows.append(row)
        rhs.append(dt + (lj - lk) / geometry.fiber_light_speed_mps)
    if len(rows) < n - 1:
        raise InvalidArgument("not enough TDOA pairs to relate all nodes")
    # Anchor the first node at zero delay.
    anchor = np.zeros(n)
    anchor[0] = 1.0
    rows.append(anchor)
    rhs.append(0.0)
    sol, *_ = np.linalg.lstsq(np.asarray(rows), np.asarray(rhs), rcond=None)
    return sol


def locate(tdoa_s: dict[tuple[int, int], float],
           geometry: NetworkGeometry) -> EventEstimate:
    """Solve the circle system for the source position.

    dist(node_k, source) = v * t_k with the t_k tied together by the
    fiber-corrected waveform delays; unknowns are (x0, y0, t_ref), solved by
    damped least squares from the centroid with extra starts to expose the
    two-circle ambiguity.  Residual is the RMS circle mismatch in meters.
    """
    positions = np.asarray(geometry.node_positions, dtype=float)
    v = geometry.wave_speed_mps
    delays = _relative_delays(tdoa_s, geometry)

    def residuals(params):
        x0, y0, t_ref = params
        d = np.hypot(positions[:, 0] - x0, positions[:, 1] - y0)
        return d - v * (t_ref + delays)

    centroid = positions.mean(axis=0)
    t0 = float(np.mean(np.hypot(*(positions - centroid).T) / v - delays))
    starts = [np.array([centroid[0], centroid[1], t0])]
    for pos in positions:
        probe = centroid + 0.5 * (pos - centroid)
        starts.append(np.array([probe[0], probe[1], t0]))
    starts.append(np.array([2.0 * centroid[0] - positions[0][0],
                            2.0 * centroid[1] - positions[0][1], t0]))

    solutions = []
    for start in starts:
        sol = least_squares(residuals, start, method="lm",
                            max_nfev=SOLVER_MAX_ITER * 4,
                            xtol=SOLVER_TOL_M / max(v, 1.0), ftol=1e-15)
        rms = float(np.sqrt(np.mean(sol.fun**2)))
        solutions.append((rms, sol.x))

    solutions.sort(key=lambda item: item[0])
    best_rms, best = solutions[0]
    if not np.isfinite(best_rms) or best_rms > MAX_RESIDUAL_M:
        raise LocalizationFailure(
            f"residual {best_rms:.2f} m exceeds {MAX_RESIDUAL_M} m")

    alternates = []
    ambiguous = False
    for rms, x in solutions[1:]:
        if np.hypot(x[0] - best[0], x[1] - best[1]) > 1.0 and \
                rms - best_rms < 1.0:
            key = (round(float(x[0]), 1), round(float(x[1]), 1))
            if key not in {(round(a[0], 1), round(a[1], 1)) for a in alternates}:
                alternates.append((float(x[0]), float(x[1])))
                ambiguous = True

    t_ref = best[2]
    arrivals = {nid: float(t_ref + delays[i])
                for i, nid in enumerate(geometry.node_ids)}
    return EventEstimate(
        position=(float(best[0]), float(best[1])),
        arrival_times_s=arrivals,
        tdoa_s={pair: float(dt) for pair, dt in sorted(tdoa_s.items())},
        residual_m=best_rms, ambiguous=ambiguous, alternates=alternates)


def inverse_distance_attenuation(reference_m: float = 1000.0) -> Callable[[float], float]:
    """gamma(d) = d_ref / d: amplitude attenuation that shrinks with distance."""
    def gamma(distance_m: float) -> float:
        return reference_m / max(distance_m, 1e-9)
    return gamma


@dataclass
class MagnitudeEstimate:
    magnitude: float
    used_nodes: list[int]
    degraded: bool


def magnitude(traces: dict[int, VibrationTrace], estimate: EventEstimate,
              geometry: NetworkGeometry,
              attenuation_model: Callable[[float], float] | None = None
              ) -> MagnitudeEstimate:
    """Source magnitude: per-node peak |phase| divided by the attenuation at
    that node's distance, averaged.  Nodes whose trace is indistinguishable
    from noise are dropped and the result flagged degraded."""
    gamma = attenuation_model or inverse_distance_attenuation()
    x0, y0 = estimate.position
    amps, used = {}, []
    for nid in sorted(traces):
        trace = traces[nid]
        amp = float(np.max(np.abs(trace.unwrapped_phase_rad)))
        # Noise scale from first differences, robust to the waveform itself.
        diffs = np.diff(trace.unwrapped_phase_rad)
        noise = 1.4826 * float(np.median(np.abs(diffs - np.median(diffs)))) / np.sqrt(2.0)
        amps[nid] = (amp, noise)

    values = []
    degraded = False
    for nid, (amp, noise) in amps.items():
        if amp < 6.0 * noise:
            degraded = True
            continue
        idx = geometry.index_of(nid)
        d = float(np.hypot(geometry.node_positions[idx][0] - x0,
                           geometry.node_positions[idx][1] - y0))
        g = gamma(d)
        if g == 0:
            raise InvalidArgument("attenuation model returned zero")
        values.append(amp / g)
        used.append(nid)
    if not values:
        raise LocalizationFailure("no trace rises above its noise floor")
    return MagnitudeEstimate(magnitude=float(np.mean(values)),
                             used_nodes=used, degraded=degraded)
