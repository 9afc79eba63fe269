"""Round-trip fiber channel: attenuation and splitter loss, static phase,
vibration-induced time-varying phase from the PZT / photoelastic model,
backscatter-induced power castdown, and channel excess noise."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument
from .signal_core import ComplexWaveform


@dataclass
class FiberConstants:
    """Optical and elasto-optic constants of the sensing fiber.

    Defaults are standard fused-silica values at 1550 nm; all are
    configurable per scenario.
    """

    wavelength_m: float = 1550e-9
    refractive_index: float = 1.468
    poisson_ratio: float = 0.17
    p11: float = 0.121
    p12: float = 0.270
    attenuation_db_per_km: float = 0.2
    light_speed_fiber_mps: float = 2.0e8

    def __post_init__(self):
        if not 1.0 < self.refractive_index < 2.0:
            raise InvalidArgument("refractive_index must lie in (1, 2)")
        if not 0.0 < self.poisson_ratio < 0.5:
            raise InvalidArgument("poisson_ratio must lie in (0, 0.5)")
        for name in ("wavelength_m", "p11", "p12", "attenuation_db_per_km",
                     "light_speed_fiber_mps"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")

    def photoelastic_factor(self) -> float:
        """n - n^3 [(1 - mu) p12 - mu p11] / 2 (about 1.146 for the defaults).

        Multiplies 2 pi / lambda in the length-to-phase conversion.
        """
        n = self.refractive_index
        mu = self.poisson_ratio
        return n - 0.5 * n**3 * ((1.0 - mu) * self.p12 - mu * self.p11)

    def phase_per_meter(self) -> float:
        """Optical phase change per meter of fiber elongation (rad/m)."""
        return 2.0 * np.pi / self.wavelength_m * self.photoelastic_factor()

    def transmittance(self, fiber_length_m: float, splitter_ports: int = 1) -> float:
        """One-way power transmittance including an optional 1/N splitter pass."""
        if splitter_ports < 1:
            raise InvalidArgument("splitter_ports must be >= 1")
        loss_db = self.attenuation_db_per_km * fiber_length_m / 1e3
        return 10.0 ** (-loss_db / 10.0) / splitter_ports


@dataclass
class PztParams:
    """Tube-type piezoelectric transducer with fiber wound around it.

    The default d coefficient is sized so that a 10 V swing produces roughly
    890 rad of optical phase with the default fiber constants.
    """

    d_coeff: float = 8.76e-7        # m/V
    outer_radius_m: float = 0.0275  # 55.00 mm outer diameter
    thickness_m: float = 3.95e-3
    wound_fiber_m: float = 2.5
    # Optional measured hysteresis curve: columns (voltage V, length change m).
    hysteresis: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("d_coeff", "outer_radius_m", "thickness_m", "wound_fiber_m"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.hysteresis is not None:
            self.hysteresis = np.asarray(self.hysteresis, dtype=float)
            if self.hysteresis.ndim != 2 or self.hysteresis.shape[1] != 2:
                raise InvalidArgument("hysteresis curve must be a two (voltage, "
                                      "length) column table")

    def length_per_volt(self) -> float:
        """Linear elongation per volt: d * pi * r / t (meters/volt)."""
        return self.d_coeff * np.pi * self.outer_radius_m / self.thickness_m

    def voltage_to_length(self, voltage: np.ndarray) -> np.ndarray:
        """Map applied voltage to fiber elongation, through the hysteresis
        curve when one is supplied, linearly otherwise."""
        voltage = np.asarray(voltage, dtype=float)
        if self.hysteresis is None:
            return self.length_per_volt() * voltage
        v_tab, l_tab = self.hysteresis[:, 0], self.hysteresis[:, 1]
        order = np.argsort(v_tab)
        return np.interp(voltage, v_tab[order], l_tab[order])


def load_hysteresis_table(path) -> np.ndarray:
    """Read a two-column (voltage, length) table from a CSV/whitespace file."""
    table = np.loadtxt(path, delimiter=",", ndmin=2)
    if table.shape[1] != 2:
        raise InvalidArgument("hysteresis table must have exactly two columns")
    return table


def pzt_phase(voltage: np.ndarray, pzt: PztParams,
              fiber: FiberConstants) -> np.ndarray:
    """Optical phase change produced by a PZT voltage series.

    Linear path: dphi = dV * (2 pi / lambda) * photoelastic_factor * (d pi r / t).
    With a hysteresis curve the voltage first maps to a length change, which
    then converts to phase; phase stays exactly proportional to length either
    way.
    """
    voltage = np.asarray(voltage, dtype=float)
    if not np.all(np.isfinite(voltage)):
        raise InvalidArgument("voltage series must be finite")
    return fiber.phase_per_meter() * pzt.voltage_to_length(voltage)


@dataclass
class ChannelState:
    """Per-node channel realization for one simulation block.

    `vibration_phase` is sampled at `vibration_rate`; `propagate` resamples it
    onto the waveform grid when the rates differ.  The castdown dip gates on
    vibration activity |dphi/dt| exceeding `activity_threshold`.
    """

    transmittance: float = 1.0
    static_phase_rad: float = 0.0
    vibration_phase: Optional[np.ndarray] = None
    vibration_rate: float = 0.0
    excess_noise_snu: float = 0.0
    castdown_db: float = 0.0
    activity_threshold: float = 2.0 * np.pi  # rad/s
    noise_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.transmittance <= 1.0:
            raise InvalidArgument("transmittance must lie in (0, 1]")
        if self.excess_noise_snu < 0:
            raise InvalidArgument("excess_noise_snu must be >= 0")
        if self.vibration_phase is not None:
            self.vibration_phase = np.asarray(self.vibration_phase, dtype=float)
            if self.vibration_rate <= 0:
                raise InvalidArgument("vibration_rate required with vibration_phase")


def _resample_phase(phase: np.ndarray, rate_in: float, n_out: int,
                    rate_out: float) -> np.ndarray:
    t_out = np.arange(n_out) / rate_out
    t_in = np.arange(phase.size) / rate_in
    if t_out[-1] > t_in[-1] + 1.0 / rate_in:
        raise InvalidArgument("vibration phase series shorter than the waveform")
    return np.interp(t_out, t_in, phase)


def propagate(waveform: ComplexWaveform, state: ChannelState) -> ComplexWaveform:
    """Apply the channel: sqrt(T) scaling, static + vibration phase rotation,
    castdown amplitude gating and input-referred excess noise.

    out(t) = sqrt(T) in(t) exp(j(theta + phi(t))) g(t) + noise, where g(t)
    dips by `castdown_db` while |dphi/dt| exceeds the activity threshold and
    the noise contributes `excess_noise_snu` SNU per quadrature referred to
    the channel input.
    """
    n = waveform.samples.size
    out = np.sqrt(state.transmittance) * waveform.samples
    if state.static_phase_rad != 0.0:
        out = out * np.exp(1j * state.static_phase_rad)

    if state.vibration_phase is not None and state.vibration_phase.size:
        if state.vibration_rate == waveform.sample_rate and \
                state.vibration_phase.size == n:
            phi = state.vibration_phase
        else:
            phi = _resample_phase(state.vibration_phase, state.vibration_rate,
                                  n, waveform.sample_rate)
        out = out * np.exp(1j * phi)
        if state.castdown_db > 0:
            rate = np.abs(np.gradient(phi) * waveform.sample_rate)
            dip = 10.0 ** (-state.castdown_db / 20.0)
            gate = np.where(rate > state.activity_threshold, dip, 1.0)
            out = out * gate

    if state.excess_noise_snu > 0:
        rng = np.random.Generator(np.random.PCG64(state.noise_seed))
        sigma = np.sqrt(state.transmittance * state.excess_noise_snu *
                        waveform.snu_scale)
        out = out + sigma * (rng.normal(size=n) + 1j * rng.normal(size=n))

    return ComplexWaveform(samples=out, sample_rate=waveform.sample_rate,
                           snu_scale=waveform.snu_scale)


def combine(waveforms: Sequence[ComplexWaveform]) -> ComplexWaveform:
    """Sample-wise sum of the per-node signals at the splitter output.

    Each node's 1/N splitter loss is already inside its channel transmittance.
    """
    if not waveforms:
        raise InvalidArgument("combine needs at least one waveform")
    first = waveforms[0]
    for w in waveforms[1:]:
        if w.sample_rate != first.sample_rate:
            raise InvalidArgument("all waveforms must share one sample rate")
        if w.samples.size != first.samples.size:
            raise InvalidArgument("all waveforms must have equal length")
        if w.snu_scale != first.snu_scale:
            raise InvalidArgument("all waveforms must share one SNU calibration")
    total = np.sum([w.samples for w in waveforms], axis=0)
    return ComplexWaveform(samples=total, sample_rate=first.sample_rate,
                           snu_scale=first.snu_scale)
