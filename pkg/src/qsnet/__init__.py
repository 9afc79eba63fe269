"""qsnet: physics-level simulator of a multi-node quantum-key +
distributed-sensing optical fiber network.

Signal flow: Gaussian-modulated coherent symbols are framed with TDM pilots,
pulse-shaped onto per-node FDM carriers, passed through a vibrating fiber
channel, summed, heterodyne-detected at the shot-noise limit and recovered by
matched-filter DSP.  On top of the recovered quadratures sit the key-rate
engine (channel estimation plus the closed-form asymptotic secret key rate)
and the spectrum/phase monitoring protocol (castdown and splitting flags,
vibration waveform recovery, strain spectra, source localization).
"""

__version__ = "0.1.0"

from .errors import QsnetError  # noqa: F401
