"""Closed-form joint quadrature noise of phase-modulated twin beams.

These formulas are the reference both simulation pipelines are checked against.
All noise values are relative to the joint shot noise (1 = vacuum).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

BRANCHES = ("difference", "sum")


@dataclass(frozen=True)
class SourceSpec:
    """Twin-beam source: amplitude gain G (g = sqrt(G^2 - 1)) and loss fraction per beam."""

    G: float = math.sqrt(3.0)
    eta: float = 0.0

    def __post_init__(self) -> None:
        if not self.G >= 1.0:
            raise DomainError(f"source.G: amplitude gain must be >= 1, got {self.G}")
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"source.eta: loss fraction must be in [0, 1], got {self.eta}")

    @property
    def g(self) -> float:
        return math.sqrt(self.G * self.G - 1.0)

    @property
    def squeezed(self) -> float:
        """Lossy squeezed-quadrature noise with no modulation."""
        return (self.G - self.g) ** 2 * (1.0 - self.eta) + self.eta

    @property
    def antisqueezed(self) -> float:
        return (self.G + self.g) ** 2 * (1.0 - self.eta) + self.eta


def effective_index(m_p, m_c, phi):
    """Single-modulator equivalent of two synchronized modulators at relative phase ``phi``."""
    m_p = np.asarray(m_p, dtype=float)
    m_c = np.asarray(m_c, dtype=float)
    if np.any(m_p < 0) or np.any(m_c < 0):
        raise DomainError("Modulation indices must be non-negative")
    radicand = m_p**2 + m_c**2 + 2.0 * m_p * m_c * np.cos(phi)
    result = np.sqrt(np.maximum(radicand, 0.0))
    return float(result) if result.ndim == 0 else result


def _noise(src: SourceSpec, coherence):
    G, g, eta = src.G, src.g, src.eta
    return (G * G + g * g) * (1.0 - eta) + eta - 2.0 * g * G * (1.0 - eta) * coherence


def joint_noise(src: SourceSpec, m_p, m_c, phi):
    """Time-averaged X-difference noise with modulators on both beams."""
    value = _noise(src, special.j0(effective_index(m_p, m_c, phi)))
    return float(value) if np.ndim(value) == 0 else value


def joint_noise_equal(src: SourceSpec, m, phi):
    """Joint noise when both modulators share the index ``m``."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise DomainError("Modulation index must be non-negative")
    argument = m * np.sqrt(np.maximum(2.0 + 2.0 * np.cos(phi), 0.0))
    value = _noise(src, special.j0(argument))
    return float(value) if np.ndim(value) == 0 else value


def phase_sweep_noise(src: SourceSpec, theta, branch: str = "difference"):
    """Unmodulated joint noise versus the summed local-oscillator phase theta."""
    if branch not in BRANCHES:
        raise DomainError(f"Unknown branch: {branch}. Must be one of {list(BRANCHES)}")
    sign = 1.0 if branch == "difference" else -1.0
    value = _noise(src, sign * np.cos(theta))
    return float(value) if np.ndim(value) == 0 else value


def to_db(ratio):
    ratio = np.asarray(ratio, dtype=float)
    if np.any(~(ratio > 0)):
        raise DomainError("dB conversion needs a positive ratio")
    value = 10.0 * np.log10(ratio)
    return float(value) if value.ndim == 0 else value
