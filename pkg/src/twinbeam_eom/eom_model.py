"""Electro-optic phase modulator models.

In the time domain a modulator rotates its beam's quadratures by
theta(t) = m sin(2 pi f_drive t + phi). Over frequency sidebands the same
rotation is a multiport beamsplitter: by the Jacobi-Anger expansion the
complex sideband amplitude a_k = x_k + i p_k maps to
sum_n J_n(m) exp(-i n phi) a_{k + n q}, with q = f_drive / bin_spacing.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, special

from .errors import ConfigurationError, DomainError
from .gaussian_core import ModeGrid, SymplecticOp, identity_op

PLACEMENTS = ("beam", "local_oscillator")
DEFAULT_EPS = 1e-9
TAIL_TERMS = 40
MAX_ORDER = 200


@dataclass(frozen=True)
class EomSpec:
    m: float = 0.1 * math.pi
    phi: float = 0.0
    f_drive: float = 2e5
    beam: str = "probe"
    placement: str = "beam"
    enabled: bool = True

    def __post_init__(self) -> None:
        if not self.m >= 0:
            raise ConfigurationError(f"eom.m: modulation index must be non-negative, got {self.m}")
        if not self.f_drive > 0:
            raise ConfigurationError(f"eom.f_drive: must be positive, got {self.f_drive}")
        if not math.isfinite(self.phi):
            raise ConfigurationError(f"eom.phi: must be finite, got {self.phi}")
        if self.placement not in PLACEMENTS:
            raise ConfigurationError(f"eom.placement: {self.placement} is not one of {list(PLACEMENTS)}")

    @property
    def active(self) -> bool:
        return self.enabled and self.m > 0


@dataclass(frozen=True, eq=False)
class SidebandCoupler:
    spec: EomSpec
    n_max: int
    op: SymplecticOp
    truncation_defect: float


def instantaneous_phase(t, spec: EomSpec):
    """Phase written on the measured quadrature at time(s) ``t``.

    A modulator in the local oscillator shifts the measured quadrature the
    opposite way.
    """
    t = np.asarray(t, dtype=float)
    if not spec.enabled:
        phase = np.zeros_like(t)
    else:
        sign = -1.0 if spec.placement == "local_oscillator" else 1.0
        phase = sign * spec.m * np.sin(2.0 * np.pi * spec.f_drive * t + spec.phi)
    return float(phase) if phase.ndim == 0 else phase


def equivalent_beam_spec(spec: EomSpec) -> EomSpec:
    """In-beam modulator with the same effect on the homodyne record."""
    if spec.placement == "beam":
        return spec
    return replace(spec, placement="beam", phi=spec.phi + math.pi)


def truncation_order(m: float, eps: float = DEFAULT_EPS) -> int:
    """Smallest sideband order n whose neglected Bessel weight is below ``eps``."""
    if not m >= 0:
        raise DomainError(f"Modulation index must be non-negative, got {m}")
    if not 0.0 < eps < 1.0:
        raise DomainError(f"Tail tolerance must be in (0, 1), got {eps}")
    for n in range(MAX_ORDER):
        orders = np.arange(n + 1, n + 1 + TAIL_TERMS)
        tail = 2.0 * float(np.sum(special.jv(orders, m) ** 2))
        if tail < eps:
            return n
    raise DomainError(f"Modulation index {m} needs more than {MAX_ORDER} sidebands")


def drive_step(f_drive: float, grid: ModeGrid) -> int:
    ratio = f_drive / grid.bin_spacing
    step = int(round(ratio))
    if step < 1 or abs(ratio - step) > 1e-9 * ratio:
        raise ConfigurationError(
            f"eom.f_drive: {f_drive:g} Hz is not an integer multiple of the {grid.bin_spacing:g} Hz bin spacing"
        )
    return step


def sideband_symplectic(spec: EomSpec, grid: ModeGrid, eps: float = DEFAULT_EPS) -> SidebandCoupler:
    """Frequency-bin coupler of one modulator, renormalized to be exactly symplectic."""
    beam_spec = equivalent_beam_spec(spec)
    if not beam_spec.active:
        return SidebandCoupler(spec, 0, identity_op(grid, f"eom[{spec.beam}] off"), 0.0)

    step = drive_step(spec.f_drive, grid)
    n_max = truncation_order(spec.m, eps)
    if grid.guard_bins < n_max * step:
        raise ConfigurationError(
            f"grid.guard_bins: {grid.guard_bins} guard bins cannot hold {n_max} sidebands "
            f"at m={spec.m:.4g} (need {n_max * step})"
        )

    size = grid.modes_per_beam
    rows = np.arange(size)
    coupler = np.zeros((size, size), dtype=complex)
    for n in range(-n_max, n_max + 1):
        cols = rows + n * step
        valid = (cols >= 0) & (cols < size)
        coupler[rows[valid], cols[valid]] = special.jv(n, beam_spec.m) * np.exp(-1j * n * beam_spec.phi)

    defect = float(np.max(np.abs(coupler @ coupler.conj().T - np.eye(size))))
    unitary, _ = linalg.polar(coupler)

    x = grid.modes(spec.beam, grid.offsets)
    p = grid.n_modes + x
    matrix = np.eye(grid.dim)
    matrix[np.ix_(x, x)] = unitary.real
    matrix[np.ix_(x, p)] = -unitary.imag
    matrix[np.ix_(p, x)] = unitary.imag
    matrix[np.ix_(p, p)] = unitary.real
    label = (
        f"eom[{spec.beam},{spec.placement}] m={spec.m:.6g} phi={spec.phi:.6g} "
        f"n_max={n_max} renorm_defect={defect:.2e}"
    )
    return SidebandCoupler(spec, n_max, SymplecticOp(matrix, label), defect)
