"""Multimode Gaussian states over signed frequency sidebands.

Every beam carries the optical sidebands k * bin_spacing about its carrier,
k = -K..K. Quadrature vectors list every X first, then every P (probe beam
first, offsets ascending), and the vacuum has unit variance per quadrature.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DimensionError, DomainError

BEAMS = ("probe", "conjugate")
QUADRATURES = ("X", "P")
SIDEBANDS = ("both", "upper", "lower")

SYMMETRY_TOL = 1e-12
PHYSICAL_TOL = 1e-9
SYMPLECTIC_TOL = 1e-9

ModeIndex = Union[int, Sequence[int], np.ndarray]


@dataclass(frozen=True)
class ModeGrid:
    """Frequency bins reported per beam plus the sidebands needed to model them."""

    n_bins: int = 50
    bin_spacing: float = 2e5
    start_freq: float = 2e5
    beams: Tuple[str, ...] = BEAMS
    guard_bins: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "beams", tuple(self.beams))
        if self.n_bins < 1:
            raise ConfigurationError("grid.n_bins: must be at least 1")
        if not self.bin_spacing > 0:
            raise ConfigurationError("grid.bin_spacing: must be positive")
        if self.start_freq < self.bin_spacing:
            raise ConfigurationError("grid.start_freq: must be at least one bin spacing (no DC bin)")
        ratio = self.start_freq / self.bin_spacing
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigurationError("grid.start_freq: must be an integer multiple of grid.bin_spacing")
        if self.guard_bins < 0:
            raise ConfigurationError("grid.guard_bins: must be non-negative")
        if not self.beams or len(set(self.beams)) != len(self.beams):
            raise ConfigurationError("grid.beams: must be distinct, non-empty labels")

    @property
    def first_offset(self) -> int:
        return int(round(self.start_freq / self.bin_spacing))

    @property
    def last_offset(self) -> int:
        return self.first_offset + self.n_bins - 1

    @property
    def max_offset(self) -> int:
        return self.last_offset + self.guard_bins

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.max_offset, self.max_offset + 1)

    @property
    def modes_per_beam(self) -> int:
        return 2 * self.max_offset + 1

    @property
    def n_modes(self) -> int:
        return len(self.beams) * self.modes_per_beam

    @property
    def dim(self) -> int:
        return 2 * self.n_modes

    @property
    def bin_freqs(self) -> np.ndarray:
        return self.start_freq + self.bin_spacing * np.arange(self.n_bins)

    @property
    def bin_offsets(self) -> np.ndarray:
        return np.arange(self.first_offset, self.last_offset + 1)

    def in_band_offsets(self, sideband: str = "both") -> np.ndarray:
        upper = self.bin_offsets
        if sideband == "upper":
            return upper
        if sideband == "lower":
            return -upper[::-1]
        if sideband == "both":
            return np.concatenate([-upper[::-1], upper])
        raise DomainError(f"Unknown sideband selection: {sideband}. Must be one of {list(SIDEBANDS)}")

    def beam_index(self, beam: str) -> int:
        try:
            return self.beams.index(beam)
        except ValueError as exc:
            raise DomainError(f"Unknown beam: {beam}. Grid beams are {list(self.beams)}") from exc

    def modes(self, beam: str, offsets: ModeIndex) -> np.ndarray:
        """Mode indices of ``beam`` at the given sideband offsets."""
        offs = np.atleast_1d(np.asarray(offsets, dtype=int))
        if offs.size and np.max(np.abs(offs)) > self.max_offset:
            raise DomainError(f"Sideband offset outside grid (|k| <= {self.max_offset})")
        return self.beam_index(beam) * self.modes_per_beam + offs + self.max_offset

    def mode(self, beam: str, offset: int) -> int:
        return int(self.modes(beam, offset)[0])

    def labels(self) -> list:
        """Quadrature labels in vector order, e.g. ``Xp@1.2MHz``."""
        names = []
        for quadrature in QUADRATURES:
            for beam in self.beams:
                for offset in self.offsets:
                    names.append(f"{quadrature}{beam[0]}@{offset * self.bin_spacing / 1e6:g}MHz")
        return names


@lru_cache(maxsize=16)
def symplectic_form(dim: int) -> np.ndarray:
    if dim % 2:
        raise DimensionError(f"Phase-space dimension must be even, got {dim}")
    n = dim // 2
    omega = np.zeros((dim, dim))
    omega[:n, n:] = np.eye(n)
    omega[n:, :n] = -np.eye(n)
    omega.flags.writeable = False
    return omega


def symplectic_defect(matrix: np.ndarray) -> float:
    omega = symplectic_form(matrix.shape[0])
    return float(np.max(np.abs(matrix @ omega @ matrix.T - omega)))


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Quadrature covariance matrix in shot-noise units."""

    data: np.ndarray
    grid: ModeGrid

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=float)
        if data.shape != (self.grid.dim, self.grid.dim):
            raise DimensionError(f"Covariance shape {data.shape} does not match grid dimension {self.grid.dim}")
        scale = max(1.0, float(np.max(np.abs(data))))
        if np.max(np.abs(data - data.T)) > SYMMETRY_TOL * scale:
            raise DomainError("Covariance matrix is not symmetric")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)


@dataclass(frozen=True, eq=False)
class SymplecticOp:
    """Linear quadrature map preserving the symplectic form."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionError(f"Symplectic matrix must be square, got shape {matrix.shape}")
        defect = symplectic_defect(matrix)
        if defect > SYMPLECTIC_TOL:
            raise DomainError(f"{self.label or 'operator'}: symplectic defect {defect:.3e} exceeds {SYMPLECTIC_TOL:g}")
        matrix.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other: "SymplecticOp") -> "SymplecticOp":
        if other.dim != self.dim:
            raise DimensionError(f"Cannot compose operators of dimension {self.dim} and {other.dim}")
        return SymplecticOp(self.matrix @ other.matrix, f"{self.label} * {other.label}")


@dataclass(frozen=True)
class PhysicalityReport:
    passed: bool
    min_eigenvalue: float
    asymmetry: float


@dataclass(frozen=True)
class QuadratureSelector:
    """Selects one quadrature of one beam over the in-band sidebands."""

    quadrature: str
    beam: str
    sideband: str = "both"


@dataclass(frozen=True, eq=False)
class BinReadout:
    """Coefficient vectors of the cosine and sine components of a homodyne photocurrent.

    Row j of ``cos``/``sin`` maps a quadrature vector to the vacuum-normalized
    component of the photocurrent at ``freqs[j]``.
    """

    freqs: np.ndarray
    cos: np.ndarray
    sin: np.ndarray


def identity_op(grid: ModeGrid, label: str = "identity") -> SymplecticOp:
    return SymplecticOp(np.eye(grid.dim), label)


def vacuum_cov(grid: ModeGrid) -> CovMatrix:
    return CovMatrix(np.eye(grid.dim), grid)


def _mode_array(modes: ModeIndex, grid: ModeGrid) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(modes, dtype=int))
    if arr.size and (arr.min() < 0 or arr.max() >= grid.n_modes):
        raise DomainError(f"Mode index outside 0..{grid.n_modes - 1}")
    return arr


def tmsv_symplectic(G: float, probe_mode: ModeIndex, conjugate_mode: ModeIndex, grid: ModeGrid) -> SymplecticOp:
    """Two-mode squeezer with amplitude gain G on each (probe, conjugate) pair.

    X_p -> G X_p + g X_c and P_p -> G P_p - g P_c (and symmetrically), so the
    X difference and the P sum are squeezed.
    """
    if not G >= 1.0:
        raise DomainError(f"Amplitude gain must be >= 1, got {G}")
    a = _mode_array(probe_mode, grid)
    b = _mode_array(conjugate_mode, grid)
    if a.shape != b.shape:
        raise DimensionError("Probe and conjugate mode lists must have equal length")
    if np.unique(np.concatenate([a, b])).size != 2 * a.size:
        raise DomainError("Squeezed modes must be distinct")

    g = math.sqrt(G * G - 1.0)
    n = grid.n_modes
    matrix = np.eye(grid.dim)
    for x_a, x_b, sign in ((a, b, 1.0), (n + a, n + b, -1.0)):
        matrix[x_a, x_a] = G
        matrix[x_b, x_b] = G
        matrix[x_a, x_b] = sign * g
        matrix[x_b, x_a] = sign * g
    return SymplecticOp(matrix, f"tmsv G={G:.6g} pairs={a.size}")


def apply_symplectic(C: CovMatrix, S: SymplecticOp) -> CovMatrix:
    if S.dim != C.grid.dim:
        raise DimensionError(f"Operator dimension {S.dim} does not match covariance dimension {C.grid.dim}")
    out = S.matrix @ C.data @ S.matrix.T
    return CovMatrix(0.5 * (out + out.T), C.grid)


def apply_loss(C: CovMatrix, modes: ModeIndex, eta: float) -> CovMatrix:
    """Mix the given modes with vacuum on a beamsplitter of loss fraction ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"Loss fraction must be in [0, 1], got {eta}")
    idx = _mode_array(modes, C.grid)
    idx = np.concatenate([idx, C.grid.n_modes + idx])
    scale = np.ones(C.grid.dim)
    scale[idx] = math.sqrt(1.0 - eta)
    out = scale[:, None] * C.data * scale[None, :]
    out[idx, idx] += eta
    return CovMatrix(out, C.grid)


def quadrature_rotation(theta: float, mode: int, grid: ModeGrid) -> SymplecticOp:
    """Rotate one mode: X -> X cos(theta) + P sin(theta), P -> -X sin(theta) + P cos(theta)."""
    if not math.isfinite(theta):
        raise DomainError(f"Rotation angle must be finite, got {theta}")
    x = int(_mode_array(mode, grid)[0])
    p = grid.n_modes + x
    c, s = math.cos(theta), math.sin(theta)
    matrix = np.eye(grid.dim)
    matrix[x, x] = c
    matrix[x, p] = s
    matrix[p, x] = -s
    matrix[p, p] = c
    return SymplecticOp(matrix, f"rotation theta={theta:.6g} mode={x}")


def joint_variance(C: CovMatrix, coeffs: np.ndarray) -> float:
    """Variance of a linear quadrature combination relative to its vacuum value."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (C.grid.dim,):
        raise DimensionError(f"Coefficient vector must have length {C.grid.dim}, got shape {c.shape}")
    norm = float(c @ c)
    if norm == 0.0:
        raise DomainError("Coefficient vector is zero")
    return float(c @ C.data @ c) / norm


def check_physical(C: Union[CovMatrix, np.ndarray]) -> PhysicalityReport:
    """Check the uncertainty principle C + i*Omega >= 0 and symmetry."""
    data = C.data if isinstance(C, CovMatrix) else np.asarray(C, dtype=float)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise DimensionError(f"Covariance must be square, got shape {data.shape}")
    scale = max(1.0, float(np.max(np.abs(data))))
    asymmetry = float(np.max(np.abs(data - data.T))) / scale
    hermitian = 0.5 * (data + data.T) + 1j * symplectic_form(data.shape[0])
    min_eig = float(np.linalg.eigvalsh(hermitian)[0])
    passed = min_eig >= -PHYSICAL_TOL and asymmetry <= SYMMETRY_TOL
    return PhysicalityReport(passed=passed, min_eigenvalue=min_eig, asymmetry=asymmetry)


def quadrature_indices(grid: ModeGrid, selector: QuadratureSelector) -> np.ndarray:
    if selector.quadrature not in QUADRATURES:
        raise DomainError(f"Unknown quadrature: {selector.quadrature}. Must be one of {list(QUADRATURES)}")
    modes = grid.modes(selector.beam, grid.in_band_offsets(selector.sideband))
    return modes if selector.quadrature == "X" else grid.n_modes + modes


def extract_block(C: CovMatrix, rows: QuadratureSelector, cols: QuadratureSelector) -> np.ndarray:
    """Sub-block between two quadrature selections, guard sidebands excluded."""
    r = quadrature_indices(C.grid, rows)
    c = quadrature_indices(C.grid, cols)
    return C.data[np.ix_(r, c)].copy()


def bin_readout(grid: ModeGrid, beam: str, theta: float) -> BinReadout:
    """Readout vectors for a homodyne photocurrent X cos(theta) + P sin(theta).

    The analysis bin at offset k beats sidebands +k and -k against the local
    oscillator; its cosine and sine components are sideband combinations.
    """
    n = grid.n_modes
    upper = grid.modes(beam, grid.bin_offsets)
    lower = grid.modes(beam, -grid.bin_offsets)
    rows = np.arange(grid.n_bins)
    c, s = math.cos(theta) / math.sqrt(2.0), math.sin(theta) / math.sqrt(2.0)

    cos_rows = np.zeros((grid.n_bins, grid.dim))
    cos_rows[rows, upper] += c
    cos_rows[rows, lower] += c
    cos_rows[rows, n + upper] += s
    cos_rows[rows, n + lower] += s

    sin_rows = np.zeros((grid.n_bins, grid.dim))
    sin_rows[rows, n + lower] += c
    sin_rows[rows, n + upper] -= c
    sin_rows[rows, upper] += s
    sin_rows[rows, lower] -= s
    return BinReadout(freqs=grid.bin_freqs, cos=cos_rows, sin=sin_rows)
