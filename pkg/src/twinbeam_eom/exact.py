"""Exact covariance pipeline: twin-beam source, modulator couplers, loss, readout."""

import math
from typing import Iterable, Optional

import numpy as np

from .analytic import BRANCHES, SourceSpec
from .eom_model import DEFAULT_EPS, EomSpec, sideband_symplectic
from .errors import DomainError, PipelineError
from .gaussian_core import (
    CovMatrix,
    ModeGrid,
    SymplecticOp,
    apply_loss,
    apply_symplectic,
    bin_readout,
    check_physical,
    tmsv_symplectic,
    vacuum_cov,
)

COMPONENTS = ("cc", "cs", "sc", "ss")


def source_symplectic(src: SourceSpec, grid: ModeGrid) -> SymplecticOp:
    """Squeeze every probe sideband +k together with conjugate sideband -k."""
    probe, conjugate = grid.beams[0], grid.beams[1]
    return tmsv_symplectic(src.G, grid.modes(probe, grid.offsets), grid.modes(conjugate, -grid.offsets), grid)


def exact_covariance(
    src: SourceSpec,
    eoms: Iterable[EomSpec],
    grid: ModeGrid,
    eps: float = DEFAULT_EPS,
    source: Optional[SymplecticOp] = None,
) -> CovMatrix:
    """Vacuum -> twin-beam source -> modulators -> loss on every mode."""
    cov = apply_symplectic(vacuum_cov(grid), source if source is not None else source_symplectic(src, grid))
    for spec in eoms:
        cov = apply_symplectic(cov, sideband_symplectic(spec, grid, eps).op)
    cov = apply_loss(cov, np.arange(grid.n_modes), src.eta)
    report = check_physical(cov)
    if not report.passed:
        raise PipelineError(f"Evolved covariance is unphysical (min eigenvalue {report.min_eigenvalue:.3e})")
    return cov


def _joint_rows(grid: ModeGrid, branch: str, theta_p: float, theta_c: float):
    if branch not in BRANCHES:
        raise DomainError(f"Unknown branch: {branch}. Must be one of {list(BRANCHES)}")
    sign = -1.0 if branch == "difference" else 1.0
    probe = bin_readout(grid, grid.beams[0], theta_p)
    conjugate = bin_readout(grid, grid.beams[1], theta_c)
    scale = 1.0 / math.sqrt(2.0)
    return scale * (probe.cos + sign * conjugate.cos), scale * (probe.sin + sign * conjugate.sin)


def predicted_joint_noise(
    cov: CovMatrix,
    branch: str = "difference",
    theta_p: float = 0.0,
    theta_c: float = 0.0,
) -> np.ndarray:
    """Per-bin noise of (i_p -/+ i_c)/sqrt(2), cosine and sine components averaged.

    This is the quantity a Welch estimate of the joint photocurrent converges
    to, in shot-noise units.
    """
    cos_rows, sin_rows = _joint_rows(cov.grid, branch, theta_p, theta_c)
    cos_var = np.einsum("ij,jk,ik->i", cos_rows, cov.data, cos_rows) / np.einsum("ij,ij->i", cos_rows, cos_rows)
    sin_var = np.einsum("ij,jk,ik->i", sin_rows, cov.data, sin_rows) / np.einsum("ij,ij->i", sin_rows, sin_rows)
    return 0.5 * (cos_var + sin_var)


def predicted_cov_block(
    cov: CovMatrix,
    theta_p: float = 0.0,
    theta_c: float = 0.5 * math.pi,
    component: str = "cc",
) -> np.ndarray:
    """Covariance between probe and conjugate photocurrent bin components.

    Rows are probe bins, columns conjugate bins; ``component`` picks the
    cosine (c) or sine (s) component of each side.
    """
    if component not in COMPONENTS:
        raise DomainError(f"Unknown component: {component}. Must be one of {list(COMPONENTS)}")
    probe = bin_readout(cov.grid, cov.grid.beams[0], theta_p)
    conjugate = bin_readout(cov.grid, cov.grid.beams[1], theta_c)
    rows = probe.cos if component[0] == "c" else probe.sin
    cols = conjugate.cos if component[1] == "c" else conjugate.sin
    return rows @ cov.data @ cols.T
