"""twinbeam-eom: nonlocal electro-optic phase modulation of multimode twin beams.

This module is the stable public API. It re-exports the Gaussian-state
building blocks, the modulator model, the closed-form noise formulas, the
Monte-Carlo trace and estimation chain, and the scenario runner.
"""

from .analytic import (
    BRANCHES,
    SourceSpec,
    effective_index,
    joint_noise,
    joint_noise_equal,
    phase_sweep_noise,
    to_db,
)
from .cli import create_argument_parser, main, parse_cli_args
from .config import (
    SCENARIOS,
    EomEntry,
    ScenarioConfig,
    config_hash,
    config_to_dict,
    derive_seed,
    load_config,
    parse_config,
)
from .dsp import (
    BinQuadratures,
    CovBlockEstimate,
    SegmentPlan,
    Spectrum,
    VarianceEstimate,
    band_average,
    cross_covariance,
    drive_locked_bins,
    joint_noise_spectrum,
    segment_variance,
    shot_reference,
    two_sample_z,
    welch_psd,
)
from .eom_model import (
    EomSpec,
    SidebandCoupler,
    equivalent_beam_spec,
    instantaneous_phase,
    sideband_symplectic,
    truncation_order,
)
from .errors import (
    ConfigurationError,
    DimensionError,
    DomainError,
    FileProcessingError,
    PipelineError,
    TwinBeamError,
    ValidationFailure,
)
from .exact import exact_covariance, predicted_cov_block, predicted_joint_noise, source_symplectic
from .export import read_traces, write_traces
from .gaussian_core import (
    BinReadout,
    CovMatrix,
    ModeGrid,
    PhysicalityReport,
    QuadratureSelector,
    SymplecticOp,
    apply_loss,
    apply_symplectic,
    bin_readout,
    check_physical,
    extract_block,
    joint_variance,
    quadrature_rotation,
    tmsv_symplectic,
    vacuum_cov,
)
from .scenarios import PipelineReport, ScenarioResult, Tolerances, compare_pipelines, run_scenario
from .timeseries import (
    Photocurrent,
    QuadratureTraces,
    TraceConfig,
    apply_eom,
    apply_loss_traces,
    expected_joint_noise,
    homodyne,
    synthesize_source,
)


def tmsv_covariance(G: float, grid: ModeGrid) -> CovMatrix:
    """Lossless twin-beam covariance over every sideband of ``grid``."""
    return apply_symplectic(vacuum_cov(grid), source_symplectic(SourceSpec(G=G), grid))


def joint_noise_db(src: SourceSpec, m_p: float, m_c: float, phi: float) -> float:
    return to_db(joint_noise(src, m_p, m_c, phi))
