import math

import numpy as np
import pytest
from scipy import special

from twinbeam_eom import tmsv_covariance
from twinbeam_eom.analytic import SourceSpec, joint_noise, phase_sweep_noise
from twinbeam_eom.eom_model import EomSpec
from twinbeam_eom.errors import DomainError
from twinbeam_eom.exact import exact_covariance, predicted_cov_block, predicted_joint_noise
from twinbeam_eom.gaussian_core import ModeGrid, check_physical

M = 0.1 * math.pi
GRID = ModeGrid(n_bins=6, guard_bins=10)
SRC = SourceSpec(G=math.sqrt(3.0), eta=0.0)
REFERENCE = -0.5 * math.pi


def pair(m_p, m_c, phi, placement_p="beam", placement_c="beam"):
    return (
        EomSpec(m=m_p, phi=REFERENCE, beam="probe", placement=placement_p),
        EomSpec(m=m_c, phi=REFERENCE + phi, beam="conjugate", placement=placement_c),
    )


def distance():
    bins = np.arange(GRID.n_bins)
    return np.abs(np.subtract.outer(bins, bins))


def test_unmodulated_covariance_matches_helper_and_is_physical():
    cov = exact_covariance(SRC, (), GRID)

    assert np.allclose(cov.data, tmsv_covariance(SRC.G, GRID).data)
    assert check_physical(cov).passed


@pytest.mark.parametrize(
    "m_p, m_c, phi_deg",
    [
        (0.0, 0.0, 0.0),
        (M, 0.0, 0.0),
        (2 * M, 0.0, 0.0),
        (M, M, 0.0),
        (M, M, 120.0),
        (M, M, 180.0),
        (0.3, 0.2, 45.0),
    ],
)
@pytest.mark.parametrize("eta", [0.0, 0.15])
def test_exact_pipeline_matches_closed_form(m_p, m_c, phi_deg, eta):
    src = SourceSpec(G=math.sqrt(3.0), eta=eta)
    cov = exact_covariance(src, pair(m_p, m_c, math.radians(phi_deg)), GRID)
    expected = joint_noise(src, m_p, m_c, math.radians(phi_deg))

    per_bin = predicted_joint_noise(cov, "difference")
    assert per_bin.shape == (GRID.n_bins,)
    assert np.allclose(per_bin, expected, rtol=1e-6, atol=0.0)


def test_out_of_phase_modulators_cancel_on_the_covariance():
    baseline = predicted_joint_noise(exact_covariance(SRC, (), GRID))
    modulated = predicted_joint_noise(exact_covariance(SRC, pair(M, M, math.pi), GRID))

    assert np.allclose(modulated, baseline, rtol=0.0, atol=1e-8)


def test_phase_sweep_from_covariance():
    cov = exact_covariance(SRC, (), GRID)

    for theta in (0.0, 0.25 * math.pi, 0.5 * math.pi, math.pi):
        assert np.allclose(predicted_joint_noise(cov, "difference", theta, 0.0), phase_sweep_noise(SRC, theta))
        assert np.allclose(predicted_joint_noise(cov, "sum", theta, 0.0), phase_sweep_noise(SRC, theta, "sum"))


def test_p_sum_is_squeezed():
    cov = exact_covariance(SRC, (), GRID)

    assert np.allclose(predicted_joint_noise(cov, "sum", 0.5 * math.pi, 0.5 * math.pi), SRC.squeezed)


def test_unknown_branch_and_component_are_rejected():
    cov = exact_covariance(SRC, (), GRID)

    with pytest.raises(DomainError, match="branch"):
        predicted_joint_noise(cov, "ratio")
    with pytest.raises(DomainError, match="component"):
        predicted_cov_block(cov, component="xx")


def test_unmodulated_block_is_zero():
    block = predicted_cov_block(exact_covariance(SRC, (), GRID))

    assert block.shape == (GRID.n_bins, GRID.n_bins)
    assert np.allclose(block, 0.0, atol=1e-12)


def test_in_phase_modulators_give_double_diagonal_block():
    block = predicted_cov_block(exact_covariance(SRC, pair(M, M, 0.0), GRID))
    d = distance()
    peak = 2.0 * SRC.G * SRC.g * special.jv(1, 2 * M)

    assert np.allclose(np.abs(block[d == 1]), peak, rtol=1e-6)
    assert np.allclose(block[d % 2 == 0], 0.0, atol=1e-9)
    assert np.max(np.abs(block[d == 3])) < 0.02 * peak


def test_loss_scales_the_block():
    lossless = predicted_cov_block(exact_covariance(SRC, pair(M, M, 0.0), GRID))
    lossy = predicted_cov_block(exact_covariance(SourceSpec(G=SRC.G, eta=0.15), pair(M, M, 0.0), GRID))

    assert np.allclose(lossy, 0.85 * lossless, atol=1e-12)


def test_out_of_phase_modulators_give_empty_block():
    block = predicted_cov_block(exact_covariance(SRC, pair(M, M, math.pi), GRID))

    assert np.allclose(block, 0.0, atol=1e-8)


def test_oscillator_placement_negates_the_block():
    beam = predicted_cov_block(exact_covariance(SRC, pair(M, M, 0.0), GRID))
    lo = predicted_cov_block(
        exact_covariance(SRC, pair(M, M, 0.0, "local_oscillator", "local_oscillator"), GRID)
    )

    assert np.allclose(lo, -beam, atol=1e-10)


def test_mixed_placement_in_phase_cancels():
    block = predicted_cov_block(exact_covariance(SRC, pair(M, M, 0.0, "beam", "local_oscillator"), GRID))

    assert np.allclose(block, 0.0, atol=1e-8)


def test_sine_and_cosine_components_differ_only_by_drive_phase():
    cov = exact_covariance(SRC, pair(M, M, 0.0), GRID)
    cc = predicted_cov_block(cov, component="cc")
    ss = predicted_cov_block(cov, component="ss")

    # a cosine drive writes the same near-diagonal correlation onto both components
    d = distance()
    assert np.allclose(np.abs(ss[d == 1]), np.abs(cc[d == 1]), rtol=1e-6)


@pytest.mark.parametrize("eta", [0.0, 0.15])
def test_single_modulator_on_either_beam_gives_the_same_noise(eta):
    src = SourceSpec(G=math.sqrt(3.0), eta=eta)
    on_probe = exact_covariance(src, (EomSpec(m=M, phi=REFERENCE, beam="probe"),), GRID)
    on_conjugate = exact_covariance(src, (EomSpec(m=M, phi=REFERENCE, beam="conjugate"),), GRID)

    assert np.allclose(predicted_joint_noise(on_probe), predicted_joint_noise(on_conjugate), rtol=1e-6, atol=0.0)
    assert np.allclose(predicted_joint_noise(on_conjugate), joint_noise(src, 0.0, M, 0.0), rtol=1e-6, atol=0.0)
    assert joint_noise(src, M, 0.0, 0.0) == pytest.approx(joint_noise(src, 0.0, M, 0.0), rel=1e-12)
