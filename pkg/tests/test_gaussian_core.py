import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twinbeam_eom.analytic import SourceSpec
from twinbeam_eom.errors import ConfigurationError, DimensionError, DomainError
from twinbeam_eom.exact import source_symplectic
from twinbeam_eom.gaussian_core import (
    CovMatrix,
    ModeGrid,
    QuadratureSelector,
    SymplecticOp,
    apply_loss,
    apply_symplectic,
    bin_readout,
    check_physical,
    extract_block,
    identity_op,
    joint_variance,
    quadrature_rotation,
    symplectic_defect,
    tmsv_symplectic,
    vacuum_cov,
)

SQUEEZED = (math.sqrt(3.0) - math.sqrt(2.0)) ** 2


def small_grid(**kwargs):
    return ModeGrid(n_bins=kwargs.pop("n_bins", 3), **kwargs)


def twin_beam(grid, G=math.sqrt(3.0)):
    return apply_symplectic(vacuum_cov(grid), source_symplectic(SourceSpec(G=G), grid))


def pair_coeffs(grid, quadrature, sign, offset=1):
    """Unit-weight combination of probe sideband +offset and conjugate sideband -offset."""
    shift = 0 if quadrature == "X" else grid.n_modes
    coeffs = np.zeros(grid.dim)
    coeffs[shift + grid.mode("probe", offset)] = 1.0
    coeffs[shift + grid.mode("conjugate", -offset)] = sign
    return coeffs


def test_grid_counts_every_signed_sideband():
    grid = ModeGrid(n_bins=2)

    assert grid.first_offset == 1
    assert grid.max_offset == 2
    assert grid.modes_per_beam == 5
    assert grid.dim == 20
    assert list(grid.in_band_offsets()) == [-2, -1, 1, 2]
    assert np.allclose(grid.bin_freqs, [2e5, 4e5])


def test_guard_bins_extend_the_modelled_sidebands():
    grid = ModeGrid(n_bins=1, guard_bins=1)

    assert grid.modes_per_beam == 5
    assert vacuum_cov(grid).data.shape == (20, 20)
    assert list(grid.in_band_offsets("upper")) == [1]


def test_grid_rejects_start_frequency_off_the_bin_lattice():
    with pytest.raises(ConfigurationError, match="grid.start_freq"):
        ModeGrid(start_freq=3e5)


def test_labels_follow_vector_order():
    grid = ModeGrid(n_bins=1)
    labels = grid.labels()

    assert len(labels) == grid.dim
    assert labels[0] == "Xp@-0.2MHz"
    assert labels[grid.n_modes] == "Pp@-0.2MHz"
    assert labels[-1] == "Pc@0.2MHz"


def test_vacuum_is_identity_and_physical():
    cov = vacuum_cov(small_grid())

    assert np.array_equal(cov.data, np.eye(cov.grid.dim))
    assert check_physical(cov).passed


def test_covariance_is_read_only():
    cov = vacuum_cov(small_grid())

    with pytest.raises(ValueError):
        cov.data[0, 0] = 2.0


def test_covariance_rejects_wrong_shape_and_asymmetry():
    grid = small_grid()

    with pytest.raises(DimensionError):
        CovMatrix(np.eye(4), grid)

    data = np.eye(grid.dim)
    data[0, 1] = 0.5
    with pytest.raises(DomainError, match="not symmetric"):
        CovMatrix(data, grid)


def test_unit_gain_squeezer_is_identity():
    grid = small_grid()
    op = tmsv_symplectic(1.0, grid.mode("probe", 1), grid.mode("conjugate", -1), grid)

    assert np.array_equal(op.matrix, np.eye(grid.dim))


def test_squeezer_rejects_gain_below_one():
    grid = small_grid()

    with pytest.raises(DomainError, match="gain"):
        tmsv_symplectic(0.9, 0, 1, grid)


def test_twin_beam_marginals_and_correlations():
    grid = small_grid()
    cov = twin_beam(grid)
    xp = grid.mode("probe", 2)
    xc = grid.mode("conjugate", -2)
    n = grid.n_modes

    assert np.allclose(np.diag(cov.data), 5.0)
    assert cov.data[xp, xc] == pytest.approx(2.0 * math.sqrt(6.0))
    assert cov.data[n + xp, n + xc] == pytest.approx(-2.0 * math.sqrt(6.0))
    assert check_physical(cov).passed


def test_twin_beam_x_difference_and_p_sum_are_squeezed():
    grid = small_grid()
    cov = twin_beam(grid)

    assert joint_variance(cov, pair_coeffs(grid, "X", -1.0)) == pytest.approx(SQUEEZED, rel=1e-12)
    assert joint_variance(cov, pair_coeffs(grid, "P", 1.0)) == pytest.approx(SQUEEZED, rel=1e-12)
    assert joint_variance(cov, pair_coeffs(grid, "X", 1.0)) == pytest.approx(
        (math.sqrt(3.0) + math.sqrt(2.0)) ** 2, rel=1e-12
    )


def test_twin_beam_stays_pure():
    cov = twin_beam(small_grid(n_bins=2))

    sign, logdet = np.linalg.slogdet(cov.data)
    assert sign == 1.0
    assert logdet == pytest.approx(0.0, abs=1e-9)


def test_joint_variance_of_vacuum_is_one():
    grid = small_grid()
    rng = np.random.default_rng(3)

    assert joint_variance(vacuum_cov(grid), rng.normal(size=grid.dim)) == pytest.approx(1.0)


def test_joint_variance_rejects_zero_and_misshaped_coefficients():
    cov = vacuum_cov(small_grid())

    with pytest.raises(DomainError, match="zero"):
        joint_variance(cov, np.zeros(cov.grid.dim))
    with pytest.raises(DimensionError):
        joint_variance(cov, np.ones(3))


def test_loss_mixes_in_vacuum():
    grid = small_grid()
    cov = twin_beam(grid)

    assert np.array_equal(apply_loss(cov, np.arange(grid.n_modes), 0.0).data, cov.data)
    assert np.allclose(apply_loss(cov, np.arange(grid.n_modes), 1.0).data, np.eye(grid.dim))

    lossy = apply_loss(cov, np.arange(grid.n_modes), 0.2)
    assert joint_variance(lossy, pair_coeffs(grid, "X", -1.0)) == pytest.approx(0.2808, abs=5e-5)
    assert np.allclose(lossy.data, 0.8 * cov.data + 0.2 * np.eye(grid.dim))


def loss_by_beamsplitter(cov, target, eta):
    """Append one vacuum ancilla, mix it with ``target`` on a beamsplitter and trace it out."""
    n = cov.grid.n_modes
    big = np.eye(2 * (n + 1))
    order = list(range(n)) + list(range(n + 1, 2 * n + 1))
    big[np.ix_(order, order)] = cov.data
    bs = np.eye(2 * (n + 1))
    t, r = math.sqrt(1.0 - eta), math.sqrt(eta)
    for a, b in ((target, n), (n + 1 + target, 2 * n + 1)):
        bs[a, a], bs[a, b], bs[b, a], bs[b, b] = t, r, -r, t
    mixed = bs @ big @ bs.T
    return mixed[np.ix_(order, order)]


def random_op(grid, seed, rounds=3):
    """Alternating rotations and two-mode squeezers with random modes, angles and gains."""
    rng = np.random.default_rng(seed)
    op = identity_op(grid)
    for _ in range(rounds):
        op = quadrature_rotation(rng.uniform(-math.pi, math.pi), int(rng.integers(grid.n_modes)), grid) @ op
        a, b = rng.choice(grid.n_modes, size=2, replace=False)
        op = tmsv_symplectic(rng.uniform(1.0, 1.6), int(a), int(b), grid) @ op
    return op


def test_loss_on_one_mode_matches_beamsplitter_with_vacuum_ancilla():
    grid = ModeGrid(n_bins=1)
    cov = twin_beam(grid)
    target = grid.mode("probe", 1)

    assert np.allclose(apply_loss(cov, target, 0.3).data, loss_by_beamsplitter(cov, target, 0.3))


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    eta=st.floats(min_value=0.01, max_value=0.99),
    mode=st.integers(min_value=0, max_value=13),
)
def test_loss_on_random_states_matches_beamsplitter(seed, eta, mode):
    grid = small_grid()
    cov = apply_symplectic(twin_beam(grid), random_op(grid, seed))
    target = mode % grid.n_modes

    gap = np.max(np.abs(apply_loss(cov, target, eta).data - loss_by_beamsplitter(cov, target, eta)))
    assert gap <= 1e-12 * max(1.0, float(np.max(np.abs(cov.data))))


def test_loss_rejects_fraction_outside_unit_interval():
    cov = vacuum_cov(small_grid())

    with pytest.raises(DomainError, match="Loss fraction"):
        apply_loss(cov, 0, 1.5)


def test_quarter_turn_swaps_quadratures():
    grid = ModeGrid(n_bins=1)
    data = np.eye(grid.dim)
    data[0, 0], data[grid.n_modes, grid.n_modes] = 2.0, 0.5
    rotated = apply_symplectic(CovMatrix(data, grid), quadrature_rotation(0.5 * math.pi, 0, grid))

    assert rotated.data[0, 0] == pytest.approx(0.5)
    assert rotated.data[grid.n_modes, grid.n_modes] == pytest.approx(2.0)


def test_zero_rotation_is_identity():
    grid = ModeGrid(n_bins=1)

    assert np.array_equal(quadrature_rotation(0.0, 2, grid).matrix, np.eye(grid.dim))


@settings(max_examples=50, deadline=None)
@given(theta=st.floats(min_value=-10.0, max_value=10.0, allow_nan=False))
def test_rotation_undone_by_its_inverse(theta):
    grid = ModeGrid(n_bins=1)
    op = quadrature_rotation(-theta, 1, grid) @ quadrature_rotation(theta, 1, grid)

    assert np.max(np.abs(op.matrix - np.eye(grid.dim))) < 1e-12


def test_non_symplectic_matrix_is_rejected():
    with pytest.raises(DomainError, match="symplectic defect"):
        SymplecticOp(2.0 * np.eye(4), "scaled")


def test_composed_operators_stay_symplectic():
    grid = small_grid()
    op = source_symplectic(SourceSpec(), grid) @ quadrature_rotation(0.7, 3, grid)

    assert symplectic_defect(op.matrix) < 1e-9


def test_sub_vacuum_covariance_is_unphysical():
    report = check_physical(0.5 * np.eye(8))

    assert not report.passed
    assert report.min_eigenvalue == pytest.approx(-0.5)


def test_physicality_survives_symplectic_evolution():
    grid = small_grid()
    evolved = apply_symplectic(twin_beam(grid), quadrature_rotation(1.1, 0, grid))

    assert check_physical(evolved).passed


def test_unmodulated_twin_beam_has_no_x_p_correlations():
    grid = small_grid()
    cov = twin_beam(grid)

    block = extract_block(cov, QuadratureSelector("X", "probe"), QuadratureSelector("P", "conjugate"))
    assert block.shape == (2 * grid.n_bins, 2 * grid.n_bins)
    assert np.allclose(block, 0.0)

    xx = extract_block(vacuum_cov(grid), QuadratureSelector("X", "probe"), QuadratureSelector("X", "probe"))
    assert np.array_equal(xx, np.eye(2 * grid.n_bins))


def test_extract_block_rejects_unknown_quadrature():
    with pytest.raises(DomainError, match="quadrature"):
        extract_block(vacuum_cov(small_grid()), QuadratureSelector("Y", "probe"), QuadratureSelector("X", "probe"))


def test_bin_readout_rows_are_orthonormal():
    grid = small_grid()
    readout = bin_readout(grid, "probe", 0.4)
    rows = np.vstack([readout.cos, readout.sin])

    assert np.allclose(rows @ rows.T, np.eye(2 * grid.n_bins))
    assert np.allclose(readout.freqs, grid.bin_freqs)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_random_symplectic_evolution_stays_physical(seed):
    grid = small_grid()
    op = random_op(grid, seed)

    assert symplectic_defect(op.matrix) < 1e-9
    for start in (vacuum_cov(grid), twin_beam(grid), apply_loss(twin_beam(grid), np.arange(4), 0.4)):
        report = check_physical(apply_symplectic(start, op))
        assert report.passed, report


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    perm=st.permutations(range(14)),
)
def test_joint_variance_ignores_a_consistent_relabelling_of_modes(seed, perm):
    grid = small_grid()
    assert grid.n_modes == 14
    cov = apply_symplectic(twin_beam(grid), random_op(grid, seed))
    coeffs = np.random.default_rng(seed).normal(size=grid.dim)
    order = np.concatenate([np.array(perm), grid.n_modes + np.array(perm)])
    relabelled = CovMatrix(cov.data[np.ix_(order, order)], grid)

    assert joint_variance(relabelled, coeffs[order]) == pytest.approx(joint_variance(cov, coeffs), rel=1e-10)
