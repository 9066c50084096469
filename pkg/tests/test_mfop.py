import math
from dataclasses import replace

import numpy as np
import pytest

from wgfm.imaging import hermitian_sqrt
from wgfm.mfop import (
    FarFieldMatrix,
    OperatorError,
    OperatorKind,
    alpha_coercivity,
    assemble_alpha,
    assemble_backscatter,
    assemble_block,
    assemble_two_sided,
    coercive_alpha,
    coercivity_constant,
    discrete_factors,
    dispersion_identity_error,
    extrapolate_zero_lag,
    omega,
    omega_alpha,
    self_adjoint_part,
    singular_values,
    verify_factorization,
)
from wgfm.modal import psi_n
from wgfm.synth import (
    DataSet,
    FrequencyGrid,
    MeasurementConfig,
    QuadratureRule,
    SourceSpec,
    add_noise,
    block_dataset,
    rectangle,
    synthesize_alpha_dataset,
    synthesize_dataset,
)


# --- Lattices ---

def test_omega_depends_on_difference_only():
    assert omega(6.0, 3.0, 1.0) == pytest.approx(omega(6.0, 10.0, 8.0))
    assert omega(0.0, 1.0, 3.0) == pytest.approx(2.0)


def test_omega_alpha():
    value = omega_alpha(0.0, 12.0, 4.0, 1.0, 0.5)
    assert value == pytest.approx(0.5 + 3.0)
    with pytest.raises(ValueError):
        omega_alpha(0.0, 12.0, 1.9, 1.0, 0.5)


def test_dispersion_identity(mixed):
    rng = np.random.default_rng(5)
    sigma = rng.uniform(0.0, 10.5, 20000)
    gamma = rng.uniform(0.0, 10.5, 20000)
    keep = np.abs(sigma - gamma) >= 0.05
    assert dispersion_identity_error(mixed, sigma[keep], gamma[keep]) <= 1e-12


def test_dispersion_identity_alpha(neumann):
    grid = FrequencyGrid.for_alpha(neumann, 8.0, 16)
    s, g = np.meshgrid(grid.sigma, grid.sigma)
    assert dispersion_identity_error(neumann, s.ravel(), g.ravel(), 8.0) <= 1e-12


# --- Zero-lag extrapolation ---

def test_extrapolation_exact_for_single_reflector():
    amplitude, step = 2.0 - 1.0j, 0.3
    values = amplitude * np.exp(1j * step * np.arange(1, 4))
    assert extrapolate_zero_lag(values) == pytest.approx(amplitude)


def test_extrapolation_fallbacks():
    assert extrapolate_zero_lag([1.5 + 0.5j]) == 1.5 + 0.5j
    assert extrapolate_zero_lag([3.0, 2.0]) == pytest.approx(4.0)
    with pytest.raises(OperatorError):
        extrapolate_zero_lag([])


# --- Backscatter operator ---

def test_backscatter_hermitian_exactly(clean_data):
    F = assemble_backscatter(clean_data, 0.0)
    assert F.size == 48
    assert F.kind is OperatorKind.BACKSCATTER
    assert F.weight == pytest.approx(0.25)
    assert F.hermitian_residual == 0.0
    assert np.all(F.entries.diagonal().imag == 0.0)

    noisy = assemble_backscatter(add_noise(clean_data, 0.05, 1), 0.0)
    assert noisy.hermitian_residual == 0.0


def test_backscatter_entries_follow_kernel(clean_data):
    F = assemble_backscatter(clean_data, 0.0)
    u = clean_data.lookup()
    m = 5
    expected = -1j * (m * 0.25) * u[m]
    assert F.entries[m + 2, 2] == pytest.approx(expected)
    assert F.entries[2, m + 2] == pytest.approx(np.conj(expected))


def test_backscatter_rejects_theta_mismatch(clean_data):
    with pytest.raises(OperatorError):
        assemble_backscatter(clean_data, 0.5)


def test_backscatter_rejects_right_side(neumann, rect_source, xstar, grid47, quad):
    ds = synthesize_dataset(neumann, rect_source, xstar.mirrored(), grid47, quad)
    with pytest.raises(OperatorError):
        assemble_backscatter(ds, 0.0)


def test_missing_lattice_sample(clean_data):
    partial = replace(
        clean_data,
        offsets=clean_data.offsets[:-1],
        wavenumbers=clean_data.wavenumbers[:-1],
        samples=clean_data.samples[:-1],
    )
    assert not partial.is_complete
    with pytest.raises(OperatorError) as exc:
        assemble_backscatter(partial, 0.0)
    assert exc.value.offset == 47


def test_matrix_shape_checks(grid47):
    with pytest.raises(OperatorError):
        FarFieldMatrix(np.zeros((48, 47)), grid47, 0.25, OperatorKind.BACKSCATTER, -10.0)
    with pytest.raises(OperatorError):
        FarFieldMatrix(np.zeros((12, 12)), grid47, 0.25, OperatorKind.BACKSCATTER, -10.0)


# --- Factorization ---

def test_factorization_residual(neumann, rect_source, xstar, grid47, quad, clean_data):
    F = assemble_backscatter(clean_data, 0.0)
    fac = discrete_factors(neumann, rect_source, xstar, grid47, quad)
    assert fac.s.shape[1] == 48
    assert verify_factorization(F, fac) <= 1e-4


def test_factorization_converges_under_refinement(neumann, rect_source, xstar, grid47):
    h = neumann.height
    reference = synthesize_dataset(neumann, rect_source, xstar, grid47, QuadratureRule(h / 320))
    F = assemble_backscatter(reference, 0.0)
    coarse = verify_factorization(F, discrete_factors(neumann, rect_source, xstar, grid47, QuadratureRule(h / 20)))
    fine = verify_factorization(F, discrete_factors(neumann, rect_source, xstar, grid47, QuadratureRule(h / 40)))
    assert coarse <= 2e-2
    assert coarse / fine >= 3.5


def test_factorization_detects_wrong_phase(neumann, rect_source, xstar, grid47, quad, clean_data):
    F = assemble_backscatter(clean_data, 0.0)
    fac = discrete_factors(neumann, rect_source, xstar, grid47, quad)
    assert verify_factorization(F, replace(fac, t=fac.t * 1j)) > 0.5


def test_factor_diagonal_and_coercivity(neumann, rect_source, xstar, grid47, quad):
    fac = discrete_factors(neumann, rect_source, xstar, grid47, quad)
    half = psi_n(neumann, 1, xstar.xperp) / 2
    np.testing.assert_allclose(fac.t, half)
    assert coercivity_constant(fac) == pytest.approx(half)

    flipped = SourceSpec.uniform(rect_source.regions, -1.0)
    neg = discrete_factors(neumann, flipped, xstar, grid47, quad)
    assert coercivity_constant(neg) == pytest.approx(half)


def test_factorization_with_rotated_source(neumann, xstar, grid47, quad):
    src = SourceSpec.uniform([rectangle((0.5, 1.0), (0.05, 0.2))], -1j, math.pi / 2)
    ds = synthesize_dataset(neumann, src, xstar, grid47, quad)
    F = assemble_backscatter(ds, src.theta)
    assert F.hermitian_residual == 0.0
    fac = discrete_factors(neumann, src, xstar, grid47, quad)
    assert verify_factorization(F, fac) <= 1e-4


def test_verify_factorization_dimension_mismatch(neumann, rect_source, xstar, quad, clean_data):
    F = assemble_backscatter(clean_data, 0.0)
    small = discrete_factors(neumann, rect_source, xstar, FrequencyGrid(0.0, 12.0, 12), quad)
    with pytest.raises(OperatorError):
        verify_factorization(F, small)


def test_compact_spectrum(clean_data):
    F = assemble_backscatter(clean_data, 0.0)
    es = hermitian_sqrt(F)
    assert es.values[9] / es.values[0] < 1e-2
    svals = singular_values(F)
    assert np.all(np.diff(svals) <= 0)


# --- Block ---

def test_block_operator(neumann, grid47):
    tx = MeasurementConfig(10.0, 0.1)
    ds = block_dataset(neumann, -0.5, tx, MeasurementConfig(10.0, 0.15), grid47)
    F = assemble_block(ds)
    assert F.doubled
    assert F.reference_x1 == -10.0
    assert F.hermitian_residual == 0.0
    assert F.entries[0, 0].real > 0
    with pytest.raises(OperatorError):
        assemble_backscatter(ds, 0.0)


def test_block_assembly_needs_block_data(clean_data):
    with pytest.raises(OperatorError):
        assemble_block(clean_data)


# --- Two-sided ---

def test_two_sided_real_source_is_hermitian(neumann, rect_source, xstar, grid47, quad):
    left = synthesize_dataset(neumann, rect_source, xstar, grid47, quad)
    right = synthesize_dataset(neumann, rect_source, xstar.mirrored(), grid47, quad)
    F = assemble_two_sided(left, right)
    assert F.kind is OperatorKind.TWO_SIDED
    assert F.hermitian_residual <= 1e-12 * np.max(np.abs(F.entries))
    fac = discrete_factors(neumann, rect_source, xstar, grid47, quad, OperatorKind.TWO_SIDED)
    assert verify_factorization(F, fac) <= 1e-4


def test_two_sided_complex_source_factorizes(neumann, xstar, grid47, quad):
    src = SourceSpec.uniform([rectangle((0.5, 1.0), (0.05, 0.2))], 1.0 + 0.5j, strict=False)
    left = synthesize_dataset(neumann, src, xstar, grid47, quad)
    right = synthesize_dataset(neumann, src, xstar.mirrored(), grid47, quad)
    F = assemble_two_sided(left, right)
    assert F.hermitian_residual > 1e-3 * np.max(np.abs(F.entries))
    fac = discrete_factors(neumann, src, xstar, grid47, quad, OperatorKind.TWO_SIDED)
    assert verify_factorization(F, fac) <= 1e-4
    assert verify_factorization(F, fac, self_adjoint=True) <= 1e-4
    sym = self_adjoint_part(F, 0.0)
    assert sym.hermitian_residual == 0.0


def test_two_sided_rejects_mismatched_points(neumann, rect_source, xstar, grid47, quad):
    left = synthesize_dataset(neumann, rect_source, xstar, grid47, quad)
    right = synthesize_dataset(neumann, rect_source, MeasurementConfig(9.0, 0.1).mirrored(), grid47, quad)
    with pytest.raises(OperatorError):
        assemble_two_sided(left, right)
    with pytest.raises(OperatorError):
        assemble_two_sided(left, left)


# --- Alpha ---

@pytest.fixture
def alpha_data(neumann, xstar, quad):
    src = SourceSpec.uniform([rectangle((0.5, 1.0), (0.05, 0.2))], strict=False)
    grid = FrequencyGrid.for_alpha(neumann, 128.0, 16)
    return src, grid, synthesize_alpha_dataset(neumann, src, xstar, grid, 128.0, quad)


def test_alpha_operator_factorizes(neumann, xstar, quad, alpha_data):
    src, grid, ds = alpha_data
    F = assemble_alpha(ds, 128.0)
    assert F.kind is OperatorKind.ALPHA
    fac = discrete_factors(neumann, src, xstar, grid, quad, OperatorKind.ALPHA, 128.0)
    assert verify_factorization(F, fac) <= 1e-10
    assert verify_factorization(F, fac, self_adjoint=True) <= 1e-10


def test_alpha_operator_rejects_wrong_alpha(alpha_data, clean_data):
    _, _, ds = alpha_data
    with pytest.raises(OperatorError):
        assemble_alpha(ds, 64.0)
    with pytest.raises(OperatorError):
        assemble_alpha(clean_data, 128.0)


def test_alpha_operator_rejects_grid_off_the_shift(alpha_data):
    _, _, ds = alpha_data
    with pytest.raises(OperatorError, match="Alpha operator needs the grid"):
        assemble_alpha(replace(ds, grid=FrequencyGrid(0.0, 6.1, 16)), 128.0)
    with pytest.raises(OperatorError, match="Alpha operator needs the grid"):
        assemble_alpha(replace(ds, grid=FrequencyGrid(0.01, 0.01 + 12.0 / 128, 16)), 128.0)


def test_alpha_coercivity(neumann, xstar, quad, alpha_data):
    src, _, _ = alpha_data
    assert alpha_coercivity(neumann, src, xstar, 128.0, 0.0, quad) > 0
    assert alpha_coercivity(neumann, src, xstar, 64.0, 0.0, quad) < 0
    assert coercive_alpha(neumann, src, xstar, [256.0, 32.0, 128.0, 64.0], 0.0, quad) == 128.0
    with pytest.raises(OperatorError):
        coercive_alpha(neumann, src, xstar, [32.0, 64.0], 0.0, quad)


def test_alpha_self_adjoint_part_is_hermitian(alpha_data):
    _, _, ds = alpha_data
    F = assemble_alpha(ds, 128.0, tau=0.3)
    sym = self_adjoint_part(F)
    assert sym.tau == 0.3
    assert sym.hermitian_residual == 0.0
