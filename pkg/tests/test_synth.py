import math

import numpy as np
import pytest

from wgfm.modal import dispersion, psi_n
from wgfm.synth import (
    DataSet,
    FrequencyGrid,
    MeasurementConfig,
    QuadratureRule,
    SourceSpec,
    SynthesisError,
    add_noise,
    alpha_shift,
    block_dataset,
    disc,
    forward_field,
    l_shape,
    quadrature_nodes,
    rectangle,
    rhombus,
    synthesize_alpha_dataset,
    synthesize_dataset,
)


# --- Geometry ---

def test_rectangle_and_polygon_membership():
    rect = rectangle((1.0, 0.5), (0.2, 0.05))
    assert rect.bounds() == (0.5, 1.0, 0.05, 0.2)
    assert bool(rect.contains(0.7, 0.1))
    assert not bool(rect.contains(1.1, 0.1))
    with pytest.raises(ValueError):
        rectangle((0.5, 0.5), (0.0, 0.1))


def test_rhombus_and_disc_membership():
    rh = rhombus((0.75, 0.13), 0.25, 0.1)
    assert bool(rh.contains(0.75, 0.13))
    assert bool(rh.contains(0.6, 0.13))
    assert not bool(rh.contains(0.55, 0.2))
    d = disc((0.0, 0.1), 0.05)
    assert bool(d.contains(0.03, 0.1))
    assert not bool(d.contains(0.03, 0.15))


def test_l_shape_needs_two_rectangles():
    parts = [((0.5, 1.0), (0.0, 0.13)), ((0.5, 0.7), (0.13, 0.26))]
    assert len(l_shape(parts)) == 2
    with pytest.raises(ValueError):
        l_shape(parts[:1])


def test_source_phase_condition():
    rect = rectangle((0.5, 1.0), (0.05, 0.2))
    SourceSpec.uniform([rect], -1j, math.pi / 2)
    with pytest.raises(ValueError):
        SourceSpec.uniform([rect], 1.0, math.pi / 2)
    with pytest.raises(ValueError):
        SourceSpec([rect, rectangle((1.5, 2.0), (0.05, 0.2))], (1.0, -1.0))
    with pytest.raises(ValueError):
        SourceSpec.uniform([rect], 0.0)
    with pytest.raises(ValueError):
        SourceSpec.uniform([rect], 1.0, 2 * math.pi)


def test_relaxed_source_condition():
    rect = rectangle((0.5, 1.0), (0.05, 0.2))
    src = SourceSpec.uniform([rect], 1.0 + 0.5j, strict=False)
    assert src.amplitudes == (1.0 + 0.5j,)
    with pytest.raises(ValueError):
        SourceSpec.uniform([rect], -1.0 + 0.5j, strict=False)


def test_range_support(rect_source):
    assert rect_source.range_support() == (0.5, 1.0)
    two = SourceSpec.uniform([rectangle((0.5, 1.0), (0.0, 0.1)), disc((1.5, 0.1), 0.05)])
    assert two.range_support() == pytest.approx((0.5, 1.55))


# --- Quadrature ---

def test_quadrature_weights_sum_to_area(neumann, rect_source, quad):
    nodes = quadrature_nodes(neumann, rect_source, quad)
    assert np.sum(nodes.weights) == pytest.approx(0.5 * 0.15)
    assert np.all((nodes.y1 > 0.5) & (nodes.y1 < 1.0))


def test_quadrature_disc_area(neumann):
    src = SourceSpec.uniform([disc((0.0, 0.13), 0.1)])
    nodes = quadrature_nodes(neumann, src, QuadratureRule(0.002))
    assert np.sum(nodes.weights) == pytest.approx(math.pi * 0.01, rel=2e-2)


def test_quadrature_rejects_region_outside_section(neumann):
    src = SourceSpec.uniform([rectangle((0.0, 1.0), (0.1, 0.3))])
    with pytest.raises(ValueError):
        quadrature_nodes(neumann, src, QuadratureRule.default(neumann))


# --- Measurement and grids ---

def test_measurement_geometry(neumann, rect_source):
    left = MeasurementConfig(10.0, 0.1)
    assert left.point == (-10.0, 0.1)
    assert left.mirrored().point == (10.0, 0.1)
    left.check(neumann, rect_source, 11.75)
    left.mirrored().check(neumann, rect_source, 11.75)


def test_measurement_checks(neumann, rect_source):
    with pytest.raises(ValueError):
        MeasurementConfig(0.0, 0.1)
    with pytest.raises(ValueError):
        MeasurementConfig(10.0, 0.3).check(neumann)
    with pytest.raises(ValueError, match="not left"):
        MeasurementConfig(0.6, 0.1).check(
            neumann, SourceSpec.uniform([rectangle((-1.0, -0.5), (0.05, 0.2))])
        )
    with pytest.raises(ValueError, match="tail bound"):
        MeasurementConfig(0.1, 0.1).check(neumann, rect_source, 11.75)


def test_frequency_grid_modes():
    midpoint = FrequencyGrid(0.0, 12.0, 48)
    vertex = FrequencyGrid(0.0, 12.0, 48, vertex=True)
    assert midpoint.delta == pytest.approx(0.25)
    assert midpoint.sigma[0] == pytest.approx(0.125)
    assert vertex.sigma[0] == 0.0
    assert vertex.sigma[-1] == pytest.approx(11.75)
    np.testing.assert_array_equal(midpoint.offsets, np.arange(1, 48))
    with pytest.raises(ValueError):
        FrequencyGrid(0.0, 12.0, 1)
    with pytest.raises(ValueError):
        FrequencyGrid(1.0, 1.0, 4)


def test_from_spacing_matches_frequency_sets():
    case3 = FrequencyGrid.from_spacing(1.0, 11)
    assert (case3.n, case3.k_plus) == (12, 12.0)
    case2 = FrequencyGrid.from_spacing(0.5, 23)
    np.testing.assert_allclose(case2.offsets * case2.delta, np.arange(1, 24) * 0.5)


def test_default_grid_and_check(neumann, mixed):
    grid = FrequencyGrid.default(neumann, 48)
    assert grid.k_plus == pytest.approx(12.0)
    grid.check(neumann)
    assert FrequencyGrid.default(mixed, 8).k_plus == pytest.approx(math.sqrt(18**2 - 6**2))
    with pytest.raises(ValueError):
        FrequencyGrid(0.0, 13.0, 48).check(neumann)


def test_alpha_shift(neumann):
    assert alpha_shift(neumann, 128) == pytest.approx(12.0 / 128)
    with pytest.raises(ValueError):
        alpha_shift(neumann, 1.5)


# --- Forward data ---

def test_forward_field_full_section_closed_form(neumann):
    h = neumann.height
    r1, r2 = 0.5, 1.0
    src = SourceSpec.uniform([rectangle((r1, r2), (0.0, h))])
    x = MeasurementConfig(2.0, 0.1)
    k = 6.3
    expected = 1j / (2 * k) * (np.exp(1j * k * (r2 + 2.0)) - np.exp(1j * k * (r1 + 2.0))) / (1j * k)
    value = forward_field(neumann, src, x, k, QuadratureRule(h / 160))
    assert value == pytest.approx(expected, rel=1e-4)


def test_forward_field_quadrature_is_second_order(neumann):
    h = neumann.height
    r1, r2 = 0.5, 1.0
    src = SourceSpec.uniform([rectangle((r1, r2), (0.0, h))])
    x = MeasurementConfig(2.0, 0.1)
    k = 6.3
    exact = 1j / (2 * k) * (np.exp(1j * k * (r2 + 2.0)) - np.exp(1j * k * (r1 + 2.0))) / (1j * k)
    errors = [abs(forward_field(neumann, src, x, k, QuadratureRule(cell)) - exact) for cell in (0.05, 0.025, 0.0125)]
    assert errors[-1] > 1e-9
    for coarse, fine in zip(errors, errors[1:]):
        assert coarse / fine >= 3.5


def test_forward_field_rejects_point_inside_source(neumann):
    src = SourceSpec.uniform([rectangle((-10.5, -9.5), (0.05, 0.2))])
    with pytest.raises(SynthesisError):
        forward_field(neumann, src, MeasurementConfig(10.0, 0.1), 3.0, QuadratureRule.default(neumann))


def test_forward_field_rejects_cutoff(neumann, rect_source, xstar, quad):
    with pytest.raises(ValueError):
        forward_field(neumann, rect_source, xstar, 12.0, quad)


def test_forward_field_scales_linearly(neumann, rect_source, xstar, quad):
    u = forward_field(neumann, rect_source, xstar, 4.0, quad)
    v = forward_field(neumann, rect_source.scaled(3.0), xstar, 4.0, quad)
    assert v == pytest.approx(3.0 * u)


def test_synthesize_case1_wavenumbers(clean_data):
    np.testing.assert_allclose(clean_data.wavenumbers, np.arange(1, 48) * 0.25)
    assert len(clean_data.samples) == 47
    assert clean_data.is_complete
    assert clean_data.noise is None
    assert not clean_data.samples.flags.writeable


def test_synthesize_matches_forward_field(neumann, rect_source, xstar, grid47, quad, clean_data):
    m = 17
    direct = forward_field(neumann, rect_source, xstar, m * 0.25, quad)
    assert clean_data.lookup()[m] == pytest.approx(direct, rel=1e-12)


def test_mixed_measurement_wavenumbers(mixed, rect_source, xstar):
    grid = FrequencyGrid.from_spacing(0.25, 41)
    ds = synthesize_dataset(mixed, rect_source, xstar, grid, QuadratureRule.default(mixed), threads=2)
    sigma = np.arange(1, 42) * 0.25
    np.testing.assert_allclose(ds.wavenumbers, np.sqrt(36.0 + sigma**2))


def test_alpha_dataset_lattice(neumann, rect_source, xstar, quad):
    grid = FrequencyGrid.for_alpha(neumann, 128.0, 16)
    ds = synthesize_alpha_dataset(neumann, rect_source, xstar, grid, 128.0, quad)
    np.testing.assert_array_equal(ds.offsets, np.arange(-15, 16))
    assert ds.is_complete
    shift = 12.0 / 128
    np.testing.assert_allclose(ds.wavenumbers, np.abs(ds.offsets * grid.delta + shift))
    assert np.all(ds.wavenumbers > 0)


def test_alpha_dataset_rejects_grid_off_the_shift(neumann, rect_source, xstar, quad):
    with pytest.raises(SynthesisError, match="Alpha lattice"):
        synthesize_alpha_dataset(neumann, rect_source, xstar, FrequencyGrid(0.0, 6.1, 16), 8.0, quad)
    shifted = FrequencyGrid(0.5, 0.5 + alpha_shift(neumann, 8.0), 16)
    with pytest.raises(SynthesisError, match="Alpha lattice"):
        synthesize_alpha_dataset(neumann, rect_source, xstar, shifted, 8.0, quad)


# --- Noise ---

def test_add_noise_zero_is_identity(clean_data):
    assert add_noise(clean_data, 0.0, 3) is clean_data
    with pytest.raises(ValueError):
        add_noise(clean_data, -0.1, 3)


def test_add_noise_is_seeded(clean_data):
    a = add_noise(clean_data, 0.05, 11)
    b = add_noise(clean_data, 0.05, 11)
    c = add_noise(clean_data, 0.05, 12)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
    assert a.noise.level == 0.05 and a.noise.seed == 11


def test_add_noise_relative_level(neumann, xstar, grid47):
    count = 20000
    ds = DataSet(
        neumann, grid47, xstar, 0.0,
        np.arange(1, count + 1), np.ones(count), np.full(count, 2.0 - 1.0j),
    )
    noisy = add_noise(ds, 0.05, 0)
    rel = np.abs(noisy.samples - ds.samples) / np.abs(ds.samples)
    assert math.sqrt(np.mean(rel**2)) == pytest.approx(0.05, rel=0.05)


# --- Block data ---

def test_block_dataset_round_trip_distance(neumann, grid47):
    tx = MeasurementConfig(10.0, 0.1)
    rx = MeasurementConfig(10.0, 0.15)
    ds = block_dataset(neumann, -0.5, tx, rx, grid47)
    assert ds.doubled
    assert ds.reference_x1 == -10.0
    k = ds.wavenumbers[4]
    mu = float(dispersion(neumann, k).real)
    expected = -1j / (2 * mu) * psi_n(neumann, 1, 0.1) * psi_n(neumann, 1, 0.15) * np.exp(1j * mu * 19.0)
    assert ds.samples[4] == pytest.approx(expected)


def test_block_dataset_rejects_near_field(neumann, grid47):
    tx = MeasurementConfig(10.0, 0.1)
    with pytest.raises(ValueError, match="far-field"):
        block_dataset(neumann, -9.5, tx, tx, grid47)


def test_block_dataset_is_reciprocal(neumann, grid47):
    tx = MeasurementConfig(10.0, 0.1)
    rx = MeasurementConfig(12.0, 0.2)
    forward = block_dataset(neumann, -0.5, tx, rx, grid47)
    swapped = block_dataset(neumann, -0.5, rx, tx, grid47)
    np.testing.assert_array_equal(forward.samples, swapped.samples)
