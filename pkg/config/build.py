"""
wgfm - Config Builders
Turn a validated RunConfig into waveguide, source, measurement and grid objects,
re-checking every physical constraint of those types.
"""
import math
from typing import TYPE_CHECKING, List, Optional, Tuple

from wgfm.imaging import SamplingGrid
from wgfm.modal import BoundaryKind, Waveguide, check_passband, far_field_offset, lambda_n
from wgfm.synth import (
    FrequencyGrid,
    MeasurementConfig,
    QuadratureRule,
    Region,
    Side,
    SourceSpec,
    disc,
    l_shape,
    rectangle,
    rhombus,
    Polygon,
)

from .schema import PhysicsError
from .settings import settings

if TYPE_CHECKING:
    from .schema import RunConfig


def build_waveguide(cfg: "RunConfig") -> Waveguide:
    return Waveguide(cfg.waveguide.height, BoundaryKind(cfg.waveguide.boundary))


def build_regions(cfg: "RunConfig") -> List[Region]:
    regions: List[Region] = []
    for shape in cfg.source.shapes:
        if shape.type == "rectangle":
            regions.append(rectangle(shape.x1, shape.xperp))
        elif shape.type == "l_shape":
            regions.extend(l_shape(shape.parts))
        elif shape.type == "rhombus":
            regions.append(rhombus(shape.center, shape.half_range, shape.half_cross))
        elif shape.type == "disc":
            regions.append(disc(shape.center, shape.radius))
        else:
            regions.append(Polygon(tuple(shape.vertices)))
    return regions


def build_source(cfg: "RunConfig") -> SourceSpec:
    amp = cfg.source.amplitude
    amplitude = complex(*amp) if isinstance(amp, tuple) else complex(amp)
    return SourceSpec.uniform(build_regions(cfg), amplitude, cfg.source.theta, cfg.source.strict)


def build_quadrature(cfg: "RunConfig", wg: Waveguide) -> QuadratureRule:
    if cfg.source is not None and cfg.source.quadrature_cell is not None:
        return QuadratureRule(cfg.source.quadrature_cell)
    return QuadratureRule.default(wg)


def build_measurement(cfg: "RunConfig", side: str = "left") -> MeasurementConfig:
    m = cfg.measurement
    return MeasurementConfig(m.a, m.xperp_star, Side(side))


def build_block_points(cfg: "RunConfig") -> Tuple[MeasurementConfig, MeasurementConfig]:
    b = cfg.block
    return (
        MeasurementConfig(b.transmitter.a, b.transmitter.xperp),
        MeasurementConfig(b.receiver.a, b.receiver.xperp),
    )


def build_grid(cfg: "RunConfig", wg: Waveguide) -> FrequencyGrid:
    g = cfg.grid
    if g.alpha is not None:
        grid = FrequencyGrid.for_alpha(wg, g.alpha, g.n, g.vertex)
        if g.k_plus is not None and not math.isclose(g.k_plus, grid.k_plus, rel_tol=1e-9):
            raise PhysicsError(
                f"k_plus must equal sqrt(lambda_2^2 - lambda_1^2) / alpha = {grid.k_plus:.6g}",
                "grid", "k_plus",
            )
        return grid
    if g.k_plus is None:
        default = FrequencyGrid.default(wg, g.n, g.vertex)
        return FrequencyGrid(g.k_minus, default.k_plus, g.n, g.vertex)
    return FrequencyGrid(g.k_minus, g.k_plus, g.n, g.vertex)


def build_sampling(cfg: "RunConfig", wg: Waveguide) -> SamplingGrid:
    im = cfg.imaging
    return SamplingGrid(im.z1_min, im.z1_max, wg.height, im.n1, im.nperp)


def true_support(cfg: "RunConfig") -> Optional[Tuple[float, float]]:
    """Range support used by the metrics: explicit, the source hull, or the block."""
    if cfg.imaging.true_support is not None:
        return tuple(sorted(cfg.imaging.true_support))
    if cfg.source is not None:
        return build_source(cfg).range_support()
    if cfg.block is not None:
        return (cfg.block.x1, cfg.block.x1)
    return None


def max_wavenumber(cfg: "RunConfig", wg: Waveguide, grid: FrequencyGrid) -> float:
    lam = lambda_n(wg, 1)
    if cfg.grid.alpha is not None:
        offsets = (grid.n - 1) * grid.delta + grid.k_plus
        return math.hypot(lam, offsets)
    return float(grid.lattice_wavenumbers(lam).max())


def check_config(cfg: "RunConfig") -> None:
    """
    Re-check upstream constraints on a structurally valid config.

    Raises:
        PhysicsError: Located at the offending section
    """
    try:
        wg = build_waveguide(cfg)
    except ValueError as e:
        raise PhysicsError(str(e), "waveguide") from e

    try:
        grid = build_grid(cfg, wg)
        if cfg.grid.alpha is None:
            grid.check(wg)
        else:
            lam = lambda_n(wg, 1)
            offsets = [-(grid.n - 1), grid.n - 1]
            check_passband(wg, [math.hypot(lam, m * grid.delta + grid.k_plus) for m in offsets])
    except PhysicsError:
        raise
    except ValueError as e:
        raise PhysicsError(str(e), "grid") from e
    k_max = max_wavenumber(cfg, wg, grid)

    if cfg.source is not None:
        try:
            src = build_source(cfg)
        except ValueError as e:
            raise PhysicsError(str(e), "source") from e
        if "left" not in cfg.measurement.sides:
            raise PhysicsError("A left measurement is always required", "measurement", "sides")
        for side in cfg.measurement.sides:
            try:
                build_measurement(cfg, side).check(wg, src, k_max, settings.tail_tolerance)
            except ValueError as e:
                raise PhysicsError(str(e), "measurement") from e
        if cfg.grid.alpha is not None and cfg.measurement.sides != ["left"]:
            raise PhysicsError("The alpha operator uses a single left measurement", "measurement", "sides")

    if cfg.block is not None:
        tx, rx = build_block_points(cfg)
        needed = far_field_offset(wg, k_max, settings.tail_tolerance)
        for name, point in (("transmitter", tx), ("receiver", rx)):
            try:
                point.check(wg)
            except ValueError as e:
                raise PhysicsError(str(e), "block", name) from e
            if cfg.block.x1 - point.x1 < needed:
                raise PhysicsError(
                    f"{name} must sit at least {needed:.3f} left of the block", "block", name
                )

    try:
        build_sampling(cfg, wg)
    except ValueError as e:
        raise PhysicsError(str(e), "imaging") from e
