"""
wgfm - Data Synthesis
Source geometry, midpoint quadrature of the forward volume integral, single-mode
data on the frequency difference lattice, noise injection and mirror-model data
for a complete sound-soft block.
"""
import logging
import math
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import settings
from .modal import (
    Waveguide,
    check_passband,
    dispersion,
    far_field_offset,
    green_tail_bound,
    lambda_n,
    mode_profile,
    passband,
    psi_n,
)

logger = logging.getLogger("wgfm.synth")


class SynthesisError(Exception):
    """Exception for failures while building source data."""

    def __init__(self, message: str, wavenumber: Optional[float] = None):
        super().__init__(message)
        self.wavenumber = wavenumber


class Side(Enum):
    """Side of the source on which a measurement cross-section sits."""
    LEFT = "left"
    RIGHT = "right"


# --- Source geometry ---

class Region(ABC):
    """A bounded region of the waveguide carrying a constant source amplitude."""

    @abstractmethod
    def contains(self, x1, xperp) -> np.ndarray:
        """Vectorised membership test."""

    @abstractmethod
    def bounds(self) -> Tuple[float, float, float, float]:
        """Bounding box (x1_min, x1_max, xperp_min, xperp_max)."""


@dataclass(frozen=True)
class Polygon(Region):
    """Simple polygon; membership by the even-odd rule."""
    vertices: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(a), float(b)) for a, b in self.vertices)
        if len(verts) < 3:
            raise ValueError("A polygon needs at least three vertices")
        object.__setattr__(self, "vertices", verts)

    def contains(self, x1, xperp) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        xperp = np.asarray(xperp, dtype=float)
        inside = np.zeros(np.broadcast(x1, xperp).shape, dtype=bool)
        verts = self.vertices
        for (xa, ya), (xb, yb) in zip(verts, verts[1:] + verts[:1]):
            if ya == yb:
                continue
            crosses = (ya > xperp) != (yb > xperp)
            x_cross = xa + (xperp - ya) * (xb - xa) / (yb - ya)
            inside ^= crosses & (x1 < x_cross)
        return inside

    def bounds(self) -> Tuple[float, float, float, float]:
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), max(xs), min(ys), max(ys)


@dataclass(frozen=True)
class Disc(Region):
    """Open disc."""
    center: Tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"Disc radius must be positive, got {self.radius}")

    def contains(self, x1, xperp) -> np.ndarray:
        d1 = np.asarray(x1, dtype=float) - self.center[0]
        d2 = np.asarray(xperp, dtype=float) - self.center[1]
        return d1 * d1 + d2 * d2 < self.radius * self.radius

    def bounds(self) -> Tuple[float, float, float, float]:
        c1, c2 = self.center
        r = self.radius
        return c1 - r, c1 + r, c2 - r, c2 + r


def rectangle(x1: Sequence[float], xperp: Sequence[float]) -> Polygon:
    """Axis-aligned rectangle [x1[0], x1[1]] x [xperp[0], xperp[1]]."""
    a, b = sorted(x1)
    c, d = sorted(xperp)
    if a == b or c == d:
        raise ValueError("Degenerate rectangle")
    return Polygon(((a, c), (b, c), (b, d), (a, d)))


def l_shape(parts: Iterable[Tuple[Sequence[float], Sequence[float]]]) -> List[Polygon]:
    """L-shaped source built from two disjoint rectangles sharing an edge."""
    rects = [rectangle(x1, xperp) for x1, xperp in parts]
    if len(rects) != 2:
        raise ValueError("An L-shape is made of exactly two rectangles")
    return rects


def rhombus(center: Sequence[float], half_range: float, half_cross: float) -> Polygon:
    """Rhombus with diagonals along the range and cross-section axes."""
    c1, c2 = center
    return Polygon((
        (c1 - half_range, c2),
        (c1, c2 - half_cross),
        (c1 + half_range, c2),
        (c1, c2 + half_cross),
    ))


def disc(center: Sequence[float], radius: float) -> Disc:
    return Disc((float(center[0]), float(center[1])), float(radius))


@dataclass(frozen=True)
class SourceSpec:
    """
    Piecewise-constant source f = sum of f0_r on region r.

    With strict=True the phase condition e^{i theta} f0 real and nonzero (one
    sign for all regions) is enforced. With strict=False only
    Re(e^{i theta} f0) > 0 is required, theta then acting as the constant phase
    tau of the two-sided and alpha operators.
    """
    regions: Tuple[Region, ...]
    amplitudes: Tuple[complex, ...]
    theta: float = 0.0
    strict: bool = True

    def __post_init__(self):
        regions = tuple(self.regions)
        amplitudes = tuple(complex(a) for a in self.amplitudes)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "amplitudes", amplitudes)

        if len(regions) != len(amplitudes):
            raise ValueError("One amplitude is required per region")
        if not 0.0 <= self.theta < 2.0 * math.pi:
            raise ValueError(f"theta must lie in [0, 2pi), got {self.theta}")

        rotation = complex(math.cos(self.theta), math.sin(self.theta))
        signs = set()
        for f0 in amplitudes:
            if f0 == 0:
                raise ValueError("Source amplitude must be nonzero")
            rotated = rotation * f0
            if self.strict:
                if abs(rotated.imag) > 1e-12 * abs(f0):
                    raise ValueError(
                        f"e^(i theta) f0 must be real: theta={self.theta}, f0={f0}"
                    )
                signs.add(rotated.real > 0)
            elif not rotated.real > 0:
                raise ValueError(f"Re(e^(i theta) f0) must be positive, got {rotated}")
        if len(signs) > 1:
            raise ValueError("e^(i theta) f must keep one sign over the support")

    @classmethod
    def uniform(
        cls,
        regions: Iterable[Region],
        amplitude: complex = 1.0,
        theta: float = 0.0,
        strict: bool = True,
    ) -> "SourceSpec":
        regions = tuple(regions)
        return cls(regions, (amplitude,) * len(regions), theta, strict)

    def scaled(self, factor: float) -> "SourceSpec":
        """Source with every amplitude multiplied by a real factor."""
        return replace(self, amplitudes=tuple(a * factor for a in self.amplitudes))

    def range_support(self) -> Tuple[float, float]:
        """Hull of the projection of the support on the range axis."""
        if not self.regions:
            raise ValueError("Empty source has no range support")
        boxes = [r.bounds() for r in self.regions]
        return min(b[0] for b in boxes), max(b[1] for b in boxes)

    def contains(self, x1: float, xperp: float) -> bool:
        return any(bool(r.contains(x1, xperp)) for r in self.regions)


# --- Quadrature ---

@dataclass(frozen=True)
class QuadratureRule:
    """Midpoint rule on axis-aligned cells of (at most) the given size."""
    cell: float

    def __post_init__(self):
        if not self.cell > 0:
            raise ValueError(f"Quadrature cell size must be positive, got {self.cell}")

    @classmethod
    def default(cls, wg: Waveguide) -> "QuadratureRule":
        return cls(wg.height / 40.0)

    def refined(self) -> "QuadratureRule":
        return QuadratureRule(self.cell / 2.0)


@dataclass(frozen=True, eq=False)
class QuadratureNodes:
    """Interior quadrature nodes of a source: positions, weights, amplitudes."""
    y1: np.ndarray
    yperp: np.ndarray
    weights: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.y1)


def _cells(low: float, high: float, size: float) -> Tuple[np.ndarray, float]:
    count = max(1, math.ceil((high - low) / size - 1e-9))
    step = (high - low) / count
    return low + (np.arange(count) + 0.5) * step, step


def quadrature_nodes(wg: Waveguide, src: SourceSpec, quad: QuadratureRule) -> QuadratureNodes:
    """
    Midpoint nodes of every region.

    Each region gets its own cell grid tiling its bounding box exactly; a cell
    belongs to the region when its midpoint does. Regions are assumed disjoint.
    """
    y1_parts, yp_parts, w_parts, f_parts = [], [], [], []
    for region, f0 in zip(src.regions, src.amplitudes):
        x1_min, x1_max, xp_min, xp_max = region.bounds()
        if xp_min < 0 or xp_max > wg.height:
            raise ValueError("Source region leaves the waveguide cross-section")
        c1, step1 = _cells(x1_min, x1_max, quad.cell)
        c2, step2 = _cells(xp_min, xp_max, quad.cell)
        g1, g2 = np.meshgrid(c1, c2, indexing="ij")
        mask = region.contains(g1, g2)
        y1_parts.append(g1[mask])
        yp_parts.append(g2[mask])
        w_parts.append(np.full(mask.sum(), step1 * step2))
        f_parts.append(np.full(mask.sum(), f0, dtype=complex))

    if not y1_parts:
        empty = np.zeros(0)
        return QuadratureNodes(empty, empty, empty, empty.astype(complex))
    return QuadratureNodes(
        np.concatenate(y1_parts),
        np.concatenate(yp_parts),
        np.concatenate(w_parts),
        np.concatenate(f_parts),
    )


# --- Measurement and frequency grid ---

@dataclass(frozen=True)
class MeasurementConfig:
    """Measurement point x* = (-a, xperp) (left side) or (a, xperp) (right side)."""
    a: float
    xperp: float
    side: Side = Side.LEFT

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"Range offset a must be positive, got {self.a}")
        if not isinstance(self.side, Side):
            object.__setattr__(self, "side", Side(self.side))

    @property
    def x1(self) -> float:
        return -self.a if self.side is Side.LEFT else self.a

    @property
    def point(self) -> Tuple[float, float]:
        return self.x1, self.xperp

    def mirrored(self) -> "MeasurementConfig":
        other = Side.RIGHT if self.side is Side.LEFT else Side.LEFT
        return replace(self, side=other)

    def check(
        self,
        wg: Waveguide,
        src: Optional[SourceSpec] = None,
        k_max: Optional[float] = None,
        tol: float = 1e-6,
    ) -> None:
        """
        Validate the measurement geometry.

        Args:
            wg: The waveguide
            src: Source whose support must lie entirely on the far side
            k_max: Largest wavenumber used; enables the evanescent tail check
            tol: Maximum tail bound at the nearest source point

        Raises:
            ValueError: If psi_1 vanishes at x*, or the offset is too small
        """
        if not 0 < self.xperp < wg.height:
            raise ValueError(f"x*_perp must lie in (0, {wg.height}), got {self.xperp}")
        if abs(psi_n(wg, 1, self.xperp)) < 1e-12:
            raise ValueError("psi_1 vanishes at the measurement point")
        if src is None or not src.regions:
            return

        low, high = src.range_support()
        if self.side is Side.LEFT:
            sep = low - self.x1
        else:
            sep = self.x1 - high
        if not sep > 0:
            raise ValueError(f"Measurement point {self.point} is not {self.side.value} of the source")
        if k_max is not None:
            bound = green_tail_bound(wg, sep, k_max)
            if bound > tol:
                needed = far_field_offset(wg, k_max, tol)
                raise ValueError(
                    f"Evanescent tail bound {bound:.2e} exceeds {tol:.0e}; "
                    f"move x* at least {needed:.3f} away from the source"
                )


@dataclass(frozen=True)
class FrequencyGrid:
    """
    Uniform grid of N points sigma_i on (k_minus, k_plus), Delta = (k+ - k-) / N.

    Midpoint mode: sigma_i = k- + (i - 1/2) Delta, i = 1..N.
    Vertex mode: sigma_i = k- + i Delta, i = 0..N-1.
    """
    k_minus: float
    k_plus: float
    n: int
    vertex: bool = False

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"Frequency grid needs N >= 2 points, got {self.n}")
        if not self.k_plus > self.k_minus:
            raise ValueError("k_plus must exceed k_minus")

    @classmethod
    def default(cls, wg: Waveguide, n: int, vertex: bool = False) -> "FrequencyGrid":
        """k- = 0 and k+ = sqrt(lambda_2^2 - lambda_1^2)."""
        low, high = passband(wg)
        return cls(0.0, math.sqrt((high - low) * (high + low)), n, vertex)

    @classmethod
    def from_spacing(
        cls, delta: float, count: int, k_minus: float = 0.0, vertex: bool = False
    ) -> "FrequencyGrid":
        """Grid whose difference lattice holds `count` samples spaced by delta."""
        n = count + 1
        return cls(k_minus, k_minus + n * delta, n, vertex)

    @classmethod
    def for_alpha(cls, wg: Waveguide, alpha: float, n: int, vertex: bool = False) -> "FrequencyGrid":
        """Grid on (0, k+(alpha)) with k+(alpha) = sqrt(lambda_2^2 - lambda_1^2) / alpha."""
        return cls(0.0, alpha_shift(wg, alpha), n, vertex)

    @property
    def delta(self) -> float:
        return (self.k_plus - self.k_minus) / self.n

    @property
    def sigma(self) -> np.ndarray:
        i = np.arange(self.n, dtype=float)
        shift = 0.0 if self.vertex else 0.5
        return self.k_minus + (i + shift) * self.delta

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(1, self.n)

    def lattice_wavenumbers(self, lambda1: float) -> np.ndarray:
        """omega_m = sqrt(lambda_1^2 + (m Delta)^2) for m = 1..N-1."""
        return np.hypot(lambda1, self.offsets * self.delta)

    def check(self, wg: Waveguide) -> None:
        """Every lattice wavenumber must lie strictly inside the passband."""
        check_passband(wg, self.lattice_wavenumbers(lambda_n(wg, 1)))

    def matches(self, other: "FrequencyGrid") -> bool:
        return (
            self.n == other.n
            and self.vertex == other.vertex
            and math.isclose(self.k_minus, other.k_minus, rel_tol=1e-12, abs_tol=1e-12)
            and math.isclose(self.k_plus, other.k_plus, rel_tol=1e-12, abs_tol=1e-12)
        )


def alpha_shift(wg: Waveguide, alpha: float) -> float:
    """(1 / alpha) sqrt(lambda_2^2 - lambda_1^2), alpha >= 2."""
    if not alpha >= 2:
        raise ValueError(f"alpha must be at least 2, got {alpha}")
    low, high = passband(wg)
    return math.sqrt((high - low) * (high + low)) / alpha


# --- Data sets ---

@dataclass(frozen=True)
class NoiseSpec:
    level: float
    seed: int


@dataclass(frozen=True, eq=False)
class DataSet:
    """
    Single-mode samples u_p^s(x*; omega_m) on the difference lattice of a grid.

    For alpha data the offsets are signed, m = -(N-1)..N-1, and
    omega_m = sqrt(lambda_1^2 + (m Delta + k+(alpha))^2).
    """
    waveguide: Waveguide
    grid: FrequencyGrid
    measurement: MeasurementConfig
    theta: float
    offsets: np.ndarray
    wavenumbers: np.ndarray
    samples: np.ndarray
    doubled: bool = False
    noise: Optional[NoiseSpec] = None
    alpha: Optional[float] = None
    transmitter: Optional[MeasurementConfig] = None

    def __post_init__(self):
        offsets = np.array(self.offsets, dtype=int)
        wavenumbers = np.array(self.wavenumbers, dtype=float)
        samples = np.array(self.samples, dtype=complex)
        if not len(offsets) == len(wavenumbers) == len(samples):
            raise ValueError("offsets, wavenumbers and samples must have equal length")
        if len(np.unique(offsets)) != len(offsets):
            raise ValueError("Lattice offsets must be unique")
        for name, arr in (("offsets", offsets), ("wavenumbers", wavenumbers), ("samples", samples)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def expected_offsets(self) -> np.ndarray:
        if self.alpha is not None:
            return np.arange(-(self.grid.n - 1), self.grid.n)
        return self.grid.offsets

    @property
    def is_complete(self) -> bool:
        return set(self.offsets.tolist()) == set(self.expected_offsets.tolist())

    @property
    def reference_x1(self) -> float:
        """Range coordinate the probe phases are measured from."""
        if self.transmitter is not None:
            return 0.5 * (self.transmitter.x1 + self.measurement.x1)
        return self.measurement.x1

    def lookup(self) -> dict:
        return dict(zip(self.offsets.tolist(), self.samples.tolist()))


def _field_from_nodes(
    wg: Waveguide, nodes: QuadratureNodes, xstar: MeasurementConfig, k: float
) -> complex:
    if len(nodes) == 0:
        return 0j
    mu = float(dispersion(wg, k).real)
    profile = mode_profile(wg, 1, nodes.yperp)
    phase = np.exp(1j * mu * np.abs(xstar.x1 - nodes.y1))
    integral = np.sum(nodes.weights * nodes.values * profile * phase)
    return complex(1j / (2.0 * mu) * psi_n(wg, 1, xstar.xperp) * integral)


def forward_field(
    wg: Waveguide,
    src: SourceSpec,
    xstar: MeasurementConfig,
    k: float,
    quad: QuadratureRule,
) -> complex:
    """
    Propagating part of the radiated field at x*.

    Args:
        wg: The waveguide
        src: The source
        xstar: Measurement point
        k: Wavenumber in the open passband
        quad: Quadrature rule for the volume integral

    Returns:
        Midpoint approximation of the integral of green_p(x*, y; k) f(y) over D
    """
    check_passband(wg, k)
    if src.contains(*xstar.point):
        raise SynthesisError(f"Measurement point {xstar.point} lies inside the source", k)
    return _field_from_nodes(wg, quadrature_nodes(wg, src, quad), xstar, k)


def _synthesize(
    wg: Waveguide,
    src: SourceSpec,
    xstar: MeasurementConfig,
    wavenumbers: np.ndarray,
    quad: QuadratureRule,
    threads: Optional[int],
) -> np.ndarray:
    check_passband(wg, wavenumbers)
    if src.contains(*xstar.point):
        raise SynthesisError(f"Measurement point {xstar.point} lies inside the source")
    nodes = quadrature_nodes(wg, src, quad)
    logger.debug("Synthesizing %d samples from %d quadrature nodes", len(wavenumbers), len(nodes))

    workers = threads or settings.max_workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        values = list(pool.map(lambda k: _field_from_nodes(wg, nodes, xstar, k), wavenumbers))
    return np.array(values, dtype=complex)


def synthesize_dataset(
    wg: Waveguide,
    src: SourceSpec,
    xstar: MeasurementConfig,
    grid: FrequencyGrid,
    quad: Optional[QuadratureRule] = None,
    threads: Optional[int] = None,
) -> DataSet:
    """
    Forward data on the difference lattice omega_m, m = 1..N-1.

    Args:
        wg: The waveguide
        src: The source
        xstar: Measurement point
        grid: Frequency grid of the operator
        quad: Quadrature rule (default cell h / 40)
        threads: Worker cap (default from settings)

    Returns:
        Noise-free DataSet
    """
    grid.check(wg)
    quad = quad or QuadratureRule.default(wg)
    wavenumbers = grid.lattice_wavenumbers(lambda_n(wg, 1))
    samples = _synthesize(wg, src, xstar, wavenumbers, quad, threads)
    logger.info("Synthesized %d lattice samples at x*=%s", len(samples), xstar.point)
    return DataSet(wg, grid, xstar, src.theta, grid.offsets, wavenumbers, samples)


def synthesize_alpha_dataset(
    wg: Waveguide,
    src: SourceSpec,
    xstar: MeasurementConfig,
    grid: FrequencyGrid,
    alpha: float,
    quad: Optional[QuadratureRule] = None,
    threads: Optional[int] = None,
) -> DataSet:
    """
    Forward data on the signed alpha lattice used by F_alpha.

    Offsets m = -(N-1)..N-1 carry omega = sqrt(lambda_1^2 + (m Delta + k+(alpha))^2).
    """
    shift = alpha_shift(wg, alpha)
    if grid.k_minus != 0 or not math.isclose(grid.k_plus, shift, rel_tol=1e-12):
        raise SynthesisError(
            f"Alpha lattice needs the grid (0, {shift:g}), got ({grid.k_minus:g}, {grid.k_plus:g})"
        )
    offsets = np.arange(-(grid.n - 1), grid.n)
    wavenumbers = np.hypot(lambda_n(wg, 1), offsets * grid.delta + shift)
    quad = quad or QuadratureRule.default(wg)
    samples = _synthesize(wg, src, xstar, wavenumbers, quad, threads)
    logger.info("Synthesized %d alpha-lattice samples (alpha=%g)", len(samples), alpha)
    return DataSet(wg, grid, xstar, src.theta, offsets, wavenumbers, samples, alpha=alpha)


def add_noise(ds: DataSet, delta: float, seed: int) -> DataSet:
    """
    Relative complex Gaussian noise u -> u (1 + delta (xi_1 + i xi_2) / sqrt(2)).

    Args:
        ds: Noise-free data set
        delta: Relative noise level, >= 0
        seed: Seed of the generator

    Returns:
        New DataSet; identical to ds when delta is 0
    """
    if delta < 0:
        raise ValueError(f"Noise level must be nonnegative, got {delta}")
    if delta == 0:
        return ds
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((2, len(ds.samples)))
    factor = 1.0 + delta * (xi[0] + 1j * xi[1]) / math.sqrt(2.0)
    logger.debug("Adding %.1f%% noise (seed=%d)", 100 * delta, seed)
    return replace(ds, samples=ds.samples * factor, noise=NoiseSpec(float(delta), int(seed)))


def block_dataset(
    wg: Waveguide,
    block_x1: float,
    x_s: MeasurementConfig,
    x_r: MeasurementConfig,
    grid: FrequencyGrid,
) -> DataSet:
    """
    Mirror-model data of a complete sound-soft block at {block_x1} x (0, h).

    Only mode 1 propagates; it reflects with coefficient -1, so the sample at k is
    -(i / (2 mu_1)) psi_1(x_s) psi_1(x_r) exp(i mu_1 (|b - x_s1| + |b - x_r1|)).

    Args:
        wg: The waveguide
        block_x1: Range position of the block
        x_s: Transmitter position
        x_r: Receiver position
        grid: Frequency grid

    Returns:
        DataSet with the doubled flag set
    """
    grid.check(wg)
    left = [p.x1 < block_x1 for p in (x_s, x_r)]
    if left[0] != left[1]:
        raise ValueError("Transmitter and receiver must be on the same side of the block")

    wavenumbers = grid.lattice_wavenumbers(lambda_n(wg, 1))
    nearest = min(abs(block_x1 - x_s.x1), abs(block_x1 - x_r.x1))
    needed = far_field_offset(wg, float(wavenumbers.max()))
    if nearest < needed:
        raise ValueError(
            f"Block is {nearest:.3f} from the array; far-field data needs {needed:.3f}"
        )

    mu = dispersion(wg, wavenumbers).real
    travel = abs(block_x1 - x_s.x1) + abs(block_x1 - x_r.x1)
    profile = psi_n(wg, 1, x_s.xperp) * psi_n(wg, 1, x_r.xperp)
    samples = -1j / (2.0 * mu) * profile * np.exp(1j * mu * travel)
    logger.info("Block data: %d samples, round-trip distance %.3f", len(samples), travel)
    return DataSet(
        wg, grid, x_r, 0.0, grid.offsets, wavenumbers, samples,
        doubled=True, transmitter=x_s,
    )
