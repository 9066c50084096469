"""
wgfm - Imaging
Probe functions, the Hermitian square root of a far-field matrix, the Picard
(factorization method) and factorization-based sampling indicators, the
point-spread function, grid scans and range-support metrics.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import LinAlgError, eigh
from scipy.special import j1

from config import settings
from .mfop import DiscreteFactors, FarFieldMatrix
from .modal import Point, Waveguide, psi_n
from .synth import FrequencyGrid

logger = logging.getLogger("wgfm.imaging")


class ImagingError(Exception):
    """Exception for failures while forming an image."""

    def __init__(self, message: str, indicator: Optional[str] = None):
        super().__init__(message)
        self.indicator = indicator


class IndicatorKind(Enum):
    FM = "fm"
    FBSM = "fbsm"


# --- Probes ---

@dataclass(frozen=True)
class Probe:
    """
    Test function psi_z^eps (disc average, eps > 0) or psi_z (point, eps = 0).

    phase_factor 2 doubles the probe phase for block imaging.
    """
    z1: float
    epsilon: float
    x1_star: float
    phase_factor: int = 1

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"Probe tolerance must be nonnegative, got {self.epsilon}")
        if self.phase_factor not in (1, 2):
            raise ValueError(f"phase_factor must be 1 or 2, got {self.phase_factor}")

    @classmethod
    def for_matrix(cls, F: FarFieldMatrix, z1: float, epsilon: float = 0.0) -> "Probe":
        return cls(z1, epsilon, F.reference_x1, 2 if F.doubled else 1)


def probe_eval(p: Probe, sigma) -> np.ndarray:
    """
    Probe values at frequencies sigma.

    eps = 0: exp(i c sigma (z1 - x*_1))
    eps > 0: the same times 2 J_1(c sigma eps) / (c sigma eps), equal to 1 at 0
    """
    sigma = np.asarray(sigma, dtype=float)
    c = p.phase_factor
    phase = np.exp(1j * c * sigma * (p.z1 - p.x1_star))
    if p.epsilon == 0:
        return phase

    arg = c * sigma * p.epsilon
    airy = np.ones_like(arg)
    mask = arg != 0
    airy[mask] = 2.0 * j1(arg[mask]) / arg[mask]
    return phase * airy


def probe_vector(p: Probe, grid: FrequencyGrid) -> np.ndarray:
    return probe_eval(p, grid.sigma)


def probe_quadrature(p: Probe, sigma: float, z_perp: float = 0.0, order: int = 48) -> complex:
    """
    Disc average (1 / |B|) of exp(i c sigma (y1 - x*_1)) over B((z1, z_perp), eps).

    Gauss-Legendre in the radius and the periodic trapezoidal rule in the angle.
    z_perp only moves the disc across the section and cannot change the value.
    """
    if not p.epsilon > 0:
        raise ValueError("Disc quadrature needs epsilon > 0")
    nodes, weights = leggauss(order)
    r = 0.5 * p.epsilon * (nodes + 1.0)
    wr = 0.5 * p.epsilon * weights
    angles = 2.0 * np.pi * np.arange(2 * order) / (2 * order)

    y1 = p.z1 + np.outer(r, np.cos(angles))
    integrand = np.exp(1j * p.phase_factor * sigma * (y1 - p.x1_star))
    radial = integrand.mean(axis=1) * 2.0 * np.pi
    total = np.sum(wr * r * radial)
    return complex(total / (math.pi * p.epsilon ** 2))


# --- Eigensystem ---

@dataclass(frozen=True, eq=False)
class Eigensystem:
    """
    Eigensystem of |A|^{1/2} for the Hermitian part A of a weighted far-field matrix.

    values are alpha_j = |lambda_j|^{1/2}, sorted descending; eigenvalues keeps the
    signed lambda_j; vectors holds orthonormal phi_j as columns.
    """
    values: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray
    matrix: np.ndarray

    def reconstruction(self) -> np.ndarray:
        """sum_j alpha_j^2 phi_j phi_j^H, the polar absolute value |A|."""
        return (self.vectors * self.values ** 2) @ self.vectors.conj().T

    def residual(self) -> float:
        """max_j ||A phi_j - lambda_j phi_j|| / ||A||."""
        norm = np.linalg.norm(self.matrix, 2)
        if norm == 0:
            return 0.0
        diff = self.matrix @ self.vectors - self.vectors * self.eigenvalues
        return float(np.max(np.linalg.norm(diff, axis=0)) / norm)

    def orthonormality(self) -> float:
        """max |V^H V - I|."""
        gram = self.vectors.conj().T @ self.vectors
        return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))


def hermitian_sqrt(F: Union[FarFieldMatrix, np.ndarray]) -> Eigensystem:
    """
    Symmetrize, eigendecompose and take |lambda|^{1/2}.

    A FarFieldMatrix is weighted by Delta first so that the eigenvectors are
    orthonormal coordinates of L^2(k-, k+).

    Raises:
        ImagingError: If the eigensolver does not converge
    """
    if isinstance(F, FarFieldMatrix):
        matrix = F.entries * F.weight
    else:
        matrix = np.asarray(F, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"Expected a square matrix, got shape {matrix.shape}")

    sym = 0.5 * (matrix + matrix.conj().T)
    try:
        lam, vectors = eigh(sym)
    except LinAlgError as e:
        raise ImagingError(f"Eigensolver failed: {e}", IndicatorKind.FM.value) from e

    order = np.argsort(-np.abs(lam), kind="stable")
    lam = lam[order]
    vectors = vectors[:, order]
    return Eigensystem(np.sqrt(np.abs(lam)), lam, vectors, sym)


# --- Indicators ---

def picard_sum(es: Eigensystem, coefficients: np.ndarray, rho: float = 0.0) -> float:
    """
    sum over retained j of |<c, phi_j>|^2 / alpha_j^2.

    Args:
        es: Eigensystem
        coefficients: Vector in the orthonormal coordinates of es
        rho: Relative cutoff, alpha_j >= rho * alpha_max retained

    Returns:
        The truncated Picard sum (inf on overflow)
    """
    if not 0 <= rho < 1:
        raise ValueError(f"Cutoff rho must lie in [0, 1), got {rho}")
    alpha_max = es.values[0] if len(es.values) else 0.0
    if not alpha_max > 0:
        raise ImagingError("Empty retained spectrum: the matrix is zero", IndicatorKind.FM.value)

    keep = es.values >= rho * alpha_max
    proj = es.vectors[:, keep].conj().T @ np.asarray(coefficients, dtype=complex)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        terms = np.abs(proj) ** 2 / es.values[keep] ** 2
        total = float(np.sum(terms))
    if math.isnan(total):
        return math.inf
    return total


def picard_indicator(es: Eigensystem, p: Probe, grid: FrequencyGrid, rho: float = 0.01) -> float:
    """
    I_FM(z) = (sum_j |<psi_z^eps, phi_j>|^2 / alpha_j^2)^{-1}.

    The probe is weighted by sqrt(Delta) to match hermitian_sqrt. Returns 0 when
    the sum overflows.
    """
    if not p.epsilon > 0:
        raise ValueError("The Picard indicator needs a disc probe (epsilon > 0)")
    coefficients = probe_vector(p, grid) * math.sqrt(grid.delta)
    total = picard_sum(es, coefficients, rho)
    if not math.isfinite(total):
        return 0.0
    if total == 0:
        return math.inf
    return 1.0 / total


def fbsm_indicator(F: FarFieldMatrix, p: Probe) -> float:
    """I_FBSM(z) = |psi_z^H F psi_z| Delta."""
    if p.epsilon != 0:
        raise ValueError("The sampling indicator uses the point probe (epsilon = 0)")
    psi = probe_vector(p, F.grid)
    return float(abs(np.vdot(psi, F.entries @ psi)) * F.weight)


def fbsm_bound_ratio(F: FarFieldMatrix, fac: DiscreteFactors, p: Probe) -> float:
    """
    |<F psi_z, psi_z>| / ||S psi_z||^2 with both sides weighted consistently.

    When F = S^H T S the ratio lies between min |T| and max |T|.
    """
    psi = probe_vector(p, F.grid)
    quadratic = abs(np.vdot(psi, F.entries @ psi)) * F.weight ** 2
    image = fac.apply_s(psi)
    norm = float(np.sum(fac.weights * np.abs(image) ** 2))
    if norm == 0:
        raise ImagingError("S psi_z vanishes", IndicatorKind.FBSM.value)
    return float(quadratic / norm)


# --- Point-spread function ---

def psf(wg: Waveguide, grid: FrequencyGrid, z1, y: Point) -> np.ndarray:
    """
    (S psi_z)(y) = sqrt(psi_1(y_perp)) (e^{i k+ t} - e^{i k- t}) / (i t), t = z1 - y1.

    Written as e^{i (k+ + k-) t / 2} (k+ - k-) sinc, which equals
    sqrt(psi_1(y_perp)) (k+ - k-) at t = 0.
    """
    t = np.asarray(z1, dtype=float) - y[0]
    width = grid.k_plus - grid.k_minus
    centre = 0.5 * (grid.k_plus + grid.k_minus)
    root = math.sqrt(psi_n(wg, 1, y[1]))
    return root * width * np.exp(1j * centre * t) * np.sinc(width * t / (2.0 * np.pi))


def psf_quadrature(
    wg: Waveguide, grid: FrequencyGrid, z1: float, y: Point, order: int = 96
) -> complex:
    """Gauss-Legendre sigma-quadrature of the integral of sqrt(psi_1(y_perp)) e^{i sigma (z1 - y1)}."""
    nodes, weights = leggauss(order)
    half = 0.5 * (grid.k_plus - grid.k_minus)
    sigma = grid.k_minus + half * (nodes + 1.0)
    root = math.sqrt(psi_n(wg, 1, y[1]))
    return complex(root * half * np.sum(weights * np.exp(1j * sigma * (z1 - y[0]))))


# --- Sampling grid and scans ---

@dataclass(frozen=True)
class SamplingGrid:
    """Rectangle [z1_min, z1_max] x (0, height) sampled at n1 x nperp points."""
    z1_min: float
    z1_max: float
    height: float
    n1: int
    nperp: int

    def __post_init__(self):
        if not (math.isfinite(self.z1_min) and math.isfinite(self.z1_max)):
            raise ValueError("Sampling extents must be finite")
        if not self.z1_max > self.z1_min:
            raise ValueError("z1_max must exceed z1_min")
        if self.n1 < 2 or self.nperp < 2:
            raise ValueError("Sampling grid needs at least two points per axis")

    @property
    def z1(self) -> np.ndarray:
        return np.linspace(self.z1_min, self.z1_max, self.n1)

    @property
    def zperp(self) -> np.ndarray:
        return (np.arange(self.nperp) + 0.5) * self.height / self.nperp

    @property
    def step(self) -> float:
        return (self.z1_max - self.z1_min) / (self.n1 - 1)


@dataclass(frozen=True, eq=False)
class ImageField:
    """Normalized indicator values; values[j, i] sits at (z1[i], zperp[j])."""
    grid: SamplingGrid
    values: np.ndarray
    kind: IndicatorKind
    epsilon: Optional[float] = None
    rho: Optional[float] = None

    @property
    def profile(self) -> np.ndarray:
        """Range profile (rows are identical for these indicators)."""
        return self.values.max(axis=0)


def scan(
    indicator: Callable[[float, float], float],
    grid: SamplingGrid,
    kind: IndicatorKind = IndicatorKind.FBSM,
    threads: Optional[int] = None,
    epsilon: Optional[float] = None,
    rho: Optional[float] = None,
) -> ImageField:
    """
    Evaluate an indicator at every grid point and normalize the maximum to 1.

    Raises:
        ImagingError: If the field is identically zero or not finite
    """
    points = [(z1, zp) for zp in grid.zperp for z1 in grid.z1]
    workers = threads or settings.max_workers
    with ThreadPoolExecutor(max_workers=workers) as pool:
        raw = list(pool.map(lambda pt: indicator(*pt), points))

    values = np.array(raw, dtype=float).reshape(grid.nperp, grid.n1)
    if not np.all(np.isfinite(values)):
        raise ImagingError("Indicator produced non-finite values", kind.value)
    peak = values.max()
    if not peak > 0:
        raise ImagingError("Indicator field is identically zero", kind.value)
    logger.info("Scanned %d points (%s), peak %.3e", len(points), kind.value, peak)
    return ImageField(grid, values / peak, kind, epsilon, rho)


def image_fm(
    F: FarFieldMatrix,
    grid: SamplingGrid,
    epsilon: float = 0.01,
    rho: float = 0.01,
    threads: Optional[int] = None,
) -> ImageField:
    """Factorization-method image of a far-field matrix."""
    es = hermitian_sqrt(F)

    def indicator(z1: float, zperp: float) -> float:
        return picard_indicator(es, Probe.for_matrix(F, z1, epsilon), F.grid, rho)

    return scan(indicator, grid, IndicatorKind.FM, threads, epsilon, rho)


def image_fbsm(F: FarFieldMatrix, grid: SamplingGrid, threads: Optional[int] = None) -> ImageField:
    """Factorization-based sampling image of a far-field matrix."""
    def indicator(z1: float, zperp: float) -> float:
        return fbsm_indicator(F, Probe.for_matrix(F, z1))

    return scan(indicator, grid, IndicatorKind.FBSM, threads)


# --- Metrics ---

@dataclass(frozen=True)
class SupportMetrics:
    argmax_z1: float
    argmax_inside: bool
    contrast: float
    half_max: Tuple[float, float]
    jaccard: float


def _interval_jaccard(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    overlap = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = max(a[1], b[1]) - min(a[0], b[0])
    return overlap / union if union > 0 else 0.0


def support_metrics(
    img: ImageField, true_support: Tuple[float, float], tol: float = 0.0
) -> SupportMetrics:
    """
    Localization metrics of a range image against the true range support.

    Args:
        img: Normalized image
        true_support: Range support interval (a, b)
        tol: Dilation of the interval when splitting inside from outside

    Returns:
        SupportMetrics: argmax, inside/outside mean ratio over the dilated
        interval, contiguous half-max interval around the argmax and its
        Jaccard overlap with the true interval
    """
    z1 = img.grid.z1
    profile = img.profile
    low, high = true_support
    peak = int(np.argmax(profile))
    argmax = float(z1[peak])

    inside = (z1 >= low - tol) & (z1 <= high + tol)
    inside_mean = float(profile[inside].mean()) if inside.any() else 0.0
    outside_mean = float(profile[~inside].mean()) if (~inside).any() else 0.0
    if outside_mean > 0:
        contrast = inside_mean / outside_mean
    else:
        contrast = math.inf if inside_mean > 0 else 1.0

    above = profile >= 0.5 * profile[peak]
    left = peak
    while left > 0 and above[left - 1]:
        left -= 1
    right = peak
    while right < len(profile) - 1 and above[right + 1]:
        right += 1
    half_max = (float(z1[left]), float(z1[right]))

    return SupportMetrics(
        argmax_z1=argmax,
        argmax_inside=bool(low - tol <= argmax <= high + tol),
        contrast=contrast,
        half_max=half_max,
        jaccard=_interval_jaccard(half_max, (low, high)),
    )
