"""
wgfm - Modal Data
Closed-form mode eigensystem, dispersion relation and propagating Green function
of a two-dimensional waveguide (-inf, inf) x (0, h).
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from scipy.optimize import brentq

logger = logging.getLogger("wgfm.modal")

Point = Tuple[float, float]


class BoundaryKind(Enum):
    """Boundary condition on the walls x_perp = 0 and x_perp = h."""
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    # Dirichlet on the top wall (x_perp = h), Neumann on the bottom wall
    MIXED_DIRICHLET_TOP = "mixed_dirichlet_top"
    # Dirichlet on the bottom wall (x_perp = 0), Neumann on the top wall
    MIXED_DIRICHLET_BOTTOM = "mixed_dirichlet_bottom"


class Regime(Enum):
    """Propagation regime of a mode at a given wavenumber."""
    PROPAGATING = "propagating"
    EVANESCENT = "evanescent"
    CUTOFF = "cutoff"


@dataclass(frozen=True)
class Waveguide:
    """Straight waveguide with cross-section (0, height)."""
    height: float
    boundary: BoundaryKind = BoundaryKind.NEUMANN

    def __post_init__(self):
        if not self.height > 0:
            raise ValueError(f"Waveguide height must be positive, got {self.height}")
        if not isinstance(self.boundary, BoundaryKind):
            object.__setattr__(self, "boundary", BoundaryKind(self.boundary))


@dataclass(frozen=True)
class GroupWavenumber:
    """Group wavenumber mu_n(k) together with its regime tag."""
    value: complex
    regime: Regime

    @property
    def is_propagating(self) -> bool:
        return self.regime is Regime.PROPAGATING


def _check_mode(n: int) -> None:
    if int(n) != n or n < 1:
        raise ValueError(f"Mode index must be an integer >= 1, got {n}")


def lambda_n(wg: Waveguide, n: int) -> float:
    """
    Cross-section eigenvalue lambda_n (square root of the Laplace eigenvalue).

    Args:
        wg: The waveguide
        n: Mode index, n >= 1

    Returns:
        lambda_n, nondecreasing in n
    """
    _check_mode(n)
    step = math.pi / wg.height
    if wg.boundary is BoundaryKind.DIRICHLET:
        return n * step
    if wg.boundary is BoundaryKind.NEUMANN:
        return (n - 1) * step
    return (n - 0.5) * step


def mode_profile(wg: Waveguide, n: int, xperp) -> np.ndarray:
    """
    L2-normalized real eigenfunction psi_n evaluated on an array of points.

    Args:
        wg: The waveguide
        n: Mode index
        xperp: Cross-section coordinates in [0, h]

    Returns:
        Array of psi_n values with the shape of xperp
    """
    _check_mode(n)
    x = np.asarray(xperp, dtype=float)
    if np.any(x < 0) or np.any(x > wg.height):
        raise ValueError(f"Cross-section coordinate outside [0, {wg.height}]")

    h = wg.height
    lam = lambda_n(wg, n)
    amplitude = math.sqrt(2.0 / h)
    if wg.boundary is BoundaryKind.DIRICHLET:
        return amplitude * np.sin(lam * x)
    if wg.boundary is BoundaryKind.NEUMANN:
        if n == 1:
            return np.full_like(x, math.sqrt(1.0 / h))
        return amplitude * np.cos(lam * x)
    if wg.boundary is BoundaryKind.MIXED_DIRICHLET_TOP:
        return amplitude * np.cos(lam * x)
    return amplitude * np.sin(lam * x)


def psi_n(wg: Waveguide, n: int, xperp: float) -> float:
    """Scalar psi_n(xperp); psi_1 is nonnegative on the cross-section."""
    return float(mode_profile(wg, n, xperp))


def psi_sup(wg: Waveguide, n: int) -> float:
    """Sup norm of psi_n over the cross-section."""
    _check_mode(n)
    if wg.boundary is BoundaryKind.NEUMANN and n == 1:
        return math.sqrt(1.0 / wg.height)
    return math.sqrt(2.0 / wg.height)


def dispersion(wg: Waveguide, k, n: int = 1) -> np.ndarray:
    """
    Vectorised group wavenumber mu_n(k) = sqrt(k^2 - lambda_n^2).

    The branch has nonnegative imaginary part, so evanescent modes decay.
    """
    lam = lambda_n(wg, n)
    k = np.asarray(k, dtype=float)
    return np.sqrt((k - lam) * (k + lam) + 0j)


def mu_n(wg: Waveguide, n: int, k: float) -> GroupWavenumber:
    """
    Group wavenumber of mode n at wavenumber k.

    Args:
        wg: The waveguide
        n: Mode index
        k: Wavenumber, k > 0

    Returns:
        GroupWavenumber with the regime set by the sign of k - lambda_n
    """
    if not k > 0:
        raise ValueError(f"Wavenumber must be positive, got {k}")
    lam = lambda_n(wg, n)
    if k == lam:
        return GroupWavenumber(0j, Regime.CUTOFF)
    value = complex(dispersion(wg, k, n))
    if k > lam:
        return GroupWavenumber(complex(value.real, 0.0), Regime.PROPAGATING)
    return GroupWavenumber(complex(0.0, value.imag), Regime.EVANESCENT)


def passband(wg: Waveguide) -> Tuple[float, float]:
    """Single-mode wavenumber interval (lambda_1, lambda_2)."""
    return lambda_n(wg, 1), lambda_n(wg, 2)


def check_passband(wg: Waveguide, k) -> None:
    """Reject wavenumbers outside the open passband."""
    low, high = passband(wg)
    k = np.asarray(k, dtype=float)
    if np.any(k <= low) or np.any(k >= high):
        raise ValueError(
            f"Wavenumber outside the single-mode passband ({low:g}, {high:g})"
        )


def green_p(wg: Waveguide, x: Point, y: Point, k: float) -> complex:
    """
    Propagating (n = 1) part of the waveguide Green function.

    Args:
        wg: The waveguide
        x: Field point (x1, xperp)
        y: Source point (y1, yperp)
        k: Wavenumber in the open passband

    Returns:
        (i / (2 mu_1)) psi_1(x_perp) psi_1(y_perp) exp(i mu_1 |x1 - y1|)
    """
    check_passband(wg, k)
    mu = dispersion(wg, k).real
    profile = psi_n(wg, 1, x[1]) * psi_n(wg, 1, y[1])
    return 1j / (2.0 * mu) * profile * np.exp(1j * mu * abs(x[0] - y[0]))


def green_tail_bound(wg: Waveguide, sep: float, k: float, n_terms: int = 0) -> float:
    """
    Upper bound on the evanescent remainder of the Green function series.

    Sums (1 / (2|mu_n|)) ||psi_n||_inf^2 exp(-|mu_n| sep) for n = 2..n_terms+1
    and closes the series with a geometric tail. Consecutive |mu_n| grow by at
    least pi / h, so each later term shrinks by exp(-pi sep / h) or more.

    Args:
        wg: The waveguide
        sep: Range separation |x1 - y1| > 0
        k: Wavenumber in the open passband
        n_terms: Number of terms summed explicitly before the tail

    Returns:
        Nonnegative bound
    """
    if not sep > 0:
        raise ValueError(f"Separation must be positive, got {sep}")
    if n_terms < 0:
        raise ValueError(f"n_terms must be nonnegative, got {n_terms}")
    check_passband(wg, k)

    def term(n: int) -> float:
        decay = abs(dispersion(wg, k, n))
        return psi_sup(wg, n) ** 2 / (2.0 * decay) * math.exp(-decay * sep)

    ratio = math.exp(-math.pi * sep / wg.height)
    total = sum(term(n) for n in range(2, n_terms + 2))
    return total + term(n_terms + 2) / (1.0 - ratio)


def far_field_offset(wg: Waveguide, k: float, tol: float = 1e-6) -> float:
    """
    Smallest range separation at which the evanescent tail bound drops below tol.

    Args:
        wg: The waveguide
        k: Largest wavenumber that will be used (inside the passband)
        tol: Target bound

    Returns:
        Separation in length units
    """
    def excess(sep: float) -> float:
        return math.log(green_tail_bound(wg, sep, k)) - math.log(tol)

    low = 1e-9
    if excess(low) <= 0:
        return low
    high = wg.height
    while excess(high) > 0:
        high *= 2.0
    sep = brentq(excess, low, high, xtol=1e-12)
    logger.debug("Tail bound %.1e reached at separation %.6f (k=%.4f)", tol, sep, k)
    return sep


