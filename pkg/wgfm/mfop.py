"""
wgfm - Multi-Frequency Operators
Assembly of the discrete single-mode multi-frequency far-field operators
(backscatter, two-sided and alpha-shifted) from lattice data, the discrete
factors S and T, and numerical checks of the factorization F = S* T S.
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import svdvals, toeplitz

from .modal import Waveguide, lambda_n, mode_profile, passband, psi_n
from .synth import (
    DataSet,
    FrequencyGrid,
    MeasurementConfig,
    QuadratureRule,
    Side,
    SourceSpec,
    alpha_shift,
    quadrature_nodes,
)

logger = logging.getLogger("wgfm.mfop")


class OperatorError(Exception):
    """Exception for inconsistent operator inputs."""

    def __init__(self, message: str, offset: Optional[int] = None):
        super().__init__(message)
        self.offset = offset


class OperatorKind(Enum):
    BACKSCATTER = "backscatter"
    TWO_SIDED = "two_sided"
    ALPHA = "alpha"


@dataclass(frozen=True, eq=False)
class FarFieldMatrix:
    """
    N x N discretization of a multi-frequency far-field operator.

    The frequency quadrature weight (Delta) is stored separately and applied
    when the matrix acts on a vector.
    """
    entries: np.ndarray
    grid: FrequencyGrid
    weight: float
    kind: OperatorKind
    reference_x1: float
    theta: float = 0.0
    alpha: Optional[float] = None
    tau: float = 0.0
    doubled: bool = False

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise OperatorError(f"Far-field matrix must be square, got shape {entries.shape}")
        if entries.shape[0] != self.grid.n:
            raise OperatorError(
                f"Matrix size {entries.shape[0]} does not match grid size {self.grid.n}"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        if not isinstance(self.kind, OperatorKind):
            object.__setattr__(self, "kind", OperatorKind(self.kind))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def hermitian_residual(self) -> float:
        """max |F - F^H|."""
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def apply(self, g: np.ndarray) -> np.ndarray:
        """Discrete (F g)(sigma_i) with midpoint weight Delta."""
        return self.entries @ np.asarray(g) * self.weight


@dataclass(frozen=True, eq=False)
class DiscreteFactors:
    """
    Discrete S (Q x N), diagonal T (length Q) and quadrature weights on D.

    S[q, i] = sqrt(psi_1(y_perp_q)) exp(-i sigma_i |y1_q - x*_1|).
    """
    s: np.ndarray
    t: np.ndarray
    weights: np.ndarray
    weight: float
    kind: OperatorKind
    theta: float = 0.0
    tau: float = 0.0

    @property
    def adjoint(self) -> np.ndarray:
        return self.s.conj().T

    def apply_s(self, g: np.ndarray) -> np.ndarray:
        """(S g)(y_q) with frequency weight Delta."""
        return self.s @ np.asarray(g) * self.weight


# --- Wavenumber lattices ---

def omega(lambda1: float, sigma, gamma) -> np.ndarray:
    """omega_{sigma gamma} = sqrt(lambda_1^2 + (sigma - gamma)^2)."""
    return np.hypot(lambda1, np.asarray(sigma, dtype=float) - np.asarray(gamma, dtype=float))


def omega_alpha(lambda1: float, lambda2: float, alpha: float, sigma, gamma) -> np.ndarray:
    """
    Alpha-shifted lattice wavenumber.

    omega = sqrt(lambda_1^2 + (sigma - gamma + sqrt(lambda_2^2 - lambda_1^2) / alpha)^2)
    """
    if not alpha >= 2:
        raise ValueError(f"alpha must be at least 2, got {alpha}")
    shift = math.sqrt((lambda2 - lambda1) * (lambda2 + lambda1)) / alpha
    diff = np.asarray(sigma, dtype=float) - np.asarray(gamma, dtype=float)
    return np.hypot(lambda1, diff + shift)


# --- Assembly ---

def extrapolate_zero_lag(values: Sequence[complex]) -> complex:
    """
    Kernel value at lag 0 from the kernel at lags 1, 2, 3.

    The samples are demodulated by their mean phase advance per step before
    quadratic extrapolation, which is exact for a single point reflector.
    Fewer than three lags fall back to linear or constant extrapolation.
    """
    k = np.asarray(values, dtype=complex)[:3]
    if len(k) == 0:
        raise OperatorError("No off-diagonal kernel values to extrapolate from")
    if len(k) == 1:
        return complex(k[0])

    advance = np.sum(k[1:] * np.conj(k[:-1]))
    step = np.angle(advance) if advance != 0 else 0.0
    lags = np.arange(1, len(k) + 1)
    demod = k * np.exp(-1j * step * lags)
    if len(k) == 2:
        return complex(2.0 * demod[0] - demod[1])
    return complex(3.0 * demod[0] - 3.0 * demod[1] + demod[2])


def _lattice_samples(ds: DataSet, offsets: np.ndarray) -> np.ndarray:
    table = ds.lookup()
    missing = [int(m) for m in offsets if int(m) not in table]
    if missing:
        raise OperatorError(f"DataSet is missing lattice sample m={missing[0]}", missing[0])
    return np.array([table[int(m)] for m in offsets], dtype=complex)


def _check_theta(ds: DataSet, theta: float) -> None:
    if not math.isclose(ds.theta, theta, rel_tol=0.0, abs_tol=1e-12):
        raise OperatorError(f"theta={theta} does not match the data set (theta={ds.theta})")


def _hermitian_toeplitz(kernel: np.ndarray, diagonal: float) -> np.ndarray:
    column = np.concatenate(([diagonal], kernel))
    return toeplitz(column, column.conj())


def assemble_backscatter(ds: DataSet, theta: float) -> FarFieldMatrix:
    """
    Discrete far-field operator F from backscatter data at one point.

    Args:
        ds: Lattice data measured left of the source
        theta: Phase making e^{i theta} f real

    Returns:
        Hermitian FarFieldMatrix; the diagonal is the real part of the
        extrapolated kernel
    """
    if ds.doubled:
        raise OperatorError("Block data needs assemble_block")
    if ds.alpha is not None:
        raise OperatorError("Alpha-lattice data needs assemble_alpha")
    if ds.measurement.side is not Side.LEFT:
        raise OperatorError("Backscatter data must be measured left of the source")
    _check_theta(ds, theta)

    grid = ds.grid
    offsets = grid.offsets
    # mu_1(omega_m) = m Delta on the difference lattice
    mu = offsets * grid.delta
    kernel = -1j * mu * np.exp(1j * theta) * _lattice_samples(ds, offsets)
    diagonal = extrapolate_zero_lag(kernel).real
    entries = _hermitian_toeplitz(kernel, diagonal)
    logger.debug("Assembled %dx%d backscatter operator (theta=%g)", grid.n, grid.n, theta)
    return FarFieldMatrix(
        entries, grid, grid.delta, OperatorKind.BACKSCATTER, ds.reference_x1, theta=theta
    )


def assemble_block(ds: DataSet) -> FarFieldMatrix:
    """
    Backscatter operator on doubled (mirror-model) block data.

    The reflection coefficient -1 is absorbed so the kernel is positive at lag 0;
    probes are measured from the midpoint of transmitter and receiver.
    """
    if not ds.doubled:
        raise OperatorError("assemble_block needs doubled block data")
    grid = ds.grid
    offsets = grid.offsets
    mu = offsets * grid.delta
    kernel = 1j * mu * _lattice_samples(ds, offsets)
    diagonal = extrapolate_zero_lag(kernel).real
    entries = _hermitian_toeplitz(kernel, diagonal)
    return FarFieldMatrix(
        entries, grid, grid.delta, OperatorKind.BACKSCATTER, ds.reference_x1, doubled=True
    )


def _check_two_sided(ds_left: DataSet, ds_right: DataSet) -> None:
    left, right = ds_left.measurement, ds_right.measurement
    if left.side is not Side.LEFT or right.side is not Side.RIGHT:
        raise OperatorError("Two-sided data needs one left and one right measurement")
    if not (math.isclose(left.a, right.a, abs_tol=1e-12)
            and math.isclose(left.xperp, right.xperp, abs_tol=1e-12)):
        raise OperatorError(
            f"Right measurement {right.point} is not the mirror of {left.point}"
        )
    if not ds_left.grid.matches(ds_right.grid):
        raise OperatorError("Left and right data sets use different frequency grids")
    if ds_left.doubled or ds_right.doubled or ds_left.alpha or ds_right.alpha:
        raise OperatorError("Two-sided assembly takes plain single-point data")


def assemble_two_sided(ds_left: DataSet, ds_right: DataSet) -> FarFieldMatrix:
    """
    Two-sided operator from measurements at x_l = (x*_1, x*_perp) and x_r = (-x*_1, x*_perp).

    Lower triangle (sigma > gamma) uses left data; upper triangle uses right
    data rotated by exp(2 i |sigma - gamma| x*_1).

    Args:
        ds_left: Data at x_l
        ds_right: Data at x_r

    Returns:
        FarFieldMatrix of kind TWO_SIDED
    """
    _check_two_sided(ds_left, ds_right)
    grid = ds_left.grid
    offsets = grid.offsets
    mu = offsets * grid.delta
    x1 = ds_left.measurement.x1

    lower = -1j * mu * _lattice_samples(ds_left, offsets)
    upper = -1j * mu * np.exp(2j * mu * x1) * _lattice_samples(ds_right, offsets)
    diagonal = 0.5 * (extrapolate_zero_lag(lower) + extrapolate_zero_lag(upper))

    entries = toeplitz(np.concatenate(([diagonal], lower)), np.concatenate(([diagonal], upper)))
    logger.debug("Assembled %dx%d two-sided operator", grid.n, grid.n)
    return FarFieldMatrix(entries, grid, grid.delta, OperatorKind.TWO_SIDED, x1)


def assemble_alpha(ds: DataSet, alpha: float, tau: float = 0.0) -> FarFieldMatrix:
    """
    Alpha-shifted operator F_alpha from signed-lattice data.

    entries[i][j] = -i (sigma_i - sigma_j + k+(alpha)) u(omega_{sigma_i sigma_j alpha})

    Args:
        ds: Data from synthesize_alpha_dataset
        alpha: Shift parameter, >= 2
        tau: Constant phase used by the self-adjoint part

    Returns:
        FarFieldMatrix of kind ALPHA (not Hermitian)
    """
    shift = alpha_shift(ds.waveguide, alpha)
    if ds.alpha is None or not math.isclose(ds.alpha, alpha, rel_tol=1e-12):
        raise OperatorError(f"DataSet was not sampled on the alpha={alpha} lattice")
    if ds.grid.k_minus != 0 or not math.isclose(ds.grid.k_plus, shift, rel_tol=1e-12):
        raise OperatorError(
            f"Alpha operator needs the grid (0, {shift:g}), got ({ds.grid.k_minus:g}, {ds.grid.k_plus:g})"
        )
    if ds.measurement.side is not Side.LEFT:
        raise OperatorError("Alpha data must be measured left of the source")

    grid = ds.grid
    n = grid.n
    offsets = np.arange(-(n - 1), n)
    samples = _lattice_samples(ds, offsets)
    kernel = -1j * (offsets * grid.delta + shift) * samples

    # index of signed offset i - j in the kernel array
    i, j = np.indices((n, n))
    entries = kernel[i - j + (n - 1)]
    return FarFieldMatrix(
        entries, grid, grid.delta, OperatorKind.ALPHA, ds.reference_x1,
        alpha=alpha, tau=tau,
    )


def self_adjoint_part(F: FarFieldMatrix, tau: Optional[float] = None) -> FarFieldMatrix:
    """Re(e^{i tau} F) := (e^{i tau} F + (e^{i tau} F)^H) / 2."""
    tau = F.tau if tau is None else tau
    rotated = np.exp(1j * tau) * F.entries
    return replace(F, entries=0.5 * (rotated + rotated.conj().T), tau=tau)


# --- Factors ---

def discrete_factors(
    wg: Waveguide,
    src: SourceSpec,
    xstar: MeasurementConfig,
    grid: FrequencyGrid,
    quad: Optional[QuadratureRule] = None,
    kind: OperatorKind = OperatorKind.BACKSCATTER,
    alpha: Optional[float] = None,
) -> DiscreteFactors:
    """
    Discrete S and T on the quadrature nodes of the source.

    T per kind:
        BACKSCATTER  e^{i theta} psi_1(x*_perp) f(y) / 2
        TWO_SIDED    psi_1(x*_perp) f(y) / 2
        ALPHA        e^{i k+(alpha) |x*_1 - y_1|} psi_1(x*_perp) f(y) / 2

    Args:
        wg: The waveguide
        src: The source
        xstar: Measurement point (the left point for two-sided)
        grid: Frequency grid
        quad: Quadrature rule (default cell h / 40)
        kind: Operator kind
        alpha: Shift parameter, required for ALPHA

    Returns:
        DiscreteFactors
    """
    kind = OperatorKind(kind)
    quad = quad or QuadratureRule.default(wg)
    nodes = quadrature_nodes(wg, src, quad)
    distance = np.abs(nodes.y1 - xstar.x1)

    root = np.sqrt(mode_profile(wg, 1, nodes.yperp))
    s = root[:, None] * np.exp(-1j * np.outer(distance, grid.sigma))
    base = 0.5 * psi_n(wg, 1, xstar.xperp) * nodes.values

    if kind is OperatorKind.BACKSCATTER:
        t = np.exp(1j * src.theta) * base
    elif kind is OperatorKind.TWO_SIDED:
        t = base
    else:
        if alpha is None:
            raise ValueError("alpha is required for alpha factors")
        t = np.exp(1j * alpha_shift(wg, alpha) * distance) * base

    logger.debug("Discrete factors: %d nodes x %d frequencies (%s)", len(nodes), grid.n, kind.value)
    return DiscreteFactors(s, t, nodes.weights, grid.delta, kind, theta=src.theta, tau=src.theta)


def factor_product(fac: DiscreteFactors, t: Optional[np.ndarray] = None) -> np.ndarray:
    """S^H diag(w_D T) S, optionally with a replacement diagonal."""
    diag = fac.t if t is None else t
    return fac.adjoint @ ((fac.weights * diag)[:, None] * fac.s)


def verify_factorization(
    F: FarFieldMatrix, fac: DiscreteFactors, self_adjoint: bool = False
) -> float:
    """
    Relative Frobenius residual ||F Delta - S^H diag(w_D T) S Delta|| / ||F Delta||.

    With self_adjoint=True, Re(e^{i tau} F) is compared against
    S^H diag(w_D Re(e^{i tau} T)) S.
    """
    if fac.s.shape[1] != F.size:
        raise OperatorError(
            f"Factor S has {fac.s.shape[1]} frequency columns, matrix has size {F.size}"
        )
    if self_adjoint:
        target = self_adjoint_part(F, fac.tau).entries
        product = factor_product(fac, (np.exp(1j * fac.tau) * fac.t).real)
    else:
        target = F.entries
        product = factor_product(fac)

    lhs = target * F.weight
    norm = np.linalg.norm(lhs)
    if norm == 0:
        raise OperatorError("Far-field matrix is identically zero")
    residual = float(np.linalg.norm(lhs - product * fac.weight) / norm)
    logger.debug("Factorization residual %.3e (%s)", residual, F.kind.value)
    return residual


# --- Coercivity and spectrum ---

def coercivity_constant(fac: DiscreteFactors, tau: float = 0.0) -> float:
    """
    min over quadrature nodes of Re(e^{i tau} T), up to a global sign.

    A positive value means Re(e^{i tau} T) is coercive (or anti-coercive).
    """
    rotated = (np.exp(1j * tau) * fac.t).real
    if len(rotated) == 0:
        raise OperatorError("No quadrature nodes inside the source")
    if np.all(rotated < 0):
        rotated = -rotated
    return float(rotated.min())


def alpha_coercivity(
    wg: Waveguide,
    src: SourceSpec,
    xstar: MeasurementConfig,
    alpha: float,
    tau: float = 0.0,
    quad: Optional[QuadratureRule] = None,
) -> float:
    """min over D of Re(e^{i tau} T_alpha)."""
    grid = FrequencyGrid.for_alpha(wg, alpha, 2)
    fac = discrete_factors(wg, src, xstar, grid, quad, OperatorKind.ALPHA, alpha)
    return float((np.exp(1j * tau) * fac.t).real.min())


def coercive_alpha(
    wg: Waveguide,
    src: SourceSpec,
    xstar: MeasurementConfig,
    candidates: Sequence[float],
    tau: float = 0.0,
    quad: Optional[QuadratureRule] = None,
) -> float:
    """
    Smallest candidate alpha making Re(e^{i tau} T_alpha) positive on D.

    Raises:
        OperatorError: If no candidate works
    """
    for alpha in sorted(candidates):
        value = alpha_coercivity(wg, src, xstar, alpha, tau, quad)
        logger.debug("alpha=%g: min Re(e^(i tau) T_alpha) = %.3e", alpha, value)
        if value > 0:
            return float(alpha)
    raise OperatorError(f"No alpha in {list(candidates)} makes Re(e^(i tau) T_alpha) coercive")


def singular_values(F: FarFieldMatrix) -> np.ndarray:
    """Singular values of F Delta in descending order."""
    return svdvals(F.entries * F.weight)


def dispersion_identity_error(
    wg: Waveguide,
    sigma: np.ndarray,
    gamma: np.ndarray,
    alpha: Optional[float] = None,
) -> float:
    """
    max |mu_1(omega) - (sigma - gamma [+ k+(alpha)])| over the given pairs.

    Without alpha the target is |sigma - gamma|.
    """
    low, high = passband(wg)
    lam = lambda_n(wg, 1)
    sigma = np.asarray(sigma, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if alpha is None:
        w = omega(lam, sigma, gamma)
        target = np.abs(sigma - gamma)
    else:
        w = omega_alpha(low, high, alpha, sigma, gamma)
        target = sigma - gamma + alpha_shift(wg, alpha)
    mu = np.sqrt((w - lam) * (w + lam))
    return float(np.max(np.abs(mu - target)))
