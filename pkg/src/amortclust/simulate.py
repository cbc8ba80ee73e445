"""
Stationary time-series simulators: Gaussian AR(3), GARCH(1,1) with
standardized Student-t innovations, and two-regime SETAR(2,1,1).

Every simulator is a pure function of ``(spec, T, burn_in, rng)``: the
recursion starts from zeros (or from the unconditional variance for
GARCH), runs ``burn_in`` extra steps and returns the last ``T`` values.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.signal import lfilter

AR_BURN_IN = 500
SETAR_BURN_IN = 500
GARCH_BURN_IN = 1000

# |root| must exceed 1 + ROOT_TOL to count as outside the unit circle
ROOT_TOL = 1e-10


class StationarityError(ValueError):
    """Raised when a process specification is not stationary/causal."""


@dataclass(frozen=True)
class ARSpec:
    phi: tuple[float, float, float]
    sigma2: float = 1.0

    def __post_init__(self):
        if len(self.phi) != 3:
            raise ValueError("ARSpec needs exactly 3 coefficients")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not check_ar_stationary(self.phi):
            raise StationarityError(f"AR coefficients {self.phi} are not causal")


@dataclass(frozen=True)
class PACFSpec:
    kappa: tuple[float, float, float]

    def __post_init__(self):
        if len(self.kappa) != 3:
            raise ValueError("PACFSpec needs exactly 3 partial autocorrelations")
        if any(not abs(k) < 1 for k in self.kappa):
            raise StationarityError(f"partial autocorrelations must lie in (-1, 1): {self.kappa}")


@dataclass(frozen=True)
class GARCHSpec:
    omega: float
    alpha: float
    beta: float
    nu: float = 10000.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if not self.alpha + self.beta < 1:
            raise StationarityError(f"alpha + beta = {self.alpha + self.beta} >= 1")
        if not self.nu > 2:
            raise ValueError(f"nu must exceed 2, got {self.nu}")

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)


@dataclass(frozen=True)
class SETARSpec:
    phi_regime1: float
    phi_regime2: float
    threshold_r: float = 0.0

    def __post_init__(self):
        if not max(abs(self.phi_regime1), abs(self.phi_regime2)) < 1:
            raise StationarityError(
                f"SETAR coefficients ({self.phi_regime1}, {self.phi_regime2}) violate max|phi| < 1"
            )


def check_ar_stationary(phi) -> bool:
    """True iff every root of 1 - phi_1 z - phi_2 z^2 - phi_3 z^3 lies outside the unit circle.

    Roots of the characteristic polynomial are the reciprocals of the
    companion-matrix eigenvalues, so the check is ``max |eig| < 1/(1+tol)``.
    """
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        return False
    p = phi.size
    companion = np.zeros((p, p))
    companion[0, :] = phi
    companion[1:, :-1] = np.eye(p - 1)
    eig = np.linalg.eigvals(companion)
    return bool(np.all(np.abs(eig) * (1.0 + ROOT_TOL) < 1.0))


def durbin_levinson(pacf) -> tuple[float, float, float]:
    """Map partial autocorrelations (kappa_1, kappa_2, kappa_3) to AR(3) coefficients.

    Parameters
    ----------
    pacf : PACFSpec or sequence of 3 floats
        Each entry strictly inside (-1, 1).

    Returns
    -------
    tuple of float
        (phi_1, phi_2, phi_3) of a causal AR(3).
    """
    kappa = pacf.kappa if isinstance(pacf, PACFSpec) else tuple(PACFSpec(tuple(pacf)).kappa)
    phi: list[float] = []
    for m, k in enumerate(kappa, start=1):
        prev = phi
        phi = [prev[j] - k * prev[m - 2 - j] for j in range(m - 1)] + [float(k)]
    return tuple(float(v) for v in phi)


def simulate_ar(spec: ARSpec, T: int, rng: np.random.Generator, burn_in: int = AR_BURN_IN) -> np.ndarray:
    """Gaussian AR(3) path of length ``T``."""
    if not isinstance(spec, ARSpec):
        spec = ARSpec(*spec)
    _check_lengths(T, burn_in)
    eps = rng.normal(0.0, np.sqrt(spec.sigma2), size=T + burn_in)
    # lfilter with denominator Phi(z) is exactly the zero-initialized recursion
    x = lfilter([1.0], np.r_[1.0, -np.asarray(spec.phi)], eps)
    return x[burn_in:]


def sample_student_t_std(nu: float, rng: np.random.Generator, size=None):
    """Student-t(nu) draw rescaled to zero mean and unit variance."""
    if not nu > 2:
        raise ValueError(f"standardized Student-t needs nu > 2, got {nu}")
    return rng.standard_t(nu, size=size) * np.sqrt((nu - 2.0) / nu)


@njit(cache=True)
def _garch_recursion(eps, omega, alpha, beta, sigma2_0):
    n = eps.shape[0]
    x = np.empty(n)
    s2 = sigma2_0
    prev_x2 = sigma2_0
    for t in range(n):
        if t > 0:
            s2 = omega + alpha * prev_x2 + beta * s2
        x[t] = np.sqrt(s2) * eps[t]
        prev_x2 = x[t] * x[t]
    return x


def simulate_garch(spec: GARCHSpec, T: int, rng: np.random.Generator, burn_in: int = GARCH_BURN_IN) -> np.ndarray:
    """GARCH(1,1) path ``X_t = sigma_t eps_t`` with standardized Student-t ``eps_t``.

    The variance recursion is seeded at the unconditional variance, and
    ``X_0^2`` is taken equal to it, so the first step is already at the
    stationary mean.
    """
    if not isinstance(spec, GARCHSpec):
        spec = GARCHSpec(*spec)
    _check_lengths(T, burn_in)
    eps = sample_student_t_std(spec.nu, rng, size=T + burn_in)
    x = _garch_recursion(eps, spec.omega, spec.alpha, spec.beta, spec.unconditional_variance)
    return x[burn_in:]


@njit(cache=True)
def _setar_recursion(eps, phi1, phi2, r):
    n = eps.shape[0]
    x = np.empty(n)
    prev = 0.0
    for t in range(n):
        if prev <= r:
            prev = phi1 * prev + eps[t]
        else:
            prev = phi2 * prev + eps[t]
        x[t] = prev
    return x


def simulate_setar(spec: SETARSpec, T: int, rng: np.random.Generator, burn_in: int = SETAR_BURN_IN) -> np.ndarray:
    """SETAR(2,1,1) path; regime 1 applies when the previous value is <= threshold."""
    if not isinstance(spec, SETARSpec):
        spec = SETARSpec(*spec)
    _check_lengths(T, burn_in)
    eps = rng.standard_normal(T + burn_in)
    x = _setar_recursion(eps, spec.phi_regime1, spec.phi_regime2, spec.threshold_r)
    return x[burn_in:]


def _check_lengths(T, burn_in):
    if T < 1:
        raise ValueError(f"series length must be >= 1, got {T}")
    if burn_in < 0:
        raise ValueError(f"burn_in must be >= 0, got {burn_in}")
