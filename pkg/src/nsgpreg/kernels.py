"""Matern covariance functions, stationary and parameter-varying.

Only the half-integer orders nu = 1/2 and nu = 3/2 are supported; both
reduce to elementary functions, which keeps every downstream gradient
closed form.

Convention used throughout: the length-scale parameter ``ell`` enters all
formulas through ``sqrt(ell)``, i.e. it plays the role of a squared length
scale.  The stationary curve for nu = 1/2 is
``magnitude**2 * exp(-sqrt(2) * |tau| / sqrt(ell))`` and the
parameter-varying construction below reduces to exactly that curve when
the ``ell`` and ``sigma`` paths are constant.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky

__all__ = [
    "MaternParams",
    "CovarianceMatrix",
    "stationary_matern",
    "nonstationary_matern",
    "build_cov_matrix",
]

_SUPPORTED_NU = (0.5, 1.5)


@dataclass(frozen=True)
class MaternParams:
    """Hyperparameters of a stationary Matern covariance."""

    nu: float
    lengthscale: float
    magnitude: float

    def __post_init__(self):
        if self.nu not in _SUPPORTED_NU:
            raise ValueError(f"nu must be one of {_SUPPORTED_NU}, got {self.nu}")
        if not self.lengthscale > 0:
            raise ValueError("lengthscale must be positive")
        if not self.magnitude > 0:
            raise ValueError("magnitude must be positive")


def matern_correlation(z, nu):
    """Correlation profile h(z) with h(0) = 1 for half-integer nu."""
    z = np.asarray(z, dtype=float)
    if nu == 0.5:
        return np.exp(-z)
    if nu == 1.5:
        return (1.0 + z) * np.exp(-z)
    raise ValueError(f"nu must be one of {_SUPPORTED_NU}, got {nu}")


def stationary_matern(tau, params):
    """Evaluate the stationary Matern covariance at lags ``tau``.

    Parameters
    ----------
    tau : array_like
        Time lags, any sign.
    params : MaternParams

    Returns
    -------
    ndarray
        ``magnitude**2 * h(z)`` with ``z = 2 sqrt(nu) |tau| / sqrt(ell)``.
    """
    tau = np.abs(np.asarray(tau, dtype=float))
    z = 2.0 * np.sqrt(params.nu) * tau / np.sqrt(params.lengthscale)
    return params.magnitude**2 * matern_correlation(z, params.nu)


def nonstationary_matern(t, s, ell_t, ell_s, sigma_t, sigma_s, nu):
    """Parameter-varying Matern covariance between points ``t`` and ``s``.

    All arguments broadcast elementwise.  ``ell_*`` and ``sigma_*`` are the
    values of the length-scale and magnitude paths at the two inputs.  The
    construction averages the two local scales,

        c(t, s) = sigma_t sigma_s (ell_t ell_s)^{1/4}
                  ((ell_t + ell_s) / 2)^{-1/2} h(z),
        z = 2 sqrt(2 nu) |t - s| / sqrt(ell_t + ell_s),

    which is positive semidefinite for every positive pair of paths and
    collapses to :func:`stationary_matern` when both paths are constant.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    ell_t = np.asarray(ell_t, dtype=float)
    ell_s = np.asarray(ell_s, dtype=float)
    total = ell_t + ell_s
    z = 2.0 * np.sqrt(2.0 * nu) * np.abs(t - s) / np.sqrt(total)
    pref = (
        np.asarray(sigma_t, dtype=float)
        * np.asarray(sigma_s, dtype=float)
        * (ell_t * ell_s) ** 0.25
        * np.sqrt(2.0 / total)
    )
    return pref * matern_correlation(z, nu)


def nonstationary_cov_terms(times, ell, sigma, nu):
    """Dense covariance of a parameter-varying Matern on a grid.

    Returns the raw matrix together with the intermediate quantities needed
    by its analytic length-scale derivative.

    Returns
    -------
    C : ndarray, shape (T, T)
        Covariance matrix, no jitter.  The diagonal is exactly
        ``sigma**2``.
    z : ndarray, shape (T, T)
        Scaled distances.
    S : ndarray, shape (T, T)
        Pairwise sums ``ell[i] + ell[j]``.
    """
    times = np.asarray(times, dtype=float)
    ell = np.asarray(ell, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    S = ell[:, None] + ell[None, :]
    dt = np.abs(times[:, None] - times[None, :])
    z = 2.0 * np.sqrt(2.0 * nu) * dt / np.sqrt(S)
    pref = (
        np.outer(sigma, sigma)
        * np.outer(ell**0.25, ell**0.25)
        * np.sqrt(2.0 / S)
    )
    C = pref * matern_correlation(z, nu)
    # force an exact sigma^2 diagonal, immune to rounding in the prefactor
    np.fill_diagonal(C, sigma**2)
    return C, z, S


def lengthscale_partial(C, z, S, ell, nu):
    """Partial of the parameter-varying covariance w.r.t. its first-slot ell.

    Given the outputs of :func:`nonstationary_cov_terms`, returns the matrix
    ``D`` with ``D[i, j] = d C[i, j] / d ell[i]`` holding ``ell[j]`` fixed.
    The diagonal is identically zero: the variance does not depend on the
    length scale.
    """
    if nu == 0.5:
        q_z = z
    elif nu == 1.5:
        q_z = z**2 / (1.0 + z)
    else:
        raise ValueError(f"nu must be one of {_SUPPORTED_NU}, got {nu}")
    D = C * (0.25 / np.asarray(ell, dtype=float)[:, None] + (q_z - 1.0) / (2.0 * S))
    np.fill_diagonal(D, 0.0)
    return D


@dataclass(frozen=True)
class CovarianceMatrix:
    """A jittered covariance matrix with its lower Cholesky factor."""

    matrix: np.ndarray
    jitter: float
    chol: np.ndarray = field(repr=False)

    @property
    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))


def build_cov_matrix(times, kernel, jitter=None):
    """Assemble a covariance matrix on a grid and factorize it.

    Parameters
    ----------
    times : array_like, shape (T,)
    kernel : callable
        ``kernel(t, s)`` with broadcasting over arrays.
    jitter : float, optional
        Added to the diagonal.  Defaults to ``1e-9`` times the largest
        diagonal entry.

    Raises
    ------
    numpy.linalg.LinAlgError
        If the jittered matrix still fails to factorize; the message
        reports the smallest eigenvalue.
    """
    times = np.asarray(times, dtype=float)
    C = np.asarray(kernel(times[:, None], times[None, :]), dtype=float)
    C = 0.5 * (C + C.T)
    if jitter is None:
        jitter = 1e-9 * float(np.max(np.diag(C)))
    M = C + jitter * np.eye(len(times))
    try:
        L = cholesky(M, lower=True)
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(M)[0])
        raise np.linalg.LinAlgError(
            f"covariance matrix is not positive definite even with jitter "
            f"{jitter:g}: smallest eigenvalue {smallest:g}"
        ) from None
    return CovarianceMatrix(matrix=M, jitter=float(jitter), chol=L)
