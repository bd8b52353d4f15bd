"""Stochastic-differential formulation of the hierarchical model.

The latent triple ``z = (f, u_ell, u_sigma)`` solves

    df      = -f / g_ell(u_ell) dt          + sqrt(2) g_sigma(u_sigma)
                                              / sqrt(g_ell(u_ell)) dW_f
    du_ell  = -u_ell / ell_u dt             + sqrt(2) sigma_u / sqrt(ell_u) dW_l
    du_sigma= -u_sigma / ell_u dt           + sqrt(2) sigma_u / sqrt(ell_u) dW_s

so each component is an Ornstein-Uhlenbeck process whose time constant and
diffusion for ``f`` are modulated by the two parameter paths.  Measurements
see only the first component.

The module provides the drift and diffusion, two discretization schemes,
and a quadrature evaluation of the covariance the ``f`` component implies
for fixed parameter paths.  The latter is the bridge between this
formulation and the dense-covariance one: with constant paths it
reproduces a stationary Matern 1/2 curve whose squared-scale parameter is
``2 g_ell**2``.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .transforms import LinkTransform

__all__ = [
    "SsNsgpModel",
    "sde_drift_diffusion",
    "discretize",
    "implied_covariance",
]

_SCHEMES = ("exact-ou", "euler-maruyama")


@dataclass(frozen=True)
class SsNsgpModel:
    """Hyperparameters of the stochastic-differential model.

    ``u_lengthscale`` and ``u_magnitude`` are the shared time constant and
    stationary standard deviation of the two parameter-path components.
    ``P0`` is the covariance of the initial state; None selects the
    stationary covariance at zero latent paths,
    ``diag(g_sigma(0)^2, u_magnitude^2, u_magnitude^2)``.
    """

    ell_link: LinkTransform = LinkTransform("exp")
    sigma_link: LinkTransform = LinkTransform("exp")
    u_lengthscale: float = 1.0
    u_magnitude: float = 1.0
    P0: Optional[np.ndarray] = None

    def initial_cov(self):
        if self.P0 is not None:
            P = np.asarray(self.P0, dtype=float)
            if P.shape != (3, 3):
                raise ValueError("P0 must have shape (3, 3)")
            return P
        s0 = float(self.sigma_link(0.0))
        return np.diag([s0**2, self.u_magnitude**2, self.u_magnitude**2])


def sde_drift_diffusion(z, model):
    """Drift vector and diagonal diffusion matrix at a state.

    Parameters
    ----------
    z : array_like, shape (3,)
        State ``(f, u_ell, u_sigma)``.
    model : SsNsgpModel

    Returns
    -------
    (ndarray, ndarray)
        Drift of shape (3,) and diffusion of shape (3, 3), diagonal.
    """
    f, u_ell, u_sigma = np.asarray(z, dtype=float)
    g_ell = float(model.ell_link(u_ell))
    g_sigma = float(model.sigma_link(u_sigma))
    lu = model.u_lengthscale
    drift = np.array([-f / g_ell, -u_ell / lu, -u_sigma / lu])
    diff = np.diag([
        np.sqrt(2.0) * g_sigma / np.sqrt(g_ell),
        np.sqrt(2.0) * model.u_magnitude / np.sqrt(lu),
        np.sqrt(2.0) * model.u_magnitude / np.sqrt(lu),
    ])
    return drift, diff


def discretize(z_prev, dt, model, scheme="exact-ou"):
    """One-step transition moments of the discretized SDE.

    For ``"exact-ou"`` the parameter paths are frozen at the left endpoint
    and each component is propagated with its exact Ornstein-Uhlenbeck
    moments; ``"euler-maruyama"`` takes the usual first-order step.

    Returns
    -------
    (ndarray, ndarray)
        Conditional mean of shape (3,) and covariance of shape (3, 3),
        diagonal.
    """
    if scheme not in _SCHEMES:
        raise ValueError(f"scheme must be one of {_SCHEMES}, got {scheme!r}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    z_prev = np.asarray(z_prev, dtype=float)
    g_ell = float(model.ell_link(z_prev[1]))
    g_sigma = float(model.sigma_link(z_prev[2]))
    lu = model.u_lengthscale
    su = model.u_magnitude
    if scheme == "exact-ou":
        lam = np.array([g_ell, lu, lu])
        stat = np.array([g_sigma**2, su**2, su**2])
        phi = np.exp(-dt / lam)
        q = stat * (-np.expm1(-2.0 * dt / lam))
        return phi * z_prev, np.diag(q)
    drift, diff = sde_drift_diffusion(z_prev, model)
    return z_prev + drift * dt, np.diag(np.diag(diff) ** 2 * dt)


def _cumulative_inverse_scale(grid, u_ell_fn, model):
    invg = 1.0 / model.ell_link(u_ell_fn(grid))
    if grid.size < 2 or grid[-1] == grid[0]:
        return invg, np.zeros_like(grid)
    return invg, cumulative_simpson(invg, x=grid, initial=0.0)


def _integral_inverse_scale(a, b, u_ell_fn, model, nodes):
    if b == a:
        return 0.0
    grid = np.linspace(a, b, nodes)
    return float(simpson(1.0 / model.ell_link(u_ell_fn(grid)), x=grid))


def implied_covariance(t, s, u_ell_fn, u_sigma_fn, t0, model, nodes=201):
    """Covariance of the ``f`` component for fixed parameter paths.

    Solves the linear time-varying SDE covariance identity by quadrature:
    with decay ``Lam(t, r) = exp(-int_r^t 1 / g_ell(u_ell))`` and squared
    diffusion ``B2(r) = 2 g_sigma(u_sigma(r))^2 / g_ell(u_ell(r))``,

        cov(t, s) = Lam(t, t0) P0_f Lam(s, t0)
                  + int_{t0}^{min(t, s)} Lam(t, r) B2(r) Lam(s, r) dr.

    Composite Simpson quadrature with ``nodes`` points is used throughout.

    Parameters
    ----------
    t, s : float
        Evaluation times, both at or after ``t0``.
    u_ell_fn, u_sigma_fn : callable
        Vectorized latent paths.
    t0 : float
        Time where the initial covariance applies.
    model : SsNsgpModel
    nodes : int
        Number of quadrature nodes, at least 3 and odd.

    Returns
    -------
    float
    """
    if nodes < 3 or nodes % 2 == 0:
        raise ValueError("nodes must be odd and at least 3")
    if min(t, s) < t0:
        raise ValueError("evaluation times must not precede t0")
    p0 = float(model.initial_cov()[0, 0])
    lo, hi = (t, s) if t <= s else (s, t)
    grid = np.linspace(t0, lo, nodes)
    invg, G = _cumulative_inverse_scale(grid, u_ell_fn, model)
    G_lo = G[-1]
    G_hi = G_lo + _integral_inverse_scale(lo, hi, u_ell_fn, model, nodes)
    G_t = G_hi if t == hi else G_lo
    G_s = G_hi if s == hi else G_lo
    first = p0 * np.exp(-G_t - G_s)
    if lo == t0:
        return float(first)
    B2 = 2.0 * model.sigma_link(u_sigma_fn(grid)) ** 2 * invg
    integrand = B2 * np.exp(2.0 * G - G_t - G_s)
    return float(first + simpson(integrand, x=grid))
