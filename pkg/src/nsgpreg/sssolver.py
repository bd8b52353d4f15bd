"""Markovian solvers for the hierarchical model, linear in the series length.

The negative log posterior decomposes over the state chain
``z_0, ..., z_T`` (state 0 sits one grid step before the first
measurement), so values and gradients cost O(T).  The solver surface
mirrors the dense-covariance module: a smooth objective, a consensus
splitting fit and a subgradient fit.

L1 penalties act on one coordinate of the state at every index k = 0..T,
selected per block; penalty operators other than the identity are not
supported here.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .batch import RegConfig, TimeSeriesDataset
from .optimize import (
    AdmmStop,
    L1Block,
    SmoothProblem,
    SubgradStop,
    admm_minimize,
    augmented_lagrangian_value,
    minimize_smooth,
    minimize_subgradient,
)
from .ssm import SsNsgpModel

__all__ = [
    "SsLatent",
    "SsAdmmState",
    "SsProblem",
    "ss_objective",
    "ss_admm_fit",
    "ss_subgradient_fit",
    "ss_map_fit",
    "ss_augmented_lagrangian",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class SsLatent:
    """State trajectory of shape (T+1, 3); row k holds (f, u_ell, u_sigma).

    Row 0 is the auxiliary initial state one grid step before the data.
    The properties expose the slices on the measurement grid.
    """

    z: np.ndarray

    @property
    def f(self):
        return self.z[1:, 0]

    @property
    def u_ell(self):
        return self.z[1:, 1]

    @property
    def u_sigma(self):
        return self.z[1:, 2]

    def to_flat(self):
        return self.z.reshape(-1).copy()

    @classmethod
    def from_flat(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(z=x.reshape(-1, 3).copy())


@dataclass
class SsAdmmState:
    """Splitting diagnostics for the Markovian fit; mirrors AdmmState."""

    latent: SsLatent
    v: dict
    eta: dict
    iterations: int
    history: np.ndarray = field(repr=False)
    converged: bool
    monotone: bool


class SsProblem:
    """Evaluation workspace for the Markovian negative log posterior.

    The first grid step is extrapolated backwards: state 0 lives at
    ``t_1 - (t_2 - t_1)`` and carries the model's initial covariance.
    """

    def __init__(self, data: TimeSeriesDataset, model: SsNsgpModel,
                 scheme="exact-ou"):
        if scheme not in ("exact-ou", "euler-maruyama"):
            raise ValueError(f"unknown scheme {scheme!r}")
        self.data = data
        self.model = model
        self.scheme = scheme
        self.T = len(data)
        t = data.times
        first = t[1] - t[0] if self.T > 1 else 1.0
        self.dts = np.diff(np.concatenate([[t[0] - first], t]))
        P0 = model.initial_cov()
        self._p0_inv = np.linalg.inv(P0)
        self._p0_logdet = float(np.linalg.slogdet(2.0 * np.pi * P0)[1])
        lu, su = model.u_lengthscale, model.u_magnitude
        if scheme == "exact-ou":
            self._phi_u = np.exp(-self.dts / lu)
            self._q_u = su**2 * (-np.expm1(-2.0 * self.dts / lu))
        else:
            self._phi_u = 1.0 - self.dts / lu
            self._q_u = 2.0 * su**2 * self.dts / lu
        if np.any(self._q_u <= 0):
            raise ValueError("u-path transition variance is not positive; "
                             "check u_lengthscale against the grid spacing")
        self._inv_r = 1.0 / data.noise_var

    def value_grad(self, x):
        T = self.T
        z = x.reshape(T + 1, 3)
        f, u_ell, u_sigma = z[:, 0], z[:, 1], z[:, 2]
        model = self.model
        # overflow in the links is an expected, handled probe condition
        with np.errstate(over="ignore"):
            g_ell = model.ell_link(u_ell[:-1])
            g_sig = model.sigma_link(u_sigma[:-1])
        # the floor keeps dt / g_ell**2 representable in the chain rule
        # below, the cap keeps g_sig**2 finite
        if not (np.all(np.isfinite(g_ell)) and np.all(np.isfinite(g_sig))
                and np.all(g_ell > 1e-100) and np.all(g_sig > 1e-300)
                and np.all(g_ell < 1e100) and np.all(g_sig < 1e100)):
            return np.inf, np.zeros_like(x)
        d_ell = model.ell_link.deriv(u_ell[:-1])
        d_sig = model.sigma_link.deriv(u_sigma[:-1])
        dts = self.dts

        if self.scheme == "exact-ou":
            x_f = dts / g_ell
            phi_f = np.exp(-x_f)
            E = np.exp(-2.0 * x_f)
            q_f = g_sig**2 * (-np.expm1(-2.0 * x_f))
            dphi_dul = phi_f * (x_f / g_ell) * d_ell
            dq_dul = -(g_sig**2) * E * (2.0 * x_f / g_ell) * d_ell
            dq_dus = 2.0 * g_sig * d_sig * (1.0 - E)
        else:
            phi_f = 1.0 - dts / g_ell
            q_f = 2.0 * g_sig**2 * dts / g_ell
            dphi_dul = (dts / g_ell**2) * d_ell
            dq_dul = -2.0 * g_sig**2 * dts / g_ell**2 * d_ell
            dq_dus = 4.0 * g_sig * d_sig * dts / g_ell
        if np.any(q_f <= 0) or not np.all(np.isfinite(q_f)):
            return np.inf, np.zeros_like(x)

        r_f = f[1:] - phi_f * f[:-1]
        r_l = u_ell[1:] - self._phi_u * u_ell[:-1]
        r_s = u_sigma[1:] - self._phi_u * u_sigma[:-1]
        meas = f[1:] - self.data.values
        p0_z = self._p0_inv @ z[0]

        wf = r_f / q_f
        wl = r_l / self._q_u
        ws = r_s / self._q_u
        value = (
            float(z[0] @ p0_z) + self._p0_logdet
            + float(np.dot(meas * self._inv_r, meas))
            + float(np.sum(np.log(2.0 * np.pi * self.data.noise_var)))
            + float(np.dot(r_f, wf)) + float(np.dot(r_l, wl)) + float(np.dot(r_s, ws))
            + float(np.sum(np.log(q_f))) + 2.0 * float(np.sum(np.log(self._q_u)))
            + 3.0 * T * _LOG_2PI
        )
        if not np.isfinite(value):
            return np.inf, np.zeros_like(x)

        g = np.zeros_like(z)
        g[0] = 2.0 * p0_z
        g[1:, 0] += 2.0 * (meas * self._inv_r + wf)
        g[:-1, 0] += -2.0 * wf * phi_f
        g[1:, 1] += 2.0 * wl
        g[:-1, 1] += -2.0 * wl * self._phi_u
        g[1:, 2] += 2.0 * ws
        g[:-1, 2] += -2.0 * ws * self._phi_u
        # transition coefficients depend on the previous parameter states
        dq_common = 1.0 / q_f - wf**2
        g[:-1, 1] += -2.0 * wf * f[:-1] * dphi_dul + dq_common * dq_dul
        g[:-1, 2] += dq_common * dq_dus
        return value, g.reshape(-1)

    def smooth_problem(self):
        return SmoothProblem(dim=3 * (self.T + 1), objective=self.value_grad)


def ss_objective(latent, data, model, scheme="exact-ou"):
    """Negative log posterior of a state trajectory and its gradient.

    Returns
    -------
    (float, SsLatent)
    """
    pb = SsProblem(data, model, scheme)
    value, g = pb.value_grad(latent.to_flat())
    return value, SsLatent.from_flat(g)


def _ss_blocks(reg: RegConfig, T):
    for phi in (reg.phi_f, reg.phi_ell, reg.phi_sigma):
        if isinstance(phi, str) and phi == "identity":
            continue
        raise ValueError("the Markovian solver supports identity penalty "
                         "operators only")
    n = 3 * (T + 1)
    return [
        L1Block("f", np.arange(0, n, 3), reg.lambda_f, reg.rho_f),
        L1Block("u_ell", np.arange(1, n, 3), reg.lambda_ell, reg.rho_ell),
        L1Block("u_sigma", np.arange(2, n, 3), reg.lambda_sigma, reg.rho_sigma),
    ]


def _ss_default_init(data):
    T = len(data)
    z = np.zeros((T + 1, 3))
    z[1:, 0] = data.values
    z[0, 0] = data.values[0]
    return z.reshape(-1)


def ss_admm_fit(data, model, reg, init=None, stop=None, scheme="exact-ou"):
    """Consensus-splitting fit of the penalized Markovian model.

    The L1 penalty of each block acts on its state coordinate at every
    index k = 0..T.  Defaults mirror :func:`nsgpreg.batch.admm_fit`.

    Returns
    -------
    (SsLatent, SsAdmmState)
    """
    T = len(data)
    if stop is None:
        tol = 1e-4 * np.sqrt(T)
        stop = AdmmStop(tol_primal=tol, tol_dual=tol)
    pb = SsProblem(data, model, scheme)
    x0 = init.to_flat() if init is not None else _ss_default_init(data)
    rec = admm_minimize(pb.smooth_problem(), _ss_blocks(reg, T), x0, stop)
    latent = SsLatent.from_flat(rec.x)
    state = SsAdmmState(
        latent=latent,
        v=rec.v,
        eta=rec.eta,
        iterations=rec.iterations,
        history=rec.history,
        converged=rec.converged,
        monotone=rec.lagrangian_monotone(),
    )
    if not state.monotone:
        warnings.warn("augmented Lagrangian increased during the splitting run",
                      RuntimeWarning)
    return latent, state


def ss_subgradient_fit(data, model, reg, init=None, stop=None, scheme="exact-ou"):
    """Subgradient-descent fit of the penalized Markovian model."""
    T = len(data)
    stop = stop or SubgradStop()
    pb = SsProblem(data, model, scheme)
    x0 = init.to_flat() if init is not None else _ss_default_init(data)
    best_x, _ = minimize_subgradient(pb.smooth_problem(), _ss_blocks(reg, T), x0, stop)
    return SsLatent.from_flat(best_x)


def ss_map_fit(data, model, init=None, tol_grad=1e-6, max_iters=1000,
               scheme="exact-ou"):
    """Smooth maximum a posteriori fit with no L1 penalty."""
    pb = SsProblem(data, model, scheme)
    x0 = init.to_flat() if init is not None else _ss_default_init(data)
    res = minimize_smooth(pb.smooth_problem(), x0, tol_grad=tol_grad,
                          max_iters=max_iters)
    return SsLatent.from_flat(res.x), res


def ss_augmented_lagrangian(state, data, model, reg, scheme="exact-ou"):
    """Augmented Lagrangian of the splitting problem at a recorded state."""
    pb = SsProblem(data, model, scheme)
    x = state.latent.to_flat()
    smooth_val, _ = pb.value_grad(x)
    return augmented_lagrangian_value(smooth_val, x, _ss_blocks(reg, len(data)),
                                      state.v, state.eta)
