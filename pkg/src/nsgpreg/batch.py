"""Dense-covariance formulation of the hierarchical model and its solvers.

The model places a zero-mean Gaussian process prior on the signal ``f``
whose length-scale and magnitude vary over time.  Both varying parameters
are latent Gaussian paths (``u_ell`` and ``u_sigma``) pushed through a
positive link, and carry their own stationary Matern priors.  The
negative log posterior of the triple ``(f, u_ell, u_sigma)`` given noisy
observations is what :func:`nsgp_objective` evaluates; sparsity of the
latent paths is encouraged through L1 penalties handled either by
consensus splitting (:func:`admm_fit`) or plain subgradient descent
(:func:`subgradient_fit`).

Everything here is O(T^2) memory and O(T^3) time per objective call, with
T the number of samples.  The state-space modules provide the O(T)
alternative.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.linalg.lapack import dpotri

from .kernels import (
    MaternParams,
    lengthscale_partial,
    nonstationary_cov_terms,
    stationary_matern,
)
from .optimize import (
    AdmmStop,
    L1Block,
    SmoothProblem,
    SubgradStop,
    admm_minimize,
    augmented_lagrangian_value,
    minimize_smooth,
    minimize_subgradient,
    soft_threshold,
)
from .transforms import LinkTransform

__all__ = [
    "TimeSeriesDataset",
    "BatchModelSpec",
    "RegConfig",
    "BatchLatent",
    "AdmmState",
    "BatchProblem",
    "nsgp_objective",
    "soft_threshold",
    "admm_fit",
    "subgradient_fit",
    "map_fit",
    "augmented_lagrangian",
    "admm_lower_bound_inequality",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Scalar measurements on a strictly increasing time grid.

    ``noise_var`` is the per-sample measurement noise variance; a scalar is
    broadcast to the full grid.
    """

    times: np.ndarray
    values: np.ndarray
    noise_var: np.ndarray

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        noise = np.broadcast_to(
            np.asarray(self.noise_var, dtype=float), times.shape
        ).copy()
        if times.ndim != 1 or values.shape != times.shape:
            raise ValueError("times and values must be one-dimensional and equal length")
        bad = np.nonzero(np.diff(times) <= 0)[0]
        if bad.size:
            raise ValueError(
                f"times must be strictly increasing; first violation at row {bad[0] + 2}"
            )
        if np.any(noise <= 0):
            raise ValueError("noise_var must be strictly positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "noise_var", noise)

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class BatchModelSpec:
    """Hyperparameters of the dense-covariance hierarchical model.

    ``nu`` selects the Matern order of the signal covariance and of the
    two latent-path priors.  ``u_lengthscale`` and ``u_magnitude`` are the
    stationary prior hyperparameters shared by ``u_ell`` and ``u_sigma``.
    ``jitter`` is added to the diagonal of every covariance before
    factorization; None picks 1e-9 times the largest diagonal entry.
    """

    nu: float = 0.5
    ell_link: LinkTransform = LinkTransform("exp")
    sigma_link: LinkTransform = LinkTransform("exp")
    u_lengthscale: float = 1.0
    u_magnitude: float = 1.0
    jitter: Optional[float] = None


@dataclass(frozen=True)
class RegConfig:
    """L1 penalty weights, consensus weights and penalty operators per block.

    Each ``phi_*`` is one of the strings "identity" and "first-difference"
    or an explicit (T, T) ndarray.  The first-difference operator keeps the
    first sample as-is and differences the rest, so it stays square and
    full rank.
    """

    lambda_f: float = 0.0
    lambda_ell: float = 0.0
    lambda_sigma: float = 0.0
    rho_f: float = 1.0
    rho_ell: float = 1.0
    rho_sigma: float = 1.0
    phi_f: Union[str, np.ndarray] = "identity"
    phi_ell: Union[str, np.ndarray] = "identity"
    phi_sigma: Union[str, np.ndarray] = "identity"

    def __post_init__(self):
        for lam in (self.lambda_f, self.lambda_ell, self.lambda_sigma):
            if lam < 0:
                raise ValueError("lambda weights must be non-negative")
        for rho in (self.rho_f, self.rho_ell, self.rho_sigma):
            if not rho > 0:
                raise ValueError("rho weights must be strictly positive")


def _materialize_phi(phi, T):
    """Resolve a penalty operator to an ndarray, or None for the identity."""
    if isinstance(phi, str):
        if phi == "identity":
            return None
        if phi == "first-difference":
            return np.eye(T) - np.eye(T, k=-1)
        raise ValueError(f"unknown penalty operator {phi!r}")
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (T, T):
        raise ValueError(f"penalty operator must have shape ({T}, {T}), got {phi.shape}")
    return phi


@dataclass
class BatchLatent:
    """The latent triple on the data grid: signal and the two parameter paths."""

    f: np.ndarray
    u_ell: np.ndarray
    u_sigma: np.ndarray

    def to_flat(self):
        return np.concatenate([self.f, self.u_ell, self.u_sigma])

    @classmethod
    def from_flat(cls, x):
        x = np.asarray(x, dtype=float)
        T = x.size // 3
        return cls(f=x[:T].copy(), u_ell=x[T:2 * T].copy(), u_sigma=x[2 * T:].copy())


@dataclass
class AdmmState:
    """Final splitting state plus the per-iteration diagnostics trail.

    ``history`` has one row per outer iteration: augmented Lagrangian,
    largest per-block primal residual, largest per-block dual residual.
    ``monotone`` records whether the Lagrangian trail never increased
    beyond floating-point slack; a False here is a diagnostic to inspect,
    not an error.
    """

    latent: BatchLatent
    v: dict
    eta: dict
    iterations: int
    history: np.ndarray = field(repr=False)
    converged: bool
    monotone: bool


class BatchProblem:
    """Evaluation workspace for the negative log posterior.

    Factorizations of the two latent-path priors are done once here, and
    the signal-covariance jitter is frozen on first evaluation, which keeps
    the objective an exactly smooth function of the latent triple for the
    lifetime of the object.
    """

    def __init__(self, data: TimeSeriesDataset, spec: BatchModelSpec):
        self.data = data
        self.spec = spec
        self.T = len(data)
        prior = MaternParams(spec.nu, spec.u_lengthscale, spec.u_magnitude)
        tt = data.times
        Cu = stationary_matern(tt[:, None] - tt[None, :], prior)
        jit_u = spec.jitter if spec.jitter is not None else 1e-9 * spec.u_magnitude**2
        Cu[np.diag_indices_from(Cu)] += jit_u
        self._cf_u = cholesky(Cu, lower=True)
        self._logdet_u = 2.0 * float(np.sum(np.log(np.diag(self._cf_u))))
        self._jitter_f = spec.jitter
        self._inv_r = 1.0 / data.noise_var

    def value_grad(self, x):
        """Objective value and flat gradient at a flat latent vector."""
        T = self.T
        f = x[:T]
        u_ell = x[T:2 * T]
        u_sigma = x[2 * T:]
        spec = self.spec
        # overflow in the links is an expected, handled probe condition
        with np.errstate(over="ignore"):
            ell = spec.ell_link(u_ell)
            sig = spec.sigma_link(u_sigma)
        # the upper bound keeps sigma^2 and the pairwise products finite
        if not (np.all(np.isfinite(ell)) and np.all(np.isfinite(sig))
                and np.all(ell > 0) and np.all(sig > 0)
                and np.all(ell < 1e100) and np.all(sig < 1e100)):
            return np.inf, np.zeros_like(x)

        C_raw, z, S = nonstationary_cov_terms(self.data.times, ell, sig, spec.nu)
        if self._jitter_f is None:
            self._jitter_f = 1e-9 * float(np.max(sig)) ** 2
        C = C_raw.copy()
        C[np.diag_indices_from(C)] += self._jitter_f
        try:
            L = cholesky(C, lower=True)
        except (np.linalg.LinAlgError, ValueError):
            return np.inf, np.zeros_like(x)

        alpha = cho_solve((L, True), f)
        resid = f - self.data.values
        a_ell = cho_solve((self._cf_u, True), u_ell)
        a_sig = cho_solve((self._cf_u, True), u_sigma)

        value = (
            float(np.dot(resid * self._inv_r, resid))
            + float(np.sum(np.log(2.0 * np.pi * self.data.noise_var)))
            + float(np.dot(f, alpha))
            + 2.0 * float(np.sum(np.log(np.diag(L)))) + T * _LOG_2PI
            + float(np.dot(u_ell, a_ell)) + self._logdet_u + T * _LOG_2PI
            + float(np.dot(u_sigma, a_sig)) + self._logdet_u + T * _LOG_2PI
        )

        # trace term: M = C^{-1} - alpha alpha^T contracted against the
        # covariance partials for each latent coordinate
        Cinv, info = dpotri(L, lower=1)
        if info != 0:
            return np.inf, np.zeros_like(x)
        Cinv = np.tril(Cinv) + np.tril(Cinv, -1).T
        M = Cinv - np.outer(alpha, alpha)

        row_MC = np.einsum("ij,ij->i", M, C_raw)
        D_ell = lengthscale_partial(C_raw, z, S, ell, spec.nu)
        row_MD = np.einsum("ij,ij->i", M, D_ell)

        g_f = 2.0 * (alpha + resid * self._inv_r)
        g_ell = 2.0 * a_ell + 2.0 * spec.ell_link.deriv(u_ell) * row_MD
        g_sig = 2.0 * a_sig + 2.0 * spec.sigma_link.deriv(u_sigma) * (row_MC / sig)
        return value, np.concatenate([g_f, g_ell, g_sig])

    def smooth_problem(self):
        return SmoothProblem(dim=3 * self.T, objective=self.value_grad)


def nsgp_objective(latent, data, spec):
    """Negative log posterior of the latent triple and its gradient.

    Returns
    -------
    (float, BatchLatent)
        Objective value and the gradient arranged like the latent.
    """
    pb = BatchProblem(data, spec)
    value, g = pb.value_grad(latent.to_flat())
    return value, BatchLatent.from_flat(g)


def _blocks(reg, T):
    return [
        L1Block("f", np.arange(T), reg.lambda_f, reg.rho_f,
                _materialize_phi(reg.phi_f, T)),
        L1Block("u_ell", np.arange(T, 2 * T), reg.lambda_ell, reg.rho_ell,
                _materialize_phi(reg.phi_ell, T)),
        L1Block("u_sigma", np.arange(2 * T, 3 * T), reg.lambda_sigma, reg.rho_sigma,
                _materialize_phi(reg.phi_sigma, T)),
    ]


def _default_init(data):
    T = len(data)
    return np.concatenate([data.values, np.zeros(T), np.zeros(T)])


def admm_fit(data, spec, reg, init=None, stop=None):
    """Consensus-splitting fit of the penalized model.

    Parameters
    ----------
    data : TimeSeriesDataset
    spec : BatchModelSpec
    reg : RegConfig
    init : BatchLatent, optional
        Defaults to the measurements for ``f`` and zeros for both paths.
    stop : AdmmStop, optional
        Residual tolerances default to ``1e-4 * sqrt(T)``.

    Returns
    -------
    (BatchLatent, AdmmState)
    """
    T = len(data)
    if stop is None:
        tol = 1e-4 * np.sqrt(T)
        stop = AdmmStop(tol_primal=tol, tol_dual=tol)
    pb = BatchProblem(data, spec)
    x0 = init.to_flat() if init is not None else _default_init(data)
    rec = admm_minimize(pb.smooth_problem(), _blocks(reg, T), x0, stop)
    latent = BatchLatent.from_flat(rec.x)
    state = AdmmState(
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


def subgradient_fit(data, spec, reg, init=None, stop=None):
    """Subgradient-descent fit of the penalized model, diminishing steps.

    Slower and rougher than :func:`admm_fit`; kept as the reference
    first-order baseline.  Returns the iterate with the best composite
    objective.
    """
    T = len(data)
    stop = stop or SubgradStop()
    pb = BatchProblem(data, spec)
    x0 = init.to_flat() if init is not None else _default_init(data)
    best_x, _ = minimize_subgradient(pb.smooth_problem(), _blocks(reg, T), x0, stop)
    return BatchLatent.from_flat(best_x)


def map_fit(data, spec, init=None, tol_grad=1e-6, max_iters=1000):
    """Smooth maximum a posteriori fit with no L1 penalty."""
    pb = BatchProblem(data, spec)
    x0 = init.to_flat() if init is not None else _default_init(data)
    res = minimize_smooth(pb.smooth_problem(), x0, tol_grad=tol_grad,
                          max_iters=max_iters)
    return BatchLatent.from_flat(res.x), res


def augmented_lagrangian(state, data, spec, reg):
    """Augmented Lagrangian of the splitting problem at a recorded state."""
    pb = BatchProblem(data, spec)
    x = state.latent.to_flat()
    smooth_val, _ = pb.value_grad(x)
    return augmented_lagrangian_value(smooth_val, x, _blocks(reg, len(data)),
                                      state.v, state.eta)


def admm_lower_bound_inequality(v, a, rho):
    """Check the shrinkage inequality that bounds the splitting iteration.

    For any vectors ``v``, ``a`` and penalty weight ``rho > 0``,

        sign(v) . (a - v) + (rho / 2) ||a - v||^2  >=  -len(v) / (2 rho)

    holds with equality attainable.  Returns True when the inequality holds
    up to floating-point slack.
    """
    v = np.atleast_1d(np.asarray(v, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    r = a - v
    lhs = float(np.dot(np.sign(v), r) + 0.5 * rho * np.dot(r, r))
    rhs = -v.size / (2.0 * rho)
    return lhs >= rhs - 1e-12 * max(1.0, abs(rhs))
