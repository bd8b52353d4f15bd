"""First-order optimization routines shared by the batch and state-space solvers.

Three engines live here:

* :func:`minimize_smooth`, a limited-memory quasi-Newton method with a
  monotone Armijo line search and optional box bounds,
* :func:`minimize_subgradient`, a diminishing-step subgradient method for
  smooth-plus-L1 composites, used as the slow-but-simple baseline,
* :func:`admm_minimize`, a generic consensus splitting loop for the same
  composites, with per-iteration diagnostics.

Everything is deterministic: no randomized restarts, no stochastic steps.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "SmoothProblem",
    "OptimResult",
    "minimize_smooth",
    "check_gradient",
    "soft_threshold",
    "L1Block",
    "SubgradStop",
    "minimize_subgradient",
    "AdmmStop",
    "AdmmRecord",
    "admm_minimize",
]

# Wide default box. Keeps stray line-search probes from overflowing the
# model transforms without constraining any sane iterate.
_DEFAULT_BOUND = 1e6

_ARMIJO_C = 1e-4
_MAX_BACKTRACKS = 60


@dataclass
class SmoothProblem:
    """A smooth objective with analytic gradient and optional box bounds.

    ``objective`` maps a flat ndarray of shape (dim,) to a pair
    ``(value, gradient)``.  A non-finite value signals an infeasible probe
    and makes the line search back off; the gradient is ignored there.
    """

    dim: int
    objective: Callable[[np.ndarray], tuple]
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def bounds(self):
        lo = np.full(self.dim, -_DEFAULT_BOUND) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (self.dim,)
        )
        hi = np.full(self.dim, _DEFAULT_BOUND) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (self.dim,)
        )
        return lo, hi


@dataclass
class OptimResult:
    x: np.ndarray
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    message: str = ""


def _two_loop(g, s_list, y_list, rho_list):
    """Standard two-loop recursion for the L-BFGS direction -H g."""
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    if s_list:
        gamma = np.dot(s_list[-1], y_list[-1]) / np.dot(y_list[-1], y_list[-1])
        q *= gamma
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * np.dot(y, q)
        q += (a - b) * s
    return -q


def minimize_smooth(problem, x0, tol_grad=1e-6, max_iters=500, history=10):
    """Minimize a smooth objective by projected L-BFGS with Armijo backtracking.

    The iteration is monotone: a step is only accepted if it satisfies the
    sufficient-decrease condition, and the best iterate seen is what gets
    returned.  Convergence is declared when the projected gradient norm
    drops below ``tol_grad`` or when steps and objective changes hit the
    floating-point floor.

    Parameters
    ----------
    problem : SmoothProblem
    x0 : ndarray
        Start point; it is clipped into the box first.
    tol_grad : float
        Tolerance on the Euclidean norm of the projected gradient.
    max_iters : int
        Cap on accepted iterations.
    history : int
        Number of curvature pairs kept.

    Returns
    -------
    OptimResult
    """
    lo, hi = problem.bounds()
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    f, g = problem.objective(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the start point")
    best_x, best_f = x.copy(), f

    s_list, y_list, rho_list = [], [], []
    stall_count = 0
    converged = False
    message = "max iterations reached"
    it = 0
    while it < max_iters:
        pg = x - np.clip(x - g, lo, hi)
        gnorm = float(np.linalg.norm(pg))
        if gnorm <= tol_grad:
            converged = True
            message = "projected gradient below tolerance"
            break
        it += 1

        d = _two_loop(g, s_list, y_list, rho_list) if s_list else -g / max(1.0, gnorm)
        if np.dot(d, g) >= 0.0:
            # fell out of the cone of descent directions, reset memory
            s_list, y_list, rho_list = [], [], []
            d = -g / max(1.0, gnorm)

        t = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            x_t = np.clip(x + t * d, lo, hi)
            step = x_t - x
            slope = float(np.dot(g, step))
            if np.linalg.norm(step) == 0.0:
                break
            f_t, g_t = problem.objective(x_t)
            if np.isfinite(f_t) and f_t <= f + _ARMIJO_C * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = True
            message = "step size underflow in line search"
            break

        s = x_t - x
        y = g_t - g
        sy = float(np.dot(s, y))
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            rho_list.append(1.0 / sy)
            if len(s_list) > history:
                s_list.pop(0)
                y_list.pop(0)
                rho_list.pop(0)

        f_prev = f
        x, f, g = x_t, f_t, g_t
        if f < best_f:
            best_f, best_x = f, x.copy()
        if abs(f_prev - f) <= 1e-13 * (1.0 + abs(f)):
            stall_count += 1
            if stall_count >= 3:
                converged = True
                message = "objective change below floating-point floor"
                break
        else:
            stall_count = 0

    pg = x - np.clip(x - g, lo, hi)
    return OptimResult(
        x=best_x,
        value=best_f,
        grad_norm=float(np.linalg.norm(pg)),
        iterations=it,
        converged=converged,
        message=message,
    )


def check_gradient(problem, x, step=1e-6):
    """Compare the analytic gradient against central differences.

    Only objective values are used on the numeric side, so this is an
    independent check of the gradient code.  Returns
    ``max_i |analytic_i - numeric_i| / max(1, |numeric_i|)``.
    """
    x = np.asarray(x, dtype=float)
    _, analytic = problem.objective(x)
    numeric = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        f_plus, _ = problem.objective(x + e)
        f_minus, _ = problem.objective(x - e)
        numeric[i] = (f_plus - f_minus) / (2.0 * step)
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def soft_threshold(a, kappa):
    """Elementwise soft thresholding, the closed-form prox of kappa * |.|_1."""
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.maximum(np.abs(a) - kappa, 0.0)


@dataclass
class L1Block:
    """One L1 penalty term ``lam * || mat @ x[indices] ||_1``.

    ``mat is None`` means the identity.  ``rho`` is the consensus penalty
    weight used by :func:`admm_minimize`; the subgradient method ignores it.
    """

    name: str
    indices: np.ndarray
    lam: float
    rho: float = 1.0
    mat: Optional[np.ndarray] = None

    def apply(self, x):
        xb = x[self.indices]
        return xb if self.mat is None else self.mat @ xb

    def adjoint_into(self, vec, out):
        if self.mat is None:
            out[self.indices] += vec
        else:
            out[self.indices] += self.mat.T @ vec

    def penalty(self, x):
        return self.lam * float(np.sum(np.abs(self.apply(x))))


@dataclass
class SubgradStop:
    max_iters: int = 500
    step_scale: float = 1.0


def minimize_subgradient(problem, blocks, x0, stop=None):
    """Subgradient descent on ``smooth(x) + sum_b lam_b ||A_b x_b||_1``.

    Steps follow the classic diminishing schedule ``c / sqrt(i)`` where
    ``c`` is calibrated so the first step has Euclidean length
    ``stop.step_scale``.  The iterate with the best composite objective is
    returned; the method itself is not monotone.
    """
    stop = stop or SubgradStop()
    lo, hi = problem.bounds()
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)

    def direction(xx, grad):
        d = grad.copy()
        for b in blocks:
            if b.lam > 0:
                b.adjoint_into(b.lam * np.sign(b.apply(xx)), d)
        return d

    f, g = problem.objective(x)
    d = direction(x, g)
    c = stop.step_scale / max(float(np.linalg.norm(d)), 1e-12)
    best_x = x.copy()
    best_total = f + sum(b.penalty(x) for b in blocks)
    for i in range(1, stop.max_iters + 1):
        x = np.clip(x - (c / np.sqrt(i)) * d, lo, hi)
        f, g = problem.objective(x)
        if np.isfinite(f):
            total = f + sum(b.penalty(x) for b in blocks)
            if total < best_total:
                best_total = total
                best_x = x.copy()
        d = direction(x, g)
    return best_x, best_total


@dataclass
class AdmmStop:
    """Stopping settings for :func:`admm_minimize`.

    Residual tolerances are absolute; callers scale them with problem size.
    """

    tol_primal: float = 1e-3
    tol_dual: float = 1e-3
    max_outer: int = 200
    inner_tol_grad: float = 1e-6
    inner_max_iters: int = 100


@dataclass
class AdmmRecord:
    """Raw output of the splitting loop, wrapped by the model-level solvers."""

    x: np.ndarray
    v: dict
    eta: dict
    iterations: int
    history: np.ndarray = field(repr=False)
    converged: bool
    inner_evals: int = 0

    def lagrangian_monotone(self, rel_slack=1e-8):
        """True if the recorded augmented Lagrangian never increases.

        The slack is relative to the magnitude of the first recorded value,
        so honest floating-point noise does not raise a flag.
        """
        lag = self.history[:, 0]
        if lag.size < 2:
            return True
        slack = rel_slack * abs(lag[0])
        return bool(np.all(np.diff(lag) <= slack))


def augmented_lagrangian_value(smooth_value, x, blocks, v, eta):
    """Augmented Lagrangian of the consensus problem at the triple (x, v, eta)."""
    total = smooth_value
    for b in blocks:
        ax = b.apply(x)
        r = ax - v[b.name]
        total += b.lam * float(np.sum(np.abs(v[b.name])))
        total += float(np.dot(eta[b.name], r))
        total += 0.5 * b.rho * float(np.dot(r, r))
    return total


def admm_minimize(problem, blocks, x0, stop=None):
    """Consensus splitting for ``smooth(x) + sum_b lam_b ||A_b x_b||_1``.

    Each outer iteration solves the smooth subproblem augmented with the
    quadratic coupling terms (warm-started L-BFGS), then soft-thresholds
    the auxiliaries and takes a dual ascent step.  History rows hold the
    augmented Lagrangian, the largest per-block primal residual and the
    largest per-block dual residual, all evaluated after the full update.

    Blocks with ``lam == 0`` keep their consensus constraint; thresholding
    with a zero threshold reduces their update to a proximal step.
    """
    stop = stop or AdmmStop()
    x = np.asarray(x0, dtype=float).copy()
    v = {b.name: b.apply(x) for b in blocks}
    eta = {b.name: np.zeros_like(v[b.name]) for b in blocks}
    history = []
    inner_evals = 0
    converged = False

    def augmented(xx):
        val, grad = problem.objective(xx)
        if not np.isfinite(val):
            return val, grad
        g = grad.copy()
        for b in blocks:
            r = b.apply(xx) - v[b.name] + eta[b.name] / b.rho
            val += 0.5 * b.rho * float(np.dot(r, r))
            b.adjoint_into(b.rho * r, g)
        return val, g

    sub = SmoothProblem(dim=problem.dim, objective=augmented,
                        lower=problem.lower, upper=problem.upper)
    outer = 0
    for outer in range(1, stop.max_outer + 1):
        res = minimize_smooth(sub, x, tol_grad=stop.inner_tol_grad,
                              max_iters=stop.inner_max_iters)
        inner_evals += res.iterations
        x = res.x

        primal = 0.0
        dual = 0.0
        for b in blocks:
            ax = b.apply(x)
            v_new = soft_threshold(ax + eta[b.name] / b.rho, b.lam / b.rho)
            dual = max(dual, b.rho * float(np.linalg.norm(v_new - v[b.name])))
            v[b.name] = v_new
            r = ax - v_new
            eta[b.name] = eta[b.name] + b.rho * r
            primal = max(primal, float(np.linalg.norm(r)))

        smooth_val, _ = problem.objective(x)
        history.append(
            [augmented_lagrangian_value(smooth_val, x, blocks, v, eta), primal, dual]
        )
        if primal <= stop.tol_primal and dual <= stop.tol_dual:
            converged = True
            break

    return AdmmRecord(
        x=x,
        v=v,
        eta=eta,
        iterations=outer,
        history=np.asarray(history, dtype=float),
        converged=converged,
        inner_evals=inner_evals,
    )
