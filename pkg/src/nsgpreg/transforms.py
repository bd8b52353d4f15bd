"""Positive link functions mapping latent Gaussian paths to kernel parameters.

The hierarchical model never works with the length scale or magnitude
directly.  It works with unconstrained latent paths and squeezes them
through one of the transforms below, so every transform here must be
smooth, strictly positive and have closed-form first and second
derivatives.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = ["LinkTransform"]

_KINDS = ("exp", "logistic")


@dataclass(frozen=True)
class LinkTransform:
    """Smooth positive map ``g`` applied elementwise to a latent path.

    Parameters
    ----------
    kind : str
        Either ``"exp"`` for ``g(u) = exp(u + baseline)`` or ``"logistic"``
        for the bounded map ``g(u) = exp(u + baseline) / (1 + exp(u + baseline))``.
        The alias ``"softplus-like"`` is accepted for the logistic kind.
    baseline : float
        Additive offset in the latent domain.  A zero latent path then maps
        to ``g(0) = exp(baseline)`` resp. ``expit(baseline)``.
    floor : float
        Optional constant added to the output.  Zero by default; set it
        strictly positive when a hard lower bound on the transformed path
        is required (the exp kind alone has none).
    """

    kind: str = "exp"
    baseline: float = 0.0
    floor: float = 0.0

    def __post_init__(self):
        kind = "logistic" if self.kind == "softplus-like" else self.kind
        if kind not in _KINDS:
            raise ValueError(f"unknown link kind {self.kind!r}, expected one of {_KINDS}")
        object.__setattr__(self, "kind", kind)
        if self.floor < 0:
            raise ValueError("floor must be non-negative")

    def apply(self, u):
        """Evaluate ``g(u)`` elementwise."""
        v = np.asarray(u, dtype=float) + self.baseline
        if self.kind == "exp":
            out = np.exp(v)
        else:
            out = expit(v)
        return out + self.floor

    def deriv(self, u, order=1):
        """Evaluate ``g'(u)`` or ``g''(u)`` elementwise.

        The floor is a constant shift, so derivatives ignore it.
        """
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        v = np.asarray(u, dtype=float) + self.baseline
        if self.kind == "exp":
            return np.exp(v)
        s = expit(v)
        if order == 1:
            return s * (1.0 - s)
        return s * (1.0 - s) * (1.0 - 2.0 * s)

    def __call__(self, u):
        return self.apply(u)
