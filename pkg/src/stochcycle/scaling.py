"""Space-time scaling transforms that generate the small parameter.

A base drift g and diffusion field D, observed at space scale alpha and time
scale beta = xi(alpha), induce the macroscopic family

    b_eps(x) = (xi(alpha)/alpha) g(alpha x),   D_eps(x) = D(alpha x),
    eps = xi(alpha) / alpha**2.

For a power law xi(alpha) = alpha**k and a degree-n monomial drift, the
rescaled drift carries eps**((k - 1 + n)/(k - 2)); the exponent follows from
eliminating alpha via eps = alpha**(k-2).  It vanishes, making the family
eps-independent, exactly at k = 1 - n.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonPositiveScale, OutOfRange

__all__ = [
    "SpaceTimeStructure",
    "rescale_sde",
    "monomial_scaling_exponent",
    "monomial_drift_epsilon_power",
    "ito_from_stratonovich",
]


@dataclass(frozen=True)
class SpaceTimeStructure:
    """Space scale alpha and time-scale map xi; eps = xi(alpha)/alpha^2."""

    alpha: float
    xi: Callable[[float], float]

    def __post_init__(self):
        if self.alpha <= 0:
            raise NonPositiveScale(f"alpha = {self.alpha} must be positive")
        if self.beta <= 0:
            raise NonPositiveScale(f"xi(alpha) = {self.beta} must be positive")

    @property
    def beta(self):
        return float(self.xi(self.alpha))

    @property
    def eps(self):
        return self.beta / self.alpha**2

    @classmethod
    def power_law(cls, alpha, k):
        """xi(alpha) = alpha^k, so eps = alpha^(k-2)."""
        return cls(alpha=float(alpha), xi=lambda a, _k=float(k): a**_k)


def rescale_sde(g, D, structure):
    """Rescaled drift, diffusion, and the derived eps.

    ``D`` may be a constant matrix (returned unchanged) or a callable field
    (returned as x -> D(alpha x)); eps is never user-set here, it is what
    the structure produces.
    """
    alpha = structure.alpha
    scale = structure.beta / alpha

    def b_eps(x):
        return scale * np.asarray(g(alpha * np.asarray(x, dtype=float)), dtype=float)

    if callable(D):
        def D_eps(x):
            return np.asarray(D(alpha * np.asarray(x, dtype=float)), dtype=float)
    else:
        D_eps = np.asarray(D, dtype=float)
    return b_eps, D_eps, structure.eps


def monomial_scaling_exponent(n):
    """Time-scale exponent k = 1 - n that makes a degree-n drift eps-free.

    Valid for n > -1 (below that the induced eps is not small as alpha
    grows).
    """
    n = float(n)
    if n <= -1:
        raise OutOfRange(f"monomial order n = {n} must exceed -1")
    return 1.0 - n


def monomial_drift_epsilon_power(k, n):
    """Power of eps carried by the rescaled degree-n monomial drift.

    b_eps = eps**p g with p = (k - 1 + n)/(k - 2), from b_eps = alpha**(k-1+n) g
    and eps = alpha**(k-2).  (A circulated variant prints k - 1 in the
    denominator; that is inconsistent with eps = alpha**(k-2), though both
    agree on the root k = 1 - n where the power vanishes.)
    """
    k = float(k)
    n = float(n)
    if k == 2.0:
        raise OutOfRange("k = 2 makes eps = 1 for all alpha; no small parameter")
    return (k - 1.0 + n) / (k - 2.0)


def ito_from_stratonovich(b_S, D_div, eps):
    """Ito drift from the Stratonovich one: b_I(x) = b_S(x) + eps (div D)(x).

    ``D_div`` is the divergence field (div D)_i = sum_j d_j D_ij, supplied
    as a callable or, for constant divergence, an array.  Constant D has
    zero divergence, so the drifts coincide.
    """
    if callable(D_div):
        def b_I(x):
            x = np.asarray(x, dtype=float)
            return (np.asarray(b_S(x), dtype=float)
                    + eps * np.asarray(D_div(x), dtype=float))
    else:
        div = np.asarray(D_div, dtype=float)

        def b_I(x):
            x = np.asarray(x, dtype=float)
            return np.asarray(b_S(x), dtype=float) + eps * div
    return b_I
