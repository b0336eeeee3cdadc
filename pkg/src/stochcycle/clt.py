"""Gaussian tube of the rescaled deviation Z = (X - xhat)/sqrt(eps).

To leading order Z(t) is Gaussian with mean mu(t) and covariance Sigma(t)
driven along the deterministic trajectory xhat(t):

    mu'    = A(xhat) mu
    Sigma' = A(xhat) Sigma + Sigma A(xhat)^T + 2 D

The first sqrt(eps) correction to the mean, m(t), obeys

    m_i' = (A m)_i + (1/2) trace(H_i Sigma)

with H_i the Hessian of drift component i.  All quantities are advanced as
one augmented ODE so they share the integrator's tolerances.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    IntegrationFailure,
    NonPSDInitial,
    NotLinearModel,
    SingularCovariance,
)
from .flow import StepControl, _solve

__all__ = [
    "GaussianTube",
    "propagate_gaussian",
    "propagate_m",
    "propagate_inverse_covariance",
    "curvature_from_tube",
    "wkb_first_correction_check",
]


@dataclass(frozen=True)
class GaussianTube:
    times: np.ndarray
    xhat: np.ndarray   # (T, n)
    mu: np.ndarray     # (T, n)
    sigma: np.ndarray  # (T, n, n)
    m: Optional[np.ndarray] = None  # (T, n) first-correction moment

    @property
    def dim(self):
        return self.xhat.shape[1]

    def index_of(self, t, tol=1e-9):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise KeyError(f"t={t} not on the tube grid")
        return i


def _check_initial_covariance(sigma0, n):
    sigma0 = np.asarray(sigma0, dtype=float)
    if sigma0.shape != (n, n):
        raise NonPSDInitial(f"sigma0 must be {n}x{n}")
    if np.max(np.abs(sigma0 - sigma0.T)) > 1e-12 * max(1.0, np.max(np.abs(sigma0))):
        raise NonPSDInitial("sigma0 is not symmetric")
    w = np.linalg.eigvalsh((sigma0 + sigma0.T) / 2)
    if w[0] < -1e-12 * max(1.0, w[-1]):
        raise NonPSDInitial(f"sigma0 has negative eigenvalue {w[0]:.3e}")
    return (sigma0 + sigma0.T) / 2


def _postprocess_sigma(sig_series):
    """Symmetrize and floor-clip eigenvalues; error out beyond roundoff scale."""
    out = np.empty_like(sig_series)
    for k, S in enumerate(sig_series):
        S = (S + S.T) / 2
        w, V = np.linalg.eigh(S)
        floor = -1e-10 * max(np.max(np.abs(w)), 1e-300)
        if w[0] < floor:
            raise IntegrationFailure(
                f"covariance lost positive semidefiniteness: eigenvalue {w[0]:.3e}"
            )
        out[k] = (V * np.clip(w, 0.0, None)) @ V.T
    return out


def _propagate(model, x0, mu0, sigma0, t1, ctrl, t_eval, with_m, m0, with_g, g0):
    n = model.dim
    D = model.diffusion
    x0 = np.asarray(x0, dtype=float)
    mu0 = np.zeros(n) if mu0 is None else np.asarray(mu0, dtype=float)
    sigma0 = _check_initial_covariance(sigma0, n)

    blocks = [x0, mu0, sigma0.ravel()]
    if with_m:
        m0 = np.zeros(n) if m0 is None else np.asarray(m0, dtype=float)
        blocks.append(m0)
    if with_g:
        blocks.append(np.asarray(g0, dtype=float))
    y0 = np.concatenate(blocks)

    i_sig = 2 * n
    i_m = i_sig + n * n
    i_g = i_m + (n if with_m else 0)

    def rhs(t, y):
        x = y[:n]
        mu = y[n:i_sig]
        Sig = y[i_sig:i_m].reshape(n, n)
        Sig = (Sig + Sig.T) / 2
        A = np.asarray(model.jacobian(x), dtype=float)
        dx = np.asarray(model.drift(x), dtype=float)
        dmu = A @ mu
        dSig = A @ Sig + Sig @ A.T + 2 * D
        parts = [dx, dmu, dSig.ravel()]
        if with_m:
            m = y[i_m:i_m + n]
            H = np.asarray(model.hessian(x), dtype=float)
            source = 0.5 * np.array([np.trace(H[i] @ Sig) for i in range(n)])
            parts.append(A @ m + source)
        if with_g:
            g = y[i_g:i_g + n]
            # transport of the prefactor log-gradient along the trajectory
            dg = -(A.T @ g + 2 * np.linalg.solve(Sig, D @ g))
            parts.append(dg)
        return np.concatenate(parts)

    class _M:  # adapter so flow._solve can integrate the augmented system
        dim = y0.size

        @staticmethod
        def drift(y):
            return rhs(0.0, y)

    sol = _solve(_M, y0, 0.0, t1, ctrl, t_eval=t_eval)
    Y = sol.y.T
    times = sol.t.copy()
    xhat = Y[:, :n]
    mu = Y[:, n:i_sig]
    sigma = _postprocess_sigma(Y[:, i_sig:i_m].reshape(-1, n, n))
    m = Y[:, i_m:i_m + n] if with_m else None
    g = Y[:, i_g:i_g + n] if with_g else None
    return times, xhat, mu, sigma, m, g


def propagate_gaussian(model, x0, mu0, sigma0, t1, ctrl=None, t_eval=None,
                       with_m=False, m0=None):
    """Propagate the CLT tube (xhat, mu, Sigma[, m]) up to time t1.

    Parameters
    ----------
    model : ModelSpec
    x0 : array_like
        Deterministic initial state.
    mu0, sigma0 : array_like
        Initial mean and symmetric PSD covariance of Z.
    t1 : float
    ctrl : StepControl, optional
    t_eval : array_like, optional
        Output grid; defaults to the solver's accepted steps.
    with_m : bool
        Also co-integrate the first-correction moment (needs model.hessian).
    """
    ctrl = ctrl or StepControl()
    times, xhat, mu, sigma, m, _ = _propagate(
        model, x0, mu0, sigma0, t1, ctrl, t_eval, with_m, m0, False, None
    )
    return GaussianTube(times=times, xhat=xhat, mu=mu, sigma=sigma, m=m)


def propagate_m(model, tube, m0=None, ctrl=None):
    """First-correction moment series m(t) on the tube's grid.

    Re-integrates the augmented system (xhat, mu, Sigma, m) from the tube's
    initial data; m(0) defaults to zero (purely Gaussian initial law).
    """
    ctrl = ctrl or StepControl()
    _, _, _, _, m, _ = _propagate(
        model,
        tube.xhat[0],
        tube.mu[0],
        tube.sigma[0],
        float(tube.times[-1]),
        ctrl,
        tube.times,
        True,
        m0,
        False,
        None,
    )
    return m


def propagate_inverse_covariance(model, x0, K0, t1, ctrl=None, t_eval=None):
    """Direct integration of K' = -K A - A^T K - 2 K D K along the flow.

    The inverse-covariance route of the same Lyapunov dynamics; used by the
    dual-route consistency check against inv(Sigma(t)).
    """
    ctrl = ctrl or StepControl()
    n = model.dim
    D = model.diffusion
    y0 = np.concatenate([np.asarray(x0, float), np.asarray(K0, float).ravel()])

    class _M:
        dim = y0.size

        @staticmethod
        def drift(y):
            x = y[:n]
            K = y[n:].reshape(n, n)
            K = (K + K.T) / 2
            A = np.asarray(model.jacobian(x), dtype=float)
            dK = -K @ A - A.T @ K - 2 * K @ D @ K
            return np.concatenate([np.asarray(model.drift(x), float), dK.ravel()])

    sol = _solve(_M, y0, 0.0, t1, ctrl, t_eval=t_eval)
    return sol.t.copy(), sol.y.T[:, n:].reshape(-1, n, n)


def curvature_from_tube(tube, t):
    """Rate-function curvature K(t) = Sigma(t)^{-1} at a grid time."""
    i = tube.index_of(t)
    S = tube.sigma[i]
    if np.linalg.cond(S) > 1e12:
        raise SingularCovariance(
            f"Sigma(t={t}) condition number {np.linalg.cond(S):.3e} exceeds 1e12"
        )
    return np.linalg.inv(S)


def wkb_first_correction_check(model, tube, logw_gradient, ctrl=None):
    """Consistency of m(t) with the transported prefactor gradient.

    For linear drift the rate function is quadratic, and the first moment
    correction equals Sigma(t) g(t) where g is the prefactor log-gradient
    along the trajectory, transported by g' = -(A^T + 2 Sigma^{-1} D) g.
    Both sides are co-integrated from m(0) = Sigma(0) g(0); the returned
    residual sup_t |m(t) - Sigma(t) g(t)| measures solver-chain consistency.

    Requires Sigma(0) strictly positive definite (the gradient transport
    inverts Sigma).
    """
    ctrl = ctrl or StepControl()
    # linearity guard: Hessian must vanish identically
    probes = tube.xhat[:: max(1, len(tube.xhat) // 8)]
    for x in probes:
        if np.max(np.abs(np.asarray(model.hessian(x)))) > 1e-12:
            raise NotLinearModel("drift Hessian is nonzero; check requires linear drift")

    g0 = np.asarray(logw_gradient, dtype=float)
    sigma0 = tube.sigma[0]
    if np.linalg.eigvalsh(sigma0)[0] <= 0:
        raise NonPSDInitial("gradient transport needs strictly PD Sigma(0)")
    m0 = tube.m[0] if tube.m is not None else sigma0 @ g0

    _, _, _, sigma, m, g = _propagate(
        model,
        tube.xhat[0],
        tube.mu[0],
        sigma0,
        float(tube.times[-1]),
        ctrl,
        tube.times,
        True,
        m0,
        True,
        g0,
    )
    resid = np.linalg.norm(m - np.einsum("tij,tj->ti", sigma, g), axis=1)
    return float(np.max(resid))
