"""SDE system definitions: drift, derivatives, constant diffusion, noise scale.

A model is the quadruple (b, A, H, D): drift b(x), Jacobian A(x) = nabla b,
Hessian stack H(x) with H[i] the Hessian of b_i, and a constant symmetric
diffusion matrix D.  The dynamics studied downstream is

    dX = b(X) dt + sqrt(2 eps D) dB_t .

Drift callables are vectorized: they accept arrays of shape (..., n) and
return the same shape.  Jacobian/Hessian callables are point-wise.
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    MissingParam,
    NegativeDiffusionEigenvalue,
    NonSymmetricDiffusion,
    UnknownModel,
)

__all__ = [
    "ModelSpec",
    "Epsilon",
    "ValidationReport",
    "make_model",
    "builtin_model",
    "polynomial_model",
    "validate_model",
    "fd_jacobian",
    "fd_hessian",
    "BUILTIN_MODELS",
]


@dataclass(frozen=True)
class ModelSpec:
    """Immutable SDE system description.

    Parameters
    ----------
    dim : int
        State dimension n.
    drift : callable
        b(x); accepts shape (..., n), returns the same shape.
    jacobian : callable
        A(x) = nabla b(x), point-wise, returns (n, n).
    hessian : callable
        H(x), point-wise, returns (n, n, n) with H[i] the symmetric
        Hessian of component b_i.
    diffusion : ndarray
        Constant symmetric (n, n) matrix D.  Symmetry is required exactly
        as stored; positive semidefiniteness is checked by
        :func:`validate_model` and by the operations that need it.
    params : dict
        Named parameters the callables were built from (for reporting).
    name : str
        Registry name or "custom".
    domain_box : ndarray or None
        (n, 2) array of [low, high] per coordinate where the model has
        been validated.  Evaluation outside the box is allowed but
        unvalidated.
    """

    dim: int
    drift: Callable
    jacobian: Callable
    hessian: Callable
    diffusion: np.ndarray
    params: dict = field(default_factory=dict)
    name: str = "custom"
    domain_box: Optional[np.ndarray] = None

    def __post_init__(self):
        D = np.asarray(self.diffusion, dtype=float)
        if D.shape != (self.dim, self.dim):
            raise NonSymmetricDiffusion(
                f"diffusion must be {self.dim}x{self.dim}, got {D.shape}"
            )
        if not np.array_equal(D, D.T):
            raise NonSymmetricDiffusion("diffusion matrix is not symmetric as stored")
        D.setflags(write=False)
        object.__setattr__(self, "diffusion", D)
        object.__setattr__(self, "params", dict(self.params))

    def require_pd_diffusion(self, tol=1e-12):
        """Raise unless D is strictly positive definite."""
        w = np.linalg.eigvalsh(self.diffusion)
        if w[0] <= tol * max(1.0, w[-1]):
            raise NegativeDiffusionEigenvalue(
                f"cycle analysis needs positive definite D; eigenvalues {w}"
            )

    def require_psd_diffusion(self, tol=1e-10):
        w = np.linalg.eigvalsh(self.diffusion)
        if w[0] < -tol * max(1.0, abs(w[-1])):
            raise NegativeDiffusionEigenvalue(
                f"D has negative eigenvalue {w[0]:.3e}"
            )


@dataclass(frozen=True)
class Epsilon:
    """Validated dimensionless noise scale (the eps in sqrt(2 eps D))."""

    value: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value <= 0:
            raise ValueError(f"epsilon must be a positive real, got {self.value}")
        if self.value > 0.1:
            warnings.warn(
                f"epsilon={self.value} is large; small-noise asymptotics degrade above 0.1",
                stacklevel=2,
            )

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# finite-difference fallbacks


def fd_jacobian(drift, x, step=None):
    """Central-difference Jacobian of a drift callable at a point."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if step is None:
        step = max(1e-6, 1e-6 * np.linalg.norm(x))
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        J[:, j] = (np.asarray(drift(x + e)) - np.asarray(drift(x - e))) / (2 * step)
    return J


def fd_hessian(jacobian, x, step=None):
    """Central-difference Hessian stack from a Jacobian callable.

    Returns H with H[i, j, k] = d^2 b_i / dx_j dx_k, symmetrized over (j, k).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if step is None:
        step = max(1e-6, 1e-6 * np.linalg.norm(x))
    H = np.empty((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        H[:, :, k] = (np.asarray(jacobian(x + e)) - np.asarray(jacobian(x - e))) / (
            2 * step
        )
    return (H + H.transpose(0, 2, 1)) / 2.0


def make_model(dim, drift, jacobian=None, hessian=None, diffusion=None,
               params=None, name="custom", domain_box=None):
    """Assemble a ModelSpec, generating missing derivatives by central differences."""
    if jacobian is None:
        jacobian = lambda x, _b=drift: fd_jacobian(_b, x)
    if hessian is None:
        hessian = lambda x, _j=jacobian: fd_hessian(_j, x)
    if diffusion is None:
        diffusion = np.eye(dim)
    return ModelSpec(
        dim=dim,
        drift=drift,
        jacobian=jacobian,
        hessian=hessian,
        diffusion=np.asarray(diffusion, dtype=float),
        params=params or {},
        name=name,
        domain_box=None if domain_box is None else np.asarray(domain_box, float),
    )


# ---------------------------------------------------------------------------
# model zoo


def _hopf(params, diffusion):
    """Hopf normal form in Cartesian coordinates: r' = r(1-r^2), theta' = omega."""
    om = float(params["omega"])

    def drift(x):
        x = np.asarray(x, dtype=float)
        u, v = x[..., 0], x[..., 1]
        r2 = u * u + v * v
        return np.stack([u * (1 - r2) - om * v, v * (1 - r2) + om * u], axis=-1)

    def jacobian(x):
        u, v = float(x[0]), float(x[1])
        return np.array(
            [
                [1 - 3 * u * u - v * v, -2 * u * v - om],
                [-2 * u * v + om, 1 - u * u - 3 * v * v],
            ]
        )

    def hessian(x):
        u, v = float(x[0]), float(x[1])
        H1 = np.array([[-6 * u, -2 * v], [-2 * v, -2 * u]])
        H2 = np.array([[-2 * v, -2 * u], [-2 * u, -6 * v]])
        return np.stack([H1, H2])

    box = np.array([[-2.0, 2.0], [-2.0, 2.0]])
    return make_model(2, drift, jacobian, hessian, diffusion,
                      params={"omega": om}, name="hopf", domain_box=box)


def _vdp(params, diffusion):
    """Van der Pol oscillator: x' = y, y' = mu (1 - x^2) y - x."""
    mu = float(params["mu"])

    def drift(x):
        x = np.asarray(x, dtype=float)
        u, v = x[..., 0], x[..., 1]
        return np.stack([v, mu * (1 - u * u) * v - u], axis=-1)

    def jacobian(x):
        u, v = float(x[0]), float(x[1])
        return np.array([[0.0, 1.0], [-2 * mu * u * v - 1.0, mu * (1 - u * u)]])

    def hessian(x):
        u, v = float(x[0]), float(x[1])
        H1 = np.zeros((2, 2))
        H2 = np.array([[-2 * mu * v, -2 * mu * u], [-2 * mu * u, 0.0]])
        return np.stack([H1, H2])

    box = np.array([[-3.0, 3.0], [-3.0, 3.0]])
    return make_model(2, drift, jacobian, hessian, diffusion,
                      params={"mu": mu}, name="vdp", domain_box=box)


def _brusselator(params, diffusion):
    """Brusselator in the standard literature form.

    x' = a - (b+1) x + x^2 y,  y' = b x - x^2 y.  A limit cycle exists
    for b > 1 + a^2.
    """
    a = float(params["a"])
    b = float(params["b"])

    def drift(x):
        x = np.asarray(x, dtype=float)
        u, v = x[..., 0], x[..., 1]
        return np.stack([a - (b + 1) * u + u * u * v, b * u - u * u * v], axis=-1)

    def jacobian(x):
        u, v = float(x[0]), float(x[1])
        return np.array(
            [[-(b + 1) + 2 * u * v, u * u], [b - 2 * u * v, -u * u]]
        )

    def hessian(x):
        u, v = float(x[0]), float(x[1])
        H1 = np.array([[2 * v, 2 * u], [2 * u, 0.0]])
        H2 = np.array([[-2 * v, -2 * u], [-2 * u, 0.0]])
        return np.stack([H1, H2])

    box = np.array([[0.0, 5.0], [0.0, 6.0]])
    return make_model(2, drift, jacobian, hessian, diffusion,
                      params={"a": a, "b": b}, name="brusselator", domain_box=box)


def _linear(params, diffusion):
    """Linear drift x' = A x."""
    A = np.atleast_2d(np.asarray(params["a"], dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise MissingParam(f"linear model needs a square matrix 'a', got {A.shape}")

    def drift(x):
        x = np.asarray(x, dtype=float)
        return x @ A.T

    def jacobian(x):
        return A.copy()

    def hessian(x):
        return np.zeros((n, n, n))

    box = np.array([[-10.0, 10.0]] * n)
    return make_model(n, drift, jacobian, hessian, diffusion,
                      params={"a": A}, name="linear", domain_box=box)


def _cubic1d(params, diffusion):
    """1D drift x' = -x + c x^2 (stable fixed point at 0 for |x| < 1/c)."""
    c = float(params["c"])

    def drift(x):
        x = np.asarray(x, dtype=float)
        return -x + c * x * x

    def jacobian(x):
        return np.array([[-1.0 + 2 * c * float(x[0])]])

    def hessian(x):
        return np.array([[[2.0 * c]]])

    box = np.array([[-0.8, 0.8]])
    return make_model(1, drift, jacobian, hessian, diffusion,
                      params={"c": c}, name="cubic1d", domain_box=box)


BUILTIN_MODELS = {
    "hopf": (_hopf, ("omega",), 2, "r' = r(1 - r^2), theta' = omega (Cartesian)"),
    "vdp": (_vdp, ("mu",), 2, "x' = y, y' = mu (1 - x^2) y - x"),
    "brusselator": (_brusselator, ("a", "b"), 2,
                    "x' = a - (b+1) x + x^2 y, y' = b x - x^2 y"),
    "linear": (_linear, ("a",), None, "x' = A x"),
    "cubic1d": (_cubic1d, ("c",), 1, "x' = -x + c x^2"),
}


def builtin_model(name, params=None, diffusion=None):
    """Construct a registered model by name.

    Parameters
    ----------
    name : str
        One of ``hopf``, ``vdp``, ``brusselator``, ``linear``, ``cubic1d``.
    params : dict
        Required named parameters for the model.
    diffusion : array_like, optional
        Constant symmetric D; defaults to the identity.
    """
    if name not in BUILTIN_MODELS:
        raise UnknownModel(
            f"unknown model {name!r}; registry: {sorted(BUILTIN_MODELS)}"
        )
    builder, required, _, _ = BUILTIN_MODELS[name]
    params = dict(params or {})
    missing = [p for p in required if p not in params]
    if missing:
        raise MissingParam(f"model {name!r} needs parameters {missing}")
    return builder(params, diffusion)


def describe_builtin(name):
    """Registry echo: dimension, parameter names, equations, domain box."""
    if name not in BUILTIN_MODELS:
        raise UnknownModel(
            f"unknown model {name!r}; registry: {sorted(BUILTIN_MODELS)}"
        )
    _, required, dim, equations = BUILTIN_MODELS[name]
    # the linear model's dimension follows its matrix parameter
    probe_params = {"omega": 1.0, "mu": 1.0, "a": 1.0, "b": 3.0, "c": 1.0}
    box = None
    if dim is not None:
        m = builtin_model(name, {k: probe_params[k] for k in required})
        box = m.domain_box.tolist()
    return {
        "name": name,
        "dim": dim,
        "params": list(required),
        "equations": equations,
        "domain_box": box,
    }


# ---------------------------------------------------------------------------
# polynomial user models


def polynomial_model(dim, components, diffusion=None, name="polynomial"):
    """Build a model from a declarative polynomial drift description.

    Parameters
    ----------
    dim : int
    components : list
        One entry per drift component; each entry is a list of terms
        ``(coeff, powers)`` where ``powers`` is a length-``dim`` tuple of
        nonnegative integer exponents.  Component i evaluates to
        ``sum(coeff * prod(x**powers))``.
    """
    if len(components) != dim:
        raise MissingParam(
            f"polynomial drift needs {dim} component term lists, got {len(components)}"
        )
    terms = []
    for comp in components:
        rows = []
        for coeff, powers in comp:
            powers = tuple(int(p) for p in powers)
            if len(powers) != dim or any(p < 0 for p in powers):
                raise MissingParam(f"bad monomial powers {powers}")
            rows.append((float(coeff), powers))
        terms.append(rows)

    def drift(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for i, rows in enumerate(terms):
            acc = np.zeros(x.shape[:-1])
            for coeff, powers in rows:
                mono = np.full(x.shape[:-1], coeff)
                for j, p in enumerate(powers):
                    if p:
                        mono = mono * x[..., j] ** p
                acc = acc + mono
            out[..., i] = acc
        return out

    def _mono_deriv(powers, j):
        # d/dx_j of prod x^p -> (p_j, powers with p_j reduced)
        p = powers[j]
        if p == 0:
            return 0.0, powers
        reduced = tuple(q - (1 if k == j else 0) for k, q in enumerate(powers))
        return float(p), reduced

    def _eval_mono(x, powers):
        val = 1.0
        for j, p in enumerate(powers):
            if p:
                val *= float(x[j]) ** p
        return val

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        J = np.zeros((dim, dim))
        for i, rows in enumerate(terms):
            for coeff, powers in rows:
                for j in range(dim):
                    fac, red = _mono_deriv(powers, j)
                    if fac:
                        J[i, j] += coeff * fac * _eval_mono(x, red)
        return J

    def hessian(x):
        x = np.asarray(x, dtype=float)
        H = np.zeros((dim, dim, dim))
        for i, rows in enumerate(terms):
            for coeff, powers in rows:
                for j in range(dim):
                    fac1, red1 = _mono_deriv(powers, j)
                    if not fac1:
                        continue
                    for k in range(dim):
                        fac2, red2 = _mono_deriv(red1, k)
                        if fac2:
                            H[i, j, k] += coeff * fac1 * fac2 * _eval_mono(x, red2)
        return H

    return make_model(dim, drift, jacobian, hessian, diffusion,
                      params={"components": terms}, name=name)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    """Finite-difference derivative check plus diffusion spectrum report."""

    probes: np.ndarray
    jacobian_errors: np.ndarray
    hessian_errors: np.ndarray
    jacobian_tol: float
    hessian_tol: float
    diffusion_eigenvalues: np.ndarray

    @property
    def max_jacobian_error(self):
        return float(np.max(self.jacobian_errors))

    @property
    def max_hessian_error(self):
        return float(np.max(self.hessian_errors))

    @property
    def jacobian_ok(self):
        return self.max_jacobian_error < self.jacobian_tol

    @property
    def hessian_ok(self):
        return self.max_hessian_error < self.hessian_tol

    @property
    def passed(self):
        return bool(self.jacobian_ok and self.hessian_ok)


def validate_model(model, probes, tol=1e-5, hessian_tol=None, fd_step=1e-5):
    """Check analytic derivatives against central differences at probe points.

    Parameters
    ----------
    model : ModelSpec
    probes : array_like
        (m, n) probe states; must be nonempty.
    tol : float
        Relative tolerance for the Jacobian check (default 1e-5).
    hessian_tol : float, optional
        Relative tolerance for the Hessian check; defaults to 10 * tol,
        the looser bound appropriate to one extra differentiation.
    fd_step : float
        Base step of the central-difference oracle, scaled by max(1, |x|).

    Raises
    ------
    NegativeDiffusionEigenvalue
        If D has an eigenvalue below -1e-10 (PSD violation).
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if probes.size == 0:
        raise ValueError("probes must be nonempty")
    if hessian_tol is None:
        hessian_tol = 10 * tol

    jac_err = np.empty(len(probes))
    hess_err = np.empty(len(probes))
    for i, x in enumerate(probes):
        step = fd_step * max(1.0, np.linalg.norm(x))
        A = np.asarray(model.jacobian(x))
        A_fd = fd_jacobian(model.drift, x, step=step)
        jac_err[i] = np.max(np.abs(A - A_fd)) / max(1.0, np.max(np.abs(A_fd)))
        H = np.asarray(model.hessian(x))
        H_fd = fd_hessian(model.jacobian, x, step=step)
        hess_err[i] = np.max(np.abs(H - H_fd)) / max(1.0, np.max(np.abs(H_fd)))

    eigs = np.linalg.eigvalsh(model.diffusion)
    model.require_psd_diffusion()

    return ValidationReport(
        probes=probes,
        jacobian_errors=jac_err,
        hessian_errors=hess_err,
        jacobian_tol=tol,
        hessian_tol=hessian_tol,
        diffusion_eigenvalues=eigs,
    )
