"""Deterministic flow: ODE integration, limit-cycle location, cycle sampling.

The cycle finder shoots on a Poincare section placed at the end of a
transient leg (plane normal = local flow direction, so transversality is
guaranteed near the attractor) and runs Newton on the return map with a
forward-difference Jacobian.  Crossings are detected by sign change of the
plane function along solver steps and refined by bisection on the dense
output.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.spatial import cKDTree

from .errors import (
    ClosureFailure,
    DegeneratePeriod,
    NewtonDivergence,
    NonFiniteState,
    NoSectionCrossing,
    StepSizeUnderflow,
    ZeroVelocity,
)

__all__ = [
    "StepControl",
    "Trajectory",
    "LimitCycle",
    "CycleSamples",
    "CycleSearchOptions",
    "integrate_flow",
    "find_limit_cycle",
    "sample_cycle",
    "project_to_cycle",
]


@dataclass(frozen=True)
class StepControl:
    """Tolerances for the embedded-pair adaptive integrator."""

    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = np.inf
    method: str = "DOP853"

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")


#: tight control used internally for reference-quality legs
_REFERENCE = StepControl(rtol=1e-12, atol=1e-14)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), n)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def terminal(self):
        return self.states[-1]


@dataclass
class LimitCycle:
    anchor: np.ndarray
    period: float
    section_point: np.ndarray
    section_normal: np.ndarray
    residual: float
    newton_residuals: list = field(default_factory=list)


@dataclass
class CycleSamples:
    """N equal-time samples of the cycle with drift and Jacobian fields.

    ``states[i]`` is x*(i T / N); ``ds[i] = |b_i| T / N`` is the arclength
    increment carried by sample i.
    """

    N: int
    period: float
    times: np.ndarray
    states: np.ndarray
    drifts: np.ndarray
    jacobians: np.ndarray
    ds: np.ndarray
    anchor: np.ndarray
    closure_error: float
    model: object = None
    _tree: Optional[cKDTree] = None

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def speeds(self):
        return np.linalg.norm(self.drifts, axis=1)

    @property
    def arclength(self):
        return float(np.sum(self.ds))

    def cumulative_arclength(self):
        """Arclength coordinate of each sample (s_0 = 0)."""
        return np.concatenate([[0.0], np.cumsum(self.ds)[:-1]])

    def interp_state(self, t):
        """Cubic Hermite interpolation of x*(t), periodic in t.

        Uses the stored states and drifts as values and exact slopes, so the
        error is O((T/N)^4) per interval.  Accepts scalars or arrays.
        """
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        T, N = self.period, self.N
        dt = T / N
        tau = np.mod(t, T)
        k = np.minimum((tau / dt).astype(int), N - 1)
        k1 = (k + 1) % N
        th = (tau - k * dt) / dt
        h00 = (1 + 2 * th) * (1 - th) ** 2
        h10 = th * (1 - th) ** 2
        h01 = th * th * (3 - 2 * th)
        h11 = th * th * (th - 1)
        out = (
            h00[:, None] * self.states[k]
            + h10[:, None] * dt * self.drifts[k]
            + h01[:, None] * self.states[k1]
            + h11[:, None] * dt * self.drifts[k1]
        )
        return out[0] if scalar else out

    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.states)
        return self._tree


def _rhs(model):
    def f(t, x):
        with np.errstate(over="ignore", invalid="ignore"):
            return np.asarray(model.drift(x), dtype=float)

    return f


def _solve(model, x0, t0, t1, ctrl, t_eval=None, dense=False):
    sol = solve_ivp(
        _rhs(model),
        (t0, t1),
        np.asarray(x0, dtype=float),
        method=ctrl.method,
        rtol=ctrl.rtol,
        atol=ctrl.atol,
        max_step=ctrl.max_step,
        t_eval=t_eval,
        dense_output=dense,
    )
    if sol.status == -1:
        if not np.all(np.isfinite(sol.y)):
            raise NonFiniteState(f"state became non-finite near t={sol.t[-1]:.6g}")
        raise StepSizeUnderflow(sol.message)
    if not np.all(np.isfinite(sol.y)):
        raise NonFiniteState("integration produced non-finite states")
    return sol


def integrate_flow(model, x0, t0, t1, ctrl=None, t_eval=None):
    """Integrate dx/dt = b(x) from t0 to t1 with adaptive step control."""
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    ctrl = ctrl or StepControl()
    sol = _solve(model, x0, t0, t1, ctrl, t_eval=t_eval)
    return Trajectory(times=sol.t.copy(), states=sol.y.T.copy())


# ---------------------------------------------------------------------------
# limit-cycle location


@dataclass(frozen=True)
class CycleSearchOptions:
    transient_time: float = 50.0
    max_return_time: float = 200.0
    cycle_tol: float = 1e-9
    newton_max_iter: int = 30
    newton_fd_step: float = 1e-7
    fixed_point_tol: float = 1e-8
    ctrl: StepControl = _REFERENCE


def _first_return(model, x_start, point, normal, t_max, ctrl, chunk):
    """First upward crossing of the section plane after leaving it.

    The crossing is armed only once the plane function has gone strictly
    negative, which skips the departure from the plane at t=0.  Sign changes
    are scanned on solver steps (subsampled 8x via dense output) and refined
    by bisection to 1e-12 relative in time.
    """

    def s_of(x):
        return (np.asarray(x) - point) @ normal

    t_base = 0.0
    x_cur = np.asarray(x_start, dtype=float)
    armed = False
    max_excursion = 0.0
    while t_base < t_max:
        t_end = min(t_base + chunk, t_max)
        sol = _solve(model, x_cur, t_base, t_end, ctrl, dense=True)
        # subsample each accepted step: a narrow double crossing inside one
        # step would otherwise be missed
        ts = []
        for a, b in zip(sol.t[:-1], sol.t[1:]):
            ts.append(np.linspace(a, b, 9)[:-1])
        ts = np.concatenate(ts + [[sol.t[-1]]])
        xs = sol.sol(ts).T
        svals = (xs - point) @ normal
        max_excursion = max(max_excursion, float(np.max(np.linalg.norm(xs - point, axis=1))))
        for i in range(len(ts) - 1):
            if not armed:
                if svals[i] < 0:
                    armed = True
                else:
                    continue
            if svals[i] < 0 <= svals[i + 1]:
                lo, hi = ts[i], ts[i + 1]
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    if s_of(sol.sol(mid)) < 0:
                        lo = mid
                    else:
                        hi = mid
                    if hi - lo < 1e-12 * max(1.0, hi):
                        break
                t_cross = 0.5 * (lo + hi)
                return t_cross, sol.sol(t_cross), max_excursion
        t_base = t_end
        x_cur = sol.y[:, -1]
    raise NoSectionCrossing(
        f"no section re-crossing within t={t_max} (max excursion {max_excursion:.3e})"
    )


def find_limit_cycle(model, x_guess, opts=None):
    """Locate a stable limit cycle by Poincare-section Newton shooting.

    A transient leg from ``x_guess`` lands near the attractor; the section
    plane passes through the transient endpoint with normal b/|b| there.
    Newton then solves for a fixed point of the (n-1)-dimensional return
    map.  The returned period is the first-return time at the fixed point.
    """
    opts = opts or CycleSearchOptions()
    ctrl = opts.ctrl
    n = model.dim

    tr = integrate_flow(model, x_guess, 0.0, opts.transient_time, ctrl)
    p0 = tr.terminal
    b0 = np.asarray(model.drift(p0), dtype=float)
    scale = 1.0 + np.linalg.norm(p0)
    if np.linalg.norm(b0) < opts.fixed_point_tol * scale:
        raise DegeneratePeriod(
            f"transient endpoint is a fixed point (|b|={np.linalg.norm(b0):.3e})"
        )
    normal = b0 / np.linalg.norm(b0)

    # orthonormal in-plane basis
    Q, _ = np.linalg.qr(np.column_stack([normal, np.eye(n)]))
    E = Q[:, 1:n]

    chunk = opts.max_return_time / 8.0

    def return_map(u):
        x_start = p0 + E @ u
        t_c, x_c, excursion = _first_return(
            model, x_start, p0, normal, opts.max_return_time, ctrl, chunk
        )
        if excursion < 1e-6 * scale:
            raise DegeneratePeriod(
                f"orbit excursion {excursion:.3e} is below the fixed-point scale"
            )
        return E.T @ (x_c - p0), t_c, x_c

    u = np.zeros(n - 1)
    residuals = []
    period = None
    for _ in range(opts.newton_max_iter):
        Ru, period, x_c = return_map(u)
        r = Ru - u
        res = float(np.linalg.norm(E @ r))  # state-space displacement
        residuals.append(res)
        if res < opts.cycle_tol:
            break
        if not np.isfinite(res) or (len(residuals) > 4 and res > 10 * residuals[0]):
            raise NewtonDivergence(f"return-map Newton diverged: residuals {residuals}")
        # forward-difference Jacobian of the return map
        J = np.empty((n - 1, n - 1))
        for j in range(n - 1):
            du = np.zeros(n - 1)
            du[j] = opts.newton_fd_step
            Rj, _, _ = return_map(u + du)
            J[:, j] = (Rj - Ru) / opts.newton_fd_step
        try:
            step = np.linalg.solve(J - np.eye(n - 1), -r)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergence(f"singular return-map Jacobian: {exc}") from None
        u = u + step
    else:
        raise NewtonDivergence(
            f"no convergence in {opts.newton_max_iter} iterations; residuals {residuals}"
        )

    anchor = p0 + E @ u
    # independent closure verification
    closed = integrate_flow(model, anchor, 0.0, period, ctrl).terminal
    residual = float(np.linalg.norm(closed - anchor))
    if residual > 10 * opts.cycle_tol:
        raise ClosureFailure(
            f"cycle closure residual {residual:.3e} exceeds tolerance {opts.cycle_tol:.1e}"
        )
    return LimitCycle(
        anchor=anchor,
        period=float(period),
        section_point=p0,
        section_normal=normal,
        residual=residual,
        newton_residuals=residuals,
    )


def sample_cycle(cycle, model, N, ctrl=None):
    """Sample the cycle at N equal times by re-integration from the anchor."""
    if N < 64:
        raise ValueError("N must be at least 64")
    ctrl = ctrl or _REFERENCE
    T = cycle.period
    t_eval = np.linspace(0.0, T, N + 1)
    sol = _solve(model, cycle.anchor, 0.0, T, ctrl, t_eval=t_eval)
    states = sol.y.T
    closure = float(np.linalg.norm(states[-1] - states[0]))
    if closure > 10 * max(cycle.residual, 1e-12):
        raise ClosureFailure(f"re-integrated cycle fails to close: {closure:.3e}")
    pts = states[:N].copy()
    drifts = np.asarray(model.drift(pts), dtype=float)
    speeds = np.linalg.norm(drifts, axis=1)
    if np.any(speeds <= 0):
        raise ZeroVelocity("vanishing drift on the sampled cycle")
    jacs = np.stack([np.asarray(model.jacobian(x), dtype=float) for x in pts])
    return CycleSamples(
        N=N,
        period=T,
        times=t_eval[:N].copy(),
        states=pts,
        drifts=drifts,
        jacobians=jacs,
        ds=speeds * (T / N),
        anchor=cycle.anchor.copy(),
        closure_error=closure,
        model=model,
    )


# ---------------------------------------------------------------------------
# nearest-phase projection


_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def project_to_cycle(samples, X, refine=True, iters=40):
    """Project states onto the cycle: nearest sample, then phase refinement.

    Parameters
    ----------
    samples : CycleSamples
    X : array_like
        (m, n) batch (or a single state) to project.
    refine : bool
        Golden-section minimization of |x - x*(t)| over the two-sample
        bracket around the nearest sample (vectorized across the batch).

    Returns
    -------
    phases : ndarray (m,)
        Phase t in [0, T) of the nearest cycle point.
    points : ndarray (m, n)
        x*(phase) via Hermite interpolation.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    T, N = samples.period, samples.N
    dt = T / N
    _, idx = samples.tree().query(X)
    if not refine:
        ph = samples.times[idx]
        return ph, samples.states[idx].copy()

    a = idx * dt - dt
    b = idx * dt + dt

    def dist2(t):
        P = samples.interp_state(t)
        return np.sum((P - X) ** 2, axis=1)

    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = dist2(c), dist2(d)
    for _ in range(iters):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        fc, fd = dist2(c), dist2(d)
    ph = np.mod(0.5 * (a + b), T)
    return ph, samples.interp_state(ph)
