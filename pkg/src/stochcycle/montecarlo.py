"""Seeded Euler-Maruyama ensembles and empirical checks of the asymptotics.

Reproducibility contract: trajectory j draws its noise from a dedicated
counter-based substream keyed by (master seed, j), so results are bitwise
identical for the same (seed, M, h) regardless of how trajectories are
chunked across workers.  Trajectories are advanced in vectorized chunks;
per-chunk moment sums land in preallocated slots and are reduced in fixed
chunk order on the caller thread.
"""

import concurrent.futures
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    FactorizationFailure,
    GridMismatch,
    InsufficientSamplesPerBin,
    NonFiniteState,
)
from .flow import integrate_flow, project_to_cycle

__all__ = [
    "EnsembleStats",
    "CLTCheckReport",
    "TransverseCheckReport",
    "MarginalComparison",
    "simulate_ensemble",
    "simulate_stationary_ensemble",
    "clt_check",
    "transverse_fluctuation_check",
    "empirical_cycle_marginal",
]

_CHUNK = 1024


def _noise_factor(D, eps):
    """Symmetric PSD square root of 2 eps D by eigendecomposition."""
    D = np.asarray(D, dtype=float)
    w, V = np.linalg.eigh(2.0 * eps * (D + D.T) / 2)
    floor = -1e-12 * max(1.0, float(np.max(np.abs(w))))
    if np.any(w < floor):
        raise FactorizationFailure(
            f"diffusion matrix not PSD: eigenvalue {w.min():.3e}"
        )
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _step_plan(t_grid, h):
    """Per-interval (step count, step size) landing exactly on grid times."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1:
        raise ValueError("t_grid must be a nonempty 1D array")
    gaps = np.diff(t_grid)
    if np.any(gaps <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if gaps.size and h > np.min(gaps) * (1 + 1e-12):
        raise ValueError(f"h = {h} exceeds the smallest grid spacing {np.min(gaps)}")
    plan = []
    for gap in gaps:
        m = max(1, int(round(gap / h)))
        plan.append((m, gap / m))
    return plan


def _batch_drift(model, X):
    b = np.asarray(model.drift(X), dtype=float)
    if b.shape == X.shape:
        return b
    return np.stack([np.asarray(model.drift(x), dtype=float) for x in X])


@dataclass
class EnsembleStats:
    """Empirical moments of an Euler-Maruyama ensemble at the grid times.

    ``se_mean`` is sample-std/sqrt(M) per coordinate; ``se_cov`` uses the
    Gaussian-theory standard error sqrt((C_ii C_jj + C_ij^2)/(M-1)) per
    covariance entry.  Z-moments (for Z = (X - xhat)/sqrt(eps)) are present
    only when the ensemble started from a single point, in which case
    ``xhat`` is the deterministic flow from that point.
    """

    seed: int
    M: int
    eps: float
    h: float
    workers: int
    times: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    se_mean: np.ndarray
    se_cov: np.ndarray
    xhat: Optional[np.ndarray] = None
    mean_Z: Optional[np.ndarray] = None
    cov_Z: Optional[np.ndarray] = None
    se_cov_Z: Optional[np.ndarray] = None
    se_mean_Z: Optional[np.ndarray] = None
    endpoints: Optional[np.ndarray] = None

    @property
    def dim(self):
        return self.mean.shape[1]


def _cov_se(cov, M):
    d = np.sqrt(np.maximum(
        (np.einsum("gii->gi", cov)[:, :, None]
         * np.einsum("gii->gi", cov)[:, None, :])
        + cov**2,
        0.0,
    ) / max(M - 1, 1))
    return d


def simulate_ensemble(model, eps, x0, t_grid, M, h, seed, workers=1,
                      keep_endpoints=False):
    """Euler-Maruyama ensemble with per-trajectory counter-based substreams.

    ``x0`` is either a single n-vector (all trajectories start there, and
    Z-statistics against the deterministic flow are computed) or an (M, n)
    array of individual starts (Z-statistics omitted).
    """
    if M < 2:
        raise ValueError("M must be at least 2")
    t_grid = np.asarray(t_grid, dtype=float)
    plan = _step_plan(t_grid, h)
    n = model.dim
    x0 = np.asarray(x0, dtype=float)
    single_start = x0.ndim == 1
    if not single_start and x0.shape != (M, n):
        raise ValueError(f"ensemble x0 must have shape ({M}, {n})")
    B = _noise_factor(model.diffusion, eps)
    total_steps = sum(m for m, _ in plan)
    G = t_grid.size

    xhat = None
    if single_start:
        if t_grid.size > 1:
            xhat = integrate_flow(model, x0, t_grid[0], t_grid[-1],
                                  t_eval=t_grid).states
        else:
            xhat = x0[None, :].copy()

    starts = list(range(0, M, _CHUNK))
    nchunks = len(starts)
    sum_x = np.zeros((nchunks, G, n))
    sum_xx = np.zeros((nchunks, G, n, n))
    sum_z = np.zeros((nchunks, G, n)) if single_start else None
    sum_zz = np.zeros((nchunks, G, n, n)) if single_start else None
    endpoints = np.empty((M, n)) if keep_endpoints else None
    seed_u = np.uint64(seed & (2**64 - 1))
    sqeps = np.sqrt(eps) if eps > 0 else 1.0

    def run_chunk(ci):
        lo = starts[ci]
        hi = min(lo + _CHUNK, M)
        m = hi - lo
        noise = np.empty((m, total_steps, n))
        for j in range(m):
            bg = np.random.Philox(key=np.array([seed_u, np.uint64(lo + j)],
                                               dtype=np.uint64))
            noise[j] = np.random.Generator(bg).standard_normal((total_steps, n))
        X = np.tile(x0, (m, 1)) if single_start else x0[lo:hi].copy()

        def record(gi):
            sum_x[ci, gi] = X.sum(axis=0)
            sum_xx[ci, gi] = X.T @ X
            if single_start:
                Z = (X - xhat[gi]) / sqeps
                sum_z[ci, gi] = Z.sum(axis=0)
                sum_zz[ci, gi] = Z.T @ Z

        record(0)
        s = 0
        for gi, (msteps, dt) in enumerate(plan):
            amp = np.sqrt(dt)
            for _ in range(msteps):
                X += dt * _batch_drift(model, X) + amp * (noise[:, s] @ B)
                s += 1
            if not np.all(np.isfinite(X)):
                raise NonFiniteState(
                    f"ensemble blow-up in (t={t_grid[gi]}, t={t_grid[gi + 1]}]"
                )
            record(gi + 1)
        if keep_endpoints:
            endpoints[lo:hi] = X

    if workers <= 1:
        for ci in range(nchunks):
            run_chunk(ci)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(run_chunk, range(nchunks)))

    # fixed-order reduction keeps results independent of worker scheduling
    Sx = np.add.reduce(sum_x, axis=0)
    Sxx = np.add.reduce(sum_xx, axis=0)
    mean = Sx / M
    cov = (Sxx - M * np.einsum("gi,gj->gij", mean, mean)) / (M - 1)
    cov = (cov + np.swapaxes(cov, 1, 2)) / 2
    var = np.maximum(np.einsum("gii->gi", cov), 0.0)
    stats = EnsembleStats(
        seed=int(seed), M=M, eps=float(eps), h=float(h), workers=workers,
        times=t_grid.copy(), mean=mean, cov=cov,
        se_mean=np.sqrt(var / M), se_cov=_cov_se(cov, M),
        endpoints=endpoints,
    )
    if single_start:
        Sz = np.add.reduce(sum_z, axis=0)
        Szz = np.add.reduce(sum_zz, axis=0)
        mz = Sz / M
        cz = (Szz - M * np.einsum("gi,gj->gij", mz, mz)) / (M - 1)
        cz = (cz + np.swapaxes(cz, 1, 2)) / 2
        vz = np.maximum(np.einsum("gii->gi", cz), 0.0)
        stats.xhat = xhat
        stats.mean_Z = mz
        stats.cov_Z = cz
        stats.se_cov_Z = _cov_se(cz, M)
        stats.se_mean_Z = np.sqrt(vz / M)
    return stats


def simulate_stationary_ensemble(model, eps, samples, M, seed, h=None,
                                 relax_periods=3, workers=1):
    """Ensemble initialized on the cycle at stratified phases, then relaxed.

    The stationary phase marginal is uniform in time-phase to leading order
    (the flux constancy of the cycle marginal), so stratified starts
    x*(phi_j), phi_j = (j + 1/2) T / M, begin in distribution; a few periods
    of relaxation equilibrate the transverse Gaussian.  Endpoints are kept.
    """
    T = samples.period
    if h is None:
        h = T / 2000.0
    phases = (np.arange(M) + 0.5) * (T / M)
    x0 = samples.interp_state(phases)
    t_grid = np.array([0.0, relax_periods * T])
    return simulate_ensemble(model, eps, x0, t_grid, M, h, seed,
                             workers=workers, keep_endpoints=True)


# ---------------------------------------------------------------------------
# statistical comparisons


@dataclass
class CLTCheckReport:
    """Per-time, per-entry z-scores of the empirical Z-covariance."""

    times: np.ndarray
    z: np.ndarray                # (G, n, n)
    empirical: np.ndarray
    theory: np.ndarray
    se: np.ndarray
    fraction_within_3: float
    low_power: bool
    threshold: float = 0.95

    @property
    def passed(self):
        return self.fraction_within_3 >= self.threshold


def clt_check(stats, tube):
    """Compare empirical covariance of Z against the Gaussian-tube Sigma.

    Every stats grid time must be present in the tube grid; z-scores use
    the Gaussian-theory covariance standard error.  With fewer than 100
    trajectories the standard errors are so wide the check is vacuous; the
    report then carries low_power=True.
    """
    if stats.cov_Z is None:
        raise GridMismatch("stats carry no Z moments (ensemble start)")
    idx = []
    for t in stats.times:
        try:
            idx.append(tube.index_of(t))
        except KeyError as exc:
            raise GridMismatch(f"stats time {t} not on the tube grid") from exc
    theory = tube.sigma[idx]
    emp = stats.cov_Z
    se = stats.se_cov_Z
    z = (emp - theory) / np.maximum(se, 1e-300)
    n = emp.shape[1]
    iu = np.triu_indices(n)
    zu = z[:, iu[0], iu[1]]
    frac = float(np.mean(np.abs(zu) < 3.0))
    return CLTCheckReport(
        times=stats.times.copy(), z=z, empirical=emp, theory=theory, se=se,
        fraction_within_3=frac, low_power=stats.M < 100,
    )


def _interp_periodic_matrix(times, values, period, t):
    """Entrywise linear interpolation of a periodic matrix series."""
    t = np.mod(np.asarray(t, dtype=float), period)
    N = times.size
    dt = period / N
    k = np.minimum((t / dt).astype(int), N - 1)
    k1 = (k + 1) % N
    th = ((t - times[k]) / dt)[:, None, None]
    return (1 - th) * values[k] + th * values[k1]


@dataclass
class TransverseCheckReport:
    """Phase-binned transverse covariance against eps * Sigma-tilde.

    The tangential (phase) direction carries a diffusively growing variance
    and is excluded by construction: deviations are expressed in the
    transverse frame coordinates only.
    """

    bin_edges: np.ndarray
    counts: np.ndarray
    empirical: np.ndarray        # (bins, n-1, n-1)
    theory: np.ndarray
    z: np.ndarray
    fraction_bins_ok: float
    threshold: float = 0.90

    @property
    def passed(self):
        return self.fraction_bins_ok >= self.threshold


def transverse_fluctuation_check(stats_longrun, samples, curvature, bins=32,
                                 min_per_bin=100):
    """Empirical transverse covariance per phase bin vs eps K-tilde^{-1}.

    Endpoints are projected to their nearest cycle phase; the transverse
    frame at the projected phase comes from the exact unit drift there (the
    in-plane rotation for n=2, the stored frame at the nearest sample
    otherwise), which keeps the diffusing tangential coordinate out of the
    comparison.
    """
    if stats_longrun.endpoints is None:
        raise ValueError("run the ensemble with keep_endpoints=True")
    X = stats_longrun.endpoints
    eps = stats_longrun.eps
    n = samples.dim
    T = samples.period
    phases, points = project_to_cycle(samples, X)
    dev = X - points

    if n == 2:
        b = _batch_drift(samples.model, points)
        e1 = b / np.linalg.norm(b, axis=1, keepdims=True)
        e2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1)
        coords = np.sum(dev * e2, axis=1)[:, None]          # (M, 1)
    else:
        dt = T / samples.N
        nearest = np.mod(np.rint(phases / dt).astype(int), samples.N)
        Q = curvature.frame.Q[nearest]                       # (M, n, n)
        coords = np.einsum("mi,mik->mk", dev, Q)[:, 1:]

    edges = np.linspace(0.0, T, bins + 1)
    which = np.clip(np.searchsorted(edges, phases, side="right") - 1, 0, bins - 1)
    r = coords.shape[1]
    emp = np.empty((bins, r, r))
    theory = np.empty((bins, r, r))
    z = np.empty((bins, r, r))
    counts = np.empty(bins, dtype=int)
    for k in range(bins):
        sel = which == k
        m = int(np.sum(sel))
        counts[k] = m
        if m < min_per_bin:
            raise InsufficientSamplesPerBin(
                f"bin {k} has {m} samples (< {min_per_bin})"
            )
        Y = coords[sel]
        C = np.cov(Y, rowvar=False, ddof=1).reshape(r, r)
        emp[k] = C
        St = _interp_periodic_matrix(curvature.times, curvature.Sigma_tilde,
                                     T, phases[sel])
        theory[k] = eps * St.mean(axis=0)
        se = np.sqrt((np.outer(np.diag(C), np.diag(C)) + C**2) / (m - 1))
        z[k] = (C - theory[k]) / np.maximum(se, 1e-300)
    ok = np.all(np.abs(z) < 3.0, axis=(1, 2))
    return TransverseCheckReport(
        bin_edges=edges, counts=counts, empirical=emp, theory=theory, z=z,
        fraction_bins_ok=float(np.mean(ok)),
    )


@dataclass
class MarginalComparison:
    """Arclength-binned phase histogram against the predicted marginal."""

    bin_edges: np.ndarray        # arclength coordinates
    counts: np.ndarray
    empirical: np.ndarray        # probability per bin
    predicted: np.ndarray
    ks_distance: float


def empirical_cycle_marginal(stats_longrun, samples, bins, min_per_bin=100,
                             predicted=None):
    """Kolmogorov distance between the endpoint phase law and the marginal.

    Bins are equal in arclength.  ``predicted`` is a MarginalDensity (per
    arclength, on the sample grid); when omitted the comparison target must
    be supplied by the caller.
    """
    if bins < 16:
        raise ValueError("bins must be at least 16")
    if stats_longrun.endpoints is None:
        raise ValueError("run the ensemble with keep_endpoints=True")
    if predicted is None:
        raise ValueError("pass predicted=cycle_marginal_density(...)")
    phases, _ = project_to_cycle(samples, stats_longrun.endpoints)
    s_nodes = samples.cumulative_arclength()
    L = samples.arclength
    # arclength coordinate of each projected phase (piecewise linear, wraps)
    t_ext = np.concatenate([samples.times, [samples.period]])
    s_ext = np.concatenate([s_nodes, [L]])
    s = np.interp(phases, t_ext, s_ext)

    edges = np.linspace(0.0, L, bins + 1)
    counts, _ = np.histogram(s, bins=edges)
    if counts.min() < min_per_bin:
        raise InsufficientSamplesPerBin(
            f"emptiest bin has {counts.min()} samples (< {min_per_bin})"
        )
    emp = counts / counts.sum()

    mass = predicted.g * samples.ds           # probability carried by sample i
    which = np.clip(np.searchsorted(edges, s_nodes, side="right") - 1, 0, bins - 1)
    pred = np.zeros(bins)
    np.add.at(pred, which, mass)
    pred = pred / pred.sum()

    ks = float(np.max(np.abs(np.cumsum(emp) - np.cumsum(pred))))
    return MarginalComparison(bin_edges=edges, counts=counts, empirical=emp,
                              predicted=pred, ks_distance=ks)
