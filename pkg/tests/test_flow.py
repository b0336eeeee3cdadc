"""Flow integration, Poincare-section cycle search, and cycle sampling.

The Hopf normal form gives exact targets (unit radius, period 2 pi); the
van der Pol period is pinned to a previously computed high-accuracy value so
regressions in the shooting chain show up as hard failures.
"""

import numpy as np
import pytest
from scipy.linalg import expm

from stochcycle import (
    CycleSamples,
    StepControl,
    builtin_model,
    find_limit_cycle,
    integrate_flow,
    project_to_cycle,
    sample_cycle,
)
from stochcycle.errors import (
    ClosureFailure,
    DegeneratePeriod,
    NoSectionCrossing,
    NonFiniteState,
    StepSizeUnderflow,
)
from stochcycle.flow import CycleSearchOptions

# Newton shooting at cycle_tol=1e-9 from x_guess=[2, 0]; stable across
# solver tolerance changes at the 1e-10 level.
VDP_PERIOD_MU1 = 6.663286859321606


def test_integrate_flow_linear_matches_matrix_exponential():
    A = np.array([[-0.5, 1.2], [-1.0, -0.3]])
    model = builtin_model("linear", params={"a": A})
    x0 = np.array([1.0, -2.0])
    t1 = 2.5
    traj = integrate_flow(model, x0, 0.0, t1, t_eval=[0.0, 1.0, t1])
    np.testing.assert_allclose(traj.states[1], expm(A * 1.0) @ x0, rtol=1e-9)
    np.testing.assert_allclose(traj.terminal, expm(A * t1) @ x0, rtol=1e-9)


def test_integrate_flow_nonfinite_blowup():
    # x' = x^2 from x0 = 1 blows up at t = 1
    model = builtin_model("cubic1d", params={"c": 1.0})
    blow = type(model)(
        dim=1,
        drift=lambda x: np.asarray(x, dtype=float) ** 2,
        jacobian=model.jacobian,
        hessian=model.hessian,
        diffusion=model.diffusion,
    )
    # either the state overflows or the adaptive step collapses first
    with pytest.raises((NonFiniteState, StepSizeUnderflow)):
        integrate_flow(blow, [1.0], 0.0, 2.0)


def test_hopf_cycle_is_exact(hopf_cycle):
    assert abs(hopf_cycle.period - 2 * np.pi) < 1e-9
    assert abs(np.linalg.norm(hopf_cycle.anchor) - 1.0) < 1e-9
    assert hopf_cycle.residual < 1e-8


def test_vdp_period_pinned(vdp_cycle):
    assert abs(vdp_cycle.period - VDP_PERIOD_MU1) < 1e-8
    assert vdp_cycle.residual < 1e-8
    # shooting actually converged rather than stalling at max_iter
    assert vdp_cycle.newton_residuals[-1] < 1e-9


def test_cycle_search_insensitive_to_guess(vdp_model, vdp_cycle):
    other = find_limit_cycle(vdp_model, [0.1, -0.4])
    assert abs(other.period - vdp_cycle.period) < 1e-8
    # anchors differ (different sections) but both lie on the same orbit
    ph, pt = project_to_cycle(
        sample_cycle(vdp_cycle, vdp_model, 256), other.anchor[None, :]
    )
    assert np.linalg.norm(pt[0] - other.anchor) < 1e-6


def test_fixed_point_attractor_is_rejected():
    A = np.array([[-1.0, 0.0], [0.0, -2.0]])
    model = builtin_model("linear", params={"a": A})
    with pytest.raises(DegeneratePeriod):
        find_limit_cycle(model, [1.0, 1.0])


def test_no_return_raises_section_crossing():
    # outward spiral: r' = +r, no recurrence
    def drift(x):
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 0] - x[..., 1], x[..., 0] + x[..., 1]], axis=-1)

    from stochcycle import make_model

    model = make_model(2, drift)
    opts = CycleSearchOptions(transient_time=1.0, max_return_time=5.0)
    with pytest.raises((NoSectionCrossing, NonFiniteState)):
        find_limit_cycle(model, [0.1, 0.0], opts)


def test_sample_cycle_basic_invariants(vdp_chain):
    samples, _, _, _ = vdp_chain
    assert isinstance(samples, CycleSamples)
    assert samples.N == 1024
    assert samples.states.shape == (1024, 2)
    assert samples.closure_error < 1e-8
    dt = samples.period / samples.N
    np.testing.assert_allclose(np.diff(samples.times), dt, rtol=1e-12)
    # ds = |b| dt and the cumulative coordinate starts at zero
    np.testing.assert_allclose(samples.ds, samples.speeds * dt, rtol=1e-14)
    s = samples.cumulative_arclength()
    assert s[0] == 0.0
    assert np.all(np.diff(s) > 0)


def test_sample_cycle_hopf_geometry(hopf_chain):
    samples, _, _, _ = hopf_chain
    radii = np.linalg.norm(samples.states, axis=1)
    np.testing.assert_allclose(radii, 1.0, atol=1e-9)
    # unit speed on the unit circle: total arclength = 2 pi
    assert abs(samples.arclength - 2 * np.pi) < 1e-6


def test_interp_state_periodic_and_accurate(hopf_chain):
    samples, _, _, _ = hopf_chain
    rng = np.random.default_rng(99)
    ts = rng.uniform(0, samples.period, 32)
    exact = np.stack([
        np.array([np.cos(t + samples_phase(samples)), np.sin(t + samples_phase(samples))])
        for t in ts
    ])
    got = samples.interp_state(ts)
    np.testing.assert_allclose(got, exact, atol=1e-7)
    np.testing.assert_allclose(
        samples.interp_state(ts + samples.period), got, atol=1e-12
    )
    # scalar input returns a vector
    assert samples.interp_state(0.0).shape == (2,)


def samples_phase(samples):
    """Initial angle of the Hopf anchor on the unit circle."""
    return float(np.arctan2(samples.anchor[1], samples.anchor[0]))


def test_project_to_cycle_recovers_phase(hopf_chain):
    samples, _, _, _ = hopf_chain
    rng = np.random.default_rng(4)
    ts = rng.uniform(0, samples.period, 16)
    on_cycle = samples.interp_state(ts)
    # radial perturbations leave the nearest point unchanged
    X = on_cycle * 1.05
    ph, pt = project_to_cycle(samples, X)
    np.testing.assert_allclose(pt, on_cycle, atol=1e-5)
    dphi = np.mod(ph - ts + samples.period / 2, samples.period) - samples.period / 2
    np.testing.assert_allclose(dphi, 0.0, atol=1e-5)


def test_project_to_cycle_without_refinement_is_grid_coarse(hopf_chain):
    samples, _, _, _ = hopf_chain
    x = samples.interp_state(0.5 * samples.period / samples.N)[None, :]
    ph_c, _ = project_to_cycle(samples, x, refine=False)
    ph_r, _ = project_to_cycle(samples, x, refine=True)
    dt = samples.period / samples.N
    assert abs(ph_c[0] % dt) < 1e-12  # snapped to the sample grid
    assert abs(ph_r[0] - 0.5 * dt) < 1e-4 * dt


def test_sample_cycle_closure_guard(vdp_model, vdp_cycle):
    import dataclasses

    broken = dataclasses.replace(vdp_cycle, anchor=vdp_cycle.anchor + 0.05)
    with pytest.raises(ClosureFailure):
        sample_cycle(broken, vdp_model, 128)


def test_sample_cycle_minimum_resolution(vdp_model, vdp_cycle):
    with pytest.raises(ValueError):
        sample_cycle(vdp_cycle, vdp_model, 32)


def test_step_control_tolerances_propagate():
    ctrl = StepControl(rtol=1e-5, atol=1e-8)
    model = builtin_model("hopf", params={"omega": 1.0})
    traj = integrate_flow(model, [2.0, 0.0], 0.0, 1.0, ctrl=ctrl)
    assert np.all(np.isfinite(traj.states))
