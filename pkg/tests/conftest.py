"""Shared fixtures: limit-cycle chains computed once per session.

The van der Pol and Hopf chains (cycle -> samples -> frame -> curvature ->
prefactor) are the expensive common inputs of the cycle, Monte Carlo and
acceptance tests, so they are session scoped.  Tests must not mutate them.
"""

import numpy as np
import pytest

from stochcycle import (
    build_frame,
    builtin_model,
    find_limit_cycle,
    propagate_log_prefactor,
    sample_cycle,
    solve_periodic_covariance,
)


@pytest.fixture(scope="session")
def vdp_model():
    return builtin_model("vdp", params={"mu": 1.0})


@pytest.fixture(scope="session")
def hopf_model():
    return builtin_model("hopf", params={"omega": 1.0})


@pytest.fixture(scope="session")
def vdp_cycle(vdp_model):
    return find_limit_cycle(vdp_model, [2.0, 0.0])


@pytest.fixture(scope="session")
def hopf_cycle(hopf_model):
    return find_limit_cycle(hopf_model, [0.5, 0.0])


@pytest.fixture(scope="session")
def vdp_chain(vdp_model, vdp_cycle):
    """(samples, frame, curvature, prefactor) for van der Pol at N=1024."""
    samples = sample_cycle(vdp_cycle, vdp_model, 1024)
    frame = build_frame(samples)
    curv = solve_periodic_covariance(samples, frame)
    pref = propagate_log_prefactor(samples, curv)
    return samples, frame, curv, pref


@pytest.fixture(scope="session")
def hopf_chain(hopf_model, hopf_cycle):
    """(samples, frame, curvature, prefactor) for the Hopf normal form at N=256."""
    samples = sample_cycle(hopf_cycle, hopf_model, 256)
    frame = build_frame(samples)
    curv = solve_periodic_covariance(samples, frame)
    pref = propagate_log_prefactor(samples, curv)
    return samples, frame, curv, pref
