"""Space-time scaling: the induced small parameter and drift exponents."""

import numpy as np
import pytest

from stochcycle import (
    SpaceTimeStructure,
    ito_from_stratonovich,
    monomial_drift_epsilon_power,
    monomial_scaling_exponent,
    rescale_sde,
)
from stochcycle.errors import NonPositiveScale, OutOfRange


def test_power_law_structure():
    st = SpaceTimeStructure.power_law(alpha=4.0, k=-1.0)
    assert abs(st.beta - 0.25) < 1e-15
    assert abs(st.eps - 4.0**-3) < 1e-18


def test_structure_guards():
    with pytest.raises(NonPositiveScale):
        SpaceTimeStructure(alpha=-1.0, xi=lambda a: a)
    with pytest.raises(NonPositiveScale):
        SpaceTimeStructure(alpha=2.0, xi=lambda a: -a)


@pytest.mark.parametrize("n", [0.0, 0.5, 1.0, 2.0, 3.0])
def test_matched_exponent_removes_epsilon(n):
    """At k = 1 - n the rescaled monomial drift is the same at every alpha."""
    k = monomial_scaling_exponent(n)

    def g(x):
        return np.sign(x) * np.abs(x) ** n

    xs = np.random.default_rng(7).uniform(0.1, 2.0, 100)
    reference = None
    for alpha in (1.0, 2.0, 4.0, 8.0):
        st = SpaceTimeStructure.power_law(alpha, k)
        b_eps, _, eps = rescale_sde(g, np.eye(1), st)
        vals = b_eps(xs)
        if reference is None:
            reference = vals
        else:
            np.testing.assert_allclose(vals, reference, rtol=1e-12, atol=1e-14)


def test_mismatched_exponent_scales_as_predicted_power():
    """Away from the matched k the drift carries eps**((k-1+n)/(k-2))."""
    n, k = 2.0, 0.0
    p = monomial_drift_epsilon_power(k, n)
    assert abs(p + 0.5) < 1e-15  # (0 - 1 + 2)/(0 - 2) = -1/2

    def g(x):
        return x**n

    x = np.array([1.3])
    for alpha in (2.0, 4.0, 8.0):
        st = SpaceTimeStructure.power_law(alpha, k)
        b_eps, _, eps = rescale_sde(g, np.eye(1), st)
        # b_eps(x) = alpha^{k-1+n} g(x) = eps^p g(x)
        np.testing.assert_allclose(b_eps(x), eps**p * g(x), rtol=1e-12)


def test_exponent_out_of_range():
    with pytest.raises(OutOfRange):
        monomial_scaling_exponent(-1.0)
    with pytest.raises(OutOfRange):
        monomial_scaling_exponent(-2.5)
    with pytest.raises(OutOfRange):
        monomial_drift_epsilon_power(2.0, 1.0)


def test_rescale_sde_callable_diffusion():
    st = SpaceTimeStructure.power_law(3.0, -1.0)
    _, D_eps, _ = rescale_sde(lambda x: x, lambda x: np.diag(x), st)
    np.testing.assert_allclose(D_eps(np.array([1.0, 2.0])),
                               np.diag([3.0, 6.0]), rtol=1e-14)


def test_rescale_sde_constant_diffusion_passthrough():
    D = np.array([[0.5, 0.1], [0.1, 0.5]])
    st = SpaceTimeStructure.power_law(2.0, 0.0)
    _, D_eps, eps = rescale_sde(lambda x: x, D, st)
    assert D_eps is not None and not callable(D_eps)
    np.testing.assert_allclose(D_eps, D)
    assert abs(eps - 0.25) < 1e-15


def test_ito_equals_stratonovich_for_constant_diffusion():
    b = lambda x: -np.asarray(x, dtype=float)
    b_I = ito_from_stratonovich(b, np.zeros(2), eps=0.01)
    x = np.array([0.4, -1.2])
    np.testing.assert_allclose(b_I(x), b(x), atol=0.0)  # exact equality


def test_ito_correction_with_divergence_field():
    b = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    div = lambda x: np.asarray([2.0 * x[0], 0.0])  # e.g. D = diag(x_0^2, const)
    b_I = ito_from_stratonovich(b, div, eps=0.1)
    np.testing.assert_allclose(b_I(np.array([3.0, 1.0])), [0.6, 0.0], rtol=1e-14)
