"""Laplace expansions against Gaussian moment identities and quadrature.

Quadratic phases make the first-order expansion exact, which pins the
prefactor and the f'':Xi term at machine precision.  Anharmonic cases are
checked two ways: a hand-expanded one-dimensional eta formula, and the
order-of-accuracy slope of the error against a panel Gauss-Legendre oracle.
"""

import itertools

import numpy as np
import pytest

from stochcycle import (
    gaussian_moment_4,
    gaussian_moment_6,
    laplace_integral,
    laplace_ratio,
    laplace_variance,
    laplace_weighted_ratio,
    quadrature_oracle,
)
from stochcycle.errors import (
    BoxTooSmall,
    NewtonDivergence,
    NonPDHessian,
    NonPositiveWeight,
    NotCriticalPoint,
    NotOneDimensional,
)
from stochcycle.laplace import (
    bundle_1d,
    constant_bundle,
    exp_bundle,
    fd_bundle,
    moment_tensors,
    polynomial_bundle,
    refine_critical_point,
    slope_of_errors,
)


def _hermite_moment(indices, dim, nodes=24):
    """Standard-normal moment E[prod x_i] by Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / np.sqrt(2 * np.pi)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    weight = np.ones_like(grids[0])
    for g in np.meshgrid(*([w] * dim), indexing="ij"):
        weight = weight * g
    integrand = np.ones_like(grids[0])
    for i in indices:
        integrand = integrand * grids[i]
    return float(np.sum(integrand * weight))


# ---------------------------------------------------------------------------
# moment tensors


def test_scalar_wick_counts():
    assert gaussian_moment_4() == 3.0
    assert gaussian_moment_6() == 15.0


@pytest.mark.parametrize("dim", [1, 2])
def test_fourth_moment_tensor_matches_quadrature(dim):
    mt = moment_tensors(np.eye(dim))
    for multi in itertools.product(range(dim), repeat=4):
        assert abs(mt.theta[multi] - _hermite_moment(multi, dim)) < 1e-9


def test_sixth_moment_tensor_matches_quadrature_1d():
    mt = moment_tensors(np.eye(1))
    assert abs(mt.lam[(0,) * 6] - _hermite_moment((0,) * 6, 1)) < 1e-9


def test_sixth_moment_tensor_spot_checks_2d():
    mt = moment_tensors(np.eye(2))
    # E[x^4 y^2] = 3, E[x^2 y^2 x^2] permutations, E[x^6] = 15, odd -> 0
    assert abs(mt.lam[0, 0, 0, 0, 1, 1] - 3.0) < 1e-12
    assert abs(mt.lam[(0,) * 6] - 15.0) < 1e-12
    assert mt.lam[0, 0, 0, 0, 0, 1] == 0.0


def test_moment_tensors_scale_with_hessian():
    H = np.array([[4.0]])
    mt = moment_tensors(H)
    assert abs(mt.xi[0, 0] - 0.25) < 1e-14
    assert abs(mt.xi_sqrt[0, 0] - 0.5) < 1e-14
    with pytest.raises(NonPDHessian):
        moment_tensors(np.array([[1.0, 0.0], [0.0, -2.0]]))


# ---------------------------------------------------------------------------
# bundles


def test_polynomial_bundle_derivatives_by_finite_differences():
    rng = np.random.default_rng(515)
    n = 2
    c1 = rng.standard_normal(n)
    c2 = rng.standard_normal((n, n))
    c2 = c2 + c2.T
    c3 = rng.standard_normal((n, n, n))
    c4 = rng.standard_normal((n,) * 4)
    p = polynomial_bundle(n, c0=0.7, c1=c1, c2=c2, c3=c3, c4=c4)
    x = rng.standard_normal(n)
    step = 1e-4

    def num_grad(i):
        e = np.zeros(n)
        e[i] = step
        return (p.value(x + e) - p.value(x - e)) / (2 * step)

    for i in range(n):
        assert abs(p.gradient(x)[i] - num_grad(i)) < 1e-6
    # fourth derivative of a quartic is constant and symmetric
    T4 = p.fourth(x)
    np.testing.assert_allclose(T4, np.transpose(T4, (1, 0, 2, 3)), atol=1e-14)
    np.testing.assert_allclose(T4, np.transpose(T4, (0, 1, 3, 2)), atol=1e-14)


def test_polynomial_bundle_batch_value():
    p = polynomial_bundle(2, c0=1.0, c1=[1.0, -1.0])
    X = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 1.0]])
    np.testing.assert_allclose(p.value(X), [1.0, 0.0, 3.0], atol=1e-14)


def test_exp_bundle_chain_rule():
    rng = np.random.default_rng(8)
    p = polynomial_bundle(2, c0=0.1, c1=rng.standard_normal(2),
                          c2=0.3 * np.eye(2))
    g = exp_bundle(p)
    x = np.array([0.4, -0.2])
    val = np.exp(p.value(x))
    np.testing.assert_allclose(g.value(x), val, rtol=1e-14)
    np.testing.assert_allclose(g.gradient(x), val * p.gradient(x), rtol=1e-13)
    # hessian: e^p (p'' + p' p'^T)
    expected = val * (p.hessian(x) + np.outer(p.gradient(x), p.gradient(x)))
    np.testing.assert_allclose(g.hessian(x), expected, rtol=1e-12)
    # third and fourth against central differences of the hessian
    step = 1e-4
    e0 = np.array([step, 0.0])
    fd3 = (g.hessian(x + e0) - g.hessian(x - e0)) / (2 * step)
    np.testing.assert_allclose(g.third(x)[:, :, 0], fd3, atol=1e-5)
    fd4 = (g.third(x + e0) - g.third(x - e0)) / (2 * step)
    np.testing.assert_allclose(g.fourth(x)[:, :, :, 0], fd4, atol=1e-4)


def test_bundle_1d_wraps_scalars():
    b = bundle_1d(lambda x: x**3, lambda x: 3 * x**2, lambda x: 6 * x,
                  lambda x: 6.0, lambda x: 0.0)
    x = np.array([2.0])
    assert b.dim == 1
    assert abs(b.value(x) - 8.0) < 1e-14
    assert b.hessian(x).shape == (1, 1)
    assert abs(b.hessian(x)[0, 0] - 12.0) < 1e-14
    assert b.fourth(x).shape == (1, 1, 1, 1)


def test_fd_bundle_derivatives():
    b = fd_bundle(lambda x: np.cos(x[..., 0]) * np.exp(x[..., 1]), dim=2)
    x = np.array([0.3, -0.5])
    f = np.cos(0.3) * np.exp(-0.5)
    np.testing.assert_allclose(b.value(x), f, rtol=1e-14)
    np.testing.assert_allclose(b.gradient(x),
                               [-np.sin(0.3) * np.exp(-0.5), f], atol=1e-7)
    np.testing.assert_allclose(b.hessian(x)[0, 0], -f, atol=1e-5)
    # accuracy degrades with derivative order but stays usable
    np.testing.assert_allclose(b.third(x)[0, 0, 0], np.sin(0.3) * np.exp(-0.5),
                               atol=1e-3)


def test_refine_critical_point():
    p = polynomial_bundle(2, c1=[-2.0, 2.0], c2=np.array([[2.0, 0.0], [0.0, 1.0]]))
    # minimum of -2x + 2y + x^2 + y^2/2 ... solve grad = 0
    xstar = refine_critical_point(p, [0.0, 0.0])
    np.testing.assert_allclose(p.gradient(xstar), 0.0, atol=1e-10)
    # linear phase has no critical point and a singular Hessian
    lin = polynomial_bundle(1, c1=[1.0])
    with pytest.raises(NewtonDivergence):
        refine_critical_point(lin, [0.0])


# ---------------------------------------------------------------------------
# expansions: exact cases


def test_laplace_integral_exact_for_gaussian():
    rng = np.random.default_rng(77)
    for n in (1, 2, 3):
        R = rng.standard_normal((n, n))
        H = R @ R.T + n * np.eye(n)
        h = polynomial_bundle(n, c2=H)  # h = x^T H x / 2
        f = constant_bundle(n, 2.5)
        eps = 0.05
        approx = laplace_integral(f, h, np.zeros(n), eps)
        exact = 2.5 * np.sqrt((2 * np.pi * eps) ** n / np.linalg.det(H))
        np.testing.assert_allclose(approx, exact, rtol=1e-12)


def test_laplace_integral_exact_for_quadratic_observable():
    """Quadratic f against quadratic h is summable in closed form."""
    rng = np.random.default_rng(123)
    n = 2
    R = rng.standard_normal((n, n))
    H = R @ R.T + 2 * np.eye(n)
    F2 = rng.standard_normal((n, n))
    F2 = F2 + F2.T
    f = polynomial_bundle(n, c0=1.2, c2=F2)
    h = polynomial_bundle(n, c2=H)
    eps = 0.01
    approx = laplace_integral(f, h, np.zeros(n), eps)
    # E[f] under N(0, eps H^{-1}); odd terms vanish
    sig = eps * np.linalg.inv(H)
    exact = (1.2 + 0.5 * np.trace(F2 @ sig)) * np.sqrt(
        (2 * np.pi * eps) ** n / np.linalg.det(H))
    np.testing.assert_allclose(approx, exact, rtol=1e-12)


def test_eta_matches_hand_expansion_1d():
    """Tensor eta against the scalar formula for an anharmonic well."""
    a, c3, c4 = 1.3, 0.4, 0.25
    f0, f1, f2 = 0.9, -0.6, 1.1
    h = polynomial_bundle(1, c2=[[a]], c3=[[[c3]]], c4=[[[[c4]]]])
    f = polynomial_bundle(1, c0=f0, c1=[f1], c2=[[f2]])
    eps = 0.02
    hpp = a
    eta = (f2 / (2 * hpp)
           - f1 * c3 / (2 * hpp**2)
           - f0 * c4 / (8 * hpp**2)
           + 5 * f0 * c3**2 / (24 * hpp**3))
    expected = np.sqrt(2 * np.pi * eps / hpp) * (f0 + eps * eta)
    got = laplace_integral(f, h, [0.0], eps)
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_ratio_of_constant_observable_is_constant():
    h = polynomial_bundle(1, c2=[[2.0]], c3=[[[0.5]]])
    f = constant_bundle(1, 3.3)
    assert abs(laplace_ratio(f, h, [0.0], 0.05) - 3.3) < 1e-14


# ---------------------------------------------------------------------------
# expansions: order of accuracy against quadrature


def _anharmonic_case():
    h = polynomial_bundle(1, c2=[[1.1]], c3=[[[0.24]]], c4=[[[[0.2]]]])
    f = polynomial_bundle(1, c0=1.0, c1=[0.7], c2=[[-0.4]])
    g = exp_bundle(polynomial_bundle(1, c1=[0.2]))
    return f, g, h


@pytest.mark.parametrize("convention, bound, side", [
    ("corrected", 1.9, "above"),
    ("as-printed", 1.8, "below"),
])
def test_integral_error_slope(convention, bound, side):
    f, _, h = _anharmonic_case()
    one = constant_bundle(1, 1.0)
    eps_values = [0.1 * 2.0**-k for k in range(4)]
    errors = []
    for eps in eps_values:
        approx = laplace_integral(f, h, [0.0], eps, eta_convention=convention)
        oracle = quadrature_oracle(f, one, h, eps, box=(-4.5, 4.5))
        errors.append(abs(approx - float(oracle)))
    slope = slope_of_errors(eps_values, errors)
    if side == "above":
        assert slope >= bound
    else:
        assert slope < bound


def test_ratio_error_slope():
    f, _, h = _anharmonic_case()
    one = constant_bundle(1, 1.0)
    eps_values = [0.1 * 2.0**-k for k in range(4)]
    errors = []
    for eps in eps_values:
        num = quadrature_oracle(f, one, h, eps, box=(-4.5, 4.5))
        den = quadrature_oracle(one, one, h, eps, box=(-4.5, 4.5))
        errors.append(abs(laplace_ratio(f, h, [0.0], eps) - float(num) / float(den)))
    assert slope_of_errors(eps_values, errors) >= 1.9


def test_weighted_ratio_error_slope():
    f, g, h = _anharmonic_case()
    eps_values = [0.1 * 2.0**-k for k in range(4)]
    errors = []
    for eps in eps_values:
        num = quadrature_oracle(f, g, h, eps, box=(-4.5, 4.5))
        den = quadrature_oracle(constant_bundle(1, 1.0), g, h, eps, box=(-4.5, 4.5))
        approx = laplace_weighted_ratio(f, g, h, [0.0], eps)
        errors.append(abs(approx - float(num) / float(den)))
    assert slope_of_errors(eps_values, errors) >= 1.9


def test_variance_leading_order():
    f, g, h = _anharmonic_case()
    one = constant_bundle(1, 1.0)
    eps = 1e-3
    den = float(quadrature_oracle(one, g, h, eps, box=(-4.5, 4.5)))
    mean = float(quadrature_oracle(f, g, h, eps, box=(-4.5, 4.5))) / den
    # second moment of f via an fd bundle wrapping the square
    fsq = fd_bundle(lambda x: f.value(x) ** 2, dim=1)
    second = float(quadrature_oracle(fsq, g, h, eps, box=(-4.5, 4.5))) / den
    var_exact = second - mean**2
    var_formula = laplace_variance(f, g, h, [0.0], eps)
    assert abs(var_formula - var_exact) < 0.05 * var_exact


# ---------------------------------------------------------------------------
# guards


def test_not_critical_point():
    h = polynomial_bundle(1, c1=[1.0], c2=[[1.0]])
    with pytest.raises(NotCriticalPoint):
        laplace_integral(constant_bundle(1), h, [0.0], 0.1)


def test_non_pd_hessian():
    h = polynomial_bundle(1, c2=[[-1.0]])
    with pytest.raises(NonPDHessian):
        laplace_integral(constant_bundle(1), h, [0.0], 0.1)


def test_non_positive_weight():
    f, _, h = _anharmonic_case()
    g = polynomial_bundle(1, c0=-1.0)
    with pytest.raises(NonPositiveWeight):
        laplace_weighted_ratio(f, g, h, [0.0], 0.1)
    with pytest.raises(NonPositiveWeight):
        laplace_variance(f, g, h, [0.0], 0.1)


def test_variance_requires_1d():
    h2 = polynomial_bundle(2, c2=np.eye(2))
    with pytest.raises(NotOneDimensional):
        laplace_variance(constant_bundle(2), constant_bundle(2), h2,
                         [0.0, 0.0], 0.1)


def test_box_too_small_for_boundary_decay():
    f, g, h = _anharmonic_case()
    with pytest.raises(BoxTooSmall):
        quadrature_oracle(f, g, h, eps=0.1, box=(-0.5, 0.5))


def test_quadrature_result_interface():
    _, g, h = _anharmonic_case()
    one = constant_bundle(1, 1.0)
    res = quadrature_oracle(one, g, h, 0.05, box=(-4.5, 4.5))
    assert float(res) == res.value
    assert res.error_estimate < 1e-10 * abs(res.value)


def test_slope_of_errors_on_synthetic_data():
    eps = np.array([0.1, 0.05, 0.025])
    assert abs(slope_of_errors(eps, 3.0 * eps**2) - 2.0) < 1e-12
    # exact zeros are floored rather than crashing the log fit
    assert np.isfinite(slope_of_errors(eps, [0.0, 0.0, 0.0]))
