import numpy as np
import pytest

from doublephase import flux
from doublephase.fields import ExponentData, make_field


def data_const(p=1.8, q=2.2, a=0.5, b=0.5, dim=2):
    return ExponentData(dim=dim, horizon=0.1, p=make_field(p, dim), q=make_field(q, dim),
                        a=make_field(a, dim), b=make_field(b, dim), alpha=0.9,
                        lipschitz_probe_resolution=9, time_probe_resolution=3)


def test_beta_eps_values():
    assert flux.beta_eps(np.zeros(2), 0.1) == pytest.approx(0.01)
    assert flux.beta_eps(np.array([3.0, 4.0]), 0.0) == pytest.approx(25.0)


def test_beta_interchange_sandwich_exact():
    # |xi|^(2 mu) <= beta^mu <= 2^mu (1 + |xi|^(2 mu)), no slack allowed
    rng = np.random.default_rng(1)
    n = 100_000
    xi = rng.normal(scale=2.0, size=(n, 2))
    mu = rng.uniform(0.05, 4.0, size=n)
    eps = rng.uniform(0.0, 0.999, size=n)
    beta_mu = flux.powf(flux.beta_eps(xi, eps), mu)
    mag2mu = flux.powf(np.sum(xi * xi, axis=-1), mu)
    assert np.all(mag2mu <= beta_mu)
    assert np.all(beta_mu <= 2.0 ** mu * (1.0 + mag2mu))


def test_density_constant_cases():
    d = data_const(p=2.0, q=2.0, a=1.0, b=0.0)
    x = np.array([[0.3, 0.4]])
    xi = np.array([[1.7, -0.3]])
    params = flux.FluxParams(eps=0.2)
    assert flux.flux_density(x, 0.0, xi, params, d)[0] == pytest.approx(1.0)
    # merged terms when p = q: density = beta^((p-2)/2)
    d2 = data_const(p=1.8, q=1.8)
    beta = flux.beta_eps(xi, 0.2)[0]
    assert flux.flux_density(x, 0.0, xi, params, d2)[0] == pytest.approx(beta ** -0.1)


def test_null_eps_lower_bound():
    # a|xi|^(p+s1) + b|xi|^(q+s2) <= density_(s1,s2) * beta for random inputs
    rng = np.random.default_rng(2)
    n = 20_000
    xi = rng.normal(size=(n, 2))
    a = rng.uniform(0, 1, n); b = rng.uniform(0, 1, n)
    p = rng.uniform(1.2, 3.0, n); q = rng.uniform(1.2, 3.0, n)
    s1 = rng.uniform(0, 1.5, n); s2 = rng.uniform(0, 1.5, n)
    eps = rng.uniform(1e-4, 0.99, n)
    beta = flux.beta_eps(xi, eps)
    dens = flux.density_kernel(a, b, p, q, xi, eps, s1, s2)
    mag = np.sqrt(np.sum(xi * xi, axis=-1))
    lower = a * flux.powf(mag, p + s1) + b * flux.powf(mag, q + s2)
    assert np.all(lower <= dens * beta * (1 + 1e-12))


def test_null_eps_two_branch_bound():
    # density*beta <= branch constant on |xi| <= eps, <= 2*density*|xi|^2 beyond
    rng = np.random.default_rng(3)
    n = 50_000
    eps = rng.uniform(1e-3, 0.99, n)
    scale = np.where(rng.uniform(size=n) < 0.5, eps, 3.0)
    xi = rng.normal(size=(n, 2)) * scale[:, None]
    a = rng.uniform(0, 1, n); b = rng.uniform(0, 1, n)
    p = rng.uniform(1.2, 3.0, n); q = rng.uniform(1.2, 3.0, n)
    s1 = rng.uniform(0, 1.0, n); s2 = rng.uniform(0, 1.0, n)
    beta = flux.beta_eps(xi, eps)
    dens = flux.density_kernel(a, b, p, q, xi, eps, s1, s2)
    mag_sq = np.sum(xi * xi, axis=-1)
    small = mag_sq <= eps ** 2
    branch = flux.null_eps_branch_bound(a, b, p, q, eps, s1, s2)
    lhs = dens * beta
    assert np.all(lhs[small] <= branch[small] * (1 + 1e-12))
    assert np.all(lhs[~small] <= 2.0 * (dens * mag_sq)[~small] * (1 + 1e-12))
    # combined form with the eps < 1 constant
    cap = (a * flux.powf(np.full(n, 2.0), (p + s1) / 2.0)
           + b * flux.powf(np.full(n, 2.0), (q + s2) / 2.0))
    assert np.all(lhs <= cap + 2.0 * dens * mag_sq + 1e-12)


def test_log_growth_bound():
    rng = np.random.default_rng(4)
    n = 100_000
    zeta = rng.uniform(0.2, 3.0, n)
    mu = zeta * rng.uniform(0.05, 0.95, n)
    xi = 10.0 ** rng.uniform(-8, 3, n)
    lhs = xi ** zeta * np.abs(np.log(xi))
    consts = np.array([flux.log_inequality_constant(m, z)
                       for m, z in zip(mu[:50], zeta[:50])])
    # the constant only depends on mu: check the closed form too
    assert np.allclose(consts, 1.0 / (np.e * mu[:50]), rtol=1e-6)
    c = 1.0 / (np.e * mu)
    assert np.all(lhs <= c * (1.0 + xi ** (zeta + mu)) * (1 + 1e-9))


def test_flux_vector_cases_and_extension():
    d = data_const(p=2.0, q=2.0, a=0.6, b=0.4)
    x = np.array([[0.2, 0.9]])
    xi = np.array([[0.0, 0.0]])
    assert np.allclose(flux.flux_vector(x, 0.0, xi, 0.3, d), 0.0)
    xi = np.array([[1.2, -0.7]])
    assert np.allclose(flux.flux_vector(x, 0.0, xi, 0.3, d), xi)  # a+b = 1, p = q = 2
    # continuous extension by zero at the degenerate point
    d2 = data_const(p=1.5, q=1.7)
    assert np.allclose(flux.flux_vector(x, 0.0, np.zeros((1, 2)), 0.0, d2), 0.0)
    with pytest.raises(flux.FluxSingularityError):
        flux.flux_density(x, 0.0, np.zeros((1, 2)), flux.FluxParams(eps=0.0), d2)


def test_flux_vector_is_energy_gradient():
    rng = np.random.default_rng(5)
    d = data_const(p=1.7, q=2.3, a=0.4, b=0.6)
    x = rng.uniform(0.1, 0.9, size=(20, 2))
    xi = rng.normal(size=(20, 2))
    eps = 0.15
    h = 1e-6
    fv = flux.flux_vector(x, 0.05, xi, eps, d)
    for dim in range(2):
        e = np.zeros(2); e[dim] = h
        fd = (flux.energy_density(x, 0.05, xi + e, eps, d)
              - flux.energy_density(x, 0.05, xi - e, eps, d)) / (2 * h)
        assert np.allclose(fd, fv[:, dim], rtol=1e-6, atol=1e-8)


def test_flux_jacobian_symmetry_psd_and_fd():
    rng = np.random.default_rng(6)
    d = data_const(p=1.6, q=2.4, a=0.7, b=0.3)
    x = rng.uniform(0.1, 0.9, size=(30, 2))
    xi = rng.normal(size=(30, 2)) * rng.uniform(0.01, 3.0, size=(30, 1))
    eps = 0.05
    jac = flux.flux_jacobian(x, 0.02, xi, eps, d)
    assert np.allclose(jac, np.swapaxes(jac, -1, -2), atol=1e-12)
    eig = np.linalg.eigvalsh(jac)
    assert np.all(eig >= -1e-12)
    h = 1e-6
    for dim in range(2):
        e = np.zeros(2); e[dim] = h
        fd = (flux.flux_vector(x, 0.02, xi + e, eps, d)
              - flux.flux_vector(x, 0.02, xi - e, eps, d)) / (2 * h)
        scale = np.abs(jac[:, :, dim]).max()
        assert np.allclose(fd, jac[:, :, dim], rtol=1e-5, atol=1e-5 * scale)
    with pytest.raises(ValueError):
        flux.flux_jacobian(x, 0.0, xi, 0.0, d)


def test_identity_jacobian_for_linear_flux():
    d = data_const(p=2.0, q=2.0, a=0.5, b=0.5)
    x = np.array([[0.4, 0.6]])
    xi = np.array([[0.3, -1.1]])
    jac = flux.flux_jacobian(x, 0.0, xi, 0.2, d)
    assert np.allclose(jac[0], np.eye(2), atol=1e-14)


def test_monotonicity_gap_cases():
    xi = np.array([0.5, -0.2])
    assert flux.monotonicity_gap(xi, xi, 2.7, 0.1) == pytest.approx(0.0)
    eta = np.array([-1.0, 0.4])
    s2 = flux.monotonicity_gap(xi, eta, 2.0, 0.37)
    assert s2 == pytest.approx(np.sum((xi - eta) ** 2))
    assert flux.monotonicity_gap(np.zeros(2), np.zeros(2), 1.5, 0.0) == pytest.approx(0.0)


def test_monotonicity_gap_sweep_nonnegative_and_p_ge_2_branch():
    rng = np.random.default_rng(7)
    n = 100_000
    xi = rng.normal(scale=1.5, size=(n, 2))
    eta = rng.normal(scale=1.5, size=(n, 2))
    p = rng.uniform(1.05, 4.5, n)
    eps = rng.uniform(0.0, 0.99, n)
    gap = flux.monotonicity_gap(xi, eta, p, eps)
    assert np.all(gap >= 0.0)
    mask = p >= 2.0
    lower = flux.gap_lower_bound(xi, eta, p, eps)
    assert np.all(gap[mask] >= lower[mask] * (1 - 1e-12) - 1e-15)


def test_gap_power_bound_p3_constant_by_ratio_search():
    # |xi-eta|^3 <= 2 C_3 gap with C_3 = max(1, 2^(3-3)) = 1; brute-force the ratio
    rng = np.random.default_rng(8)
    n = 100_000
    xi = rng.normal(scale=2.0, size=(n, 2))
    eta = rng.normal(scale=2.0, size=(n, 2))
    gap = flux.monotonicity_gap(xi, eta, 3.0, 0.0)
    diff = np.sum((xi - eta) ** 2, axis=-1) ** 1.5
    live = gap > 0
    ratio = diff[live] / gap[live]
    c3 = flux.sum_power_constant(3.0)
    assert c3 == 1.0
    assert ratio.max() <= 2.0 * c3 * (1 + 1e-10)


def test_singular_branch_constant_reported():
    # for p < 2 the gap dominates (p-1)|xi-eta|^2 (eps^2+|xi|^2+|eta|^2)^((p-2)/2);
    # the calibrated half-constant must hold on a large sample
    rng = np.random.default_rng(9)
    n = 100_000
    xi = rng.normal(size=(n, 2)) * rng.uniform(1e-3, 3.0, size=(n, 1))
    eta = rng.normal(size=(n, 2)) * rng.uniform(1e-3, 3.0, size=(n, 1))
    p = rng.uniform(1.05, 1.999, n)
    eps = rng.uniform(0.0, 0.99, n)
    gap = flux.monotonicity_gap(xi, eta, p, eps)
    weight = flux.powf(eps ** 2 + np.sum(xi * xi, -1) + np.sum(eta * eta, -1),
                       (p - 2.0) / 2.0)
    lower_full = (p - 1.0) * np.sum((xi - eta) ** 2, -1) * weight
    violations = np.sum(gap < 0.5 * lower_full * (1 - 1e-10) - 1e-300)
    assert violations == 0
    live = lower_full > 0
    empirical = float((gap[live] / lower_full[live]).min())
    assert empirical > 0.5  # reported calibration headroom


def test_energy_density_convexity():
    rng = np.random.default_rng(10)
    d = data_const(p=1.5, q=2.5, a=0.5, b=0.5)
    x = rng.uniform(0.1, 0.9, size=(200, 2))
    xi = rng.normal(size=(200, 2)); eta = rng.normal(size=(200, 2))
    lam = rng.uniform(0, 1, size=200)
    mid = lam[:, None] * xi + (1 - lam[:, None]) * eta
    e_mid = flux.energy_density(x, 0.0, mid, 0.2, d)
    bound = (lam * flux.energy_density(x, 0.0, xi, 0.2, d)
             + (1 - lam) * flux.energy_density(x, 0.0, eta, 0.2, d))
    scale = np.maximum(1.0, np.abs(bound))
    assert np.all(e_mid <= bound + 1e-12 * scale)


def test_flux_params_invariants():
    with pytest.raises(ValueError):
        flux.FluxParams(eps=1.0)
    with pytest.raises(ValueError):
        flux.FluxParams(eps=0.1, s1=-0.5)
