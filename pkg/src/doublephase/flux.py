"""Pointwise algebra of the regularized double-phase flux.

The regularization replaces |xi|^2 by ``beta_eps(xi) = eps^2 + |xi|^2``.  The
shifted flux density is

    density(z, xi) = a(z) beta_eps^((p+s1-2)/2) + b(z) beta_eps^((q+s2-2)/2),

the flux vector is ``density * xi`` (with shifts s1 = s2 = 0), and the energy
density ``(a/p) beta_eps^(p/2) + (b/q) beta_eps^(q/2)`` has the flux vector as
its xi-gradient.  All kernels are pure functions of arrays and are safe to
call from any number of workers.

Evaluation policy at the degenerate point (eps = 0, xi = 0): the flux vector
and the monotonicity gap extend continuously by zero, while the raw density
refuses queries whose effective exponent is negative with a nonzero
coefficient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .fields import ExponentData


class FluxSingularityError(ValueError):
    """Raw density queried at a genuinely singular point (eps=0, xi=0, negative exponent)."""


def powf(base, exponent):
    """Elementwise base**exponent for nonnegative bases and real exponents.

    Equivalent to exp(exponent*log(base)) with the IEEE conventions
    0**e = 0 (e > 0), 0**0 = 1, 0**e = inf (e < 0); overflow yields inf
    silently.  Variable exponents preclude integer fast paths.
    """
    with np.errstate(over="ignore", divide="ignore"):
        return np.power(np.asarray(base, dtype=float), exponent)


def beta_eps(xi, eps) -> np.ndarray:
    """beta_eps(xi) = eps^2 + |xi|^2 for xi of shape (..., N)."""
    xi = np.asarray(xi, dtype=float)
    return np.asarray(eps, dtype=float) ** 2 + np.sum(xi * xi, axis=-1)


def _term(coef, exponent, beta, *, what: str):
    """coef * beta**exponent with the zero-coefficient and singularity rules."""
    scalar = np.ndim(beta) == 0
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    coef = np.broadcast_to(np.asarray(coef, dtype=float), beta.shape)
    exponent = np.broadcast_to(np.asarray(exponent, dtype=float), beta.shape)
    singular = (beta == 0.0) & (exponent < 0.0) & (coef != 0.0)
    if np.any(singular):
        raise FluxSingularityError(
            f"{what}: beta_eps = 0 with negative effective exponent; "
            "use the flux vector, which extends by zero"
        )
    out = np.zeros_like(beta)
    live = coef != 0.0
    out[live] = coef[live] * powf(beta[live], exponent[live])
    return out[0] if scalar else out


def density_kernel(a, b, p, q, xi, eps, s1=0.0, s2=0.0) -> np.ndarray:
    """Shifted flux density a*beta^((p+s1-2)/2) + b*beta^((q+s2-2)/2)."""
    beta = beta_eps(xi, eps)
    return (_term(a, (np.asarray(p) + s1 - 2.0) / 2.0, beta, what="density p-term")
            + _term(b, (np.asarray(q) + s2 - 2.0) / 2.0, beta, what="density q-term"))


def vector_kernel(a, b, p, q, xi, eps) -> np.ndarray:
    """Flux vector density*xi, extended by zero where beta_eps vanishes.

    The extension is continuous because |xi|^(p-1) -> 0 as xi -> 0 for any
    p > 1, and likewise for q.
    """
    xi = np.asarray(xi, dtype=float)
    scalar = xi.ndim == 1
    if scalar:
        xi = xi[None, :]
    beta = beta_eps(xi, eps)
    out = np.zeros_like(xi)
    live = beta > 0.0
    if np.any(live):
        sub = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float),
                                  np.asarray(p, float), np.asarray(q, float), beta)
        a_, b_, p_, q_, beta_ = (s[live] for s in sub)
        dens = (_term(a_, (p_ - 2.0) / 2.0, beta_, what="vector p-term")
                + _term(b_, (q_ - 2.0) / 2.0, beta_, what="vector q-term"))
        out[live] = dens[..., None] * xi[live]
    return out[0] if scalar else out


def jacobian_kernel(a, b, p, q, xi, eps) -> np.ndarray:
    """xi-derivative of the flux vector, shape (..., N, N).

    Equals density*I + (a(p-2)beta^((p-4)/2) + b(q-2)beta^((q-4)/2)) xi xi^T,
    the Hessian of the convex energy density, hence symmetric positive
    semidefinite.  Requires eps > 0.
    """
    if not np.all(np.asarray(eps) > 0):
        raise ValueError("flux jacobian requires eps > 0")
    xi = np.asarray(xi, dtype=float)
    beta = beta_eps(xi, eps)
    dens = density_kernel(a, b, p, q, xi, eps)
    rank1 = (_term(np.asarray(a, float) * (np.asarray(p, float) - 2.0),
                   (np.asarray(p, float) - 4.0) / 2.0, beta, what="jacobian p-term")
             + _term(np.asarray(b, float) * (np.asarray(q, float) - 2.0),
                     (np.asarray(q, float) - 4.0) / 2.0, beta, what="jacobian q-term"))
    n = xi.shape[-1]
    eye = np.eye(n)
    return dens[..., None, None] * eye + rank1[..., None, None] * (xi[..., :, None] * xi[..., None, :])


def energy_kernel(a, b, p, q, xi, eps) -> np.ndarray:
    """Energy density (a/p) beta^(p/2) + (b/q) beta^(q/2)."""
    beta = beta_eps(xi, eps)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return (_term(np.asarray(a, float) / p, p / 2.0, beta, what="energy p-term")
            + _term(np.asarray(b, float) / q, q / 2.0, beta, what="energy q-term"))


def monotonicity_gap(xi, eta, p_val, eps) -> np.ndarray:
    """Monotonicity gap (gamma(xi)xi - gamma(eta)eta) . (xi - eta).

    gamma is beta_eps^((p-2)/2).  Nonnegative for all p > 1 and eps in [0,1);
    for p >= 2 it dominates (gamma(xi)+gamma(eta))|xi-eta|^2 / 2.  At eps = 0
    the products gamma(.)*(.) extend by zero at the origin.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    p_val = np.asarray(p_val, dtype=float)
    ones = np.ones(np.broadcast_shapes(xi.shape[:-1], eta.shape[:-1], p_val.shape))
    fx = vector_kernel(ones, 0.0 * ones, p_val, 2.0, xi, eps)
    fe = vector_kernel(ones, 0.0 * ones, p_val, 2.0, eta, eps)
    return np.sum((fx - fe) * (xi - eta), axis=-1)


def gap_lower_bound(xi, eta, p_val, eps) -> np.ndarray:
    """The p >= 2 branch lower bound (gamma(xi)+gamma(eta))|xi-eta|^2 / 2."""
    beta_x = beta_eps(xi, eps)
    beta_e = beta_eps(eta, eps)
    p_val = np.asarray(p_val, dtype=float)
    gx = powf(beta_x, (p_val - 2.0) / 2.0)
    ge = powf(beta_e, (p_val - 2.0) / 2.0)
    diff = np.sum((np.asarray(xi, float) - np.asarray(eta, float)) ** 2, axis=-1)
    return 0.5 * (gx + ge) * diff


def sum_power_constant(p: float) -> float:
    """C_p with (s+t)^(p-2) <= C_p (s^(p-2) + t^(p-2)) for s,t >= 0, p >= 2."""
    return max(1.0, 2.0 ** (p - 3.0))


def log_inequality_constant(mu: float, zeta: float) -> float:
    """Constant C with |xi|^zeta |ln|xi|| <= C (1 + |xi|^(zeta+mu)).

    Both branch suprema, sup_{t>=1} t^(-mu) ln t and sup_{t<1} t^mu |ln t|,
    are maxima of u*exp(-mu*u) over u >= 0; computed numerically once.
    """
    if not (0.0 < mu < zeta):
        raise ValueError("need 0 < mu < zeta")
    res = optimize.minimize_scalar(lambda u: -u * np.exp(-mu * u),
                                   bounds=(0.0, 200.0 / mu), method="bounded")
    return float(-res.fun)


def null_eps_branch_bound(a, b, p, q, eps, s1=0.0, s2=0.0) -> np.ndarray:
    """Small-gradient branch bound a(2eps^2)^((p+s1)/2) + b(2eps^2)^((q+s2)/2).

    On |xi| <= eps one has beta_eps <= 2 eps^2, so density*beta_eps is bounded
    by this constant; on |xi| > eps it is bounded by 2*density*|xi|^2.
    """
    two_eps_sq = 2.0 * np.asarray(eps, dtype=float) ** 2
    return (np.asarray(a, float) * powf(two_eps_sq, (np.asarray(p, float) + s1) / 2.0)
            + np.asarray(b, float) * powf(two_eps_sq, (np.asarray(q, float) + s2) / 2.0))


@dataclass(frozen=True)
class FluxParams:
    """Regularization eps and the shift exponents selecting a shifted density."""

    eps: float
    s1: float = 0.0
    s2: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.eps < 1.0):
            raise ValueError("eps must lie in [0, 1)")
        if self.s1 < 0 or self.s2 < 0:
            raise ValueError("shift exponents must be nonnegative")


def _fields_at(data: ExponentData, x, t):
    return data.a(x, t), data.b(x, t), data.p(x, t), data.q(x, t)


def flux_density(x, t, xi, params: FluxParams, data: ExponentData) -> np.ndarray:
    """Shifted flux density at space-time points (x, t) and gradients xi."""
    a, b, p, q = _fields_at(data, x, t)
    return density_kernel(a, b, p, q, xi, params.eps, params.s1, params.s2)


def flux_vector(x, t, xi, eps, data: ExponentData) -> np.ndarray:
    """Flux vector at space-time points, extended by zero at the origin."""
    a, b, p, q = _fields_at(data, x, t)
    return vector_kernel(a, b, p, q, xi, eps)


def flux_jacobian(x, t, xi, eps, data: ExponentData) -> np.ndarray:
    """xi-Jacobian of the flux vector at space-time points (eps > 0)."""
    a, b, p, q = _fields_at(data, x, t)
    return jacobian_kernel(a, b, p, q, xi, eps)


def energy_density(x, t, xi, eps, data: ExponentData) -> np.ndarray:
    """Convex energy density whose xi-gradient is the flux vector."""
    a, b, p, q = _fields_at(data, x, t)
    return energy_kernel(a, b, p, q, xi, eps)
