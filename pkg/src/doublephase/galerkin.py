"""Spectral Galerkin semidiscretization and implicit time stepping.

The approximating solutions are sine series u(x,t) = sum_j c_j(t) phi_j(x)
over the Dirichlet-Laplacian eigenbasis of the unit box, with coefficients
solving the projected gradient-flow system

    c_j' = - int_Omega F_eps(z, grad u) grad u . grad phi_j dx
           + int_Omega f phi_j dx .

Each implicit Euler step is a convex proximal problem (the energy density is
convex in the gradient for eps > 0) solved by damped Newton with the exact
flux Jacobian; the per-step discrete energy inequality then holds up to the
Newton tolerance and is recorded per step.  Exponents and coefficients are
frozen at the step's end time inside the solve, keeping each step a single
convex minimization.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import flux
from .fields import ExponentData, Field
from .spaces import QuadratureGrid, tensor_gauss_legendre

_CHUNK = 4096


class StepFailure(RuntimeError):
    """Newton failed to converge on one implicit step."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class SolverError(RuntimeError):
    """A solve aborted; carries the partial trajectory."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Sine eigenbasis of the Dirichlet Laplacian on (0,1)^N.

    Modes are the full tensor set {1..m_per_dim}^N sorted by eigenvalue then
    lexicographic index; phi_k(x) = 2^(N/2) prod_i sin(k_i pi x_i) with
    eigenvalue pi^2 |k|^2.  L2-orthonormal, and (grad phi_i, grad phi_j)
    = lambda_i delta_ij.
    """

    dim: int
    m_per_dim: int
    modes: np.ndarray        # (m, N) int
    eigenvalues: np.ndarray  # (m,)

    @property
    def size(self) -> int:
        return self.modes.shape[0]

    def _trig(self, x):
        angles = np.pi * x[:, None, :] * self.modes[None, :, :]
        return np.sin(angles), np.cos(angles)

    def values(self, x) -> np.ndarray:
        """Basis values at points x (M, N) -> (M, m), chunked over points."""
        return self._chunked(x, self._values_chunk)

    def gradients(self, x) -> np.ndarray:
        """Basis gradients at points x -> (M, N, m)."""
        return self._chunked(x, self._gradients_chunk)

    def hessians(self, x) -> np.ndarray:
        """Basis second derivatives at points x -> (M, N, N, m)."""
        return self._chunked(x, self._hessians_chunk)

    def _chunked(self, x, fn):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        parts = [fn(x[i:i + _CHUNK]) for i in range(0, x.shape[0], _CHUNK)]
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)

    def _values_chunk(self, x):
        s, _ = self._trig(x)
        return 2.0 ** (self.dim / 2.0) * np.prod(s, axis=-1)

    def _gradients_chunk(self, x):
        s, c = self._trig(x)
        norm = 2.0 ** (self.dim / 2.0)
        kpi = np.pi * self.modes.T  # (N, m)
        out = np.empty((x.shape[0], self.dim, self.size))
        for d in range(self.dim):
            prod = norm * kpi[d] * c[:, :, d]
            for l in range(self.dim):
                if l != d:
                    prod = prod * s[:, :, l]
            out[:, d, :] = prod
        return out

    def _hessians_chunk(self, x):
        s, c = self._trig(x)
        norm = 2.0 ** (self.dim / 2.0)
        kpi = np.pi * self.modes.T
        vals = norm * np.prod(s, axis=-1)
        out = np.empty((x.shape[0], self.dim, self.dim, self.size))
        for d in range(self.dim):
            out[:, d, d, :] = -(kpi[d] ** 2) * vals
            for e in range(d + 1, self.dim):
                prod = norm * kpi[d] * kpi[e] * c[:, :, d] * c[:, :, e]
                for l in range(self.dim):
                    if l != d and l != e:
                        prod = prod * s[:, :, l]
                out[:, d, e, :] = prod
                out[:, e, d, :] = prod
        return out


def build_basis(dim: int, m_per_dim: int) -> EigenBasis:
    """Assemble the sorted tensor sine basis with m_per_dim modes per axis."""
    if m_per_dim < 1:
        raise ValueError("m_per_dim must be at least 1")
    grids = np.meshgrid(*([np.arange(1, m_per_dim + 1)] * dim), indexing="ij")
    modes = np.stack([g.ravel() for g in grids], axis=-1)
    lam = np.pi ** 2 * np.sum(modes.astype(float) ** 2, axis=-1)
    order = np.lexsort(tuple(modes[:, d] for d in reversed(range(dim))) + (lam,))
    modes = modes[order]
    return EigenBasis(dim=dim, m_per_dim=m_per_dim, modes=modes,
                      eigenvalues=np.pi ** 2 * np.sum(modes.astype(float) ** 2, axis=-1))


@dataclass(frozen=True, eq=False)
class SpectralState:
    """Galerkin coefficient vector at one instant."""

    t: float
    coeffs: np.ndarray
    basis: EigenBasis

    def __post_init__(self):
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("spectral coefficients must be finite")

    def l2_norm_sq(self) -> float:
        return float(self.coeffs @ self.coeffs)


def evaluate(state: SpectralState, points) -> tuple[np.ndarray, np.ndarray]:
    """Exact evaluation of the sine series and its gradient at points.

    Points must lie in the closed unit box.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if np.any(x < -1e-12) or np.any(x > 1.0 + 1e-12):
        raise ValueError("evaluation points must lie in the closed unit box")
    u = state.basis.values(x) @ state.coeffs
    grad = np.tensordot(state.basis.gradients(x), state.coeffs, axes=([2], [0]))
    return u, grad


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and Newton parameters for one solve."""

    m_per_dim: int
    eps: float
    tau: float
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    max_damping_halvings: int = 20
    tau_retry_cap: int = 4
    quad_order: Optional[int] = None
    output_cadence: int = 1

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("time step must be positive")
        if self.eps <= 0:
            raise ValueError("the implicit solver needs eps > 0; the degenerate "
                             "limit is reached by continuation only")

    @property
    def resolved_quad_order(self) -> int:
        # Oversampled: integrands are non-polynomial powers of spectral
        # fields; +10 is the empirical margin that keeps the basis Gram
        # matrix at identity to 1e-10 under this rule.
        return self.quad_order or (2 * self.m_per_dim + 10)


class Workspace:
    """Precomputed basis matrices on the solver quadrature grid."""

    def __init__(self, basis: EigenBasis, grid: QuadratureGrid, data: ExponentData):
        self.basis = basis
        self.grid = grid
        self.data = data
        self.x = grid.space_nodes
        self.w = grid.space_weights
        self.phi = basis.values(self.x)          # (M, m)
        self.grad_phi = basis.gradients(self.x)  # (M, N, m)
        self._field_cache: dict = {}

    def fields_at(self, t: float):
        key = round(float(t), 15)
        if key not in self._field_cache:
            d = self.data
            self._field_cache[key] = (d.a(self.x, t), d.b(self.x, t),
                                      d.p(self.x, t), d.q(self.x, t))
            if len(self._field_cache) > 8:
                self._field_cache.pop(next(iter(self._field_cache)))
        return self._field_cache[key]

    def gradient_of(self, coeffs) -> np.ndarray:
        return np.tensordot(self.grad_phi, coeffs, axes=([2], [0]))

    def source_vector(self, f_field: Field, t: float) -> np.ndarray:
        return self.phi.T @ (self.w * f_field(self.x, t))


def project_initial(u0: Field, basis: EigenBasis, grid: QuadratureGrid) -> SpectralState:
    """L2 projection of the initial datum onto the first m eigenfunctions."""
    vals = u0(grid.space_nodes, 0.0)
    if not np.all(np.isfinite(vals)):
        raise ValueError("initial datum is not finite on the quadrature nodes")
    coeffs = basis.values(grid.space_nodes).T @ (grid.space_weights * vals)
    return SpectralState(t=0.0, coeffs=coeffs, basis=basis)


def ode_rhs(state: SpectralState, t: float, eps: float, data: ExponentData,
            f_field: Field, ws: Workspace) -> np.ndarray:
    """Right-hand side of the coefficient ODE system at time t."""
    a, b, p, q = ws.fields_at(t)
    grad_u = ws.gradient_of(state.coeffs)
    fvec = flux.vector_kernel(a, b, p, q, grad_u, eps)
    stiff = np.einsum("mn,mnj->j", ws.w[:, None] * fvec, ws.grad_phi)
    return -stiff + ws.source_vector(f_field, t)


@dataclass
class StepStats:
    newton_iters: int
    residual_norm: float
    energy_slack: float
    ut_sq_increment: float  # tau * ||(U' - U)/tau||^2


def step_implicit(state: SpectralState, tau: float, eps: float, data: ExponentData,
                  f_field: Field, cfg: SolverConfig, ws: Workspace) -> tuple[SpectralState, StepStats]:
    """One damped-Newton implicit Euler step from state.t to state.t + tau.

    Solves V = U + tau*rhs(V, t+tau), which minimizes the convex per-step
    functional  ||V-U||^2/2 + tau*(int energy_density(grad v) - int f v).
    Damping halves the Newton step until the residual decreases.
    """
    t1 = state.t + tau
    u = state.coeffs
    a, b, p, q = ws.fields_at(t1)
    f_vec = ws.source_vector(f_field, t1)
    w = ws.w

    def residual(v):
        grad_v = ws.gradient_of(v)
        fvec = flux.vector_kernel(a, b, p, q, grad_v, eps)
        stiff = np.einsum("mn,mnj->j", w[:, None] * fvec, ws.grad_phi)
        return v - u + tau * (stiff - f_vec), grad_v, fvec

    tol = cfg.newton_tol * (1.0 + np.linalg.norm(u))
    v = u.copy()
    res, grad_v, fvec = residual(v)
    norm_res = np.linalg.norm(res)
    trace = [norm_res]
    eye = np.eye(len(u))
    for it in range(cfg.newton_max_iter):
        if norm_res <= tol:
            break
        jac_flux = flux.jacobian_kernel(a, b, p, q, grad_v, eps)
        jac = eye + tau * np.einsum("map,mab,mbq->pq", ws.grad_phi,
                                    w[:, None, None] * jac_flux, ws.grad_phi,
                                    optimize=True)
        delta = np.linalg.solve(jac, -res)
        alpha = 1.0
        for _ in range(cfg.max_damping_halvings):
            cand = v + alpha * delta
            res_c, grad_c, fvec_c = residual(cand)
            norm_c = np.linalg.norm(res_c)
            if norm_c < norm_res:
                break
            alpha *= 0.5
        else:
            raise StepFailure(f"damping exhausted at t={t1:.6g}", trace)
        v, res, grad_v, fvec, norm_res = cand, res_c, grad_c, fvec_c, norm_c
        trace.append(norm_res)
    else:
        raise StepFailure(f"newton did not converge at t={t1:.6g}", trace)

    flux_energy = float(w @ np.sum(fvec * grad_v, axis=-1))
    source_work = float(f_vec @ v)
    slack = (v @ v - u @ u) / (2.0 * tau) + flux_energy - source_work
    stats = StepStats(newton_iters=len(trace) - 1, residual_norm=norm_res,
                      energy_slack=slack, ut_sq_increment=float((v - u) @ (v - u)) / tau)
    return SpectralState(t=t1, coeffs=v, basis=state.basis), stats


@dataclass(eq=False)
class Trajectory:
    """A computed trajectory plus the per-step bookkeeping diagnostics need."""

    data: ExponentData
    cfg: SolverConfig
    eps: float
    basis: EigenBasis
    grid: QuadratureGrid          # spatial solver quadrature
    times: np.ndarray             # (K+1,)
    coeffs: np.ndarray            # (K+1, m)
    ut_sq_accum: np.ndarray       # (K+1,) running sum of tau*||u_t||^2
    newton_iters: np.ndarray
    newton_residual: np.ndarray
    energy_slack: np.ndarray      # per-checkpoint proximal inequality slack
    f_descriptor: dict = field(default_factory=dict)
    _grad_cache: Optional[np.ndarray] = None

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def state(self, k: int) -> SpectralState:
        return SpectralState(t=float(self.times[k]), coeffs=self.coeffs[k], basis=self.basis)

    def gradients_on_grid(self) -> np.ndarray:
        """Gradients at all checkpoints on the solver grid, (K+1, M, N)."""
        if self._grad_cache is None:
            gp = self.basis.gradients(self.grid.space_nodes)
            self._grad_cache = np.einsum("mnj,kj->kmn", gp, self.coeffs)
        return self._grad_cache

    def values_on_grid(self) -> np.ndarray:
        phi = self.basis.values(self.grid.space_nodes)
        return self.coeffs @ phi.T

    def spacetime_grid(self) -> QuadratureGrid:
        return self.grid.with_time(self.times)


def solve(cfg: SolverConfig, data: ExponentData, u0: Field, f_field: Field,
          validate: bool = True) -> Trajectory:
    """March the implicit scheme over [0, T] and record the trajectory.

    Deterministic for a fixed configuration.  A failed step is retried on
    halved substeps up to cfg.tau_retry_cap splittings; a step that still
    fails aborts the solve with the partial trajectory attached.
    """
    if validate:
        data.validate().raise_if_failed()
    basis = build_basis(data.dim, cfg.m_per_dim)
    grid = tensor_gauss_legendre(data.dim, cfg.resolved_quad_order)
    ws = Workspace(basis, grid, data)

    n_steps = max(1, int(round(data.horizon / cfg.tau)))
    tau = data.horizon / n_steps
    state = project_initial(u0, basis, grid)

    times = [0.0]
    coeffs = [state.coeffs.copy()]
    ut_accum = [0.0]
    iters = [0]
    residuals = [0.0]
    slacks = [0.0]
    running_ut = 0.0

    def advance(s, dt, depth):
        nonlocal running_ut
        try:
            new, st = step_implicit(s, dt, cfg.eps, data, f_field, cfg, ws)
        except StepFailure:
            if depth >= cfg.tau_retry_cap:
                raise
            half, st1 = advance(s, dt / 2.0, depth + 1)
            full, st2 = advance(half, dt / 2.0, depth + 1)
            merged = StepStats(
                newton_iters=st1.newton_iters + st2.newton_iters,
                residual_norm=max(st1.residual_norm, st2.residual_norm),
                energy_slack=st1.energy_slack + st2.energy_slack,
                ut_sq_increment=st1.ut_sq_increment + st2.ut_sq_increment)
            return full, merged
        return new, st

    for k in range(n_steps):
        try:
            state, st = advance(state, tau, 0)
        except StepFailure as exc:
            partial = Trajectory(
                data=data, cfg=cfg, eps=cfg.eps, basis=basis, grid=grid,
                times=np.asarray(times), coeffs=np.asarray(coeffs),
                ut_sq_accum=np.asarray(ut_accum), newton_iters=np.asarray(iters),
                newton_residual=np.asarray(residuals), energy_slack=np.asarray(slacks),
                f_descriptor=dict(getattr(f_field, "descriptor", {})))
            raise SolverError(f"step {k + 1}/{n_steps} failed: {exc}", partial) from exc
        running_ut += st.ut_sq_increment
        if (k + 1) % cfg.output_cadence == 0 or (k + 1) == n_steps:
            times.append(state.t)
            coeffs.append(state.coeffs.copy())
            ut_accum.append(running_ut)
            iters.append(st.newton_iters)
            residuals.append(st.residual_norm)
            slacks.append(st.energy_slack)

    return Trajectory(
        data=data, cfg=cfg, eps=cfg.eps, basis=basis, grid=grid,
        times=np.asarray(times), coeffs=np.asarray(coeffs),
        ut_sq_accum=np.asarray(ut_accum), newton_iters=np.asarray(iters),
        newton_residual=np.asarray(residuals), energy_slack=np.asarray(slacks),
        f_descriptor=dict(getattr(f_field, "descriptor", {})))


def _field_spatial_gradient(fld: Field, x, t, h: float = 1e-6) -> np.ndarray:
    """Central-difference spatial gradient of a field; families are entire
    expressions, so probing slightly outside the box is safe."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for d in range(x.shape[1]):
        xp = x.copy(); xp[:, d] += h
        xm = x.copy(); xm[:, d] -= h
        out[:, d] = (fld(xp, t) - fld(xm, t)) / (2.0 * h)
    return out


def mode_value_grad_hess(k, x):
    """phi_k, grad phi_k, hess phi_k at points x for one mode k (analytic)."""
    x = np.asarray(x, dtype=float)
    k = np.asarray(k, dtype=int)
    dim = len(k)
    norm = 2.0 ** (dim / 2.0)
    ang = np.pi * x * k
    s, c = np.sin(ang), np.cos(ang)
    val = norm * np.prod(s, axis=-1)
    grad = np.empty_like(x)
    hess = np.empty(x.shape[:-1] + (dim, dim))
    for d in range(dim):
        prod = norm * np.pi * k[d] * c[..., d]
        for l in range(dim):
            if l != d:
                prod = prod * s[..., l]
        grad[..., d] = prod
        hess[..., d, d] = -(np.pi * k[d]) ** 2 * val
        for e in range(d + 1, dim):
            pr = norm * (np.pi * k[d]) * (np.pi * k[e]) * c[..., d] * c[..., e]
            for l in range(dim):
                if l != d and l != e:
                    pr = pr * s[..., l]
            hess[..., d, e] = pr
            hess[..., e, d] = pr
    return val, grad, hess


def manufactured_source(data: ExponentData, eps: float, mode=(1, 1),
                        amplitude: float = 1.0, rate: float = 1.0) -> Field:
    """Forcing that makes u = amplitude * e^(-rate*t) * phi_mode exact.

    Computes f = u_t - div(F_eps(z, grad u) grad u) pointwise from the flux
    kernels and the analytic derivatives of the single-mode solution.  Since
    the exact solution stays inside the Galerkin span, the semidiscrete
    system reproduces it up to time-discretization error only.
    """
    if eps <= 0:
        raise ValueError("manufactured source needs eps > 0")
    mode = tuple(int(m) for m in mode)

    def fn(x, t):
        decay = amplitude * np.exp(-rate * np.asarray(t, dtype=float))
        val, grad, hess = mode_value_grad_hess(mode, x)
        u = decay * val
        gu = np.atleast_1d(decay)[..., None] * grad
        hu = np.atleast_1d(decay)[..., None, None] * hess

        a, b = data.a(x, t), data.b(x, t)
        p, q = data.p(x, t), data.q(x, t)
        beta = flux.beta_eps(gu, eps)
        dens = flux.density_kernel(a, b, p, q, gu, eps)
        lap = np.trace(hu, axis1=-2, axis2=-1)

        grad_a = _field_spatial_gradient(data.a, x, t)
        grad_b = _field_spatial_gradient(data.b, x, t)
        grad_p = _field_spatial_gradient(data.p, x, t)
        grad_q = _field_spatial_gradient(data.q, x, t)
        beta_x = 2.0 * np.einsum("...ij,...j->...i", hu, gu)
        log_beta = np.log(beta)

        ta = flux.powf(beta, (p - 2.0) / 2.0)
        tb = flux.powf(beta, (q - 2.0) / 2.0)
        grad_f = (grad_a * ta[..., None]
                  + (a * ta)[..., None] * (0.5 * grad_p * log_beta[..., None]
                                           + (0.5 * (p - 2.0) / beta)[..., None] * beta_x)
                  + grad_b * tb[..., None]
                  + (b * tb)[..., None] * (0.5 * grad_q * log_beta[..., None]
                                           + (0.5 * (q - 2.0) / beta)[..., None] * beta_x))
        div_flux = dens * lap + np.sum(grad_f * gu, axis=-1)
        return -rate * u - div_flux

    desc = {"family": "manufactured", "mode": list(mode),
            "amplitude": amplitude, "rate": rate, "eps": eps}
    return Field(dim=data.dim, descriptor=desc, _fn=fn)
