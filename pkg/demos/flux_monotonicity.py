"""Probe the pointwise flux algebra: monotonicity gaps and convexity.

Draws random gradient pairs and exponents, reports the worst monotonicity
gap (never negative), the p >= 2 branch constant realized empirically, and
the convexity defect of the energy density (never positive).
"""
import numpy as np

from doublephase import flux

rng = np.random.default_rng(7)
n = 200_000
xi = rng.normal(scale=1.5, size=(n, 2))
eta = rng.normal(scale=1.5, size=(n, 2))
p = rng.uniform(1.05, 4.5, n)
eps = rng.uniform(0.0, 0.99, n)

gap = flux.monotonicity_gap(xi, eta, p, eps)
print(f"monotonicity gap: min over {n} draws = {gap.min():.3e}  (>= 0)")

mask = p >= 2.0
lower = flux.gap_lower_bound(xi, eta, p, eps)
ratio = gap[mask] / np.maximum(lower[mask], 1e-300)
print(f"p >= 2 branch: min gap / quadratic-lower-bound ratio = {ratio.min():.6f}  (>= 1)")

# realized constant in |xi-eta|^p <= 2 C_p * gap for p = 3
g3 = flux.monotonicity_gap(xi, eta, 3.0, 0.0)
d3 = np.sum((xi - eta) ** 2, axis=-1) ** 1.5
live = g3 > 0
print(f"p = 3 power bound: sup |xi-eta|^3 / gap = {(d3[live] / g3[live]).max():.6f}  "
      f"(<= 2 C_3 = {2 * flux.sum_power_constant(3.0)})")

# convexity of the energy density along random chords
a = rng.uniform(0.1, 1.0, n); b = rng.uniform(0.1, 1.0, n)
q = rng.uniform(1.05, 4.5, n)
lam = rng.uniform(0, 1, n)
mid = lam[:, None] * xi + (1 - lam[:, None]) * eta
defect = (flux.energy_kernel(a, b, p, q, mid, 0.2)
          - lam * flux.energy_kernel(a, b, p, q, xi, 0.2)
          - (1 - lam) * flux.energy_kernel(a, b, p, q, eta, 0.2))
print(f"energy convexity defect: max = {defect.max():.3e}  (<= 0 up to roundoff)")
