"""Vanishing-regularization study on the slow-diffusion scenario.

Solves along a halving regularization sequence and prints the consecutive
gradient modulars d_k (which must decrease: the trajectories form a Cauchy
sequence toward the degenerate problem) and the monotonicity pairings.
"""
from dataclasses import replace

from doublephase import diagnostics as dg
from doublephase.runner import load_config

config = load_config("scenarios/plap_slow.yaml")
eps_seq = [1e-1 * 0.5 ** k for k in range(5)]
cfg = replace(config.solver, tau=2.5e-3)
rep = dg.eps_continuation_study(cfg, config.data, config.initial,
                                config.source_field(), eps_seq)

print("pair                    d_k = int |grad(u_k - u_k+1)|^s_lower    pairing")
for k, (d, g) in enumerate(zip(rep.distances, rep.pairings)):
    print(f"eps {eps_seq[k]:8.3g} -> {eps_seq[k + 1]:8.3g}   {d:24.6e}   {g:12.4e}")
print(f"\nmonotone decay: {rep.monotone}; the finest member stands in for the "
      "degenerate solution")
