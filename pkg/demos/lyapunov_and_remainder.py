"""Lyapunov exponent, Thouless integral and their difference.

For the free Laplacian both sides are known in closed form, so the
remainder ``R = lyapunov - thouless`` can be checked against its analytic
energy dependence. A Bernoulli potential is then treated with the
path-decay estimator and a finite-volume remainder.

Run with ``python3 demos/lyapunov_and_remainder.py``.
"""

import math

from bethe.ergodic import DisorderSpec
from bethe.thouless import (
    free_remainder,
    free_remainder_diff,
    lyapunov_path,
    remainder_finite_parts,
)

KAPPA = 2
ref = free_remainder(0.0, KAPPA)
print("free Laplacian, eta = 1e-3")
print(f"{'E':>5} {'lyapunov':>10} {'thouless':>10} {'R-R(0)':>10} {'closed':>10}")
for E in (0.0, 0.5, 1.0, 1.5, 2.5):
    r = free_remainder(E, KAPPA)
    print(f"{E:5.1f} {r.lyapunov:10.6f} {r.thouless:10.6f} {r.value - ref.value:10.6f} "
          f"{free_remainder_diff(0.0, E, KAPPA):10.6f}")

# kappa = 1 is the chain: the remainder is O(eta) and vanishes in the limit
for eta in (1e-3, 1e-5):
    print(f"chain remainder at E=0.7, eta={eta:.0e}: {free_remainder(0.7, 1, eta).value:.2e}")

spec = DisorderSpec.bernoulli(0.5, 1.0, seed=11)
z = complex(0.3, 0.05)
for L in (4, 6, 8, 10):
    est = lyapunov_path(spec, KAPPA, z, L, samples=16)
    print(f"bernoulli path decay L={L:3d}: {est.value:.5f} +- {est.stderr:.5f}")

parts = remainder_finite_parts(spec, KAPPA, z, 5)
print(f"finite-volume remainder R_5 at z={z}: {parts['R_L']:.6f}")
print(f"(1/2) log kappa = {0.5 * math.log(KAPPA):.6f}")
