"""Lattice shifts, covariant disorder and three Green's function routes.

Shows the case label of a few shifts, checks that the potential moves with
the shift, and evaluates one off-diagonal Green's function by a direct
sparse solve, by the walk series and by the self-avoiding-walk product.

Run with ``python3 demos/shifts_and_green.py``.
"""

from bethe.ergodic import DisorderRealization, DisorderSpec
from bethe.green import green_direct, green_rw, green_saw
from bethe.lattice import BetheLattice, format_vertex
from bethe.operator import Region, assemble

lat = BetheLattice(2)
x = (0, 1)
for y in [(), (0,), (0, 1), (2, 0, 1)]:
    print(f"tau_{format_vertex(x)}({format_vertex(y)}) = {format_vertex(lat.shift(x, y))}")

spec = DisorderSpec.uniform(1.0, seed=3)
omega = DisorderRealization.sample(lat, spec, 0)
moved = omega.shift(x)
ball = lat.ball(3)
ok = all(moved.potential_at(y) == omega.potential_at(lat.shift_inverse(x, y)) for y in ball)
print(f"covariance on ball(3): {ok}")

region = Region.ball(lat, 3)
H = assemble(region, omega)
a, b = (0, 1), (2, 0)
for z in (0.4 + 0.3j, 5j):
    d = green_direct(H, z, a, b)
    s = green_saw(region, omega, z, a, b)
    line = f"z={z}: direct {d:.10f}  saw {s:.10f}"
    if abs(z.imag) > lat.kappa + 1:
        g, bound = green_rw(H, z, a, b, 30)
        line += f"  rw {g:.10f} (bound {bound:.1e})"
    print(line)
