"""Green-function engines on finite regions and rooted trees.

Four independent routes to ``G(z; x, y) = <x|(H - z)^{-1}|y>``:

``green_direct``
    sparse LU solve with a residual check (optionally in mpmath);
``green_rw``
    partial sums of the Neumann series in the hopping, i.e. the sum over
    all walks, with its geometric error bound;
``green_saw``
    the single self-avoiding path product available on a tree, each factor
    a diagonal Green function on the region with the earlier path vertices
    removed;
``m_recursive``
    the rooted-tree continued fraction for the diagonal Green function of a
    forward subtree (the Weyl m-function).

``m_free_closed`` gives the zero-potential m-function in closed form.
"""

from __future__ import annotations

import cmath
import math
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ergodic import DisorderRealization
from .errors import NumericalError, SizeGuardError, ValidationError
from .forest import homogeneous_levels
from .lattice import BetheLattice, Vertex, format_vertex
from .operator import FiniteOperator, Region, assemble, delete_vertices

#: Largest number of vertices processed by one rooted recursion.
MAX_TREE_VERTICES = 1 << 23
#: Largest matrix for the arbitrary-precision routes.
MAX_MP_SIZE = 600


def _require_offaxis(z: complex) -> complex:
    z = complex(z)
    if z.imag == 0:
        raise ValidationError("Im z must be nonzero")
    return z


def _mp():
    import mpmath

    return mpmath


def green_direct(H: FiniteOperator, z: complex, x: Vertex, y: Vertex, *, dps: int | None = None,
                 residual_tol: float = 1e-12):
    """``G(z; x, y)`` by solving ``(H - z) g = delta_y``.

    Parameters
    ----------
    dps : int, optional
        If given, solve densely in ``mpmath`` with this many decimal digits
        and return an ``mpc``.

    Raises
    ------
    NumericalError
        If the relative residual exceeds ``residual_tol``.
    """
    z = _require_offaxis(z)
    i, j = H.region.index_of(x), H.region.index_of(y)
    if dps is not None:
        return _direct_mp(H, z, i, j, dps)
    A = (H.sparse() - z * sp.identity(H.size, format="csr")).tocsc()
    b = np.zeros(H.size, dtype=complex)
    b[j] = 1.0
    g = spla.spsolve(A, b)
    res = np.linalg.norm(A @ g - b) / max(1e-300, spla.norm(A, 1) * np.linalg.norm(g) + 1.0)
    if not np.all(np.isfinite(g)) or res > residual_tol:
        raise NumericalError(f"linear solve residual {res:.2e} exceeds {residual_tol:.0e}")
    return complex(g[i])


def _direct_mp(H: FiniteOperator, z: complex, i: int, j: int, dps: int):
    mp = _mp()
    if H.size > MAX_MP_SIZE:
        raise SizeGuardError(f"mpmath solve of size {H.size} exceeds {MAX_MP_SIZE}")
    with mp.workdps(dps):
        zz = mp.mpc(z.real, z.imag)
        A = mp.matrix(H.size, H.size)
        for r, v in enumerate(H.potential):
            A[r, r] = mp.mpf(float(v)) - zz
        for c, p in H.region.edges():
            A[int(c), int(p)] = 1
            A[int(p), int(c)] = 1
        b = mp.matrix(H.size, 1)
        b[j] = 1
        g = mp.lu_solve(A, b)
        return +g[i]


def rw_error_bound(kappa: int, z: complex, n_terms: int) -> float:
    """Tail bound ``(1/|Im z|) ((kappa+1)/|Im z|)**n_terms`` of the walk series."""
    eta = abs(complex(z).imag)
    return (1.0 / eta) * ((kappa + 1) / eta) ** n_terms


def green_rw(H: FiniteOperator, z: complex, x: Vertex, y: Vertex, n_terms: int, *,
             dps: int | None = None, partials: bool = False):
    """Walk-expansion partial sum of ``G(z; x, y)``.

    Computes ``sum_{n < n_terms} <x| [-(V - z)^{-1} A]^n (V - z)^{-1} |y>``
    by repeated sparse products.

    Parameters
    ----------
    n_terms : int
        Number of series terms (walk lengths ``0 .. n_terms-1``).
    dps : int, optional
        Work in ``mpmath`` with this precision; needed when the requested
        error bound lies below double-precision resolution.
    partials : bool
        Return all partial sums and bounds for ``1 .. n_terms`` terms.

    Returns
    -------
    value, error_bound
        Scalars, or arrays of length ``n_terms`` when ``partials`` is set.

    Raises
    ------
    ValidationError
        Unless ``|Im z| > kappa + 1``, the adjacency norm bound.
    """
    z = complex(z)
    kappa = H.lattice.kappa
    if not abs(z.imag) > kappa + 1:
        raise ValidationError(
            f"walk expansion needs |Im z| > kappa+1 = {kappa + 1} (norm bound of the hopping), got {abs(z.imag)}"
        )
    if n_terms < 1:
        raise ValidationError("n_terms must be at least 1")
    i, j = H.region.index_of(x), H.region.index_of(y)
    bounds = np.array([rw_error_bound(kappa, z, n) for n in range(1, n_terms + 1)])
    if dps is None:
        inv = 1.0 / (H.potential - z)
        A = H.adjacency
        v = np.zeros(H.size, dtype=complex)
        v[j] = inv[j]
        sums = np.empty(n_terms, dtype=complex)
        acc = 0j
        for n in range(n_terms):
            acc += v[i]
            sums[n] = acc
            v = -inv * (A @ v)
    else:
        sums = _rw_mp(H, z, i, j, n_terms, dps)
    if partials:
        return sums, bounds
    return sums[-1], float(bounds[-1])


def _rw_mp(H: FiniteOperator, z: complex, i: int, j: int, n_terms: int, dps: int) -> list:
    mp = _mp()
    if H.size > MAX_MP_SIZE:
        raise SizeGuardError(f"mpmath walk sum of size {H.size} exceeds {MAX_MP_SIZE}")
    nbrs: list[list[int]] = [[] for _ in range(H.size)]
    for c, p in H.region.edges():
        nbrs[int(c)].append(int(p))
        nbrs[int(p)].append(int(c))
    with mp.workdps(dps):
        zz = mp.mpc(z.real, z.imag)
        inv = [1 / (mp.mpf(float(v)) - zz) for v in H.potential]
        v = [mp.mpc(0)] * H.size
        v[j] = inv[j]
        sums, acc = [], mp.mpc(0)
        for _ in range(n_terms):
            acc += v[i]
            sums.append(+acc)
            v = [-inv[r] * mp.fsum(v[c] for c in nbrs[r]) for r in range(H.size)]
    return sums


def tree_path(lattice: BetheLattice, x: Vertex, y: Vertex) -> list[Vertex]:
    """Unique lattice path from ``x`` to ``y`` (both endpoints included)."""
    x, y = lattice.validate(x), lattice.validate(y)
    common = 0
    for a, b in zip(x, y):
        if a != b:
            break
        common += 1
    up = [x[:n] for n in range(len(x), common, -1)]
    down = [y[:n] for n in range(common, len(y) + 1)]
    return up + down


def green_saw(region: Region, omega: DisorderRealization, z: complex, x: Vertex, y: Vertex) -> complex:
    """``G(z; x, y)`` as a signed product of decoupled diagonal factors.

    With ``gamma`` the path from x to y, the value is
    ``(-1)**|gamma| * prod_k G_{region minus gamma[:k]}(z; gamma_k, gamma_k)``.
    Each factor comes from the exact forest recursion on the region with the
    earlier path vertices deleted.

    Raises
    ------
    ValidationError
        If ``x == y`` or the endpoints are not connected within the region.
    """
    z = _require_offaxis(z)
    lat = region.lattice
    x, y = lat.validate(x), lat.validate(y)
    if x == y:
        raise ValidationError("the path factorization needs distinct endpoints")
    region.index_of(x), region.index_of(y)
    path = tree_path(lat, x, y)
    if any(v not in region.position for v in path):
        raise ValidationError(f"{format_vertex(x)} and {format_vertex(y)} are not connected in {region.provenance}")
    H = assemble(region, omega)
    log_mod, phase = 0.0, 1.0 + 0j
    for k, v in enumerate(path):
        sub = delete_vertices(region, path[:k])
        keep = np.fromiter((region.position[u] for u in sub.vertices), dtype=np.int64, count=len(sub))
        g = sub.forest.diagonal(H.potential[keep], z)[sub.position[v]]
        log_mod += math.log(abs(g))
        phase *= g / abs(g)
    sign = -1 if (len(path) - 1) % 2 else 1
    return sign * phase * math.exp(log_mod)


# -- rooted recursion ----------------------------------------------------------


def subtree_m_block(omega: DisorderRealization, z, level: int, start: int, count: int, depth: int,
                    *, max_vertices: int = MAX_TREE_VERTICES) -> np.ndarray:
    """M-functions of ``count`` consecutive forward subtrees.

    The tops are the vertices of ``level`` (>= 1) with ranks
    ``start .. start+count-1``; each subtree keeps ``depth`` levels. The
    subtree of rank ``r`` occupies ranks ``[r k**s, (r+1) k**s)`` at
    ``level + s``, which makes every level a contiguous slice.

    Returns an array of shape ``(count,) + shape(z)``.
    """
    if level < 1:
        raise ValidationError("subtree tops must lie at level >= 1")
    if depth < 1:
        raise ValidationError("depth must be at least 1")
    k = omega.lattice.kappa
    z = np.asarray(z, dtype=complex)
    if omega.is_homogeneous:
        m = homogeneous_levels(omega.spec.constant_value(), z, k, depth)[-1]
        return np.broadcast_to(m, (count,) + z.shape).copy()
    total = count * (depth if k == 1 else (k**depth - 1) // (k - 1))
    if total > max_vertices:
        raise SizeGuardError(f"rooted recursion over {total} vertices exceeds {max_vertices}")
    tail = (1,) * z.ndim
    bottom = level + depth - 1
    scale = k ** (depth - 1)
    V = omega.level_potentials(bottom, start * scale, count * scale).reshape((-1,) + tail)
    M = 1.0 / (V - z)
    for s in range(depth - 2, -1, -1):
        scale //= k
        S = M.reshape((count * scale, k) + z.shape).sum(axis=1)
        V = omega.level_potentials(level + s, start * scale, count * scale).reshape((-1,) + tail)
        M = 1.0 / (V - z - S)
    return M


def m_recursive(omega: DisorderRealization, z, child: Vertex, depth: int):
    """Diagonal Green function at ``child`` of its forward subtree.

    The subtree is truncated after ``depth`` levels and evaluated bottom-up
    with ``M = 1/(V - z - sum_c M_c)``; leaves use ``1/(V - z)``.

    Parameters
    ----------
    child : Vertex
        Any non-root vertex; its subtree is the component left after
        deleting its parent.
    z : complex or ndarray
        Spectral parameter(s) with positive imaginary part.
    """
    lat = omega.lattice
    child = lat.validate(child)
    if not child:
        raise ValidationError("the root is not a forward neighbour of any vertex")
    if depth < 1:
        raise ValidationError("depth must be at least 1")
    zz = np.asarray(z, dtype=complex)
    if np.any(zz.imag <= 0):
        raise ValidationError("m_recursive needs Im z > 0")
    out = subtree_m_block(omega, zz, len(child), lat.rank(child), 1, depth)[0]
    return complex(out) if out.ndim == 0 else out


def ball_root_green(omega: DisorderRealization, z, L: int, *, max_vertices: int = MAX_TREE_VERTICES):
    """``G_{ball(L)}(z; root, root)`` by the recursion split at the root."""
    lat = omega.lattice
    zz = np.asarray(z, dtype=complex)
    v0 = omega.potential_at(())
    if L == 0:
        out = 1.0 / (v0 - zz)
    else:
        kids = subtree_m_block(omega, zz, 1, 0, lat.kappa + 1, L, max_vertices=max_vertices)
        out = 1.0 / (v0 - zz - kids.sum(axis=0))
    return complex(out) if out.ndim == 0 else out


def m_free_closed(z: complex, kappa: int) -> complex:
    """Herglotz root of ``kappa M**2 + z M + 1 = 0``.

    For real ``z`` strictly inside ``(-2 sqrt(kappa), 2 sqrt(kappa))`` the
    boundary value from the upper half-plane is returned.

    Raises
    ------
    ValidationError
        For ``Im z < 0`` or real ``z`` outside the open band, where the limit
        is real and no longer a Herglotz value.
    """
    z = complex(z)
    if kappa < 1:
        raise ValidationError("kappa must be at least 1")
    if z.imag < 0:
        raise ValidationError("m_free_closed needs Im z >= 0")
    if z.imag == 0:
        edge = 2 * math.sqrt(kappa)
        if not abs(z.real) < edge:
            raise ValidationError(f"real z={z.real} lies outside the open band (-{edge}, {edge})")
        return complex(-z.real, math.sqrt(4 * kappa - z.real**2)) / (2 * kappa)
    r1 = (-z + cmath.sqrt(z * z - 4 * kappa)) / (2 * kappa)
    r2 = 1 / (kappa * r1)
    return r1 if r1.imag > 0 else r2


def herglotz_bounds(E: float, eps: float, norm: float) -> tuple[float, float]:
    """Two-sided bounds on ``Im G(E + i eps; x, x)`` for ``||H|| <= norm``."""
    return eps / (eps**2 + (abs(E) + norm) ** 2), 1.0 / eps
