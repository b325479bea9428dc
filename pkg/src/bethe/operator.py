"""Finite-volume Hamiltonians ``H = A + V`` with Dirichlet restriction.

A :class:`Region` is an ordered vertex set in canonical order: a ball, a
rooted subtree, or either of these with vertices deleted. Deleting vertices
severs every edge touching them, so the resulting graph is a forest of
rooted trees. :func:`assemble` turns a region and a disorder realization
into a :class:`FiniteOperator` with unit hopping on lattice edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import integrate, linalg

from .ergodic import DisorderRealization
from .errors import NumericalError, SizeGuardError, ValidationError
from .forest import Forest
from .lattice import BetheLattice, Vertex, format_vertex

#: Largest matrix handed to dense eigensolvers.
MAX_DENSE = 20_000


@dataclass(frozen=True, eq=False)
class Region:
    """Ordered vertex set of the lattice.

    Attributes
    ----------
    lattice : BetheLattice
    vertices : tuple of Vertex
        Canonical order (level, then lexicographic).
    provenance : str
        Human-readable origin, e.g. ``"ball(3)"`` or
        ``"ball(3) minus {0,1}"``.
    """

    lattice: BetheLattice
    vertices: tuple[Vertex, ...]
    provenance: str
    _ball_radius: int | None = field(default=None, repr=False)

    @classmethod
    def ball(cls, lattice: BetheLattice, L: int, *, max_size: int | None = None) -> "Region":
        kw = {} if max_size is None else {"max_size": max_size}
        return cls(lattice, tuple(lattice.ball(L, **kw)), f"ball({L})", L)

    @classmethod
    def subtree(cls, lattice: BetheLattice, top: Vertex, depth: int) -> "Region":
        """Forward subtree of ``top`` with ``depth`` levels (``depth=1`` is ``top`` alone)."""
        top = lattice.validate(top)
        if depth < 1:
            raise ValidationError("depth must be at least 1")
        verts = [top]
        layer = [top]
        for _ in range(depth - 1):
            layer = [v + (c,) for v in layer for c in range(len(lattice.children(v)))]
            verts.extend(layer)
        return cls(lattice, tuple(verts), f"subtree({format_vertex(top)}, depth={depth})")

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, v) -> bool:
        return tuple(v) in self.position

    @cached_property
    def position(self) -> dict[Vertex, int]:
        """Map from vertex to its row index."""
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def levels(self) -> np.ndarray:
        return np.fromiter((len(v) for v in self.vertices), dtype=np.int64, count=len(self))

    @cached_property
    def parent_index(self) -> np.ndarray:
        """Row of each vertex's lattice parent, or -1 if absent."""
        if self._ball_radius is not None:
            k = self.lattice.kappa
            idx = np.arange(len(self), dtype=np.int64)
            lv = self.levels
            out = np.full(len(self), -1, dtype=np.int64)
            out[lv == 1] = 0
            deep = lv >= 2
            # rank within level l is idx - offset(l); the parent rank is rank // kappa
            offs = np.array([self.lattice.level_offset(l) for l in range(self._ball_radius + 1)])
            rank = idx[deep] - offs[lv[deep]]
            out[deep] = offs[lv[deep] - 1] + rank // k
            return out
        pos = self.position
        return np.fromiter(
            (pos.get(v[:-1], -1) if v else -1 for v in self.vertices), dtype=np.int64, count=len(self)
        )

    @cached_property
    def forest(self) -> Forest:
        return Forest(self.parent_index, self.levels)

    def index_of(self, v: Vertex) -> int:
        try:
            return self.position[self.lattice.validate(v)]
        except KeyError:
            raise ValidationError(f"vertex {format_vertex(v)} is not in {self.provenance}") from None

    def edges(self) -> np.ndarray:
        """Array of ``(child, parent)`` row pairs, one per edge."""
        par = self.parent_index
        child = np.flatnonzero(par >= 0)
        return np.stack([child, par[child]], axis=1)

    def component_tops(self) -> list[Vertex]:
        """Top vertex of each connected component."""
        return [self.vertices[i] for i in np.flatnonzero(self.parent_index < 0)]

    def connected(self, x: Vertex, y: Vertex) -> bool:
        """True if ``x`` and ``y`` lie in the same component."""
        par = self.parent_index

        def top(i):
            while par[i] >= 0:
                i = par[i]
            return i

        return top(self.index_of(x)) == top(self.index_of(y))


def delete_vertices(region: Region, removed: Iterable[Vertex]) -> Region:
    """Region with the given vertices (and their edges) removed.

    Raises
    ------
    ValidationError
        If some vertex to remove is not in the region.
    """
    removed = {region.lattice.validate(v) for v in removed}
    if not removed:
        return region
    missing = [v for v in removed if v not in region.position]
    if missing:
        raise ValidationError(f"cannot delete {format_vertex(missing[0])}: not in {region.provenance}")
    keep = tuple(v for v in region.vertices if v not in removed)
    names = ", ".join("{" + format_vertex(v) + "}" for v in sorted(removed, key=lambda v: (len(v), v))[:4])
    more = " ..." if len(removed) > 4 else ""
    return Region(region.lattice, keep, f"{region.provenance} minus {names}{more}")


@dataclass(frozen=True, eq=False)
class FiniteOperator:
    """Restricted Hamiltonian ``P (A + V) P`` on a region.

    Attributes
    ----------
    region : Region
    potential : ndarray
        Diagonal, one entry per region vertex in canonical order.
    """

    region: Region
    potential: np.ndarray

    def __post_init__(self):
        pot = np.asarray(self.potential, dtype=float)
        if pot.shape != (len(self.region),):
            raise ValidationError("potential length does not match the region")
        pot.setflags(write=False)
        object.__setattr__(self, "potential", pot)

    @property
    def lattice(self) -> BetheLattice:
        return self.region.lattice

    @property
    def size(self) -> int:
        return len(self.region)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency as a sparse matrix."""
        e = self.region.edges()
        n = self.size
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))

    def sparse(self) -> sp.csr_matrix:
        """``H`` as a sparse matrix."""
        return (self.adjacency + sp.diags(self.potential)).tocsr()

    def dense(self, *, max_size: int = MAX_DENSE) -> np.ndarray:
        """``H`` as a dense array (size-guarded)."""
        _guard(self.size, max_size)
        return self.sparse().toarray()

    def adjacency_norm_bound(self) -> int:
        """Degree bound ``kappa + 1`` on the adjacency norm."""
        return self.lattice.kappa + 1

    def dump_coo(self, path) -> None:
        """Write the upper triangle as ``row col value`` lines."""
        m = sp.triu(self.sparse()).tocoo()
        order = np.lexsort((m.col, m.row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("row,col,value\n")
            for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
                fh.write(f"{r},{c},{v:.17g}\n")


def _guard(n: int, max_size: int) -> None:
    if n > max_size:
        raise SizeGuardError(f"dense solve of size {n} exceeds the limit {max_size}")


def assemble(region: Region, omega: DisorderRealization) -> FiniteOperator:
    """Build ``H`` on ``region`` with potential ``omega``.

    Raises
    ------
    ValidationError
        For an empty region or a lattice mismatch.
    """
    if len(region) == 0:
        raise ValidationError("cannot assemble an operator on an empty region")
    if region.lattice != omega.lattice:
        raise ValidationError("region and realization use different lattices")
    if region._ball_radius is not None and not omega.shifts and not omega.is_homogeneous:
        lat = region.lattice
        pot = np.concatenate(
            [omega.level_potentials(l, 0, lat.level_size(l)) for l in range(region._ball_radius + 1)]
        )
    else:
        pot = omega.potentials(region.vertices)
    return FiniteOperator(region, pot)


def eigenvalues(H: FiniteOperator, *, max_size: int = MAX_DENSE) -> np.ndarray:
    """Full ascending spectrum by a dense symmetric solver."""
    return linalg.eigvalsh(H.dense(max_size=max_size))


def eigensystem(H: FiniteOperator, *, max_size: int = MAX_DENSE) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and orthonormal eigenvectors (columns)."""
    return linalg.eigh(H.dense(max_size=max_size))


def trace_log_abs(H: FiniteOperator, z: complex, *, method: str = "auto", tol: float = 1e-12) -> float:
    """``sum_k log|lambda_k - z| = log|det(H - z)|``.

    Parameters
    ----------
    method : {"auto", "tree", "eigen"}
        ``tree`` uses the exact forest recursion and needs ``Im z != 0``;
        ``eigen`` diagonalizes densely. ``auto`` picks ``tree`` off the real
        axis.

    Raises
    ------
    NumericalError
        If ``z`` lies within ``tol`` of an eigenvalue.
    """
    z = complex(z)
    if method == "auto":
        method = "tree" if z.imag != 0 else "eigen"
    if method == "tree":
        if z.imag == 0:
            raise ValidationError("tree route requires Im z != 0")
        return H.region.forest.log_abs_det(H.potential, z)
    if method != "eigen":
        raise ValidationError(f"unknown method {method!r}")
    lam = eigenvalues(H)
    gap = np.abs(lam - z)
    if gap.min() <= tol * max(1.0, abs(z)):
        raise NumericalError(f"z={z} coincides with an eigenvalue")
    return float(np.sum(np.log(gap)))


def log_abs_diagonal(
    H: FiniteOperator,
    z: complex,
    rows: Sequence[int] | None = None,
    *,
    method: str = "auto",
    epsabs: float = 1e-13,
) -> np.ndarray:
    """Diagonal entries of ``log|H - z|`` at the given rows.

    ``method="eigen"`` uses the spectral decomposition. ``method="resolvent"``
    writes ``z = E + i eta`` and integrates the diagonal resolvent along the
    vertical line above ``z``::

        log|H - z|_vv = log(eta) + int_eta^inf (1/t - Im G(E + i t; v, v)) dt,

    which needs only the O(N) tree recursion per node. ``auto`` takes the
    eigen route for matrices up to 2000 rows.
    """
    z = complex(z)
    rows = np.arange(H.size) if rows is None else np.asarray(rows, dtype=np.int64)
    if method == "auto":
        method = "eigen" if H.size <= 2000 else "resolvent"
    if method == "eigen":
        lam, vec = eigensystem(H)
        return (vec[rows] ** 2) @ np.log(np.abs(lam - z))
    if method != "resolvent":
        raise ValidationError(f"unknown method {method!r}")
    E, eta = z.real, abs(z.imag)
    if eta == 0:
        raise ValidationError("resolvent route requires Im z != 0")
    forest = H.region.forest

    def integrand(u):
        # t = eta / u maps (0, 1] onto [eta, inf)
        if u == 0:
            return np.zeros(rows.size)
        t = eta / u
        g = forest.diagonal(H.potential, complex(E, t))[rows]
        return (1.0 - t * g.imag) / u

    val, err = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=epsabs, epsrel=1e-13, norm="max", limit=2000)
    if not np.all(np.isfinite(val)) or err > 1e3 * max(epsabs, 1e-13 * np.max(np.abs(val))):
        raise NumericalError(f"log-diagonal quadrature did not converge (error estimate {err:.2e})")
    return np.log(eta) + val
