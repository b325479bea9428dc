"""Exact Schur-complement recursion on forests.

Any vertex subset of the lattice induces a forest. Each component has a
unique top vertex whose lattice parent lies outside the subset, so the
forest is fully described by a parent-index array in canonical vertex order
(``-1`` marks a component top). With that order, vertices of one level form
a contiguous block and children of a common parent are adjacent.

For ``H = A + diag(V)`` on such a forest and ``z`` off the real axis:

* the upward pass computes ``M_v = 1 / (V_v - z - sum_c M_c)``, the diagonal
  resolvent of the subtree hanging below ``v``;
* at a component top ``M`` equals the full diagonal Green function, and the
  downward pass propagates it to every vertex;
* ``log|det(H - z)| = -sum_v log|M_v|``.

All routines accept a scalar ``z`` or a 1-D array of spectral parameters; in
the latter case arrays carry a trailing axis over ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class _Block:
    start: int
    stop: int
    # positions (relative to start) of vertices whose parent is present
    linked: np.ndarray
    # parent indices of the linked vertices, and reduceat boundaries
    parents: np.ndarray
    uniq_parents: np.ndarray
    bounds: np.ndarray


class Forest:
    """Precomputed level structure for repeated recursions.

    Parameters
    ----------
    parent : ndarray of int
        Parent index of each vertex, ``-1`` for component tops. Parents must
        precede their children.
    levels : ndarray of int
        Lattice level of each vertex, nondecreasing.
    """

    def __init__(self, parent: np.ndarray, levels: np.ndarray):
        parent = np.asarray(parent, dtype=np.int64)
        levels = np.asarray(levels, dtype=np.int64)
        n = parent.size
        if levels.size != n:
            raise ValidationError("parent and level arrays differ in length")
        if n and np.any(np.diff(levels) < 0):
            raise ValidationError("vertices must be sorted by level")
        idx = np.arange(n)
        linked = parent >= 0
        if np.any(parent[linked] >= idx[linked]):
            raise ValidationError("parents must precede their children")
        self.size = n
        self.parent = parent
        cuts = np.flatnonzero(np.diff(levels)) + 1
        edges = np.concatenate([[0], cuts, [n]]).astype(np.int64)
        blocks = []
        for s, e in zip(edges[:-1], edges[1:]):
            pos = np.flatnonzero(parent[s:e] >= 0)
            par = parent[s:e][pos]
            if par.size and np.any(np.diff(par) < 0):
                raise ValidationError("children of a parent must be contiguous and ordered")
            uniq, first = np.unique(par, return_index=True)
            blocks.append(_Block(int(s), int(e), pos, par, uniq, first))
        self.blocks = blocks

    def _sum_children(self, M: np.ndarray, S: np.ndarray, b: _Block) -> None:
        if b.linked.size:
            vals = M[b.start : b.stop][b.linked]
            S[b.uniq_parents] += np.add.reduceat(vals, b.bounds, axis=0)

    def upward(self, potential: np.ndarray, z) -> np.ndarray:
        """Subtree diagonal resolvents ``M_v`` for all vertices."""
        V = np.asarray(potential, dtype=float)
        z = np.asarray(z, dtype=complex)
        shape = (self.size,) + z.shape
        Vb = V.reshape((-1,) + (1,) * z.ndim)
        M = np.empty(shape, dtype=complex)
        S = np.zeros(shape, dtype=complex)
        with np.errstate(divide="raise", invalid="raise"):
            try:
                for b in reversed(self.blocks):
                    M[b.start : b.stop] = 1.0 / (Vb[b.start : b.stop] - z - S[b.start : b.stop])
                    self._sum_children(M, S, b)
            except FloatingPointError as exc:
                raise NumericalError("zero pivot in the tree recursion; z is an eigenvalue") from exc
        return M

    def diagonal(self, potential: np.ndarray, z, M: np.ndarray | None = None) -> np.ndarray:
        """Full diagonal ``G(z; v, v)`` of the resolvent on the forest."""
        if M is None:
            M = self.upward(potential, z)
        G = np.array(M, copy=True)
        for b in self.blocks:
            if b.linked.size:
                rows = b.start + b.linked
                m = M[rows]
                g_parent_cut = 1.0 / (1.0 / G[b.parents] + m)
                G[rows] = 1.0 / (1.0 / m - g_parent_cut)
        return G

    def log_abs_det(self, potential: np.ndarray, z, M: np.ndarray | None = None) -> np.ndarray | float:
        """``log|det(H - z)|`` from the pivots of the upward pass."""
        if M is None:
            M = self.upward(potential, z)
        out = -np.sum(np.log(np.abs(M)), axis=0)
        return float(out) if np.ndim(out) == 0 else out


def homogeneous_levels(c, z, kappa: int, depth: int) -> list:
    """Subtree values of a constant potential on a rooted tree of ``depth`` levels.

    Element ``t`` is ``M`` for a vertex whose subtree has ``t + 1`` levels
    (leaves first), each vertex having ``kappa`` forward children. Plain
    arithmetic only, so ``z`` may be an ``mpmath`` number.
    """
    if depth < 1:
        raise ValidationError("depth must be at least 1")
    out = [1 / (c - z)]
    for _ in range(depth - 1):
        out.append(1 / (c - z - kappa * out[-1]))
    return out


def homogeneous_ball_root(c, z, kappa: int, L: int):
    """Root diagonal Green function of a constant potential on ``ball(L)``."""
    if L == 0:
        return 1 / (c - z)
    m = homogeneous_levels(c, z, kappa, L)[-1]
    return 1 / (c - z - (kappa + 1) * m)
