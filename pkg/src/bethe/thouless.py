"""Lyapunov exponents and the remainder of the modified Thouless formula.

The Lyapunov exponent ``L(z) = -E log|M_0(z)|`` is estimated two ways:
from the m-function at a child of the root (``lyapunov_mc``), and from the
decay of ``G(z; gamma_0, gamma_{L-1})`` along a root path inside the doubled
ball (``lyapunov_path``). On a tree that Green function is a product of
decoupled diagonal factors, so its logarithm is a sum.

The remainder ``R(z) = L(z) - int log|E - z| dn(E)`` is available

* per realization in finite volume (``remainder_finite``), from the traces
  of ``log|H - z|`` off the path and on the path-deleted operator;
* from separately estimated ingredients (``remainder_from_parts``);
* for the free Laplacian up to a constant, in closed form
  (``free_remainder_diff``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .ergodic import DisorderRealization, DisorderSpec
from .errors import SizeGuardError, ValidationError
from .forest import homogeneous_ball_root, homogeneous_levels
from .green import MAX_TREE_VERTICES, green_saw, m_free_closed, m_recursive
from .lattice import BetheLattice, Vertex, format_vertex, is_spine_word
from .operator import MAX_DENSE, Region, assemble, delete_vertices, log_abs_diagonal, trace_log_abs
from .parallel import map_samples, mean_and_stderr
from .spectral import DosEstimate, KestenMcKay, thouless_integral

#: Largest doubled ball handled by the resolvent route of ``remainder_finite``.
MAX_REMAINDER_SIZE = 200_000


@dataclass(frozen=True)
class LyapunovEstimate:
    """A Lyapunov exponent estimate with its provenance.

    ``size`` is the recursion depth for ``mc_m_function`` and the path
    length ``L`` for ``path_decay``.
    """

    z: complex
    value: float
    stderr: float
    method: str
    size: int
    samples: int
    seed: int
    kappa: int
    disorder: dict = field(default_factory=dict)

    @property
    def eta(self) -> float:
        return self.z.imag

    def to_record(self) -> dict[str, Any]:
        return {
            "z_re": self.z.real,
            "z_im": self.z.imag,
            "eta": self.eta,
            "kappa": self.kappa,
            "L_or_depth": self.size,
            "samples": self.samples,
            "seed": self.seed,
            "value": self.value,
            "stderr": self.stderr,
            "method": self.method,
        }


@dataclass(frozen=True)
class RemainderEstimate:
    """``R(z) = lyapunov - thouless`` with its ingredients."""

    z: complex
    value: float
    stderr: float
    lyapunov: float
    thouless: float
    kappa: int
    finite: dict[int, float] = field(default_factory=dict)

    def to_record(self) -> dict[str, Any]:
        rec = asdict(self)
        rec["z_re"], rec["z_im"] = self.z.real, self.z.imag
        del rec["z"]
        return rec


def _check_z(z) -> complex:
    z = complex(z)
    if not z.imag > 0:
        raise ValidationError("Im z must be positive")
    return z


def _realizations(lat: BetheLattice, spec: DisorderSpec, samples: int):
    if samples < 1:
        raise ValidationError("samples must be at least 1")
    return lambda i: DisorderRealization.sample(lat, spec, i)


def _estimate(values, z, method, size, samples, spec, kappa) -> LyapunovEstimate:
    mean, err = mean_and_stderr(values)
    return LyapunovEstimate(z, mean, err, method, size, samples, spec.seed, kappa, spec.to_record())


def lyapunov_mc(spec: DisorderSpec, kappa: int, z: complex, depth: int, samples: int = 1, j: int = 0,
                *, threads: int = 1) -> LyapunovEstimate:
    """``-mean log|M|`` at the child ``(0, j)`` of the root.

    Each realization contributes the depth-truncated m-function
    :func:`~bethe.green.m_recursive`; the standard error comes from the
    sample variance.
    """
    z = _check_z(z)
    lat = BetheLattice(kappa)
    if depth < 10:
        raise ValidationError("depth must be at least 10")
    if not 0 <= j <= kappa:
        raise ValidationError(f"j must lie in 0..{kappa}")
    real = _realizations(lat, spec, samples)
    vals = map_samples(lambda i: -math.log(abs(m_recursive(real(i), z, (j,), depth))), samples, threads)
    return _estimate(vals, z, "mc_m_function", depth, samples, spec, kappa)


def _validate_path(lat: BetheLattice, path: Sequence[Vertex], L: int) -> list[Vertex]:
    path = [lat.validate(v) for v in path]
    if len(path) != L:
        raise ValidationError(f"path has {len(path)} vertices, expected L={L}")
    for k, v in enumerate(path):
        if len(v) != k or v[: k - 1] != (path[k - 1] if k else ()):
            raise ValidationError(f"path vertex {k} ({format_vertex(v)}) does not extend its predecessor")
    if L > 1 and not is_spine_word(lat.exponents_of(path[-1])):
        warnings.warn("path is not a spine path; representativeness is not guaranteed", stacklevel=3)
    return path


def ball_level_m(omega: DisorderRealization, z: complex, R: int, *, max_vertices: int = MAX_TREE_VERTICES):
    """Subtree m-functions of every vertex of ``ball(R)``, level by level.

    Returns ``(g_root, levels)`` where ``levels[l]`` (``1 <= l <= R``) holds
    the values of level ``l`` in rank order and ``g_root`` is the full root
    diagonal.
    """
    lat = omega.lattice
    k = lat.kappa
    if lat.ball_size(R) > max_vertices:
        raise SizeGuardError(f"ball({R}) exceeds {max_vertices} vertices")
    levels: list[np.ndarray] = [np.empty(0)] * (R + 1)
    S = np.zeros(lat.level_size(R), dtype=complex)
    for l in range(R, 0, -1):
        V = omega.level_potentials(l, 0, lat.level_size(l))
        levels[l] = 1.0 / (V - z - S)
        if l > 1:
            S = levels[l].reshape(-1, k).sum(axis=1)
    total = levels[1].sum() if R else 0.0
    g_root = 1.0 / (omega.potential_at(()) - z - total)
    return g_root, levels


def path_factors(omega: DisorderRealization, z: complex, path: Sequence[Vertex], R: int) -> np.ndarray:
    """Decoupled diagonal factors along a root path inside ``ball(R)``.

    Factor 0 is the full root diagonal; factor ``k >= 1`` is the diagonal at
    ``gamma_k`` once ``gamma_0 .. gamma_{k-1}`` are removed, i.e. the
    m-function of its forward subtree.
    """
    lat = omega.lattice
    if omega.is_homogeneous:
        c = omega.spec.constant_value()
        ms = homogeneous_levels(c, z, lat.kappa, R) if R else []
        out = [homogeneous_ball_root(c, z, lat.kappa, R)]
        out += [ms[R - len(v)] for v in path[1:]]
        return np.array(out, dtype=complex)
    g_root, levels = ball_level_m(omega, z, R)
    return np.array([g_root] + [levels[len(v)][lat.rank(v)] for v in path[1:]], dtype=complex)


def lyapunov_path(spec: DisorderSpec, kappa: int, z: complex, L: int, path: Sequence[Vertex] | None = None,
                  samples: int = 1, *, threads: int = 1) -> LyapunovEstimate:
    """Decay rate ``-(1/L) log|G_{ball(2L)}(z; gamma_0, gamma_{L-1})|``.

    The Green function is evaluated as the product of decoupled diagonal
    factors along the path. The default path is the spine with first digit
    0.
    """
    z = _check_z(z)
    lat = BetheLattice(kappa)
    if L < 1:
        raise ValidationError("L must be at least 1")
    path = lat.spine_path(0, L) if path is None else _validate_path(lat, path, L)
    real = _realizations(lat, spec, samples)

    def one(i: int) -> float:
        f = path_factors(real(i), z, path, 2 * L)
        return -float(np.sum(np.log(np.abs(f)))) / L

    vals = [one(0)] * samples if spec.is_homogeneous else map_samples(one, samples, threads)
    return _estimate(vals, z, "path_decay", L, samples, spec, kappa)


def free_lyapunov(z: complex, kappa: int, *, band_limit: bool = False) -> LyapunovEstimate:
    """Free-Laplacian Lyapunov exponent.

    ``-log|M(z)|`` with the closed-form m-function, or its real-axis limit
    ``(1/2) log kappa`` inside the band when ``band_limit`` is set.
    """
    z = complex(z)
    if band_limit:
        if not abs(z.real) < 2 * math.sqrt(kappa):
            raise ValidationError("band limit needs |Re z| < 2 sqrt(kappa)")
        value = 0.5 * math.log(kappa)
    else:
        value = -math.log(abs(m_free_closed(z, kappa)))
    zero = DisorderSpec.zero()
    return LyapunovEstimate(z, value, 0.0, "free_closed", 0, 1, zero.seed, kappa, zero.to_record())


def remainder_finite_parts(spec: DisorderSpec, kappa: int, z: complex, L: int,
                           path: Sequence[Vertex] | None = None, sample: int = 0, *,
                           method: str = "auto", max_size: int = MAX_REMAINDER_SIZE) -> dict[str, float]:
    """All terms of the finite-volume remainder for one realization.

    With ``B = ball(2L)``, ``gamma`` the path and ``P`` projections:

    ``R_L = (1/L) [tr(P_{B - gamma} log|H_B - z|) - tr log|H_{B - gamma} - z|]``.

    Also returned are ``path_trace = (1/L) tr(P_gamma log|H_B - z|)`` and
    ``log_decay = -(1/L) log|G_B(z; gamma_0, gamma_{L-1})|`` (path
    product), which satisfy ``log_decay = path_trace + R_L``.

    Parameters
    ----------
    method : {"auto", "eigen", "resolvent"}
        Route for the diagonal of ``log|H - z|``, see
        :func:`~bethe.operator.log_abs_diagonal`. ``eigen`` is limited to
        the dense guard.
    """
    z = _check_z(z)
    lat = BetheLattice(kappa)
    if L < 1:
        raise ValidationError("L must be at least 1")
    R = 2 * L
    size = lat.ball_size(R)
    limit = MAX_DENSE if method == "eigen" else max_size
    if size > limit:
        raise SizeGuardError(f"ball({R}) has {size} vertices, limit is {limit}")
    path = lat.spine_path(0, L) if path is None else _validate_path(lat, path, L)
    omega = DisorderRealization.sample(lat, spec, sample)
    region = Region.ball(lat, R)
    H = assemble(region, omega)
    diag = log_abs_diagonal(H, z, method=method)
    on_path = np.zeros(len(region), dtype=bool)
    on_path[[region.index_of(v) for v in path]] = True
    cut = assemble(delete_vertices(region, path), omega)
    logdet_cut = trace_log_abs(cut, z)
    off_trace = float(np.sum(diag[~on_path]))
    path_trace = float(np.sum(diag[on_path]))
    if L == 1:
        g = path_factors(omega, z, path, R)[0]
    else:
        g = green_saw(region, omega, z, path[0], path[-1])
    return {
        "R_L": (off_trace - logdet_cut) / L,
        "path_trace": path_trace / L,
        "log_decay": -math.log(abs(g)) / L,
        "logdet_full": trace_log_abs(H, z),
        "logdet_cut": logdet_cut,
        "trace_full": off_trace + path_trace,
    }


def remainder_finite(spec: DisorderSpec, kappa: int, z: complex, L: int, path: Sequence[Vertex] | None = None,
                     seed: int = 0, **kw) -> float:
    """Finite-volume remainder ``R_L`` of realization number ``seed``."""
    return remainder_finite_parts(spec, kappa, z, L, path, seed, **kw)["R_L"]


def extrapolate_in_L(Ls: Sequence[int], values: Sequence[float], *, alternating: bool = True) -> float:
    """Intercept of a least-squares fit ``R_L = R + (a + b (-1)**L) / L``.

    The alternating term absorbs the even/odd oscillation that appears near
    band-center energies; set ``alternating=False`` for a plain ``1/L`` fit.
    """
    Ls = np.asarray(Ls, dtype=float)
    cols = [np.ones_like(Ls), 1.0 / Ls]
    if alternating:
        cols.append((-1.0) ** Ls / Ls)
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, np.asarray(values, dtype=float), rcond=None)
    return float(coef[0])


def remainder_from_parts(kappa: int, z: complex, dos, lyap: LyapunovEstimate) -> RemainderEstimate:
    """``R(z) = L(z) - int log|E - z| dn(E)`` from separate estimates.

    Raises
    ------
    ValidationError
        If the inputs disagree on ``kappa``, on the disorder, or on ``z``.
    """
    z = complex(z)
    if lyap.kappa != kappa:
        raise ValidationError(f"Lyapunov estimate is for kappa={lyap.kappa}, not {kappa}")
    if isinstance(dos, KestenMcKay):
        dos_kappa, dos_disorder = dos.kappa, DisorderSpec.zero().to_record()
    elif isinstance(dos, DosEstimate):
        dos_kappa, dos_disorder = dos.kappa, dos.disorder
    else:
        raise ValidationError("dos must be a DosEstimate or KestenMcKay")
    if dos_kappa != kappa:
        raise ValidationError(f"density is for kappa={dos_kappa}, not {kappa}")
    strip = lambda rec: {k: v for k, v in rec.items() if k != "vertex"}
    if dos_disorder and lyap.disorder and strip(dos_disorder) != strip(lyap.disorder):
        raise ValidationError("density and Lyapunov estimate come from different disorder")
    if abs(lyap.z.real - z.real) > 1e-12:
        raise ValidationError("Lyapunov estimate is for a different energy")
    t = thouless_integral(dos, z)
    return RemainderEstimate(z, lyap.value - t, lyap.stderr, lyap.value, t, kappa)


def free_remainder_diff(z1: complex, z2: complex, kappa: int) -> float:
    """``R(z2) - R(z1) = ((kappa-1)/4) log|((kappa+1)^2 - z2^2) / ((kappa+1)^2 - z1^2)|``.

    Raises
    ------
    ValidationError
        If either point sits at a pole ``+-(kappa+1)``.
    """
    a = (kappa + 1) ** 2
    d1, d2 = a - complex(z1) ** 2, a - complex(z2) ** 2
    if d1 == 0 or d2 == 0:
        raise ValidationError(f"pole at z = +-{kappa + 1}")
    return (kappa - 1) / 4 * math.log(abs(d2 / d1))


def free_remainder(z: complex, kappa: int, eta: float = 1e-3) -> RemainderEstimate:
    """Free-Laplacian remainder at ``Re z + i eta`` with analytic inputs."""
    zz = complex(complex(z).real, eta)
    return remainder_from_parts(kappa, zz, KestenMcKay(kappa), free_lyapunov(zz, kappa, band_limit=True))


def fit_free_remainder_constant(kappa: int, energies: Sequence[float], eta: float = 1e-3) -> float:
    """Mean offset ``C0`` of the free remainder from its nonconstant part."""
    a = (kappa + 1) ** 2
    offs = [free_remainder(E, kappa, eta).value - (kappa - 1) / 4 * math.log(abs(a - E * E)) for E in energies]
    return float(np.mean(offs))


def remainder_scaling_check(z: complex, kappas: Sequence[int], eta: float = 1e-3) -> list[dict[str, float]]:
    """Table of the free remainder against ``kappa``.

    Only the ``kappa = 1`` row is constrained (it must vanish); the other
    rows are reported together with the fitted constant ``C0``.
    """
    rows = []
    for k in kappas:
        est = free_remainder(z, k, eta)
        rows.append({
            "kappa": k,
            "kappa_minus_1": k - 1,
            "lyapunov": est.lyapunov,
            "thouless": est.thouless,
            "R": est.value,
            "abs_R": abs(est.value),
            "C0": fit_free_remainder_constant(k, np.linspace(-1.5, 1.5, 7), eta) if k > 1 else 0.0,
        })
    return rows
