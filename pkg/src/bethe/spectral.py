"""Density of states and the log-energy (Thouless-like) integral.

Two estimators of the disorder-averaged spectral measure at the root:

``dos_resolvent``
    ``(1/pi) Im G(E + i eta; 0, 0)`` on the doubled ball, from the rooted
    recursion split at the root;
``dos_eigen``
    the exact finite-volume root measure, eigenvalues weighted by
    ``|psi_k(0)|**2``, binned into a histogram.

For zero potential the Kesten-McKay law is available in closed form, and
so is the derivative of its log-energy integral.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import integrate, linalg

from .ergodic import DisorderRealization, DisorderSpec
from .errors import SizeGuardError, ValidationError
from .forest import homogeneous_ball_root
from .green import ball_root_green
from .lattice import BetheLattice, Vertex, format_vertex
from .operator import MAX_DENSE, Region, assemble, eigensystem
from .parallel import map_samples, pairwise_sum

#: Allowed deviation of a density estimate's mass from one.
MASS_TOL = 5e-3
DEFAULT_ETA = 0.05
DEFAULT_POINTS = 1024
_CHUNK = 128


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class DosEstimate:
    """Density of states sampled on an energy grid.

    Attributes
    ----------
    energies, density : ndarray
        Ascending grid and nonnegative density values.
    eta : float
        Lorentzian smoothing width; 0 for the histogram estimator.
    kappa, L, samples, seed : int
        Provenance metadata.
    method : str
        ``"resolvent"``, ``"eigen"`` or ``"analytic"``.
    bin_edges : ndarray, optional
        Histogram edges for the eigen estimator.
    disorder : dict
        Disorder record of the generating spec.
    """

    energies: np.ndarray
    density: np.ndarray
    eta: float
    kappa: int
    L: int
    samples: int
    seed: int
    method: str
    bin_edges: np.ndarray | None = None
    disorder: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if e.ndim != 1 or e.shape != d.shape or e.size < 2:
            raise ValidationError("energies and density must be equal-length vectors")
        if np.any(np.diff(e) <= 0):
            raise ValidationError("energy grid must be strictly ascending")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "density", d)

    @property
    def mass(self) -> float:
        """Total mass (exact bin sum for histograms, trapezoid otherwise)."""
        if self.bin_edges is not None:
            return float(np.sum(self.density * np.diff(self.bin_edges)))
        return float(integrate.trapezoid(self.density, self.energies))

    def cdf(self, E: np.ndarray) -> np.ndarray:
        """Cumulative distribution, piecewise linear in ``E``."""
        if self.bin_edges is not None:
            x = self.bin_edges
            F = np.concatenate([[0.0], np.cumsum(self.density * np.diff(x))])
        else:
            x = self.energies
            F = np.concatenate([[0.0], integrate.cumulative_trapezoid(self.density, x)])
        return np.interp(E, x, F, left=0.0, right=F[-1])

    def metadata(self) -> dict[str, Any]:
        return {
            "kappa": self.kappa,
            "L": self.L,
            "eta": self.eta,
            "samples": self.samples,
            "seed": self.seed,
            "mass": self.mass,
            "method": self.method,
            "disorder": self.disorder,
        }

    def to_csv(self, path) -> None:
        """Write ``energy,density`` rows with round-trip precision."""
        lines = ["energy,density"] + [f"{_fmt(e)},{_fmt(d)}" for e, d in zip(self.energies, self.density)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path, **meta) -> "DosEstimate":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        defaults = dict(eta=0.0, kappa=0, L=0, samples=0, seed=0, method="file")
        defaults.update(meta)
        return cls(data[:, 0], data[:, 1], **defaults)


@dataclass(frozen=True)
class KestenMcKay:
    """Closed-form density of states of the free Laplacian.

    ``rho(E) = (kappa+1)/(2 pi) sqrt(4 kappa - E**2) / ((kappa+1)**2 - E**2)``
    on ``|E| <= 2 sqrt(kappa)``.
    """

    kappa: int

    def __post_init__(self):
        if self.kappa < 1:
            raise ValidationError("kappa must be at least 1")

    @property
    def edge(self) -> float:
        return 2.0 * math.sqrt(self.kappa)

    @property
    def support(self) -> tuple[float, float]:
        return (-self.edge, self.edge)

    @property
    def mass(self) -> float:
        return 1.0

    def pdf(self, E):
        return kesten_mckay(E, self.kappa)


def kesten_mckay(E, kappa: int):
    """Kesten-McKay density at ``E`` (zero outside the band)."""
    E = np.asarray(E, dtype=float)
    k = kappa
    inside = np.abs(E) <= 2 * math.sqrt(k)
    root = np.sqrt(np.where(inside, 4 * k - E * E, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (k + 1) / (2 * np.pi) * root / ((k + 1) ** 2 - E * E)
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def default_energy_grid(kappa: int, C: float, eta: float = DEFAULT_ETA, n: int = DEFAULT_POINTS) -> np.ndarray:
    """Grid on ``[-(kappa+1)-C-margin, (kappa+1)+C+margin]``.

    The margin is ``max(0.5, 200 eta)`` so the Lorentzian tails of the
    smoothed measure stay within the mass tolerance.
    """
    half = kappa + 1 + C + max(0.5, 200.0 * eta)
    return np.linspace(-half, half, n)


def _check_dos_args(kappa: int, L: int, samples: int) -> BetheLattice:
    lat = BetheLattice(kappa)
    if samples < 1:
        raise ValidationError("samples must be at least 1")
    if L < 0:
        raise ValidationError("L must be nonnegative")
    return lat


def dos_resolvent(spec: DisorderSpec, kappa: int, L: int, eta: float = DEFAULT_ETA,
                  grid: Sequence[float] | None = None, samples: int = 1, *, threads: int = 1) -> DosEstimate:
    """Smoothed root density of states on ``ball(2L)``.

    ``density(E) = mean_omega (1/pi) Im G(E + i eta; 0, 0)`` with the root
    value ``1 / (V(0) - z - sum of the kappa+1 child m-functions)``.
    """
    lat = _check_dos_args(kappa, L, samples)
    if L < 2:
        raise ValidationError("dos_resolvent needs L >= 2")
    if not eta > 0:
        raise ValidationError("eta must be positive")
    E = default_energy_grid(kappa, spec.bound, eta) if grid is None else np.asarray(grid, dtype=float)
    R = 2 * L
    if spec.is_homogeneous:
        g = homogeneous_ball_root(spec.constant_value(), E + 1j * eta, kappa, R)
        density = np.asarray(g).imag / np.pi
    else:

        def one(i: int) -> np.ndarray:
            omega = DisorderRealization.sample(lat, spec, i)
            parts = [ball_root_green(omega, E[s : s + _CHUNK] + 1j * eta, R).imag for s in range(0, E.size, _CHUNK)]
            return np.concatenate(parts) / np.pi

        density = pairwise_sum(map_samples(one, samples, threads)) / samples
    return DosEstimate(E, density, eta, kappa, L, samples, spec.seed, "resolvent", disorder=spec.to_record())


def root_spectral_measure(H, vertex: Vertex = ()) -> tuple[np.ndarray, np.ndarray]:
    """Atoms and weights ``|psi_k(v)|**2`` of the spectral measure at a vertex."""
    lam, vec = eigensystem(H)
    w = vec[H.region.index_of(vertex)] ** 2
    return lam, w


def radial_root_measure(c: float, kappa: int, R: int) -> tuple[np.ndarray, np.ndarray]:
    """Root spectral measure of a constant potential on ``ball(R)``.

    Level-symmetric vectors span an invariant chain with couplings
    ``sqrt(kappa+1)`` then ``sqrt(kappa)``, so the root measure is the one of
    an ``(R+1)``-site Jacobi matrix.
    """
    off = np.full(R, math.sqrt(kappa), dtype=float)
    if R:
        off[0] = math.sqrt(kappa + 1)
    lam, vec = linalg.eigh_tridiagonal(np.full(R + 1, float(c)), off)
    return lam, vec[0] ** 2


def dos_eigen(spec: DisorderSpec, kappa: int, L: int, samples: int = 1, bins=None, *,
              vertex: Vertex = (), threads: int = 1, max_size: int = MAX_DENSE) -> DosEstimate:
    """Histogram of the exact root spectral measure on ``ball(2L)``.

    Parameters
    ----------
    bins : int or array of edges, optional
        Default is 1024 bins over the default grid range.
    vertex : Vertex
        Measure taken at this vertex instead of the root (random disorder
        only).
    """
    lat = _check_dos_args(kappa, L, samples)
    vertex = lat.validate(vertex)
    R = 2 * L + len(vertex)
    if bins is None or np.isscalar(bins):
        n = DEFAULT_POINTS if bins is None else int(bins)
        half = kappa + 1 + spec.bound + 0.5
        edges = np.linspace(-half, half, n + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    if spec.is_homogeneous and not vertex:
        lam, w = radial_root_measure(spec.constant_value(), kappa, R)
        hist = _histogram(lam, w, edges)
    else:
        size = lat.ball_size(R)
        if size > max_size:
            raise SizeGuardError(f"ball({R}) has {size} vertices, dense limit is {max_size}")
        region = Region.ball(lat, R)

        def one(i: int) -> np.ndarray:
            H = assemble(region, DisorderRealization.sample(lat, spec, i))
            lam, w = root_spectral_measure(H, vertex)
            return _histogram(lam, w, edges)

        hist = pairwise_sum(map_samples(one, samples, threads)) / samples
    centers = 0.5 * (edges[1:] + edges[:-1])
    meta = {"vertex": format_vertex(vertex)} if vertex else {}
    return DosEstimate(centers, hist / np.diff(edges), 0.0, kappa, L, samples, spec.seed, "eigen",
                       bin_edges=edges, disorder={**spec.to_record(), **meta})


def _histogram(lam: np.ndarray, w: np.ndarray, edges: np.ndarray) -> np.ndarray:
    if lam.min() < edges[0] or lam.max() > edges[-1]:
        raise ValidationError("eigenvalues fall outside the histogram range")
    h, _ = np.histogram(lam, bins=edges, weights=w)
    return h


def kolmogorov_distance(a: DosEstimate, b: DosEstimate) -> float:
    """Sup distance between the two cumulative distributions."""
    pts = [a.energies, b.energies]
    pts += [x.bin_edges for x in (a, b) if x.bin_edges is not None]
    E = np.unique(np.concatenate(pts))
    return float(np.max(np.abs(a.cdf(E) - b.cdf(E))))


# -- log-energy integral -----------------------------------------------------


def _km_log_integral(kappa: int, z: complex) -> float:
    # E = a cos(theta) removes the square-root edges; the weight below is
    # rho(E) |dE/dtheta| written without cancellation near theta = 0, pi.
    a = 2 * math.sqrt(kappa)
    pref = (kappa + 1) / (2 * math.pi)

    def f(t):
        s2 = math.sin(t) ** 2
        w = pref * 4 * kappa * s2 / ((kappa - 1) ** 2 + 4 * kappa * s2)
        return w * math.log(abs(a * math.cos(t) - z))

    pts = []
    if abs(z.real) < a:
        pts.append(math.acos(z.real / a))
    val = 0.0
    for lo, hi in zip([0.0] + pts, pts + [math.pi]):
        part, _ = integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=400)
        val += part
    return val


def _grid_log_integral(dos: DosEstimate, z: complex) -> float:
    E, rho = dos.energies, dos.density / dos.mass
    x, y = z.real, abs(z.imag)
    r0 = float(np.interp(x, E, rho, left=0.0, right=0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth = (rho - r0) * np.log(np.abs(E - z))
    if y == 0:
        smooth[E == x] = 0.0

    def prim(u):
        if y == 0:
            return u * np.log(np.abs(u)) - u if u != 0 else 0.0
        return 0.5 * (u * np.log(u * u + y * y) - 2 * u) + y * np.arctan(u / y)

    exact = prim(E[-1] - x) - prim(E[0] - x)
    return float(integrate.trapezoid(smooth, E) + r0 * exact)


def thouless_integral(measure, z: complex) -> float:
    """``int log|E - z| dn(E)`` for an analytic or tabulated density.

    Parameters
    ----------
    measure : KestenMcKay, DosEstimate, or object with ``pdf`` and ``support``
        Tabulated densities are normalized by their mass, which must be
        within ``MASS_TOL`` of one.
    z : complex
        ``Im z >= 0``. On the real axis the quadrature is split at ``Re z``.
    """
    z = complex(z)
    if z.imag < 0:
        raise ValidationError("thouless_integral needs Im z >= 0")
    if isinstance(measure, KestenMcKay):
        return _km_log_integral(measure.kappa, z)
    if isinstance(measure, DosEstimate):
        if abs(measure.mass - 1) > MASS_TOL:
            raise ValidationError(f"density has mass {measure.mass:.6f}, not 1 within {MASS_TOL}")
        return _grid_log_integral(measure, z)
    if hasattr(measure, "pdf") and hasattr(measure, "support"):
        lo, hi = measure.support
        mass, _ = integrate.quad(measure.pdf, lo, hi, limit=400)
        if abs(mass - 1) > MASS_TOL:
            raise ValidationError(f"density has mass {mass:.6f}, not 1 within {MASS_TOL}")
        pts = [z.real] if lo < z.real < hi else None
        val, _ = integrate.quad(lambda e: measure.pdf(e) * math.log(abs(e - z)), lo, hi, points=pts, limit=400)
        return val / mass
    raise ValidationError(f"unsupported measure type {type(measure).__name__}")


def thouless_derivative_closed(z: complex, kappa: int) -> complex:
    """``((kappa-1)/2) z / ((kappa+1)**2 - z**2)``, real-axis derivative of the log integral.

    Raises
    ------
    ValidationError
        At the poles ``z = +-(kappa+1)``.
    """
    z = complex(z)
    den = (kappa + 1) ** 2 - z * z
    if den == 0:
        raise ValidationError(f"pole at z = +-{kappa + 1}")
    val = (kappa - 1) / 2 * z / den
    return val.real if z.imag == 0 else val


def thouless_derivative_numeric(measure, z: complex, h: float = 1e-4) -> float:
    """Central difference of :func:`thouless_integral` along the real direction."""
    z = complex(z)
    return (thouless_integral(measure, z + h) - thouless_integral(measure, z - h)) / (2 * h)


def dos_json(dos: DosEstimate) -> str:
    return json.dumps(dos.metadata(), sort_keys=True, indent=2)
