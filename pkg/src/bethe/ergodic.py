"""I.i.d. random potentials as pure functions of the vertex.

A realization never stores samples. The value at a vertex is obtained by
hashing ``(seed, canonical index)`` with a splitmix64 finalizer, mapping the
hash to a uniform variate in ``[0, 1)`` and pushing it through the inverse
distribution function. The same vertex therefore receives the same value in
every finite volume, in every run and on every worker.

Shifted realizations ``T_x omega`` are thin wrappers that relabel the
argument before sampling: ``V_{T_x omega}(y) = V_omega(tau_x^{-1} y)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ValidationError
from .lattice import BetheLattice, Vertex, format_vertex

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

KINDS = ("zero", "constant", "uniform", "bernoulli", "discrete")


def splitmix64(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer on ``uint64`` arrays (wrapping)."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _to_unit(h: np.ndarray) -> np.ndarray:
    """Top 53 bits of a 64-bit hash as a double in [0, 1)."""
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def hash_uniforms(seed: int, keys: np.ndarray) -> np.ndarray:
    """Uniform variates keyed by ``(seed, key)`` for integer keys < 2**64."""
    s = splitmix64(np.array([seed & _MASK64], dtype=np.uint64))
    return _to_unit(splitmix64(s ^ splitmix64(np.asarray(keys, dtype=np.uint64))))


def _label_uniform(seed: int, label: str) -> float:
    """Fallback for vertices whose canonical index exceeds 64 bits."""
    digest = hashlib.blake2b(f"{seed}:{label}".encode(), digest_size=8).digest()
    return (int.from_bytes(digest, "little") >> 11) * 2.0**-53


def derive_seed(master_seed: int, sample: int) -> int:
    """Seed of the ``sample``-th realization of a master seed."""
    a = splitmix64(np.array([master_seed & _MASK64], dtype=np.uint64))
    b = splitmix64(np.array([(sample + 1) & _MASK64], dtype=np.uint64))
    return int(splitmix64(a ^ (b * _MIX1))[0])


@dataclass(frozen=True)
class DisorderSpec:
    """Single-site distribution of an i.i.d. potential plus its master seed.

    Use the classmethod constructors rather than the raw fields.

    Attributes
    ----------
    kind : str
        One of ``zero``, ``constant``, ``uniform``, ``bernoulli``,
        ``discrete``.
    params : tuple
        Distribution parameters, see the constructors.
    seed : int
        Master seed; realization ``i`` uses :func:`derive_seed`.
    """

    kind: str
    params: tuple = ()
    seed: int = 0
    _cdf: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown distribution {self.kind!r}; expected one of {KINDS}")
        p = tuple(float(v) if not isinstance(v, tuple) else v for v in self.params)
        object.__setattr__(self, "params", p)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ValidationError("seed must be an integer")
        if self.kind == "zero" and p:
            raise ValidationError("zero distribution takes no parameters")
        if self.kind == "constant" and len(p) != 1:
            raise ValidationError("constant distribution needs one value")
        if self.kind == "uniform" and (len(p) != 1 or not p[0] >= 0):
            raise ValidationError("uniform distribution needs a half-width C >= 0")
        if self.kind == "bernoulli":
            if len(p) != 2 or not 0 <= p[0] <= 1 or not p[1] >= 0:
                raise ValidationError("bernoulli distribution needs p in [0, 1] and w >= 0")
        if self.kind == "discrete":
            if len(p) != 2:
                raise ValidationError("discrete distribution needs (values, weights)")
            values, weights = np.asarray(p[0], float), np.asarray(p[1], float)
            if values.ndim != 1 or values.shape != weights.shape or values.size == 0:
                raise ValidationError("values and weights must be equal-length vectors")
            if np.any(weights < 0) or not weights.sum() > 0:
                raise ValidationError("weights must be nonnegative with positive sum")
            if not np.all(np.isfinite(values)):
                raise ValidationError("values must be finite")
            cdf = np.cumsum(weights) / weights.sum()
            object.__setattr__(self, "_cdf", tuple(cdf))
        elif not all(math.isfinite(v) for v in p):
            raise ValidationError("distribution parameters must be finite")

    # -- constructors ---------------------------------------------------------

    @classmethod
    def zero(cls) -> "DisorderSpec":
        return cls("zero")

    @classmethod
    def constant(cls, c: float) -> "DisorderSpec":
        return cls("constant", (c,))

    @classmethod
    def uniform(cls, C: float, seed: int = 0) -> "DisorderSpec":
        """Uniform on ``[-C, C]``."""
        return cls("uniform", (C,), seed)

    @classmethod
    def bernoulli(cls, p: float, w: float, seed: int = 0) -> "DisorderSpec":
        """``+w`` with probability ``p``, otherwise ``-w``."""
        return cls("bernoulli", (p, w), seed)

    @classmethod
    def discrete(cls, values: Sequence[float], weights: Sequence[float], seed: int = 0) -> "DisorderSpec":
        return cls("discrete", (tuple(map(float, values)), tuple(map(float, weights))), seed)

    # -- properties ---------------------------------------------------------

    @property
    def bound(self) -> float:
        """Smallest C with support inside ``[-C, C]``."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return abs(self.params[0])
        if self.kind == "uniform":
            return self.params[0]
        if self.kind == "bernoulli":
            return self.params[1]
        return float(np.max(np.abs(self.params[0])))

    @property
    def is_homogeneous(self) -> bool:
        """True if every vertex receives the same value."""
        return self.kind in ("zero", "constant")

    @property
    def mean(self) -> float:
        if self.kind == "zero" or self.kind == "uniform":
            return 0.0
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "bernoulli":
            p, w = self.params
            return w * (2 * p - 1)
        values, weights = np.asarray(self.params[0]), np.asarray(self.params[1])
        return float(values @ weights / weights.sum())

    @property
    def variance(self) -> float:
        if self.kind in ("zero", "constant"):
            return 0.0
        if self.kind == "uniform":
            return self.params[0] ** 2 / 3
        if self.kind == "bernoulli":
            p, w = self.params
            return 4 * w * w * p * (1 - p)
        values, weights = np.asarray(self.params[0]), np.asarray(self.params[1])
        weights = weights / weights.sum()
        return float(weights @ (values - values @ weights) ** 2)

    def constant_value(self) -> float:
        """Common value of a homogeneous distribution."""
        if not self.is_homogeneous:
            raise ValidationError(f"{self.kind} disorder is not homogeneous")
        return 0.0 if self.kind == "zero" else self.params[0]

    def with_seed(self, seed: int) -> "DisorderSpec":
        return DisorderSpec(self.kind, self.params, seed)

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Inverse distribution function applied to uniforms ``u``."""
        u = np.asarray(u, dtype=float)
        if self.kind in ("zero", "constant"):
            return np.full(u.shape, self.constant_value())
        if self.kind == "uniform":
            C = self.params[0]
            return -C + 2 * C * u
        if self.kind == "bernoulli":
            p, w = self.params
            return np.where(u < p, w, -w)
        values = np.asarray(self.params[0])
        idx = np.searchsorted(np.asarray(self._cdf), u, side="right")
        return values[np.minimum(idx, values.size - 1)]

    # -- serialization ------------------------------------------------------

    def to_record(self) -> dict[str, Any]:
        """Plain record ``{distribution, params, seed}`` for config files."""
        if self.kind == "discrete":
            params: Any = {"values": list(self.params[0]), "weights": list(self.params[1])}
        else:
            names = {"zero": (), "constant": ("c",), "uniform": ("C",), "bernoulli": ("p", "w")}[self.kind]
            params = dict(zip(names, self.params))
        return {"distribution": self.kind, "params": params, "seed": self.seed}

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "DisorderSpec":
        """Inverse of :meth:`to_record`; unknown keys are rejected."""
        if not isinstance(record, dict):
            raise ValidationError("disorder record must be a mapping")
        extra = set(record) - {"distribution", "params", "seed"}
        if extra:
            raise ValidationError(f"unknown disorder keys: {sorted(extra)}")
        kind = record.get("distribution")
        params = record.get("params", {}) or {}
        seed = record.get("seed", 0)
        if not isinstance(params, dict):
            raise ValidationError("disorder.params must be a mapping")
        try:
            if kind == "zero":
                return cls.zero()
            if kind == "constant":
                return cls.constant(params["c"])
            if kind == "uniform":
                return cls.uniform(params["C"], seed)
            if kind == "bernoulli":
                return cls.bernoulli(params["p"], params["w"], seed)
            if kind == "discrete":
                return cls.discrete(params["values"], params["weights"], seed)
        except KeyError as exc:
            raise ValidationError(f"disorder.params is missing {exc}") from None
        raise ValidationError(f"unknown distribution {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True)
class DisorderRealization:
    """A potential ``V_omega`` on the whole lattice.

    Parameters
    ----------
    lattice : BetheLattice
    spec : DisorderSpec
        Distribution and seed of this realization.
    shifts : tuple of vertices
        Accumulated shifts, outermost first. ``shift(shift(w, y), x)`` stores
        ``(x, y)`` and evaluates ``w(tau_y^{-1} tau_x^{-1} v)``.
    """

    lattice: BetheLattice
    spec: DisorderSpec
    shifts: tuple[Vertex, ...] = ()

    @classmethod
    def sample(cls, lattice: BetheLattice, spec: DisorderSpec, index: int) -> "DisorderRealization":
        """The ``index``-th realization of ``spec``'s master seed."""
        return cls(lattice, spec.with_seed(derive_seed(spec.seed, index)))

    @property
    def is_homogeneous(self) -> bool:
        return self.spec.is_homogeneous

    def shift(self, x: Vertex) -> "DisorderRealization":
        """Return ``T_x omega``."""
        x = self.lattice.validate(x)
        if not x:
            return self
        return DisorderRealization(self.lattice, self.spec, (x,) + self.shifts)

    def effective_vertex(self, v: Vertex) -> Vertex:
        """Vertex of the unshifted realization whose value ``v`` reads."""
        v = self.lattice.validate(v)
        for x in self.shifts:
            v = self.lattice.shift_inverse(x, v)
        return v

    def potential_at(self, v: Vertex) -> float:
        """``V_omega(v)``."""
        return float(self.potentials([v])[0])

    def potentials(self, vertices: Sequence[Vertex]) -> np.ndarray:
        """Potential values at a list of vertices."""
        if self.spec.is_homogeneous:
            for v in vertices:
                self.lattice.validate(v)
            return np.full(len(vertices), self.spec.constant_value())
        eff = [self.effective_vertex(v) for v in vertices]
        keys = [self.lattice.index(v) for v in eff]
        if all(k <= _MASK64 for k in keys):
            u = hash_uniforms(self.spec.seed, np.array(keys, dtype=np.uint64))
        else:
            u = np.array([_label_uniform(self.spec.seed, format_vertex(v)) for v in eff])
        return self.spec.quantile(u)

    def level_potentials(self, level: int, start: int, count: int) -> np.ndarray:
        """Potentials of ``count`` consecutive vertices of one level.

        ``start`` is the rank of the first vertex within the level. This is
        the fast path used by the tree recursions.
        """
        if start < 0 or count < 0 or start + count > self.lattice.level_size(level):
            raise ValidationError(f"ranks [{start}, {start + count}) exceed level {level}")
        if self.spec.is_homogeneous:
            return np.full(count, self.spec.constant_value())
        offset = self.lattice.level_offset(level) + start
        if self.shifts or offset + count > _MASK64:
            verts = [self.lattice.vertex(offset + i) for i in range(count)]
            return self.potentials(verts)
        keys = np.arange(count, dtype=np.uint64) + np.uint64(offset)
        return self.spec.quantile(hash_uniforms(self.spec.seed, keys))
