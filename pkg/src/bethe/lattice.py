"""Integer geometry of the Bethe lattice.

A vertex is stored as a tuple of digits ``(a1, ..., al)`` describing the
unique path from the root; the root itself is the empty tuple. The first
digit ranges over ``0..kappa`` and every later digit over ``0..kappa-1``.
The printed form prepends a ``0`` for the root, so ``(2, 1)`` prints as
``"0,2,1"`` and the root prints as ``"0"``.

Two automorphisms generate the translation-like maps used throughout:

``tau1``
    a level translation that moves the root to ``(0,)`` and acts as a left
    shift on the branch whose first digit is ``kappa``;
``tau2``
    a rotation fixing the root that increments the first digit modulo
    ``kappa + 1`` and the remaining digits modulo ``kappa``.

Every vertex ``x`` is reached from the root by a unique word of maps
``sigma_d = tau2**d tau1``; the corresponding product is the generalized
shift ``tau_x``. It is available in two independent forms: by iterating the
word (:meth:`BetheLattice.apply_word`) and by a closed-form case analysis
(:meth:`BetheLattice.shift`).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import SizeGuardError, ValidationError

Vertex = tuple[int, ...]

ROOT: Vertex = ()

#: Largest ball that :meth:`BetheLattice.ball` materializes as labels.
MAX_BALL_SIZE = 5_000_000


def format_vertex(v: Sequence[int]) -> str:
    """Serialize a vertex as comma-joined digits with a leading ``0``."""
    return ",".join(["0", *map(str, v)])


def parse_vertex(text: str) -> Vertex:
    """Inverse of :func:`format_vertex`.

    Parentheses and whitespace are tolerated, so ``"(0, 2, 1)"`` parses to
    ``(2, 1)``. Digit ranges are not checked here; see
    :meth:`BetheLattice.validate`.
    """
    body = text.strip().strip("()").replace(" ", "")
    parts = [p for p in body.split(",") if p != ""]
    if not parts or parts[0] != "0":
        raise ValidationError(f"vertex text must start with '0': {text!r}")
    try:
        return tuple(int(p) for p in parts[1:])
    except ValueError as exc:
        raise ValidationError(f"malformed vertex text {text!r}") from exc


@dataclass(frozen=True)
class BetheLattice:
    """The rooted Bethe lattice with connectivity ``kappa``.

    Every vertex has ``kappa + 1`` neighbours. ``kappa = 1`` is the integer
    chain and is supported everywhere.

    Parameters
    ----------
    kappa : int
        Connectivity, at least 1.
    """

    kappa: int

    def __post_init__(self):
        if isinstance(self.kappa, bool) or not isinstance(self.kappa, int) or self.kappa < 1:
            raise ValidationError(f"kappa must be an integer >= 1, got {self.kappa!r}")

    # -- validation and counting -------------------------------------------

    def validate(self, v: Iterable[int]) -> Vertex:
        """Return ``v`` as a tuple after checking the digit ranges."""
        v = tuple(v)
        k = self.kappa
        for j, a in enumerate(v):
            top = k if j == 0 else k - 1
            if isinstance(a, bool) or not isinstance(a, int) or not 0 <= a <= top:
                raise ValidationError(
                    f"digit {j + 1} of {format_vertex(v)} must lie in 0..{top} for kappa={k}"
                )
        return v

    def validate_word(self, word: Iterable[int]) -> tuple[int, ...]:
        """Check generator-word exponent ranges (same as vertex digits)."""
        try:
            return self.validate(word)
        except ValidationError as exc:
            raise ValidationError(f"invalid generator word: {exc}") from None

    def level_size(self, level: int) -> int:
        """Number of vertices at distance ``level`` from the root."""
        if level < 0:
            raise ValidationError("level must be nonnegative")
        if level == 0:
            return 1
        return (self.kappa + 1) * self.kappa ** (level - 1)

    def ball_size(self, L: int) -> int:
        """Number of vertices within distance ``L`` of the root."""
        if L < 0:
            raise ValidationError("radius must be nonnegative")
        k = self.kappa
        if k == 1:
            return 2 * L + 1
        return 1 + (k + 1) * (k**L - 1) // (k - 1)

    def level_offset(self, level: int) -> int:
        """Canonical index of the first vertex at ``level``."""
        return 0 if level == 0 else self.ball_size(level - 1)

    def rank(self, v: Vertex) -> int:
        """Lexicographic position of ``v`` within its level."""
        r = 0
        for a in v:
            r = r * self.kappa + a
        # the leading digit carries weight kappa**(l-1) regardless of its range
        return r

    def index(self, v: Vertex) -> int:
        """Position of ``v`` in the canonical (level, lexicographic) order.

        The index does not depend on any ball radius, so it doubles as a
        stable integer key for the vertex.
        """
        v = self.validate(v)
        return self.level_offset(len(v)) + self.rank(v)

    def vertex(self, index: int) -> Vertex:
        """Inverse of :meth:`index`."""
        if index < 0:
            raise ValidationError("index must be nonnegative")
        level = 0
        while index >= self.level_offset(level + 1):
            level += 1
        r = index - self.level_offset(level)
        digits = []
        for _ in range(level - 1):
            r, a = divmod(r, self.kappa)
            digits.append(a)
        if level:
            digits.append(r)
        return tuple(reversed(digits))

    # -- metric and adjacency ----------------------------------------------

    def distance(self, x: Vertex, y: Vertex) -> int:
        """Graph distance: number of edges on the unique path from x to y."""
        x, y = self.validate(x), self.validate(y)
        common = 0
        for a, b in zip(x, y):
            if a != b:
                break
            common += 1
        return len(x) + len(y) - 2 * common

    def parent(self, v: Vertex) -> Vertex | None:
        """Backward neighbour, or ``None`` for the root."""
        return v[:-1] if v else None

    def children(self, v: Vertex) -> list[Vertex]:
        """Forward neighbours in canonical order."""
        n = self.kappa + 1 if not v else self.kappa
        return [v + (c,) for c in range(n)]

    def neighbors(self, v: Vertex) -> set[Vertex]:
        """All ``kappa + 1`` neighbours of ``v``."""
        v = self.validate(v)
        out = set(self.children(v))
        if v:
            out.add(v[:-1])
        return out

    # -- generators ---------------------------------------------------------

    def tau1(self, v: Vertex) -> Vertex:
        """Generalized level translation."""
        k = self.kappa
        if not v:
            return (0,)
        if v[0] == k:
            if len(v) == 1:
                return ROOT
            return ((v[1] + 1) % (k + 1),) + v[2:]
        return (0,) + v

    def tau1_inv(self, v: Vertex) -> Vertex:
        """Inverse of :meth:`tau1`."""
        k = self.kappa
        if not v:
            return (k,)
        if v[0] == 0:
            return v[1:]
        return (k, v[0] - 1) + v[1:]

    def tau2(self, v: Vertex) -> Vertex:
        """Generalized rotation about the root."""
        return self.tau2_pow(v, 1)

    def tau2_inv(self, v: Vertex) -> Vertex:
        """Inverse of :meth:`tau2`."""
        return self.tau2_pow(v, -1)

    def tau2_pow(self, v: Vertex, n: int) -> Vertex:
        """``tau2`` applied ``n`` times (negative ``n`` for the inverse)."""
        if not v:
            return v
        k = self.kappa
        return ((v[0] + n) % (k + 1),) + tuple((a + n) % k for a in v[1:])

    # -- words and shifts ---------------------------------------------------

    def exponents_of(self, x: Vertex) -> list[int]:
        """Generator word ``[d1, ..., dl]`` with ``apply_word(word, ROOT) == x``."""
        x = self.validate(x)
        if not x:
            return []
        k = self.kappa
        return [x[0]] + [(x[j] - x[j - 1]) % k for j in range(1, len(x))]

    def vertex_of_word(self, word: Sequence[int]) -> Vertex:
        """Digits represented by a word, via the telescoping partial sums."""
        word = self.validate_word(word)
        if not word:
            return ROOT
        digits, s = [word[0]], word[0]
        for d in word[1:]:
            s += d
            digits.append(s % self.kappa)
        return tuple(digits)

    def apply_word(self, word: Sequence[int], v: Vertex) -> Vertex:
        """Evaluate ``sigma_{d1} ... sigma_{dl} (v)``, rightmost factor first."""
        word = self.validate_word(word)
        v = self.validate(v)
        for d in reversed(word):
            v = self.tau2_pow(self.tau1(v), d)
        return v

    def apply_word_inverse(self, word: Sequence[int], v: Vertex) -> Vertex:
        """Evaluate the inverse of :meth:`apply_word` for the same word."""
        word = self.validate_word(word)
        v = self.validate(v)
        for d in word:
            v = self.tau1_inv(self.tau2_pow(v, -d))
        return v

    def shift(self, x: Vertex, z: Vertex) -> Vertex:
        """Generalized shift ``tau_x(z)`` in closed form."""
        return self.shift_with_case(x, z)[0]

    def shift_with_case(self, x: Vertex, z: Vertex) -> tuple[Vertex, str]:
        """Closed-form ``tau_x(z)`` together with the branch that produced it.

        The branch label is one of ``"identity"`` (x is the root),
        ``"origin"`` (z is the root), ``"i"``, ``"ii"``, ``"iii"``,
        ``"iv-short"`` or ``"iv-long"``.

        Notes
        -----
        Write ``x = (a1..al)`` with word ``(d1..dl)`` and ``z = (b1..bm)``.
        If ``b1 != kappa`` then z is carried rigidly into the subtree below
        x. Otherwise each factor of the word can strip one level; after ``n``
        strips the leading digit of the image is ``c_{n+1}``, and the first
        strip that leaves ``c_{n+1} != kappa`` stops the descent.
        """
        x, z = self.validate(x), self.validate(z)
        if not x:
            return z, "identity"
        if not z:
            return x, "origin"
        k = self.kappa
        ell, m = len(x), len(z)
        last = x[-1]
        d = self.exponents_of(x)
        if z[0] != k:
            return x + tuple((b + last) % k for b in z), "i"
        if m == 1:
            return x[:-1], "ii"
        # exponents d_{l-n+2..l} accumulated as n grows
        tail = 0
        for n in range(1, min(m, ell)):
            if n >= 2:
                tail += d[ell - n + 1]
            c = ((z[n] + tail) % k + 1 + d[ell - n]) % (k + 1)
            if c != k:
                head = x[: ell - n] + ((c + x[ell - n - 1]) % k,)
                return head + tuple((b + last) % k for b in z[n + 1 :]), "iii"
        if m <= ell:
            return x[: ell - m], "iv-short"
        first = ((z[ell] + last - x[0]) % k + 1 + x[0]) % (k + 1)
        return (first,) + tuple((b + last) % k for b in z[ell + 1 :]), "iv-long"

    def shift_inverse(self, x: Vertex, y: Vertex) -> Vertex:
        """``tau_x^{-1}(y)``, evaluated through the inverse word of x."""
        return self.apply_word_inverse(self.exponents_of(x), y)

    # -- regions ------------------------------------------------------------

    def iter_level(self, level: int) -> Iterator[Vertex]:
        """Vertices at ``level`` in canonical order."""
        if level == 0:
            yield ROOT
            return
        k = self.kappa

        def rec(prefix: Vertex, depth: int):
            if depth == 0:
                yield prefix
                return
            for c in range(k):
                yield from rec(prefix + (c,), depth - 1)

        for a in range(k + 1):
            yield from rec((a,), level - 1)

    def ball(self, L: int, *, max_size: int = MAX_BALL_SIZE) -> list[Vertex]:
        """All vertices within distance ``L`` of the root, canonical order.

        Raises
        ------
        SizeGuardError
            If the ball has more than ``max_size`` vertices.
        """
        size = self.ball_size(L)
        if size > max_size:
            raise SizeGuardError(f"ball({L}) has {size} vertices, limit is {max_size}")
        out: list[Vertex] = [ROOT]
        if L == 0:
            return out
        level = [(a,) for a in range(self.kappa + 1)]
        out.extend(level)
        for _ in range(1, L):
            level = [v + (c,) for v in level for c in range(self.kappa)]
            out.extend(level)
        return out

    def spine_path(self, a1: int, L: int) -> list[Vertex]:
        """Root path with generator word ``[a1, 0, 0, ...]``.

        Returns the ``L`` vertices ``gamma(0) = root, ..., gamma(L-1)``.
        """
        if L < 1:
            raise ValidationError("path length must be positive")
        if not 0 <= a1 <= self.kappa:
            raise ValidationError(f"a1 must lie in 0..{self.kappa}")
        path = [ROOT]
        for j in range(1, L):
            path.append(self.vertex_of_word([a1] + [0] * (j - 1)))
        return path


def is_spine_word(word: Sequence[int]) -> bool:
    """True if all exponents after the first vanish."""
    return all(d == 0 for d in word[1:])


def case_histogram(lattice: BetheLattice, xs: Iterable[Vertex], zs: Sequence[Vertex]) -> Counter:
    """Count which closed-form branch fires over all pairs ``(x, z)``."""
    hist: Counter = Counter()
    for x in xs:
        for z in zs:
            hist[lattice.shift_with_case(x, z)[1]] += 1
    return hist
