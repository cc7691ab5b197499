"""Exact integer quasi-affine map algebra over bounded box domains.

A map sends points of an integer box (a loop iteration space) to integer
vectors (tensor coordinates).  Outputs are sums of linear parts plus
weighted floor-division / modulo terms by positive constants, with div/mod
nesting depth at most one.  The module provides evaluation, symbolic
composition with a point-table fallback, structural classification,
image computation, and reversal (symbolic for recognized normal forms,
tabulated for small general maps).

floordiv rounds toward -inf and mod is always non-negative, so
``x == d * (x floordiv d) + (x mod d)`` holds unconditionally.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterator, Union

import numpy as np

HARD_CARDINALITY_CAP = 1 << 40


class AffineError(Exception):
    """Base class for algebra errors."""


class PointOutsideDomain(AffineError):
    pass


class ArityMismatch(AffineError):
    pass


class ImageEscapesDomain(AffineError):
    pass


class DomainTooLarge(AffineError):
    pass


@dataclass(frozen=True)
class Limits:
    """Resource limits for enumeration-based fallbacks."""

    tabulate_limit: int = 1 << 20
    enumerate_limit: int = 1 << 20


DEFAULT_LIMITS = Limits()


# ---------------------------------------------------------------------------
# Domains


@dataclass(frozen=True)
class IntBox:
    """Product of per-dimension half-open integer intervals [lo, hi)."""

    los: tuple[int, ...]
    his: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "los", tuple(int(v) for v in self.los))
        object.__setattr__(self, "his", tuple(int(v) for v in self.his))
        if len(self.los) != len(self.his):
            raise ValueError("lo/hi arity mismatch")
        for lo, hi in zip(self.los, self.his):
            if lo > hi:
                raise ValueError(f"empty-reversed bound {lo}..{hi}")
        if self.cardinality > HARD_CARDINALITY_CAP:
            raise ValueError(f"box cardinality exceeds 2^40: {self.cardinality}")

    @staticmethod
    def from_extents(*extents: int) -> "IntBox":
        return IntBox(tuple(0 for _ in extents), tuple(extents))

    @property
    def ndim(self) -> int:
        return len(self.los)

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(h - l for l, h in zip(self.los, self.his))

    @property
    def cardinality(self) -> int:
        return math.prod(self.extents)

    @property
    def is_empty(self) -> bool:
        return self.cardinality == 0

    def contains(self, point: tuple[int, ...]) -> bool:
        if len(point) != self.ndim:
            return False
        return all(l <= p < h for p, l, h in zip(point, self.los, self.his))

    def points(self) -> Iterator[tuple[int, ...]]:
        """Lexicographic iteration over all points."""
        return itertools.product(*(range(l, h) for l, h in zip(self.los, self.his)))

    def points_array(self) -> np.ndarray:
        """All points as an int64 array of shape (cardinality, ndim), lexicographic."""
        if self.ndim == 0:
            return np.zeros((1, 0), dtype=np.int64)
        if self.is_empty:
            return np.zeros((0, self.ndim), dtype=np.int64)
        axes = [np.arange(l, h, dtype=np.int64) for l, h in zip(self.los, self.his)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.ndim)


# ---------------------------------------------------------------------------
# Expressions


class TermKind(Enum):
    FLOORDIV = "floordiv"
    MOD = "mod"


@dataclass(frozen=True)
class DivModTerm:
    """weight * (inner floordiv divisor)  or  weight * (inner mod divisor).

    ``inner`` must be purely linear (depth-one nesting).
    """

    inner: "QuasiAffineExpr"
    divisor: int
    kind: TermKind
    weight: int

    def __post_init__(self) -> None:
        if self.divisor <= 0:
            raise ValueError("divisor must be strictly positive")
        if self.inner.terms:
            raise ValueError("div/mod inner expression must be linear")


def _gcd_many(values) -> int:
    g = 0
    for v in values:
        g = math.gcd(g, v)
    return g


@dataclass(frozen=True)
class QuasiAffineExpr:
    """Canonical sum of a linear part and weighted depth-one div/mod terms."""

    coeffs: tuple[int, ...]
    const: int = 0
    terms: tuple[DivModTerm, ...] = ()

    def __post_init__(self) -> None:
        coeffs, const, terms = _normalize_expr(self.coeffs, self.const, self.terms)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "const", const)
        object.__setattr__(self, "terms", terms)
        for t in self.terms:
            if len(t.inner.coeffs) != len(self.coeffs):
                raise ValueError("term arity mismatch")

    @property
    def arity(self) -> int:
        return len(self.coeffs)

    @property
    def is_linear(self) -> bool:
        return not self.terms

    def evaluate(self, point) -> int:
        v = self.const + sum(c * p for c, p in zip(self.coeffs, point))
        for t in self.terms:
            iv = t.inner.const + sum(c * p for c, p in zip(t.inner.coeffs, point))
            v += t.weight * (iv // t.divisor if t.kind is TermKind.FLOORDIV else iv % t.divisor)
        return v

    def evaluate_batch(self, pts: np.ndarray) -> np.ndarray:
        out = pts @ np.asarray(self.coeffs, dtype=np.int64) + self.const
        for t in self.terms:
            iv = pts @ np.asarray(t.inner.coeffs, dtype=np.int64) + t.inner.const
            out = out + t.weight * (iv // t.divisor if t.kind is TermKind.FLOORDIV else iv % t.divisor)
        return out

    # small algebra for convenient construction
    def __add__(self, other: "QuasiAffineExpr | int") -> "QuasiAffineExpr":
        if isinstance(other, int):
            return QuasiAffineExpr(self.coeffs, self.const + other, self.terms)
        if other.arity != self.arity:
            raise ArityMismatch("expression arity mismatch")
        coeffs = tuple(a + b for a, b in zip(self.coeffs, other.coeffs))
        return QuasiAffineExpr(coeffs, self.const + other.const, self.terms + other.terms)

    def __radd__(self, other: int) -> "QuasiAffineExpr":
        return self + other

    def __neg__(self) -> "QuasiAffineExpr":
        return self * -1

    def __sub__(self, other: "QuasiAffineExpr | int") -> "QuasiAffineExpr":
        return self + (-other)

    def __rsub__(self, other: int) -> "QuasiAffineExpr":
        return (-self) + other

    def __mul__(self, k: int) -> "QuasiAffineExpr":
        terms = tuple(DivModTerm(t.inner, t.divisor, t.kind, t.weight * k) for t in self.terms)
        return QuasiAffineExpr(tuple(c * k for c in self.coeffs), self.const * k, terms)

    def __rmul__(self, k: int) -> "QuasiAffineExpr":
        return self * k

    def floordiv(self, d: int) -> "QuasiAffineExpr":
        if not self.is_linear:
            raise ValueError("floordiv of a non-linear expression exceeds nesting depth 1")
        term = DivModTerm(self, d, TermKind.FLOORDIV, 1)
        return QuasiAffineExpr(tuple(0 for _ in self.coeffs), 0, (term,))

    def mod(self, d: int) -> "QuasiAffineExpr":
        if not self.is_linear:
            raise ValueError("mod of a non-linear expression exceeds nesting depth 1")
        term = DivModTerm(self, d, TermKind.MOD, 1)
        return QuasiAffineExpr(tuple(0 for _ in self.coeffs), 0, (term,))


def variables(arity: int) -> tuple[QuasiAffineExpr, ...]:
    """Unit expressions i0..i{arity-1}."""
    return tuple(
        QuasiAffineExpr(tuple(1 if j == k else 0 for j in range(arity)))
        for k in range(arity)
    )


def const_expr(arity: int, value: int) -> QuasiAffineExpr:
    return QuasiAffineExpr(tuple(0 for _ in range(arity)), value)


def _normalize_expr(coeffs, const, terms):
    """Canonicalize to a linear part plus floordiv-only terms.

    ``w*(e mod d)`` is rewritten as ``w*e - w*d*(e floordiv d)``, which makes
    the floor/mod law hold by construction and gives every function exactly
    one normal form (constants folded, divisor-1 and gcd reductions applied,
    terms merged and sorted).
    """
    coeffs = [int(c) for c in coeffs]
    const = int(const)
    bucket: dict[tuple, int] = {}
    pending = [(t.inner.coeffs, t.inner.const, t.divisor, t.kind, t.weight) for t in terms]
    while pending:
        ic, ib, d, kind, w = pending.pop()
        if w == 0:
            continue
        if kind is TermKind.MOD:
            coeffs = [a + w * b for a, b in zip(coeffs, ic)]
            const += w * ib
            pending.append((ic, ib, d, TermKind.FLOORDIV, -w * d))
            continue
        if all(c == 0 for c in ic):
            const += w * (ib // d)
            continue
        if d == 1:
            coeffs = [a + w * b for a, b in zip(coeffs, ic)]
            const += w * ib
            continue
        g = _gcd_many([*ic, ib, d])
        if g > 1:
            ic = tuple(c // g for c in ic)
            ib //= g
            d //= g
            if d == 1:
                pending.append((ic, ib, d, kind, w))
                continue
        key = (d, tuple(ic), ib)
        bucket[key] = bucket.get(key, 0) + w
    out_terms = []
    for (d, ic, ib), w in bucket.items():
        if w == 0:
            continue
        inner = object.__new__(QuasiAffineExpr)
        object.__setattr__(inner, "coeffs", ic)
        object.__setattr__(inner, "const", ib)
        object.__setattr__(inner, "terms", ())
        out_terms.append(DivModTerm(inner, d, TermKind.FLOORDIV, w))
    out_terms.sort(key=lambda t: (t.divisor, t.inner.coeffs, t.inner.const))
    return tuple(coeffs), const, tuple(out_terms)


def _linear_interval(coeffs, const, box: IntBox) -> tuple[int, int]:
    """Exact inclusive value range of a linear expression over a non-empty box."""
    lo = hi = const
    for c, l, h in zip(coeffs, box.los, box.his):
        if c >= 0:
            lo += c * l
            hi += c * (h - 1)
        else:
            lo += c * (h - 1)
            hi += c * l
    return lo, hi


def _box_simplify(expr: QuasiAffineExpr, box: IntBox) -> QuasiAffineExpr:
    """Resolve div/mod terms that the box bounds make exact.

    Splits each term's inner expression as inner = d*q + r with r's
    coefficients in [0, d); when the value range of r over the box lies in
    [0, d), ``inner fd d`` is exactly q and ``inner mod d`` is exactly r.
    """
    if box.is_empty or not expr.terms:
        return expr
    coeffs = list(expr.coeffs)
    const = expr.const
    kept = []
    changed = False
    for t in expr.terms:
        d = t.divisor
        qc = [c // d for c in t.inner.coeffs]
        rc = [c % d for c in t.inner.coeffs]
        qb, rb = t.inner.const // d, t.inner.const % d
        lo, hi = _linear_interval(rc, rb, box)
        if 0 <= lo and hi < d:
            add_c, add_b = (qc, qb) if t.kind is TermKind.FLOORDIV else (rc, rb)
            coeffs = [a + t.weight * b for a, b in zip(coeffs, add_c)]
            const += t.weight * add_b
            changed = True
        else:
            kept.append(t)
    if not changed:
        return expr
    return QuasiAffineExpr(tuple(coeffs), const, tuple(kept))


def expr_interval(expr: QuasiAffineExpr, box: IntBox) -> tuple[int, int]:
    """Conservative (exact when linear) inclusive value range over a non-empty box."""
    lo, hi = _linear_interval(expr.coeffs, expr.const, box)
    for t in expr.terms:
        ilo, ihi = _linear_interval(t.inner.coeffs, t.inner.const, box)
        if t.kind is TermKind.FLOORDIV:
            tlo, thi = ilo // t.divisor, ihi // t.divisor
        else:
            tlo, thi = 0, t.divisor - 1
        lo += t.weight * (tlo if t.weight >= 0 else thi)
        hi += t.weight * (thi if t.weight >= 0 else tlo)
    return lo, hi


# ---------------------------------------------------------------------------
# Maps


class MapClass(Enum):
    PERM_SHIFT = "perm_shift"
    STRIDED_EMBED = "strided_embed"
    MIXED_RADIX = "mixed_radix"
    GENERAL = "general"


@dataclass(frozen=True)
class QuasiAffineMap:
    """Map from a box domain to integer vectors.

    Either expression-backed (``exprs`` per output dimension) or, for
    compositions that escape the depth-one expression language,
    point-table-backed (``table`` sorted point->point pairs).
    """

    domain: IntBox
    exprs: tuple[QuasiAffineExpr, ...] | None
    table: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...] | None = None

    def __post_init__(self) -> None:
        if (self.exprs is None) == (self.table is None):
            raise ValueError("exactly one of exprs/table must be given")
        if self.exprs is not None:
            exprs = tuple(_box_simplify(e, self.domain) for e in self.exprs)
            object.__setattr__(self, "exprs", exprs)
            for e in exprs:
                if e.arity != self.domain.ndim:
                    raise ValueError("output expression arity != domain arity")
        else:
            object.__setattr__(self, "table", tuple(sorted(self.table)))

    @property
    def in_arity(self) -> int:
        return self.domain.ndim

    @property
    def out_arity(self) -> int:
        if self.exprs is not None:
            return len(self.exprs)
        if not self.table:
            return 0
        return len(self.table[0][1])

    @property
    def is_symbolic(self) -> bool:
        return self.exprs is not None

    @property
    def is_pure_affine(self) -> bool:
        """True when representable as C@i + b (no div/mod terms)."""
        return self.exprs is not None and all(e.is_linear for e in self.exprs)

    @cached_property
    def _table_dict(self) -> dict:
        return dict(self.table or ())

    @cached_property
    def map_class(self) -> MapClass:
        return _classify(self)

    def evaluate(self, point) -> tuple[int, ...]:
        point = tuple(int(p) for p in point)
        if not self.domain.contains(point):
            raise PointOutsideDomain(f"{point} outside domain")
        if self.exprs is not None:
            return tuple(e.evaluate(point) for e in self.exprs)
        return self._table_dict[point]

    def evaluate_batch(self, pts: np.ndarray) -> np.ndarray:
        """Evaluate on (N, in_arity) int64 points, assumed inside the domain."""
        if self.exprs is not None:
            if pts.shape[0] == 0:
                return np.zeros((0, self.out_arity), dtype=np.int64)
            return np.stack([e.evaluate_batch(pts) for e in self.exprs], axis=-1)
        d = self._table_dict
        return np.asarray([d[tuple(int(v) for v in p)] for p in pts], dtype=np.int64).reshape(
            pts.shape[0], self.out_arity
        )


def affine_map(box: IntBox, exprs) -> QuasiAffineMap:
    return QuasiAffineMap(box, tuple(exprs))


def identity_map(box: IntBox) -> QuasiAffineMap:
    return affine_map(box, variables(box.ndim))


def evaluate(m: QuasiAffineMap, point) -> tuple[int, ...]:
    return m.evaluate(point)


# ---------------------------------------------------------------------------
# Classification


def _single_var(e: QuasiAffineExpr) -> tuple[int, int] | None:
    """(dim, coeff) when e == coeff*i_dim + const with exactly one variable."""
    if e.terms:
        return None
    nz = [(j, c) for j, c in enumerate(e.coeffs) if c != 0]
    if len(nz) != 1:
        return None
    return nz[0]


def _suffix_products(extents: tuple[int, ...]) -> tuple[int, ...]:
    out = [1] * len(extents)
    for j in range(len(extents) - 2, -1, -1):
        out[j] = out[j + 1] * extents[j + 1]
    return tuple(out)


def build_unflatten_exprs(base: int, radices: tuple[int, ...]) -> tuple[QuasiAffineExpr, ...]:
    """Digit-extraction expressions for a 1-d domain value x in [base, base+prod)."""
    (x,) = variables(1)
    shifted = x - base
    weights = _suffix_products(radices)
    exprs = []
    for j, (w, r) in enumerate(zip(weights, radices)):
        if j == 0:
            exprs.append(shifted.floordiv(w) if w > 1 else shifted)
        elif w == 1:
            exprs.append(shifted - r * shifted.floordiv(r))
        else:
            exprs.append(shifted.floordiv(w) - r * shifted.floordiv(w * r))
    return tuple(exprs)


def _match_unflatten(m: QuasiAffineMap) -> tuple[int, tuple[int, ...]] | None:
    """Recognize canonical digit extraction; returns (base, radices)."""
    if m.in_arity != 1 or m.out_arity < 2:
        return None
    lo, hi = m.domain.los[0], m.domain.his[0]
    total = hi - lo
    if total < 4:
        return None
    base = lo
    # per-output weights: smallest floordiv divisor; innermost digit has weight 1
    weights = []
    for e in m.exprs[:-1]:
        divisors = sorted(t.divisor for t in e.terms if t.kind is TermKind.FLOORDIV)
        if not divisors:
            return None
        weights.append(divisors[0])
    weights.append(1)
    if total % weights[0] != 0:
        return None
    radices = [total // weights[0]]
    for prev, cur in zip(weights, weights[1:]):
        if cur <= 0 or prev % cur != 0:
            return None
        radices.append(prev // cur)
    if any(r < 2 for r in radices) or math.prod(radices) != total:
        return None
    rebuilt = build_unflatten_exprs(base, tuple(radices))
    if rebuilt != m.exprs:
        return None
    return base, tuple(radices)


def _classify(m: QuasiAffineMap) -> MapClass:
    if m.exprs is None:
        return MapClass.GENERAL
    n, k = m.in_arity, m.out_arity
    if n == k and n > 0:
        sv = [_single_var(e) for e in m.exprs]
        if all(v is not None for v in sv):
            dims = [v[0] for v in sv]
            if sorted(dims) == list(range(n)):
                if all(v[1] == 1 for v in sv):
                    return MapClass.PERM_SHIFT
                return MapClass.STRIDED_EMBED
    if k == 1 and n >= 2 and m.exprs[0].is_linear:
        ext = m.domain.extents
        if all(x >= 1 for x in ext) and m.exprs[0].coeffs == _suffix_products(ext):
            return MapClass.MIXED_RADIX
    if _match_unflatten(m) is not None:
        return MapClass.MIXED_RADIX
    return MapClass.GENERAL


def classify(m: QuasiAffineMap) -> MapClass:
    return m.map_class


# ---------------------------------------------------------------------------
# Images


@dataclass(frozen=True)
class LatticeImage:
    """Separable image: per output dimension an arithmetic progression."""

    los: tuple[int, ...]
    strides: tuple[int, ...]
    counts: tuple[int, ...]

    @property
    def cardinality(self) -> int:
        return math.prod(self.counts)

    def bounding_box(self) -> IntBox:
        his = tuple(
            lo + s * (c - 1) + 1 if c > 0 else lo
            for lo, s, c in zip(self.los, self.strides, self.counts)
        )
        return IntBox(self.los, his)

    def __contains__(self, point) -> bool:
        if len(point) != len(self.los):
            return False
        for p, lo, s, c in zip(point, self.los, self.strides, self.counts):
            if c == 0 or p < lo or p > lo + s * (c - 1) or (p - lo) % s != 0:
                return False
        return True

    def points(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(
            *(range(lo, lo + s * c, s) for lo, s, c in zip(self.los, self.strides, self.counts))
        )

    def is_subset_of_box(self, box: IntBox) -> bool:
        if self.cardinality == 0:
            return True
        bb = self.bounding_box()
        return all(l >= bl and h <= bh for l, h, bl, bh in zip(bb.los, bb.his, box.los, box.his))

    def equals_box(self, box: IntBox) -> bool:
        return all(s == 1 for s in self.strides) and self.bounding_box() == box


@dataclass(frozen=True)
class ExplicitImage:
    """Image as an explicit finite point set."""

    pts: frozenset

    @property
    def cardinality(self) -> int:
        return len(self.pts)

    def bounding_box(self) -> IntBox:
        if not self.pts:
            return IntBox((), ())
        arr = list(self.pts)
        nd = len(arr[0])
        los = tuple(min(p[j] for p in arr) for j in range(nd))
        his = tuple(max(p[j] for p in arr) + 1 for j in range(nd))
        return IntBox(los, his)

    def __contains__(self, point) -> bool:
        return tuple(point) in self.pts

    def points(self) -> Iterator[tuple[int, ...]]:
        return iter(sorted(self.pts))

    def is_subset_of_box(self, box: IntBox) -> bool:
        return all(box.contains(p) for p in self.pts)

    def equals_box(self, box: IntBox) -> bool:
        if len(self.pts) != box.cardinality:
            return False
        return all(box.contains(p) for p in self.pts)


ImageSet = Union[LatticeImage, ExplicitImage]


def image(m: QuasiAffineMap, limits: Limits = DEFAULT_LIMITS) -> ImageSet:
    """Exact image {f(p) : p in domain}, symbolic when the class permits."""
    if m.domain.is_empty:
        return ExplicitImage(frozenset())
    cls = m.map_class
    if cls is MapClass.PERM_SHIFT or cls is MapClass.STRIDED_EMBED:
        los, strides, counts = [], [], []
        for e in m.exprs:
            dim, s = _single_var(e)
            lo, hi = m.domain.los[dim], m.domain.his[dim]
            count = hi - lo
            if s > 0:
                los.append(s * lo + e.const)
            else:
                los.append(s * (hi - 1) + e.const)
            strides.append(abs(s))
            counts.append(count)
        return LatticeImage(tuple(los), tuple(strides), tuple(counts))
    if cls is MapClass.MIXED_RADIX:
        if m.out_arity == 1:
            base, _ = _linear_interval(m.exprs[0].coeffs, m.exprs[0].const, m.domain)
            return LatticeImage((base,), (1,), (m.domain.cardinality,))
        base, radices = _match_unflatten(m)
        return LatticeImage(
            tuple(0 for _ in radices), tuple(1 for _ in radices), radices
        )
    if m.domain.cardinality > limits.enumerate_limit:
        raise DomainTooLarge(
            f"cannot enumerate image of {m.domain.cardinality} points"
        )
    pts = m.domain.points_array()
    vals = m.evaluate_batch(pts)
    return ExplicitImage(frozenset(map(tuple, vals.tolist())))


# ---------------------------------------------------------------------------
# Reversal


@dataclass(frozen=True)
class SymbolicInverse:
    map: QuasiAffineMap
    image: ImageSet

    def apply(self, point) -> tuple[int, ...]:
        return self.map.evaluate(point)


@dataclass(frozen=True)
class TabulatedInverse:
    table: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    image: ImageSet

    @cached_property
    def _dict(self) -> dict:
        return dict(self.table)

    def apply(self, point) -> tuple[int, ...]:
        return self._dict[tuple(point)]


@dataclass(frozen=True)
class NotInvertible:
    reason: str


InverseResult = Union[SymbolicInverse, TabulatedInverse, NotInvertible]


def reverse(m: QuasiAffineMap, limits: Limits = DEFAULT_LIMITS) -> InverseResult:
    """Inverse of ``m`` restricted to its image.

    Symbolic for the PermShift / StridedEmbed / MixedRadix normal forms
    (the symbolic inverse's declared box is the image's bounding box; the
    precise image accompanies the result).  General maps are tabulated up
    to the configured limit.  Non-invertibility is a value, not an error.
    """
    if m.domain.is_empty:
        empty = IntBox(tuple(0 for _ in range(m.out_arity)), tuple(0 for _ in range(m.out_arity)))
        exprs = tuple(const_expr(m.out_arity, 0) for _ in range(m.in_arity))
        return SymbolicInverse(QuasiAffineMap(empty, exprs), ExplicitImage(frozenset()))
    cls = m.map_class
    img = None
    if cls in (MapClass.PERM_SHIFT, MapClass.STRIDED_EMBED, MapClass.MIXED_RADIX):
        img = image(m, limits)
    if cls in (MapClass.PERM_SHIFT, MapClass.STRIDED_EMBED):
        n = m.in_arity
        by_dim = {}
        for k, e in enumerate(m.exprs):
            dim, s = _single_var(e)
            by_dim[dim] = (k, s, e.const)
        xs = variables(n)
        inv_exprs: list[QuasiAffineExpr] = [None] * n  # type: ignore[list-item]
        for j in range(n):
            k, s, b = by_dim[j]
            if s == 1:
                inv_exprs[j] = xs[k] - b
            elif s == -1:
                inv_exprs[j] = -(xs[k] - b)
            elif s > 0:
                inv_exprs[j] = (xs[k] - b).floordiv(s)
            else:
                inv_exprs[j] = (const_expr(n, b) - xs[k]).floordiv(-s)
        inv = QuasiAffineMap(img.bounding_box(), tuple(inv_exprs))
        return SymbolicInverse(inv, img)
    if cls is MapClass.MIXED_RADIX:
        if m.out_arity == 1:  # row-major flatten -> digit extraction
            base = img.los[0]
            ext = m.domain.extents
            digit = build_unflatten_exprs(base, ext)
            inv_exprs = tuple(d + lo for d, lo in zip(digit, m.domain.los))
            inv = QuasiAffineMap(img.bounding_box(), inv_exprs)
            return SymbolicInverse(inv, img)
        base, radices = _match_unflatten(m)
        weights = _suffix_products(radices)
        ys = variables(len(radices))
        acc = const_expr(len(radices), base)
        for w, y in zip(weights, ys):
            acc = acc + w * y
        inv = QuasiAffineMap(img.bounding_box(), (acc,))
        return SymbolicInverse(inv, img)
    # general: tabulate
    card = m.domain.cardinality
    if card > limits.tabulate_limit:
        return NotInvertible(f"domain too large to tabulate ({card} points)")
    seen: dict[tuple[int, ...], tuple[int, ...]] = {}
    pts = m.domain.points_array()
    vals = m.evaluate_batch(pts)
    for p, v in zip(pts.tolist(), vals.tolist()):
        key = tuple(v)
        if key in seen:
            return NotInvertible(f"collision: f{tuple(seen[key])} == f{tuple(p)} == {key}")
        seen[key] = tuple(p)
    table = tuple(sorted(seen.items()))
    return TabulatedInverse(table, ExplicitImage(frozenset(seen)))


# ---------------------------------------------------------------------------
# Composition


def compose(
    outer: QuasiAffineMap, inner: QuasiAffineMap, limits: Limits = DEFAULT_LIMITS
) -> QuasiAffineMap:
    """outer after inner: evaluate(result, p) == outer(inner(p)).

    Symbolic when substitution stays within depth-one div/mod; otherwise the
    result is point-table-backed (class General) with identical semantics.
    """
    if inner.out_arity != outer.in_arity:
        raise ArityMismatch(
            f"inner produces {inner.out_arity} values, outer consumes {outer.in_arity}"
        )
    _check_image_in_domain(inner, outer.domain, limits)
    if outer.exprs is not None and inner.exprs is not None:
        exprs = []
        ok = True
        for oe in outer.exprs:
            acc = const_expr(inner.in_arity, oe.const)
            for c, ie in zip(oe.coeffs, inner.exprs):
                if c:
                    acc = acc + c * ie
            for t in oe.terms:
                sub = const_expr(inner.in_arity, t.inner.const)
                for c, ie in zip(t.inner.coeffs, inner.exprs):
                    if c:
                        sub = sub + c * ie
                sub = _box_simplify(sub, inner.domain)
                if not sub.is_linear:
                    ok = False
                    break
                kinded = sub.floordiv(t.divisor) if t.kind is TermKind.FLOORDIV else sub.mod(t.divisor)
                acc = acc + t.weight * kinded
            if not ok:
                break
            exprs.append(acc)
        if ok:
            return QuasiAffineMap(inner.domain, tuple(exprs))
    card = inner.domain.cardinality
    if card > limits.tabulate_limit:
        raise DomainTooLarge(f"composition fallback cannot tabulate {card} points")
    pts = inner.domain.points_array()
    mids = inner.evaluate_batch(pts)
    outs = outer.evaluate_batch(mids)
    table = tuple(
        (tuple(p), tuple(v)) for p, v in zip(pts.tolist(), outs.tolist())
    )
    return QuasiAffineMap(inner.domain, None, table)


def _check_image_in_domain(inner: QuasiAffineMap, box: IntBox, limits: Limits) -> None:
    if inner.domain.is_empty:
        return
    if inner.out_arity != box.ndim:
        raise ArityMismatch("image arity != domain arity")
    try:
        img = image(inner, limits)
    except DomainTooLarge:
        if inner.exprs is None:
            raise
        for e, lo, hi in zip(inner.exprs, box.los, box.his):
            elo, ehi = expr_interval(e, inner.domain)
            if elo < lo or ehi >= hi:
                raise ImageEscapesDomain(
                    f"output range [{elo}, {ehi}] escapes [{lo}, {hi})"
                )
        return
    if not img.is_subset_of_box(box):
        raise ImageEscapesDomain("inner image escapes outer domain")
