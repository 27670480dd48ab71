"""Geometry of the index set Z^b x Z^d.

Sites pair a frequency multi-index k (length b) with a space site n
(length d).  Regions are rectangles minus a translated copy of themselves
(the box shape used in multiscale analysis), optionally with the resonant
set removed.  All values here are immutable and safe to share across
workers; member enumeration is lexicographic so downstream matrix assembly
is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

from .errors import EmptyRegion, InvalidAnchors, OutOfRegion

# Regions up to this many sites keep a materialized sorted member list;
# larger ones still answer membership queries through the predicate.
MATERIALIZE_LIMIT = 10**7


class Site(NamedTuple):
    """A lattice point (k, n) in Z^b x Z^d.

    Norms are sup-norms: ``norm`` over all b+d entries, ``norm_k`` /
    ``norm_n`` over the parts.
    """

    k: tuple
    n: tuple

    @property
    def norm_k(self) -> int:
        return max((abs(x) for x in self.k), default=0)

    @property
    def norm_n(self) -> int:
        return max((abs(x) for x in self.n), default=0)

    @property
    def norm(self) -> int:
        return max(self.norm_k, self.norm_n)

    @property
    def order(self) -> int:
        """|k| + |n|, the weight used in decay estimates."""
        return self.norm_k + self.norm_n

    @property
    def vector(self) -> tuple:
        return self.k + self.n

    def negated_k(self) -> "Site":
        return Site(tuple(-x for x in self.k), self.n)


def canonical_k(k: tuple) -> tuple:
    """Representative of {k, -k}: the lexicographically larger one."""
    nk = tuple(-x for x in k)
    return k if k >= nk else nk


def unit_k(l: int, b: int) -> tuple:
    """Standard basis vector e_l (1-based l) of Z^b."""
    if not 1 <= l <= b:
        raise ValueError(f"frequency index l={l} out of range 1..{b}")
    return tuple(1 if i == l - 1 else 0 for i in range(b))


@dataclass(frozen=True)
class ResonantSet:
    """The 2b anchored sites {(+-e_l, n^(l))}, closed under k -> -k."""

    anchors: tuple  # tuple of b space sites (each a tuple of d ints)
    b: int
    d: int
    members: frozenset = field(init=False)

    def __post_init__(self):
        if self.b < 1 or len(self.anchors) != self.b:
            raise InvalidAnchors(
                f"need exactly b={self.b} anchors, got {len(self.anchors)}")
        if len(set(self.anchors)) != self.b:
            raise InvalidAnchors(f"anchors must be distinct: {self.anchors}")
        for n in self.anchors:
            if len(n) != self.d:
                raise InvalidAnchors(f"anchor {n} has length != d={self.d}")
        mem = set()
        for l, n in enumerate(self.anchors, start=1):
            e = unit_k(l, self.b)
            mem.add(Site(e, tuple(n)))
            mem.add(Site(tuple(-x for x in e), tuple(n)))
        object.__setattr__(self, "members", frozenset(mem))

    def __contains__(self, site: Site) -> bool:
        return Site(tuple(site[0]), tuple(site[1])) in self.members

    def sorted_members(self) -> tuple:
        return tuple(sorted(self.members, key=lambda s: s.vector))


@dataclass(frozen=True)
class RegionSpec:
    """R_w(center) \\ (R_w(center)+z), minus an optional excluded set.

    An all-zero shift means the full rectangle (no copy is removed).
    """

    base_center: Site
    half_widths: tuple  # length b+d, nonnegative ints
    shift: tuple        # length b+d; all zeros = full rectangle
    b: int
    d: int
    excluded: Optional[ResonantSet] = None

    def __post_init__(self):
        dim = self.b + self.d
        if len(self.base_center.k) != self.b or len(self.base_center.n) != self.d:
            raise ValueError("base_center does not match (b, d)")
        if len(self.half_widths) != dim or len(self.shift) != dim:
            raise ValueError("half_widths and shift must have length b+d")
        if any(w < 0 for w in self.half_widths):
            raise ValueError("half_widths must be nonnegative")

    # -- membership predicate -------------------------------------------------

    def _in_base(self, vec: tuple) -> bool:
        c = self.base_center.vector
        return all(abs(vec[i] - c[i]) <= self.half_widths[i]
                   for i in range(len(vec)))

    def contains(self, site: Site) -> bool:
        vec = tuple(site[0]) + tuple(site[1])
        if not self._in_base(vec):
            return False
        if any(self.shift):
            shifted_back = tuple(vec[i] - self.shift[i] for i in range(len(vec)))
            if self._in_base(shifted_back):
                return False
        if self.excluded is not None and Site(tuple(site[0]), tuple(site[1])) in self.excluded:
            return False
        return True

    __contains__ = contains

    # -- enumeration ----------------------------------------------------------

    def _iter_members(self) -> Iterator[Site]:
        c = self.base_center.vector
        w = self.half_widths
        ranges = [range(c[i] - w[i], c[i] + w[i] + 1) for i in range(len(c))]

        def rec(i, prefix):
            if i == len(ranges):
                site = Site(prefix[:self.b], prefix[self.b:])
                if self.contains(site):
                    yield site
                return
            for v in ranges[i]:
                yield from rec(i + 1, prefix + (v,))

        yield from rec(0, ())

    def members(self) -> tuple:
        """Sorted member sites (lexicographic on the concatenated vector)."""
        cached = getattr(self, "_members_cache", None)
        if cached is None:
            bound = 1
            for w in self.half_widths:
                bound *= 2 * w + 1
            if bound > MATERIALIZE_LIMIT:
                raise MemoryError(
                    f"region with {bound} candidate sites exceeds the "
                    f"materialization limit {MATERIALIZE_LIMIT}")
            cached = tuple(sorted(self._iter_members(), key=lambda s: s.vector))
            object.__setattr__(self, "_members_cache", cached)
        return cached

    def size(self) -> int:
        return len(self.members())

    def diameter(self) -> int:
        """Sup-norm diameter of the member set (coordinatewise span max)."""
        mem = self.members()
        if not mem:
            raise EmptyRegion("cannot take the diameter of an empty region")
        vecs = [s.vector for s in mem]
        dim = len(vecs[0])
        return max(max(v[i] for v in vecs) - min(v[i] for v in vecs)
                   for i in range(dim))


def cube(L: int, b: int, d: int, excluded: Optional[ResonantSet] = None) -> RegionSpec:
    """Full rectangle of half-width L in every coordinate, centered at 0."""
    if L < 1:
        raise ValueError(f"cube radius must be >= 1, got {L}")
    dim = b + d
    center = Site((0,) * b, (0,) * d)
    return RegionSpec(center, (L,) * dim, (0,) * dim, b, d, excluded)


def region_members(spec: RegionSpec) -> tuple:
    """Deterministic lexicographic enumeration of the member sites."""
    mem = spec.members()
    if not mem:
        raise EmptyRegion(f"region {spec} has no member sites")
    return mem


class RegionIndex:
    """Bijection between a region's sites and 0..N-1, stable per spec."""

    def __init__(self, spec: RegionSpec):
        self.spec = spec
        self.sites = region_members(spec)
        self._index = {s: i for i, s in enumerate(self.sites)}

    @property
    def size(self) -> int:
        return len(self.sites)

    def index_of(self, site) -> int:
        key = Site(tuple(site[0]), tuple(site[1]))
        try:
            return self._index[key]
        except KeyError:
            raise OutOfRegion(f"site {key} not in region") from None

    def site_of(self, i: int) -> Site:
        if not 0 <= i < len(self.sites):
            raise OutOfRegion(f"index {i} out of range 0..{len(self.sites)-1}")
        return self.sites[i]

    def get(self, site) -> Optional[int]:
        return self._index.get(Site(tuple(site[0]), tuple(site[1])))


def index_map(spec: RegionSpec) -> RegionIndex:
    return RegionIndex(spec)


def sup_distance(a: Site, b: Site) -> int:
    """Sup-norm distance |j - j'| between two sites."""
    va, vb = a.vector, b.vector
    return max(abs(x - y) for x, y in zip(va, vb))
