"""Finite and lazy-infinite families of interior-disjoint cubes.

A domain is an indexed family of cubes in the unit n-cube whose interiors are
pairwise disjoint.  Finite domains are table backed; infinite ones are rule
backed, optionally with a point locator so concatenated loops can be evaluated
exactly, and with a disjointness certificate tag for validation reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .geometry import (
    Cube,
    GeometryError,
    Interval,
    ONE,
    ZERO,
    canonical_affine,
    cube,
    dyadic_inner_cube,
    interiors_disjoint,
    middle_cube,
    rat,
    subdivide,
    unit_cube,
)


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class FiniteIndexSet:
    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(sorted(set(self.indices))))

    @property
    def is_finite(self) -> bool:
        return True

    def contains(self, k: int) -> bool:
        return k in self.indices

    def upto(self, bound: int | None = None) -> tuple[int, ...]:
        if bound is None:
            return self.indices
        return tuple(k for k in self.indices if k <= bound)

    def least(self) -> int:
        return self.indices[0]

    def rank(self, k: int) -> int:
        return self.indices.index(k) + 1

    def from_rank(self, r: int) -> int:
        return self.indices[r - 1]

    def without(self, k: int) -> "FiniteIndexSet":
        return FiniteIndexSet(tuple(i for i in self.indices if i != k))

    def size(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class NaturalIndexSet:
    """All integers >= start with finitely many exclusions."""

    start: int = 1
    excluded: frozenset[int] = frozenset()

    def __post_init__(self):
        # canonical form: start is the least member, exclusions sit above it
        start = self.start
        excluded = set(self.excluded)
        while start in excluded:
            excluded.remove(start)
            start += 1
        if any(e < start for e in excluded):
            raise DomainError("excluded indices must lie at or above start")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "excluded", frozenset(excluded))

    @property
    def is_finite(self) -> bool:
        return False

    def contains(self, k: int) -> bool:
        return k >= self.start and k not in self.excluded

    def upto(self, bound: int | None) -> tuple[int, ...]:
        if bound is None:
            raise DomainError("an infinite index set needs a bound")
        return tuple(
            k for k in range(self.start, bound + 1) if k not in self.excluded
        )

    def least(self) -> int:
        k = self.start
        while k in self.excluded:
            k += 1
        return k

    def rank(self, k: int) -> int:
        if not self.contains(k):
            raise DomainError(f"index {k} not in index set")
        return k - self.start + 1 - sum(1 for e in self.excluded if e < k)

    def from_rank(self, r: int) -> int:
        k = self.start + r - 1
        for e in sorted(self.excluded):
            if e <= k:
                k += 1
        return k

    def without(self, k: int) -> "NaturalIndexSet":
        return NaturalIndexSet(self.start, self.excluded | {k})


IndexSet = FiniteIndexSet | NaturalIndexSet


class NDomain:
    """Indexed family of cubes with pairwise disjoint interiors."""

    def __init__(
        self,
        n: int,
        index_set: IndexSet,
        accessor: Callable[[int], Cube],
        *,
        locator: Callable[[Sequence[Rational]], Iterable[int]] | None = None,
        signature: tuple | None = None,
        certificate: str | None = None,
    ):
        self.n = n
        self.index_set = index_set
        self._accessor = accessor
        self._cache: dict[int, Cube] = {}
        self.locator = locator
        self.signature = signature
        self.certificate = certificate

    @staticmethod
    def finite(cubes: Sequence[Cube], indices: Sequence[int] | None = None, **kw) -> "NDomain":
        cubes = tuple(cubes)
        if not cubes:
            raise DomainError("a domain needs at least one cube")
        n = cubes[0].n
        if indices is None:
            indices = tuple(range(1, len(cubes) + 1))
        table = dict(zip(indices, cubes))
        if len(table) != len(cubes):
            raise DomainError("duplicate indices")
        return NDomain(n, FiniteIndexSet(tuple(indices)), table.__getitem__, **kw)

    @staticmethod
    def from_rule(
        n: int, index_set: NaturalIndexSet, rule: Callable[[int], Cube], **kw
    ) -> "NDomain":
        return NDomain(n, index_set, rule, **kw)

    @property
    def is_finite(self) -> bool:
        return self.index_set.is_finite

    def cube(self, k: int) -> Cube:
        if not self.index_set.contains(k):
            raise DomainError(f"index {k} not in index set")
        c = self._cache.get(k)
        if c is None:
            c = self._accessor(k)
            if c.n != self.n:
                raise DomainError(f"cube at index {k} has wrong dimension")
            self._cache[k] = c
        return c

    def indices_upto(self, bound: int | None = None) -> tuple[int, ...]:
        return self.index_set.upto(bound)

    def cubes_upto(self, bound: int | None = None) -> tuple[Cube, ...]:
        return tuple(self.cube(k) for k in self.indices_upto(bound))

    def size(self) -> int:
        if not self.is_finite:
            raise DomainError("infinite domain has no size")
        return self.index_set.size()

    def locate(self, point: Sequence[Rational]) -> tuple[int, ...]:
        """Candidate indices whose cube may contain the point (checked)."""
        point = tuple(rat(x) for x in point)
        if self.locator is not None:
            cands = sorted(set(self.locator(point)))
            return tuple(
                k for k in cands if self.index_set.contains(k) and self.cube(k).contains_point(point)
            )
        if self.is_finite:
            return tuple(
                k for k in self.indices_upto() if self.cube(k).contains_point(point)
            )
        raise DomainError("infinite domain without locator: use bounded scans")

    def same_family(self, other: "NDomain") -> bool:
        """Conservative equality: table equality when finite, else signatures."""
        if self is other:
            return True
        if self.n != other.n or self.index_set != other.index_set:
            return False
        if self.is_finite and other.is_finite:
            return all(
                self.cube(k) == other.cube(k) for k in self.indices_upto()
            )
        return self.signature is not None and self.signature == other.signature


@dataclass
class ValidationReport:
    ok: bool
    checked_pairs: int
    failures: tuple[tuple[int, int], ...]
    note: str

    def first_failure(self) -> tuple[int, int] | None:
        return self.failures[0] if self.failures else None


def validate(domain: NDomain, bound: int = 64) -> ValidationReport:
    """Exhaustive pairwise disjointness check (up to bound when infinite)."""
    if domain.is_finite:
        idx = domain.indices_upto()
        note = "all pairs checked exactly"
    else:
        idx = domain.indices_upto(bound)
        note = f"pairs with indices <= {bound} checked"
        if domain.certificate:
            note += f"; certificate: {domain.certificate}"
    failures = []
    checked = 0
    for i in range(len(idx)):
        for j in range(i + 1, len(idx)):
            checked += 1
            if not interiors_disjoint(domain.cube(idx[i]), domain.cube(idx[j])):
                failures.append((idx[i], idx[j]))
    return ValidationReport(not failures, checked, tuple(failures), note)


@dataclass
class SubdomainWitness:
    """Parent/child domain pair with per-index containment checking."""

    parent: NDomain
    child: NDomain

    def __post_init__(self):
        if self.parent.n != self.child.n:
            raise DomainError("parent/child dimension mismatch")
        if self.parent.index_set != self.child.index_set:
            raise DomainError("parent/child index sets differ")

    def check_index(self, k: int) -> bool:
        return self.parent.cube(k).contains_cube(self.child.cube(k))

    def violations_upto(self, bound: int | None = None) -> tuple[int, ...]:
        return tuple(
            k for k in self.parent.indices_upto(bound) if not self.check_index(k)
        )


# ---------------------------------------------------------------------------
# Named families


def _standard_interval(k: int) -> Interval:
    return Interval(frac(k - 1, k), frac(k, k + 1))


def _slab(n: int, first: Interval) -> Cube:
    return Cube((first,) + (Interval(ZERO, ONE),) * (n - 1))


def standard_slab(n: int, k: int) -> Cube:
    """k-th slab [ (k-1)/k, k/(k+1) ] x I^(n-1)."""
    return _slab(n, _standard_interval(k))


def _standard_locator_first_axis(s1: Rational) -> tuple[int, ...]:
    if s1 >= ONE or s1 < ZERO:
        return ()
    if s1 == ZERO:
        return (1,)
    r = 1 / (ONE - s1)
    kc = int(r)
    return tuple(k for k in (kc - 1, kc, kc + 1) if k >= 1)


def standard_over(n: int, index_set: NaturalIndexSet) -> NDomain:
    """Slab family assigned by rank inside the given index set."""

    def rule(k: int) -> Cube:
        return standard_slab(n, index_set.rank(k))

    def locator(point):
        return tuple(
            index_set.from_rank(r) for r in _standard_locator_first_axis(point[0])
        )

    return NDomain.from_rule(
        n,
        index_set,
        rule,
        locator=locator,
        signature=("standard", n, index_set),
        certificate="slab-tiling",
    )


def standard_domain(n: int) -> NDomain:
    if n < 2:
        raise DomainError("dimension must be >= 2")
    return standard_over(n, NaturalIndexSet(1))


def interleaved_pair_domain(n: int) -> NDomain:
    """Each standard slab split at its midpoint: A11, A12, A21, A22, ..."""

    def halves(k: int) -> tuple[Interval, Interval]:
        full = _standard_interval(k)
        mid = full.midpoint
        return Interval(full.lo, mid), Interval(mid, full.hi)

    def rule(j: int) -> Cube:
        k, half = (j + 1) // 2, (j + 1) % 2
        return _slab(n, halves(k)[half])

    def locator(point):
        out = []
        for k in _standard_locator_first_axis(point[0]):
            out.extend((2 * k - 1, 2 * k))
        return out

    return NDomain.from_rule(
        n,
        NaturalIndexSet(1),
        rule,
        locator=locator,
        signature=("interleaved", n),
        certificate="slab-tiling",
    )


def block_pair_domain(n: int) -> NDomain:
    """Standard slabs copied into the left and right half: B1, C1, B2, C2, ..."""
    left = canonical_affine(unit_cube(n), _slab(n, Interval(ZERO, frac(1, 2))))
    right = canonical_affine(unit_cube(n), _slab(n, Interval(frac(1, 2), ONE)))

    def rule(j: int) -> Cube:
        k = (j + 1) // 2
        block = left if j % 2 == 1 else right
        return block.apply_cube(standard_slab(n, k))

    def locator(point):
        s1 = rat(point[0])
        out = []
        if s1 <= frac(1, 2):
            for k in _standard_locator_first_axis(2 * s1):
                out.append(2 * k - 1)
        if s1 >= frac(1, 2):
            for k in _standard_locator_first_axis(2 * s1 - 1):
                out.append(2 * k)
        return out

    return NDomain.from_rule(
        n,
        NaturalIndexSet(1),
        rule,
        locator=locator,
        signature=("block-pair", n),
        certificate="slab-tiling",
    )


def permuted_standard_domain(n: int, phi: dict[int, int]) -> NDomain:
    """Standard slabs reindexed by a finitely supported permutation.

    phi maps index -> slab number and must be a bijection on its finite
    support; indices outside the support keep their own slab.
    """
    support = {k: v for k, v in phi.items() if k != v}
    if sorted(support.keys()) != sorted(support.values()):
        raise DomainError("mapping is not a finitely supported permutation")
    inverse = {v: k for k, v in support.items()}

    def apply(k: int) -> int:
        return support.get(k, k)

    def unapply(j: int) -> int:
        return inverse.get(j, j)

    def rule(k: int) -> Cube:
        return standard_slab(n, apply(k))

    def locator(point):
        return tuple(unapply(j) for j in _standard_locator_first_axis(point[0]))

    return NDomain.from_rule(
        n,
        NaturalIndexSet(1),
        rule,
        locator=locator,
        signature=("permuted-standard", n, tuple(sorted(support.items()))),
        certificate="slab-tiling",
    )


def adversarial_dense_domain(depth: int) -> NDomain:
    """Finite 2-domain whose projections crowd every dyadic window.

    Diagonal cells of the 2^depth grid give, on both axes, a cube whose
    projection fits inside [q - eps, q + eps] for every dyadic q of depth at
    most `depth` (eps = 2^-depth).  Wider ledge cubes overlap the diagonal
    projections at every coarser scale, so no axis admits a pairwise-disjoint
    choice of projections.
    """
    if depth < 1:
        raise DomainError("depth must be >= 1")
    m = 2**depth
    eps = frac(1, m)
    cubes: list[Cube] = []
    for j in range(m):
        band = Interval(j * eps, (j + 1) * eps)
        cubes.append(Cube((band, band)))
    for d in range(1, depth):
        w = frac(1, 2**d)
        slot = Interval(w, w + eps / 4)
        cubes.append(Cube((Interval(ZERO, w), slot)))
        cubes.append(Cube((slot, Interval(ZERO, w))))
    return NDomain.finite(cubes, signature=("adversarial", depth))


def embedded_domain(box: Cube, inner: NDomain, **kw) -> NDomain:
    """Image of a domain under the canonical map of the unit cube onto box."""
    if box.n != inner.n:
        raise DomainError("box dimension mismatch")
    emb = canonical_affine(unit_cube(inner.n), box)

    def rule(k: int) -> Cube:
        return emb.apply_cube(inner.cube(k))

    locator = None
    if inner.locator is not None:
        inv = emb.invert()

        def locator(point):
            point = tuple(rat(x) for x in point)
            if not box.contains_point(point):
                return ()
            return inner.locator(inv.apply_point(point))

    sig = ("embedded", box, inner.signature) if inner.signature else None
    return NDomain(inner.n, inner.index_set, rule, locator=locator, signature=sig, **kw)


# ---------------------------------------------------------------------------
# Refinements


def shrink_to_interior(domain: NDomain, scale: Rational = frac(1, 2)) -> SubdomainWitness:
    """Witness whose child cubes are the centrally scaled parents."""
    scale = rat(scale)

    def rule(k: int) -> Cube:
        return middle_cube(domain.cube(k), scale)

    child = NDomain(domain.n, domain.index_set, rule)
    return SubdomainWitness(domain, child)


def proper_refine(domain: NDomain, k0: int) -> SubdomainWitness:
    """Shrink every other cube into a single cell of the subdivision at k0.

    Cubes already inside one cell are kept; a cube crossing cells is replaced
    by its intersection with the first cell (in cell order) it overlaps.
    """
    lead = domain.cube(k0)
    if not lead.is_strictly_interior():
        raise DomainError("the cube at k0 touches the unit-cube boundary")
    sub = subdivide(lead)

    def rule(k: int) -> Cube:
        c = domain.cube(k)
        if k == k0:
            return c
        if sub.cell_of(c) is not None:
            return c
        for cell in sub.cells:
            clipped = _clip(c, cell)
            if clipped is not None:
                return clipped
        raise DomainError(f"cube {k} has no interior overlap with any cell")

    child = NDomain(domain.n, domain.index_set, rule)
    return SubdomainWitness(domain, child)


def _clip(c: Cube, cell: Cube) -> Cube | None:
    """c intersect cell when the intersection has nonempty interior."""
    axes = []
    for a, b in zip(c.axes, cell.axes):
        lo = max(a.lo, b.lo)
        hi = min(a.hi, b.hi)
        if lo >= hi:
            return None
        axes.append(Interval(lo, hi))
    return Cube(tuple(axes))


def snapped_proper_refine(domain: NDomain, k0: int) -> SubdomainWitness:
    """Proper refinement whose non-lead cubes sit strictly inside their cells.

    Children other than k0 are clipped to one cell and then replaced by a
    dyadic inner cube, so the refined family stays inside the open unit cube
    after any subsequent cell-to-slab transport.
    """
    plain = proper_refine(domain, k0)

    def rule(k: int) -> Cube:
        c = plain.child.cube(k)
        if k == k0:
            return c
        return dyadic_inner_cube(c)

    child = NDomain(domain.n, domain.index_set, rule)
    return SubdomainWitness(domain, child)
