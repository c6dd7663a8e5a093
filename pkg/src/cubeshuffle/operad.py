"""Little-cubes composition for cube families, including an infinite arity.

An element of arity m is a domain over 1..m; an element of arity omega is a
domain over the naturals.  Composition substitutes each inner family into the
matching cube of the outer one by the canonical affine map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .domains import (
    DomainError,
    FiniteIndexSet,
    NDomain,
    NaturalIndexSet,
    embedded_domain,
)
from .geometry import Cube, unit_cube
from .loops import KSequence, NLoop, concatenate


class OperadError(ValueError):
    pass


@dataclass
class OperadElement:
    """A cube family viewed as an operad point; arity None means omega."""

    domain: NDomain

    def __post_init__(self):
        idx = self.domain.index_set
        if idx.is_finite and idx.indices != tuple(range(1, len(idx.indices) + 1)):
            raise OperadError("finite elements must be indexed 1..m")
        if not idx.is_finite and (idx.start != 1 or idx.excluded):
            raise OperadError("infinite elements must be indexed by all naturals")

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def arity(self) -> int | None:
        return self.domain.size() if self.domain.is_finite else None

    def cube(self, k: int) -> Cube:
        return self.domain.cube(k)


def unit_element(n: int) -> OperadElement:
    return OperadElement(NDomain.finite([unit_cube(n)]))


def compose_elements(
    outer: OperadElement, inners: Sequence[OperadElement]
) -> OperadElement:
    """Substitute the inner families into the outer cubes, outer-major order.

    At most one inner may have arity omega and it must sit in the last slot,
    otherwise the flattened family has no natural ordering by the naturals.
    """
    if outer.arity is None:
        raise OperadError("outer element must have finite arity")
    if len(inners) != outer.arity:
        raise OperadError(f"expected {outer.arity} inner elements, got {len(inners)}")
    if any(inner.n != outer.n for inner in inners):
        raise OperadError("dimension mismatch")
    infinite = [i for i, inner in enumerate(inners) if inner.arity is None]
    if len(infinite) > 1:
        raise OperadError("at most one inner element may be infinite")
    if infinite and infinite[0] != len(inners) - 1:
        raise OperadError("an infinite inner element must be the last one")

    pieces = [
        embedded_domain(outer.cube(i + 1), inner.domain)
        for i, inner in enumerate(inners)
    ]
    if not infinite:
        cubes = []
        for piece in pieces:
            cubes.extend(piece.cube(k) for k in piece.indices_upto())
        return OperadElement(NDomain.finite(cubes))

    prefix: list[Cube] = []
    for piece in pieces[:-1]:
        prefix.extend(piece.cube(k) for k in piece.indices_upto())
    tail = pieces[-1]
    offset = len(prefix)

    def rule(k: int) -> Cube:
        if k <= offset:
            return prefix[k - 1]
        return tail.cube(k - offset)

    def locator(point):
        hits = list(range(1, offset + 1))
        if tail.locator is not None:
            hits.extend(k + offset for k in tail.locate(point))
            return hits
        return hits

    loc = locator if tail.locator is not None else None
    return OperadElement(NDomain(outer.n, NaturalIndexSet(1), rule, locator=loc))


def symmetric_action(element: OperadElement, phi: Sequence[int]) -> OperadElement:
    """Reindex a finite element: position k now shows cube phi(k)."""
    if element.arity is None:
        raise OperadError("symmetric action needs finite arity")
    m = element.arity
    phi = tuple(phi)
    if sorted(phi) != list(range(1, m + 1)):
        raise OperadError("phi must be a permutation of 1..m")
    return OperadElement(
        NDomain.finite([element.cube(phi[k - 1]) for k in range(1, m + 1)])
    )


def act_on_loops(
    element: OperadElement, sequence: KSequence, truncation: int = 64
) -> NLoop:
    """The loop built by placing the k-th loop on the k-th cube."""
    return concatenate(element.domain, sequence, truncation).as_nloop()
