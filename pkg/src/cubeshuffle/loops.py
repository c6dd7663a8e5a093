"""Basepoint-relative loops on the unit cube and null sequences of them.

The target space is R^d with the origin as basepoint, so "image close to the
basepoint" becomes a checkable quantitative bound.  A sequence over an
infinite index set must carry a nonincreasing dominating bound with limit 0;
that certificate makes truncation errors and null thresholds computable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .domains import IndexSet, NDomain, NaturalIndexSet
from .geometry import Cube, ONE, ZERO, canonical_affine, rat, unit_cube


class LoopError(ValueError):
    pass


@dataclass(frozen=True)
class NLoop:
    """Map from the unit n-cube to R^d sending the boundary to the origin."""

    n: int
    target_dim: int
    evaluator: Callable[[tuple[Rational, ...]], tuple[Rational, ...]]
    image_bound: Rational
    boundary_compliant: bool = True
    exact: bool = True
    label: str = ""

    def __call__(self, point: Sequence[Rational]) -> tuple:
        point = tuple(rat(x) for x in point) if self.exact else tuple(point)
        value = tuple(self.evaluator(point))
        if len(value) != self.target_dim:
            raise LoopError("evaluator returned wrong target dimension")
        return value

    def basepoint(self) -> tuple[Rational, ...]:
        return (ZERO,) * self.target_dim


def tent(u: Rational) -> Rational:
    """Piecewise-linear bump on [0,1]: 0 at the ends, 1 at 1/2."""
    u = rat(u)
    return 2 * u if u <= frac(1, 2) else 2 * (ONE - u)


def bump_loop(
    n: int, amplitude: Rational, coordinate: int = 1, target_dim: int = 1
) -> NLoop:
    """Product-of-tents bump with the given peak value in one target coordinate."""
    amplitude = rat(amplitude)
    if amplitude <= 0:
        raise LoopError("amplitude must be positive")
    if not 1 <= coordinate <= target_dim:
        raise LoopError("coordinate out of range")

    def evaluator(point):
        v = amplitude
        for x in point:
            v *= tent(x)
        out = [ZERO] * target_dim
        out[coordinate - 1] = v
        return tuple(out)

    return NLoop(
        n,
        target_dim,
        evaluator,
        image_bound=amplitude,
        label=f"bump({amplitude},axis={coordinate})",
    )


def constant_loop(n: int, target_dim: int = 1) -> NLoop:
    return NLoop(
        n, target_dim, lambda point: (ZERO,) * target_dim, ZERO, label="const"
    )


class KSequence:
    """Indexed loops with per-index image bounds and a null certificate."""

    def __init__(
        self,
        index_set: IndexSet,
        loop: Callable[[int], NLoop],
        dominating: Callable[[int], Rational] | None = None,
    ):
        self.index_set = index_set
        self._loop = loop
        self._cache: dict[int, NLoop] = {}
        if not index_set.is_finite and dominating is None:
            raise LoopError("an infinite sequence needs a dominating bound")
        self.dominating = dominating

    @staticmethod
    def finite(loops: Sequence[NLoop], indices: Sequence[int] | None = None) -> "KSequence":
        loops = tuple(loops)
        if indices is None:
            indices = tuple(range(1, len(loops) + 1))
        table = dict(zip(indices, loops))
        from .domains import FiniteIndexSet

        return KSequence(FiniteIndexSet(tuple(indices)), table.__getitem__)

    @property
    def is_finite(self) -> bool:
        return self.index_set.is_finite

    def loop(self, k: int) -> NLoop:
        if not self.index_set.contains(k):
            raise LoopError(f"index {k} not in sequence")
        f = self._cache.get(k)
        if f is None:
            f = self._loop(k)
            self._cache[k] = f
        return f

    def bound(self, k: int) -> Rational:
        return self.loop(k).image_bound

    def sup_bound(self) -> Rational:
        if self.is_finite:
            idx = self.index_set.upto(None)
            return max((self.bound(k) for k in idx), default=ZERO)
        return self.dominating(self.index_set.least())

    def tail_bound(self, after: int) -> Rational:
        """Upper bound for every image bound at indices strictly above `after`."""
        if self.is_finite:
            idx = [k for k in self.index_set.upto(None) if k > after]
            return max((self.bound(k) for k in idx), default=ZERO)
        return self.dominating(max(after + 1, self.index_set.least()))


def harmonic_bump_sequence(n: int, coordinate: int = 1, target_dim: int = 1) -> KSequence:
    """Bumps with image bounds 1/k over the natural numbers."""
    return KSequence(
        NaturalIndexSet(1),
        lambda k: bump_loop(n, frac(1, k), coordinate, target_dim),
        dominating=lambda k: frac(1, k),
    )


def geometric_bump_sequence(n: int, coordinate: int = 1, target_dim: int = 1) -> KSequence:
    """Bumps with image bounds 2^-k."""
    return KSequence(
        NaturalIndexSet(1),
        lambda k: bump_loop(n, frac(1, 2**k), coordinate, target_dim),
        dominating=lambda k: frac(1, 2**k),
    )


def null_certificate(sequence: KSequence, epsilon: Rational) -> int:
    """Least index M with dominating bound below epsilon for every k >= M."""
    epsilon = rat(epsilon)
    if epsilon <= 0:
        raise LoopError("epsilon must be positive")
    if sequence.is_finite:
        idx = sequence.index_set.upto(None)
        return (max(idx) if idx else 0) + 1
    dom = sequence.dominating
    start = sequence.index_set.least()
    if dom(start) < epsilon:
        return start
    # the dominating sequence is nonincreasing with limit zero: gallop then bisect
    lo, hi = start, start + 1
    steps = 0
    while dom(hi) >= epsilon:
        lo, hi = hi, hi * 2
        steps += 1
        if steps > 128:
            raise LoopError("dominating bound never drops below epsilon")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if dom(mid) < epsilon:
            hi = mid
        else:
            lo = mid
    return hi


class ConcatenatedLoop:
    """Loop equal to f_k rescaled onto the k-th cube and basepoint elsewhere."""

    def __init__(self, domain: NDomain, sequence: KSequence, truncation: int = 64):
        if domain.index_set != sequence.index_set:
            raise LoopError("domain and sequence index sets differ")
        if not domain.is_finite and sequence.dominating is None:
            raise LoopError("infinite concatenation needs a null sequence")
        self.domain = domain
        self.sequence = sequence
        self.truncation = truncation
        self.n = domain.n
        first = sequence.loop(domain.index_set.least()) if not domain.is_finite else None
        if domain.is_finite:
            loops = [sequence.loop(k) for k in domain.indices_upto()]
            dims = {f.target_dim for f in loops} or {1}
        else:
            dims = {first.target_dim}
        if len(dims) != 1:
            raise LoopError("loops disagree on target dimension")
        self.target_dim = dims.pop()

    def basepoint(self) -> tuple[Rational, ...]:
        return (ZERO,) * self.target_dim

    def value_with_error(self, point: Sequence[Rational]) -> tuple[tuple, Rational]:
        """(value, error bound); the bound is nonzero only past the truncation."""
        point = tuple(rat(x) for x in point)
        if self.domain.locator is not None or self.domain.is_finite:
            for k in self.domain.locate(point):
                return self._local_value(k, point), ZERO
            return self.basepoint(), ZERO
        for k in self.domain.indices_upto(self.truncation):
            if self.domain.cube(k).contains_point(point):
                return self._local_value(k, point), ZERO
        return self.basepoint(), self.sequence.tail_bound(self.truncation)

    def __call__(self, point: Sequence[Rational]) -> tuple:
        return self.value_with_error(point)[0]

    def _local_value(self, k: int, point) -> tuple:
        c = self.domain.cube(k)
        local = canonical_affine(c, unit_cube(self.n)).apply_point(point)
        return self.sequence.loop(k)(local)

    def as_nloop(self, label: str = "") -> NLoop:
        return NLoop(
            self.n,
            self.target_dim,
            lambda point: self(point),
            image_bound=self.sequence.sup_bound(),
            label=label or "concatenation",
        )


def concatenate(domain: NDomain, sequence: KSequence, truncation: int = 64) -> ConcatenatedLoop:
    return ConcatenatedLoop(domain, sequence, truncation)
