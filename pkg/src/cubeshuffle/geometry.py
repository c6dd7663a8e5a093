"""Exact rational axis-aligned geometry inside the unit n-cube.

Everything here is computed with exact rationals (gmpy2.mpq, interoperable
with fractions.Rational); floats are rejected at construction so that
containment, disjointness and tiling checks are exact.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from gmpy2 import mpq

Rational = mpq

ZERO = mpq(0)
ONE = mpq(1)
HALF = mpq(1, 2)


class GeometryError(ValueError):
    pass


class DimensionMismatch(GeometryError):
    pass


class RoutingError(RuntimeError):
    pass


def frac(num, den=1) -> Rational:
    return mpq(num, den)


def rat(value) -> Rational:
    """Coerce an int, a string like "2/3", a Rational or an mpq to mpq."""
    if isinstance(value, mpq):
        return value
    if isinstance(value, (int, Fraction)):
        return mpq(value)
    if isinstance(value, str):
        return mpq(value)
    raise GeometryError(f"not an exact rational: {value!r}")


@dataclass(frozen=True)
class Interval:
    """Closed subinterval of [0, 1] with nonempty interior."""

    lo: Rational
    hi: Rational

    def __post_init__(self):
        object.__setattr__(self, "lo", rat(self.lo))
        object.__setattr__(self, "hi", rat(self.hi))
        if not (ZERO <= self.lo < self.hi <= ONE):
            raise GeometryError(f"invalid interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> Rational:
        return self.hi - self.lo

    @property
    def midpoint(self) -> Rational:
        return (self.lo + self.hi) / 2

    def contains(self, x: Rational) -> bool:
        return self.lo <= x <= self.hi

    def interior_contains(self, x: Rational) -> bool:
        return self.lo < x < self.hi

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def strictly_contains_interval(self, other: "Interval") -> bool:
        return self.lo < other.lo and other.hi < self.hi

    def overlaps_interior(self, other: "Interval") -> bool:
        return self.lo < other.hi and other.lo < self.hi


def interval(lo, hi) -> Interval:
    return Interval(rat(lo), rat(hi))


UNIT_INTERVAL = Interval(ZERO, ONE)


@dataclass(frozen=True)
class Cube:
    """Product of n axis intervals, n >= 2, contained in the unit cube."""

    axes: tuple[Interval, ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if len(self.axes) < 2:
            raise GeometryError("cubes need dimension >= 2")
        for ax in self.axes:
            if not isinstance(ax, Interval):
                raise GeometryError(f"cube axis must be an Interval, got {ax!r}")

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def lo(self) -> tuple[Rational, ...]:
        return tuple(ax.lo for ax in self.axes)

    @property
    def hi(self) -> tuple[Rational, ...]:
        return tuple(ax.hi for ax in self.axes)

    def min_side(self) -> Rational:
        return min(ax.width for ax in self.axes)

    def contains_point(self, point: Sequence[Rational]) -> bool:
        if len(point) != self.n:
            raise DimensionMismatch("point/cube dimension mismatch")
        return all(ax.contains(rat(x)) for ax, x in zip(self.axes, point))

    def interior_contains_point(self, point: Sequence[Rational]) -> bool:
        return all(ax.interior_contains(rat(x)) for ax, x in zip(self.axes, point))

    def contains_cube(self, other: "Cube") -> bool:
        _same_dim(self, other)
        return all(a.contains_interval(b) for a, b in zip(self.axes, other.axes))

    def strictly_interior_to(self, other: "Cube") -> bool:
        _same_dim(self, other)
        return all(b.strictly_contains_interval(a) for a, b in zip(self.axes, other.axes))

    def is_strictly_interior(self) -> bool:
        """True when the cube avoids the boundary of the ambient unit cube."""
        return all(ZERO < ax.lo and ax.hi < ONE for ax in self.axes)

    def center(self) -> tuple[Rational, ...]:
        return tuple(ax.midpoint for ax in self.axes)


def cube(*pairs) -> Cube:
    """Build a cube from (lo, hi) pairs: cube((0,1), ("1/3","2/3"))."""
    return Cube(tuple(Interval(rat(lo), rat(hi)) for lo, hi in pairs))


def cube_from_lists(axes: Iterable[Sequence]) -> Cube:
    return Cube(tuple(Interval(rat(a[0]), rat(a[1])) for a in axes))


def unit_cube(n: int) -> Cube:
    return Cube((UNIT_INTERVAL,) * n)


def _same_dim(a: Cube, b: Cube) -> None:
    if a.n != b.n:
        raise DimensionMismatch(f"dimension mismatch: {a.n} vs {b.n}")


@dataclass(frozen=True)
class AffineCubeMap:
    """Per-axis increasing affine map x_i -> scale_i * x_i + offset_i."""

    scales: tuple[Rational, ...]
    offsets: tuple[Rational, ...]

    def __post_init__(self):
        if len(self.scales) != len(self.offsets):
            raise DimensionMismatch("scale/offset length mismatch")
        if any(s <= 0 for s in self.scales):
            raise GeometryError("affine cube maps must be increasing on every axis")

    @property
    def n(self) -> int:
        return len(self.scales)

    def apply_point(self, point: Sequence[Rational]) -> tuple[Rational, ...]:
        if len(point) != self.n:
            raise DimensionMismatch("point dimension mismatch")
        return tuple(s * rat(x) + o for s, o, x in zip(self.scales, self.offsets, point))

    def apply_cube(self, c: Cube) -> Cube:
        if c.n != self.n:
            raise DimensionMismatch("cube dimension mismatch")
        return Cube(
            tuple(
                Interval(s * ax.lo + o, s * ax.hi + o)
                for s, o, ax in zip(self.scales, self.offsets, c.axes)
            )
        )

    def invert(self) -> "AffineCubeMap":
        return AffineCubeMap(
            tuple(1 / s for s in self.scales),
            tuple(-o / s for s, o in zip(self.scales, self.offsets)),
        )

    def after(self, inner: "AffineCubeMap") -> "AffineCubeMap":
        """self(inner(x))."""
        if inner.n != self.n:
            raise DimensionMismatch("map dimension mismatch")
        return AffineCubeMap(
            tuple(a * b for a, b in zip(self.scales, inner.scales)),
            tuple(a * o + c for a, o, c in zip(self.scales, inner.offsets, self.offsets)),
        )

    @staticmethod
    def identity(n: int) -> "AffineCubeMap":
        return AffineCubeMap((ONE,) * n, (ZERO,) * n)


def canonical_affine(source: Cube, target: Cube) -> AffineCubeMap:
    """The increasing per-axis affine bijection sending source onto target."""
    _same_dim(source, target)
    scales = []
    offsets = []
    for s_ax, t_ax in zip(source.axes, target.axes):
        scale = t_ax.width / s_ax.width
        scales.append(scale)
        offsets.append(t_ax.lo - scale * s_ax.lo)
    return AffineCubeMap(tuple(scales), tuple(offsets))


def interiors_disjoint(a: Cube, b: Cube) -> bool:
    """True iff some axis separates the open boxes."""
    _same_dim(a, b)
    return any(
        ax.hi <= bx.lo or bx.hi <= ax.lo for ax, bx in zip(a.axes, b.axes)
    )


def middle_cube(c: Cube, scale: Rational = HALF) -> Cube:
    """Centrally scaled copy of the cube (strictly inside for scale < 1)."""
    scale = rat(scale)
    if not (ZERO < scale <= ONE):
        raise GeometryError("scale must be in (0, 1]")
    axes = []
    for ax in c.axes:
        half = ax.width * scale / 2
        mid = ax.midpoint
        axes.append(Interval(mid - half, mid + half))
    return Cube(tuple(axes))


def dyadic_inner_cube(c: Cube) -> Cube:
    """A cube with power-of-two denominators strictly inside the given cube.

    Keeps at least three quarters of each side; used to stop coordinate
    denominators from compounding across long constructions.
    """
    axes = []
    for ax in c.axes:
        step = ONE
        while step > ax.width / 8:
            step /= 2
        lo = (int(ax.lo / step) + 1) * step
        hi_n = int(ax.hi / step)
        if frac(hi_n) * step == ax.hi:
            hi_n -= 1
        hi = frac(hi_n) * step
        axes.append(Interval(lo, hi))
    return Cube(tuple(axes))


@dataclass(frozen=True)
class Subdivision:
    """The 3^n cells cut from the unit cube by the face hyperplanes of a cube.

    Cells are in lexicographic order (axis 1 most significant), 1-based, and
    the generating cube sits at position (3^n + 1) / 2.
    """

    cells: tuple[Cube, ...]
    center_index: int
    source: Cube

    @property
    def n(self) -> int:
        return self.source.n

    def bands(self, axis: int) -> tuple[Interval, Interval, Interval]:
        ax = self.source.axes[axis]
        return (Interval(ZERO, ax.lo), ax, Interval(ax.hi, ONE))

    def cell_of(self, c: Cube) -> int | None:
        """1-based index of the unique cell containing c, or None."""
        pos = []
        for axis in range(self.n):
            bands = self.bands(axis)
            hit = None
            for i, band in enumerate(bands):
                if band.contains_interval(c.axes[axis]):
                    hit = i
                    break
            if hit is None:
                return None
            pos.append(hit)
        return self.position_to_index(tuple(pos))

    def position_to_index(self, pos: tuple[int, ...]) -> int:
        idx = 0
        for p in pos:
            idx = idx * 3 + p
        return idx + 1


def subdivide(r: Cube) -> Subdivision:
    """Cut the unit cube along the face hyperplanes of r (r strictly interior)."""
    if not r.is_strictly_interior():
        raise GeometryError("subdivision needs a cube strictly inside the unit cube")
    n = r.n
    band_lists = [
        (Interval(ZERO, ax.lo), ax, Interval(ax.hi, ONE)) for ax in r.axes
    ]
    cells = []
    for idx in range(3**n):
        pos = []
        rem = idx
        for _ in range(n):
            pos.append(rem % 3)
            rem //= 3
        pos.reverse()
        cells.append(Cube(tuple(band_lists[i][p] for i, p in enumerate(pos))))
    center = (3**n + 1) // 2
    assert cells[center - 1] == r
    return Subdivision(tuple(cells), center, r)


# ---------------------------------------------------------------------------
# Grid decompositions, connectivity and corridors


@dataclass(frozen=True)
class GridDecomposition:
    """Axis-aligned grid of the unit cube with some cells merged into marked cubes."""

    breaks: tuple[tuple[Rational, ...], ...]
    marked: tuple[Cube, ...]

    @property
    def n(self) -> int:
        return len(self.breaks)

    def shape(self) -> tuple[int, ...]:
        return tuple(len(b) - 1 for b in self.breaks)

    def cell(self, idx: tuple[int, ...]) -> Cube:
        return Cube(
            tuple(
                Interval(self.breaks[i][j], self.breaks[i][j + 1])
                for i, j in enumerate(idx)
            )
        )

    def cell_indices(self) -> Iterator[tuple[int, ...]]:
        shape = self.shape()

        def rec(prefix):
            axis = len(prefix)
            if axis == self.n:
                yield tuple(prefix)
                return
            for j in range(shape[axis]):
                yield from rec(prefix + [j])

        yield from rec([])

    def marked_covering(self, c: Cube) -> Cube | None:
        for m in self.marked:
            if m.contains_cube(c):
                return m
        return None

    def elements(self) -> tuple[Cube, ...]:
        """Marked cubes (each once) plus uncovered grid cells, in lex order."""
        out = []
        emitted = set()
        for idx in self.cell_indices():
            c = self.cell(idx)
            m = self.marked_covering(c)
            if m is None:
                out.append(c)
            elif m.lo == c.lo and id(m) not in emitted:
                # the lo-corner cell of a marked cube stands in for the whole cube
                emitted.add(id(m))
                out.append(m)
        return tuple(out)


def _axis_breaks(n: int, cubes: Iterable[Cube]) -> tuple[tuple[Rational, ...], ...]:
    per_axis: list[set[Rational]] = [{ZERO, ONE} for _ in range(n)]
    for c in cubes:
        for i, ax in enumerate(c.axes):
            per_axis[i].add(ax.lo)
            per_axis[i].add(ax.hi)
    return tuple(tuple(sorted(s)) for s in per_axis)


def decomposition_with_marked_cubes(n: int, marked: Sequence[Cube]) -> GridDecomposition:
    """Grid generated by the face coordinates of the marked cubes.

    Every marked cube is one element; everything else is a raw grid cell.
    """
    marked = tuple(marked)
    for c in marked:
        if c.n != n:
            raise DimensionMismatch("marked cube has wrong dimension")
    for i in range(len(marked)):
        for j in range(i + 1, len(marked)):
            if not interiors_disjoint(marked[i], marked[j]):
                raise GeometryError(f"marked cubes {i + 1} and {j + 1} overlap")
    return GridDecomposition(_axis_breaks(n, marked), marked)


def _free_cells(grid: GridDecomposition, obstacles: Sequence[Cube]) -> set[tuple[int, ...]]:
    free = set()
    for idx in grid.cell_indices():
        c = grid.cell(idx)
        if not any(o.contains_cube(c) for o in obstacles):
            free.add(idx)
    return free


def _neighbors(idx: tuple[int, ...], shape: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
    for axis in range(len(idx)):
        for d in (-1, 1):
            j = idx[axis] + d
            if 0 <= j < shape[axis]:
                yield idx[:axis] + (j,) + idx[axis + 1 :]


def complement_connected(n: int, obstacles: Sequence[Cube]) -> bool:
    """Facet-connectivity of the non-obstacle cells of the face-induced grid."""
    obstacles = tuple(obstacles)
    for i in range(len(obstacles)):
        for j in range(i + 1, len(obstacles)):
            if not interiors_disjoint(obstacles[i], obstacles[j]):
                raise GeometryError("obstacles overlap")
    grid = GridDecomposition(_axis_breaks(n, obstacles), ())
    free = _free_cells(grid, obstacles)
    if not free:
        return True
    shape = grid.shape()
    start = min(free)
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for nb in _neighbors(cur, shape):
            if nb in free and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(free)


@dataclass(frozen=True)
class Corridor:
    """Facet-adjacent free cells joining two cubes, with the bottleneck size."""

    cells: tuple[Cube, ...]
    clearance: Rational


def polygonal_corridor(start: Cube, goal: Cube, obstacles: Sequence[Cube]) -> Corridor:
    """BFS route of free grid cells from the interior of start to goal."""
    _same_dim(start, goal)
    obstacles = tuple(obstacles)
    for o in obstacles:
        if not interiors_disjoint(start, o) or not interiors_disjoint(goal, o):
            raise GeometryError("start/goal overlap an obstacle")
    if start == goal:
        return Corridor((), start.min_side())
    n = start.n
    grid = GridDecomposition(_axis_breaks(n, obstacles + (start, goal)), ())
    free = _free_cells(grid, obstacles)
    shape = grid.shape()

    def first_cell_inside(c: Cube) -> tuple[int, ...]:
        for idx in sorted(free):
            if c.contains_cube(grid.cell(idx)):
                return idx
        raise RoutingError("no free cell inside the given cube")

    src = first_cell_inside(start)
    dst = first_cell_inside(goal)
    prev: dict[tuple[int, ...], tuple[int, ...] | None] = {src: None}
    queue = deque([src])
    while queue:
        cur = queue.popleft()
        if cur == dst:
            break
        for nb in sorted(_neighbors(cur, shape)):
            if nb in free and nb not in prev:
                prev[nb] = cur
                queue.append(nb)
    if dst not in prev:
        raise RoutingError("no free path between the given cubes")
    path = []
    at: tuple[int, ...] | None = dst
    while at is not None:
        path.append(at)
        at = prev[at]
    path.reverse()
    cells = tuple(grid.cell(idx) for idx in path)
    clearance = min(c.min_side() for c in cells)
    return Corridor(cells, clearance)
