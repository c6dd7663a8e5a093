"""Piecewise-affine schedules of moving cubes and their exact verification.

A path is a list of (time, cube) keyframes; between keyframes every corner
moves affinely, so a cube-pair separation gap is affine in time and interval
disjointness over a whole segment follows from checks at its two endpoints.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .domains import IndexSet, NDomain
from .geometry import (
    Cube,
    GeometryError,
    Interval,
    ONE,
    ZERO,
    canonical_affine,
    rat,
    unit_cube,
)
from .loops import KSequence


class ScheduleError(ValueError):
    pass


class ChainingError(ScheduleError):
    pass


def lerp_cube(a: Cube, b: Cube, u: Rational) -> Cube:
    """Per-corner affine interpolation: u = 0 gives a, u = 1 gives b."""
    if u == 0:
        return a
    if u == 1:
        return b
    return Cube(
        tuple(
            Interval(ia.lo + (ib.lo - ia.lo) * u, ia.hi + (ib.hi - ia.hi) * u)
            for ia, ib in zip(a.axes, b.axes)
        )
    )


@dataclass(frozen=True)
class CubePath:
    """Strictly increasing keyframe times with a cube at each."""

    keyframes: tuple[tuple[Rational, Cube], ...]

    def __post_init__(self):
        kfs = tuple((rat(t), c) for t, c in self.keyframes)
        if not kfs:
            raise ScheduleError("a path needs at least one keyframe")
        times = [t for t, _ in kfs]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScheduleError("keyframe times must strictly increase")
        n = kfs[0][1].n
        if any(c.n != n for _, c in kfs):
            raise ScheduleError("keyframe cubes disagree on dimension")
        object.__setattr__(self, "keyframes", kfs)
        object.__setattr__(self, "_times", tuple(times))
        object.__setattr__(self, "_at_cache", {})

    @property
    def times(self) -> tuple[Rational, ...]:
        return self._times

    @property
    def t0(self) -> Rational:
        return self._times[0]

    @property
    def t1(self) -> Rational:
        return self._times[-1]

    @property
    def first_cube(self) -> Cube:
        return self.keyframes[0][1]

    @property
    def last_cube(self) -> Cube:
        return self.keyframes[-1][1]

    def is_constant(self) -> bool:
        c = self.first_cube
        return all(k == c for _, k in self.keyframes)

    def cube_at(self, t: Rational) -> Cube:
        t = rat(t)
        hit = self._at_cache.get(t)
        if hit is not None:
            return hit
        if not self.t0 <= t <= self.t1:
            raise ScheduleError(f"time {t} outside path span [{self.t0}, {self.t1}]")
        i = bisect_right(self._times, t)
        if i == len(self._times):
            out = self.last_cube
        elif self._times[i - 1] == t:
            out = self.keyframes[i - 1][1]
        else:
            ta, a = self.keyframes[i - 1]
            tb, b = self.keyframes[i]
            out = lerp_cube(a, b, (t - ta) / (tb - ta))
        self._at_cache[t] = out
        return out

    def reversed_path(self) -> "CubePath":
        total = self.t0 + self.t1
        return CubePath(tuple((total - t, c) for t, c in reversed(self.keyframes)))

    def time_rescaled(self, lo: Rational, hi: Rational) -> "CubePath":
        lo, hi = rat(lo), rat(hi)
        if hi <= lo:
            raise ScheduleError("bad time window")
        span = self.t1 - self.t0
        if span == 0:
            raise ScheduleError("cannot rescale a single keyframe")
        return CubePath(
            tuple(
                (lo + (t - self.t0) * (hi - lo) / span, c)
                for t, c in self.keyframes
            )
        )

    def spatially_mapped(self, mapping) -> "CubePath":
        return CubePath(tuple((t, mapping.apply_cube(c)) for t, c in self.keyframes))


def simplify_keyframes(
    keyframes: Sequence[tuple[Rational, Cube]]
) -> tuple[tuple[Rational, Cube], ...]:
    """Drop keyframes that are the affine interpolation of their neighbours."""
    out: list[tuple[Rational, Cube]] = []
    for t, c in keyframes:
        if out and out[-1][0] == t:
            if out[-1][1] != c:
                raise ChainingError(f"conflicting cubes at time {t}")
            continue
        out.append((t, c))
        while len(out) >= 3:
            (ta, a), (tm, m), (tb, b) = out[-3], out[-2], out[-1]
            if lerp_cube(a, b, (tm - ta) / (tb - ta)) == m:
                del out[-2]
            else:
                break
    return tuple(out)


def constant_path(c: Cube, t0: Rational = ZERO, t1: Rational = ONE) -> CubePath:
    return CubePath(((rat(t0), c), (rat(t1), c)))


@dataclass(frozen=True)
class StageNote:
    """Annotation naming the construction a time window came from."""

    name: str
    window: tuple[Rational, Rational]
    lead_index: int | None = None
    detail: str = ""


class CubeSchedule:
    """Per-index cube paths over a common time window with endpoint domains."""

    def __init__(
        self,
        n: int,
        index_set: IndexSet,
        path: Callable[[int], CubePath],
        *,
        source: NDomain,
        target: NDomain,
        fixed: frozenset[int] = frozenset(),
        stages: tuple[StageNote, ...] = (),
        span: tuple[Rational, Rational] = (ZERO, ONE),
    ):
        self.n = n
        self.index_set = index_set
        self._path = path
        self._cache: dict[int, CubePath] = {}
        self.source = source
        self.target = target
        self.fixed = frozenset(fixed)
        self.stages = tuple(stages)
        self.span = (rat(span[0]), rat(span[1]))

    @staticmethod
    def from_paths(paths: dict[int, CubePath], **kw) -> "CubeSchedule":
        from .domains import FiniteIndexSet

        idx = FiniteIndexSet(tuple(paths))
        n = next(iter(paths.values())).first_cube.n
        return CubeSchedule(n, idx, paths.__getitem__, **kw)

    @property
    def is_finite(self) -> bool:
        return self.index_set.is_finite

    def path(self, k: int) -> CubePath:
        if not self.index_set.contains(k):
            raise ScheduleError(f"index {k} not in schedule")
        p = self._cache.get(k)
        if p is None:
            p = self._path(k)
            if (p.t0, p.t1) != self.span:
                raise ScheduleError(
                    f"path {k} spans [{p.t0}, {p.t1}], schedule spans {self.span}"
                )
            self._cache[k] = p
        return p

    def indices_upto(self, bound: int | None = None) -> tuple[int, ...]:
        return self.index_set.upto(bound)

    def cube_at(self, k: int, t: Rational) -> Cube:
        return self.path(k).cube_at(t)


def constant_schedule(domain: NDomain, fixed: frozenset[int] = frozenset()) -> CubeSchedule:
    return CubeSchedule(
        domain.n,
        domain.index_set,
        lambda k: constant_path(domain.cube(k)),
        source=domain,
        target=domain,
        fixed=fixed,
        stages=(StageNote("constant", (ZERO, ONE)),),
    )


# ---------------------------------------------------------------------------
# Verification


@dataclass
class Violation:
    kind: str  # "endpoint" | "constancy" | "overlap"
    indices: tuple[int, ...]
    time: tuple[Rational, Rational] | Rational | None = None
    detail: str = ""


@dataclass
class VerifyReport:
    ok: bool
    checked_indices: int
    checked_pairs: int
    violations: list[Violation] = field(default_factory=list)

    def first_violation(self) -> Violation | None:
        return self.violations[0] if self.violations else None

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checked_indices": self.checked_indices,
            "checked_pairs": self.checked_pairs,
            "violations": [
                {
                    "kind": v.kind,
                    "indices": list(v.indices),
                    "time": str(v.time) if v.time is not None else None,
                    "detail": v.detail,
                }
                for v in self.violations
            ],
        }


def _separated_on_axis(a0: Cube, b0: Cube, a1: Cube, b1: Cube, axis: int) -> bool:
    x0, y0, x1, y1 = a0.axes[axis], b0.axes[axis], a1.axes[axis], b1.axes[axis]
    return (x0.hi <= y0.lo and x1.hi <= y1.lo) or (y0.hi <= x0.lo and y1.hi <= x1.lo)


def _segment_certificate(
    pa: CubePath,
    pb: CubePath,
    t0: Rational,
    t1: Rational,
    a0: Cube,
    b0: Cube,
    a1: Cube,
    b1: Cube,
    depth: int,
    hint: list[int],
) -> bool:
    n = a0.n
    order = [hint[0]] + [i for i in range(n) if i != hint[0]]
    for axis in order:
        if _separated_on_axis(a0, b0, a1, b1, axis):
            hint[0] = axis
            return True
    if depth <= 0:
        return False
    # a pair may switch separating axis mid-segment; bisect and retry
    mid = (t0 + t1) / 2
    am, bm = pa.cube_at(mid), pb.cube_at(mid)
    return _segment_certificate(
        pa, pb, t0, mid, a0, b0, am, bm, depth - 1, hint
    ) and _segment_certificate(pa, pb, mid, t1, am, bm, a1, b1, depth - 1, hint)


def _pair_disjoint_at_all_times(
    pa: CubePath, pb: CubePath, depth: int
) -> tuple[bool, tuple[Rational, Rational] | None]:
    times = sorted(set(pa.times) | set(pb.times))
    hint = [0]
    t0 = times[0]
    a0, b0 = pa.cube_at(t0), pb.cube_at(t0)
    for t1 in times[1:]:
        a1, b1 = pa.cube_at(t1), pb.cube_at(t1)
        if not _segment_certificate(pa, pb, t0, t1, a0, b0, a1, b1, depth, hint):
            return False, (t0, t1)
        t0, a0, b0 = t1, a1, b1
    return True, None


def verify(
    schedule: CubeSchedule, bound: int = 64, bisect_depth: int = 16
) -> VerifyReport:
    """Exact-rational check of endpoints, fixed-set constancy and disjointness.

    Disjointness of each index pair is certified per merged keyframe segment
    by a single axis whose separation holds at both segment ends (the gap is
    affine in time); segments are bisected up to `bisect_depth` before a pair
    is reported as overlapping.
    """
    report = VerifyReport(ok=True, checked_indices=0, checked_pairs=0)
    idx = schedule.indices_upto(bound if not schedule.is_finite else None)
    t_lo, t_hi = schedule.span
    for k in idx:
        report.checked_indices += 1
        p = schedule.path(k)
        if p.cube_at(t_lo) != schedule.source.cube(k):
            report.violations.append(Violation("endpoint", (k,), t_lo, "source mismatch"))
        if p.cube_at(t_hi) != schedule.target.cube(k):
            report.violations.append(Violation("endpoint", (k,), t_hi, "target mismatch"))
        if k in schedule.fixed and not p.is_constant():
            report.violations.append(Violation("constancy", (k,), None, "fixed index moves"))
    for i in range(len(idx)):
        for j in range(i + 1, len(idx)):
            report.checked_pairs += 1
            ok, seg = _pair_disjoint_at_all_times(
                schedule.path(idx[i]), schedule.path(idx[j]), bisect_depth
            )
            if not ok:
                report.violations.append(
                    Violation("overlap", (idx[i], idx[j]), seg, "no separating axis")
                )
    report.ok = not report.violations
    return report


# ---------------------------------------------------------------------------
# Composition, reversal, embedding


def compose(schedules: Sequence[CubeSchedule]) -> CubeSchedule:
    """Chain schedules over a uniform time partition of [0, 1]."""
    schedules = list(schedules)
    if not schedules:
        raise ScheduleError("nothing to compose")
    for s in schedules:
        if s.span != (ZERO, ONE):
            raise ScheduleError("only full-span schedules compose")
    first, last = schedules[0], schedules[-1]
    for a, b in zip(schedules, schedules[1:]):
        if a.index_set != b.index_set or a.n != b.n:
            raise ChainingError("composed schedules disagree on index set")
    m = len(schedules)
    if m == 1:
        return first

    def path(k: int) -> CubePath:
        frames: list[tuple[Rational, Cube]] = []
        for i, s in enumerate(schedules):
            p = s.path(k).time_rescaled(frac(i, m), frac(i + 1, m))
            if frames and frames[-1][1] != p.keyframes[0][1]:
                raise ChainingError(
                    f"stage {i} starts index {k} away from the previous stage's end"
                )
            frames.extend(p.keyframes)
        return CubePath(simplify_keyframes(frames))

    stages = []
    for i, s in enumerate(schedules):
        w0, w1 = frac(i, m), frac(i + 1, m)
        for note in s.stages:
            a, b = note.window
            stages.append(
                StageNote(
                    note.name,
                    (w0 + a * (w1 - w0), w0 + b * (w1 - w0)),
                    note.lead_index,
                    note.detail,
                )
            )
    fixed = frozenset.intersection(*(s.fixed for s in schedules)) if schedules else frozenset()
    return CubeSchedule(
        first.n,
        first.index_set,
        path,
        source=first.source,
        target=last.target,
        fixed=fixed,
        stages=tuple(stages),
    )


def reverse(schedule: CubeSchedule) -> CubeSchedule:
    def path(k: int) -> CubePath:
        return schedule.path(k).reversed_path()

    t0, t1 = schedule.span
    stages = tuple(
        StageNote(
            note.name + "~reversed",
            (t0 + t1 - note.window[1], t0 + t1 - note.window[0]),
            note.lead_index,
            note.detail,
        )
        for note in reversed(schedule.stages)
    )
    return CubeSchedule(
        schedule.n,
        schedule.index_set,
        path,
        source=schedule.target,
        target=schedule.source,
        fixed=schedule.fixed,
        stages=stages,
        span=schedule.span,
    )


@dataclass(frozen=True)
class BlockEmbedding:
    """A spatial block of the unit cube together with a time subinterval."""

    spatial: Cube
    time: Interval

    @property
    def n(self) -> int:
        return self.spatial.n

    def is_identity(self) -> bool:
        return self.spatial == unit_cube(self.n) and self.time == Interval(ZERO, ONE)


def embed(schedule: CubeSchedule, block: BlockEmbedding) -> CubeSchedule:
    """Schedule fragment living on the block: space and time rescaled into it."""
    if block.n != schedule.n:
        raise ScheduleError("block dimension mismatch")
    if schedule.span != (ZERO, ONE):
        raise ScheduleError("embed expects a full-span schedule")
    mapping = canonical_affine(unit_cube(schedule.n), block.spatial)

    def path(k: int) -> CubePath:
        return (
            schedule.path(k)
            .spatially_mapped(mapping)
            .time_rescaled(block.time.lo, block.time.hi)
        )

    from .domains import embedded_domain

    return CubeSchedule(
        schedule.n,
        schedule.index_set,
        path,
        source=embedded_domain(block.spatial, schedule.source),
        target=embedded_domain(block.spatial, schedule.target),
        fixed=schedule.fixed,
        stages=tuple(
            StageNote(
                s.name,
                (
                    block.time.lo + s.window[0] * block.time.width,
                    block.time.lo + s.window[1] * block.time.width,
                ),
                s.lead_index,
                s.detail,
            )
            for s in schedule.stages
        ),
        span=(block.time.lo, block.time.hi),
    )


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class EvalResult:
    value: tuple
    error_bound: Rational
    index: int | None


def eval_homotopy(
    schedule: CubeSchedule,
    sequence: KSequence,
    point: Sequence[Rational],
    time: Rational,
    truncation: int = 64,
) -> EvalResult:
    """Value of the moving concatenation at (point, time).

    The lowest index whose cube contains the point wins; ties only happen on
    shared facets where boundary-compliant loops agree at the basepoint.
    """
    if schedule.index_set != sequence.index_set:
        raise ScheduleError("schedule and sequence index sets differ")
    point = tuple(rat(x) for x in point)
    time = rat(time)
    idx = schedule.indices_upto(truncation if not schedule.is_finite else None)
    n = schedule.n
    for k in idx:
        c = schedule.cube_at(k, time)
        if c.contains_point(point):
            local = canonical_affine(c, unit_cube(n)).apply_point(point)
            return EvalResult(tuple(sequence.loop(k)(local)), ZERO, k)
    d = sequence.loop(idx[0]).target_dim if idx else 1
    err = ZERO if schedule.is_finite else sequence.tail_bound(idx[-1] if idx else 0)
    return EvalResult((ZERO,) * d, err, None)
