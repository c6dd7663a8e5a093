"""Constructors for verified cube-rearrangement schedules.

Each public constructor returns a plan whose schedule passes `verify`: the
moving cubes stay pairwise interior-disjoint at every time, fixed indices
never move, and the endpoints equal the requested domains exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .domains import (
    DomainError,
    FiniteIndexSet,
    IndexSet,
    NDomain,
    NaturalIndexSet,
    SubdomainWitness,
    embedded_domain,
    middle_cube,
    permuted_standard_domain,
    shrink_to_interior,
    snapped_proper_refine,
    standard_over,
    validate,
)
from .geometry import (
    Corridor,
    Cube,
    GeometryError,
    Interval,
    ONE,
    ZERO,
    canonical_affine,
    complement_connected,
    decomposition_with_marked_cubes,
    interiors_disjoint,
    polygonal_corridor,
    rat,
    subdivide,
    unit_cube,
    RoutingError,
)
from .loops import KSequence, null_certificate
from .schedules import (
    BlockEmbedding,
    CubePath,
    CubeSchedule,
    StageNote,
    compose,
    constant_path,
    constant_schedule,
    embed,
    reverse,
    simplify_keyframes,
)

HALF = frac(1, 2)
FULL_WINDOW = (ZERO, ONE)
STAGE_NOTE_LIMIT = 1100


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class ProvenanceStep:
    rule: str
    params: dict

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))


@dataclass
class ShufflePlan:
    schedule: CubeSchedule
    provenance: tuple[ProvenanceStep, ...]

    @property
    def rule(self) -> str:
        return self.provenance[0].rule if self.provenance else "constant"


def replay(plan: ShufflePlan) -> ShufflePlan:
    """Re-run the recorded constructor with the recorded inputs."""
    step = plan.provenance[0]
    table = {
        "constant": lambda p: constant_plan(p["domain"], p.get("fixed", frozenset())),
        "eh_shuffle": lambda p: eh_shuffle(p["domain"], p["phi"]),
        "two_cycle_swap": lambda p: two_cycle_swap(
            p["source"], p["target"], p["k0"], p["fixed"]
        ),
        "finite_shuffle": lambda p: finite_shuffle(p["source"], p["target"], p["fixed"]),
        "ntwist": lambda p: ntwist(p["domain"], split=p["split"])[0],
        "infinite_to_standard": lambda p: infinite_to_standard(p["domain"]),
        "shuffle": lambda p: shuffle(p["source"], p["target"], p["fixed"]),
        "permutation_plan": lambda p: permutation_plan(p["n"], p["phi"]),
        "double_product_plan": lambda p: double_product_plan(p["n"]),
    }
    if step.rule not in table:
        raise PlanError(f"cannot replay rule {step.rule!r}")
    return table[step.rule](step.params)


def constant_plan(domain: NDomain, fixed: frozenset[int] = frozenset()) -> ShufflePlan:
    return ShufflePlan(
        constant_schedule(domain, fixed=fixed),
        (ProvenanceStep("constant", {"domain": domain, "fixed": fixed}),),
    )


# ---------------------------------------------------------------------------
# Shrinking


def shrink_schedule(witness: SubdomainWitness, fixed: frozenset[int] = frozenset()) -> CubeSchedule:
    """Single-segment schedule moving each cube onto its sub-cube.

    Every corner travels the straight line to its image under the canonical
    map, so the moving cube stays inside its parent throughout; indices whose
    child equals the parent are constant.
    """
    parent, child = witness.parent, witness.child

    def path(k: int) -> CubePath:
        a, b = parent.cube(k), child.cube(k)
        if not a.contains_cube(b):
            raise PlanError(f"invalid witness at index {k}: child not inside parent")
        if a == b:
            return constant_path(a)
        return CubePath(((ZERO, a), (ONE, b)))

    return CubeSchedule(
        parent.n,
        parent.index_set,
        path,
        source=parent,
        target=child,
        fixed=fixed,
        stages=(StageNote("shrink", FULL_WINDOW),),
    )


def grow_schedule(witness: SubdomainWitness, fixed: frozenset[int] = frozenset()) -> CubeSchedule:
    """Reverse shrinking: from the sub-domain back onto its parent."""
    return reverse(shrink_schedule(witness, fixed=fixed))


def _witness(parent: NDomain, child: NDomain) -> SubdomainWitness:
    return SubdomainWitness(parent, child)


# ---------------------------------------------------------------------------
# Finite slab shuffle


def _disjoint_interval_choice(last_axis: Sequence[Interval]) -> tuple[Interval, ...]:
    """Pairwise disjoint [c_k, d_k] inside the given intervals, greedily.

    Processes the intervals in order; inside each one it takes the leftmost
    free gap of width at least ell/(2m(m+1)) (ell the smallest input width)
    and centres a choice of half that width in it, so the chosen intervals are
    closed-disjoint with positive margins.
    """
    m = len(last_axis)
    ell = min(iv.width for iv in last_axis)
    w = ell / (2 * m * (m + 1))
    chosen: list[Interval] = []
    for iv in last_axis:
        events = sorted(
            (max(c.lo, iv.lo), min(c.hi, iv.hi))
            for c in chosen
            if c.lo < iv.hi and iv.lo < c.hi
        )
        gaps: list[tuple[Rational, Rational]] = []
        cursor = iv.lo
        for lo, hi in events:
            if lo > cursor:
                gaps.append((cursor, lo))
            cursor = max(cursor, hi)
        if cursor < iv.hi:
            gaps.append((cursor, iv.hi))
        pick = next((g for g in gaps if g[1] - g[0] >= w), None)
        if pick is None:
            raise PlanError("interval selection ran out of room")  # cannot happen
        mid = (pick[0] + pick[1]) / 2
        chosen.append(Interval(mid - w / 4, mid + w / 4))
    return tuple(chosen)


def _uniform_slab(n: int, position: int, m: int) -> Cube:
    return Cube(
        (Interval(frac(position - 1, m), frac(position, m)),)
        + (Interval(ZERO, ONE),) * (n - 1)
    )


def uniform_slab_domain(n: int, index_set: FiniteIndexSet, slot_of_rank: Sequence[int]) -> NDomain:
    """Finite domain of m uniform first-axis slabs, slot_of_rank[r-1] per rank."""
    m = index_set.size()

    def rule(k: int) -> Cube:
        return _uniform_slab(n, slot_of_rank[index_set.rank(k) - 1], m)

    return NDomain(n, index_set, rule)


def eh_shuffle(domain: NDomain, phi: Sequence[int]) -> ShufflePlan:
    """Rearrange a finite domain into ordered first-axis slabs.

    Four stages: pinch each cube to a fresh last-axis interval, widen to a
    full slab on that interval, slide to the slot the permutation assigns,
    then grow to the full slab.  The rank-r cube ends on slab phi^-1(r), so
    reading the slabs left to right gives the loops in the order phi.
    """
    if not domain.is_finite:
        raise PlanError("eh_shuffle needs a finite domain")
    idx = domain.indices_upto()
    m = len(idx)
    phi = tuple(phi)
    if sorted(phi) != list(range(1, m + 1)):
        raise PlanError("phi must be a permutation of 1..m")
    phi_inv = [0] * m
    for r, v in enumerate(phi, start=1):
        phi_inv[v - 1] = r
    n = domain.n
    chosen = _disjoint_interval_choice([domain.cube(k).axes[-1] for k in idx])

    def pinch(k: int) -> Cube:
        c = domain.cube(k)
        return Cube(c.axes[:-1] + (chosen[idx.index(k)],))

    def band(k: int) -> Cube:
        return Cube((Interval(ZERO, ONE),) * (n - 1) + (chosen[idx.index(k)],))

    def slotted(k: int) -> Cube:
        r = idx.index(k) + 1
        slab = Interval(frac(phi_inv[r - 1] - 1, m), frac(phi_inv[r - 1], m))
        return Cube((slab,) + (Interval(ZERO, ONE),) * (n - 2) + (chosen[r - 1],))

    dom_a = NDomain(n, domain.index_set, pinch)
    dom_b = NDomain(n, domain.index_set, band)
    dom_c = NDomain(n, domain.index_set, slotted)
    dom_d = uniform_slab_domain(n, domain.index_set, phi_inv)

    schedule = compose(
        [
            shrink_schedule(_witness(domain, dom_a)),
            grow_schedule(_witness(dom_b, dom_a)),
            shrink_schedule(_witness(dom_b, dom_c)),
            grow_schedule(_witness(dom_d, dom_c)),
        ]
    )
    prov = ProvenanceStep(
        "eh_shuffle",
        {"domain": domain, "phi": phi, "intervals": chosen},
    )
    return ShufflePlan(schedule, (prov,))


# ---------------------------------------------------------------------------
# Two-cycle swap


def _transit_cube(center: Sequence[Rational], half: Rational) -> Cube:
    return Cube(tuple(Interval(c - half, c + half) for c in center))


def _route(start: Cube, goal: Cube, obstacles: Sequence[Cube]) -> Corridor:
    try:
        return polygonal_corridor(start, goal, obstacles)
    except GeometryError as exc:
        raise RoutingError(str(exc)) from exc


def two_cycle_swap(
    source: NDomain, target: NDomain, k0: int, fixed: frozenset[int] = frozenset()
) -> ShufflePlan:
    """Move one cube to a new position along a corridor of free grid cells.

    The mover shrinks to a small transit cube, walks cell-centre to
    cell-centre through a corridor avoiding every fixed cube, and grows into
    its destination; a mirrored return corridor for the vacated position is
    recorded in the provenance.  Bystanders (neither fixed nor moving) are
    parked inside shrunken copies of themselves for the duration whenever
    they obstruct every corridor.
    """
    if not source.is_finite:
        raise PlanError("two_cycle_swap needs finite domains")
    idx = source.indices_upto()
    if target.indices_upto() != idx:
        raise PlanError("index sets differ")
    if k0 not in idx or k0 in fixed or not set(fixed) <= set(idx):
        raise PlanError("bad moving index or fixed set")
    for k in idx:
        if k != k0 and source.cube(k) != target.cube(k):
            raise PlanError(f"domains differ away from the moving index (at {k})")
    start, goal = source.cube(k0), target.cube(k0)
    fixed = frozenset(fixed)
    if start == goal:
        return constant_plan(source, fixed=fixed)
    n = source.n
    f_cubes = [source.cube(k) for k in sorted(fixed)]
    if f_cubes and not complement_connected(n, f_cubes):
        raise RoutingError("complement disconnected")
    bystanders = [k for k in idx if k != k0 and k not in fixed]

    corridor = None
    stash: dict[int, Cube] = {}
    stash_scale = None
    try:
        corridor = _route(start, goal, f_cubes + [source.cube(b) for b in bystanders])
    except RoutingError:
        scale = HALF
        for _ in range(40):
            trial = {b: middle_cube(source.cube(b), scale) for b in bystanders}
            try:
                corridor = _route(start, goal, f_cubes + list(trial.values()))
                stash, stash_scale = trial, scale
                break
            except RoutingError:
                scale /= 2
        if corridor is None:
            raise RoutingError("no corridor even after parking bystanders")

    half = corridor.clearance / 4  # transit cube side = clearance / 2
    centers = [c.center() for c in corridor.cells]
    transit = [_transit_cube(c, half) for c in centers]

    def mid_domain(position: Cube) -> NDomain:
        table = {k: stash.get(k, source.cube(k)) for k in idx}
        table[k0] = position
        return NDomain.finite([table[k] for k in idx], indices=idx)

    dom_out = mid_domain(transit[0])
    dom_in = mid_domain(transit[-1])

    if len(transit) == 1:
        transit_path = constant_path(transit[0])
    else:
        steps = len(transit) - 1
        transit_path = CubePath(
            tuple((frac(i, steps), c) for i, c in enumerate(transit))
        )

    def transit_paths(k: int) -> CubePath:
        if k == k0:
            return transit_path
        return constant_path(dom_out.cube(k))

    stage_move = CubeSchedule(
        n,
        source.index_set,
        transit_paths,
        source=dom_out,
        target=dom_in,
        fixed=fixed,
        stages=(StageNote("transit", FULL_WINDOW),),
    )
    schedule = compose(
        [
            shrink_schedule(_witness(source, dom_out), fixed=fixed),
            stage_move,
            grow_schedule(_witness(target, dom_in), fixed=fixed),
        ]
    )
    prov = ProvenanceStep(
        "two_cycle_swap",
        {
            "source": source,
            "target": target,
            "k0": k0,
            "fixed": fixed,
            "corridor": corridor,
            "return_corridor": Corridor(tuple(reversed(corridor.cells)), corridor.clearance),
            "stash_scale": stash_scale,
            "stashed": tuple(sorted(stash)),
        },
    )
    return ShufflePlan(schedule, (prov,))


# ---------------------------------------------------------------------------
# Finite case


def _lo_corner_cell(breaks: Sequence[Sequence[Rational]], c: Cube) -> Cube:
    axes = []
    for bs, ax in zip(breaks, c.axes):
        i = bs.index(ax.lo)
        axes.append(Interval(bs[i], bs[i + 1]))
    return Cube(tuple(axes))


def _band(cell: Cube, lo_num: int, hi_num: int) -> Cube:
    # eighth-bands of a cell: [lo + lo_num*w/8, lo + hi_num*w/8] per axis
    return Cube(
        tuple(
            Interval(ax.lo + ax.width * frac(lo_num, 8), ax.lo + ax.width * frac(hi_num, 8))
            for ax in cell.axes
        )
    )


def _disjoint_prime_positions(
    source: NDomain, target: NDomain, movers: Sequence[int]
) -> tuple[dict[int, Cube], dict[int, Cube]]:
    """Sub-cubes R'_k of the sources and S'_k of the targets, all disjoint.

    Both primes for an index live in the lo-corner cell of their cube within
    the grid of every mover face; source primes take the left eighth-band and
    target primes the right one, so the two families never meet even inside a
    shared cell.
    """
    n = source.n
    per_axis: list[set[Rational]] = [{ZERO, ONE} for _ in range(n)]
    for k in movers:
        for c in (source.cube(k), target.cube(k)):
            for i, ax in enumerate(c.axes):
                per_axis[i].add(ax.lo)
                per_axis[i].add(ax.hi)
    breaks = [sorted(s) for s in per_axis]
    r_prime = {
        k: _band(_lo_corner_cell(breaks, source.cube(k)), 1, 3) for k in movers
    }
    s_prime = {
        k: _band(_lo_corner_cell(breaks, target.cube(k)), 5, 7) for k in movers
    }
    return r_prime, s_prime


def finite_shuffle(
    source: NDomain, target: NDomain, fixed: frozenset[int] = frozenset()
) -> ShufflePlan:
    """Finite rearrangement, optionally constant on a fixed sub-domain.

    Unrestricted: both domains are shuffled into uniform slabs and the two
    slab plans are chained.  Restricted: the movers shrink to pairwise
    disjoint source/target pockets and are swapped one at a time along
    corridors avoiding the fixed cubes.
    """
    if not source.is_finite or not target.is_finite:
        raise PlanError("finite_shuffle needs finite domains")
    idx = source.indices_upto()
    if target.indices_upto() != idx:
        raise PlanError("index sets differ")
    fixed = frozenset(fixed)
    for k in fixed:
        if source.cube(k) != target.cube(k):
            raise PlanError(f"fixed index {k} disagrees between domains")
    if all(source.cube(k) == target.cube(k) for k in idx):
        return ShufflePlan(
            constant_schedule(source, fixed=fixed),
            (ProvenanceStep("finite_shuffle", {"source": source, "target": target, "fixed": fixed}),),
        )

    if not fixed:
        ident = tuple(range(1, len(idx) + 1))
        fwd = eh_shuffle(source, ident)
        back = eh_shuffle(target, ident)
        schedule = compose([fwd.schedule, reverse(back.schedule)])
        prov = ProvenanceStep(
            "finite_shuffle", {"source": source, "target": target, "fixed": fixed}
        )
        return ShufflePlan(schedule, (prov, fwd.provenance[0], back.provenance[0]))

    n = source.n
    f_cubes = [source.cube(k) for k in sorted(fixed)]
    if not complement_connected(n, f_cubes):
        raise RoutingError("complement disconnected")
    movers = [k for k in idx if k not in fixed]
    r_prime, s_prime = _disjoint_prime_positions(source, target, movers)

    def pocket_domain(positions: Mapping[int, Cube]) -> NDomain:
        return NDomain.finite(
            [positions.get(k, source.cube(k)) for k in idx], indices=idx
        )

    current = dict(r_prime)
    stages = [shrink_schedule(_witness(source, pocket_domain(current)), fixed=fixed)]
    swap_steps = []
    for k in movers:
        before = pocket_domain(current)
        current[k] = s_prime[k]
        after = pocket_domain(current)
        swap = two_cycle_swap(before, after, k, fixed)
        swap_steps.append(swap.provenance[0])
        stages.append(swap.schedule)
    stages.append(grow_schedule(_witness(target, pocket_domain(current)), fixed=fixed))
    schedule = compose(stages)
    prov = ProvenanceStep(
        "finite_shuffle",
        {"source": source, "target": target, "fixed": fixed, "order": tuple(movers)},
    )
    return ShufflePlan(schedule, (prov, *swap_steps))


# ---------------------------------------------------------------------------
# The cell twist


def _center_first_cycle(ncells: int) -> tuple[int, ...]:
    center = (ncells + 1) // 2
    return (center,) + tuple(range(1, center)) + tuple(range(center + 1, ncells + 1))


def _carried_path(cell_path: CubePath, cell: Cube, nested: Cube) -> CubePath:
    frames = [
        (t, canonical_affine(cell, moved).apply_cube(nested))
        for t, moved in cell_path.keyframes
    ]
    return CubePath(simplify_keyframes(frames))


def ntwist(
    domain: NDomain, split: Rational = HALF
) -> tuple[ShufflePlan, NDomain]:
    """Peel the least-index cube off an infinite domain.

    The domain is refined to be proper at its least index, the 3^n cells of
    the lead cube's subdivision are slab-shuffled with the centre cell sent to
    slot 1 (nested cubes riding their cells), and the slot partition is then
    widened so the lead occupies [0, split] and everything else is compressed
    into [split, 1].  Returns the plan and the residual domain, rescaled to
    the full cube, whose members all lie strictly inside the open cube.
    """
    if domain.is_finite:
        raise PlanError("ntwist needs an infinite domain")
    split = rat(split)
    if not ZERO < split < ONE:
        raise PlanError("split must be in (0, 1)")
    n = domain.n
    k0 = domain.index_set.least()
    lead = domain.cube(k0)
    if not lead.is_strictly_interior():
        raise DomainError("the lead cube touches the unit-cube boundary")
    refined = snapped_proper_refine(domain, k0)
    child = refined.child
    sub = subdivide(lead)
    ncells = 3**n
    sigma = frac(1, ncells)
    phi = _center_first_cycle(ncells)
    cell_domain = NDomain.finite(sub.cells)
    cell_plan = eh_shuffle(cell_domain, phi)
    cell_sched = cell_plan.schedule
    phi_inv = [0] * ncells
    for r, v in enumerate(phi, start=1):
        phi_inv[v - 1] = r

    def assignment(k: int) -> int:
        j = sub.cell_of(child.cube(k))
        if j is None:
            raise PlanError(f"refined cube {k} escapes its cell")
        return j

    def slab_of_cell(j: int) -> Cube:
        return _uniform_slab(n, phi_inv[j - 1], ncells)

    def stage2_path(k: int) -> CubePath:
        if k == k0:
            return cell_sched.path(sub.center_index)
        j = assignment(k)
        return _carried_path(cell_sched.path(j), sub.cells[j - 1], child.cube(k))

    def stage2_cube(k: int) -> Cube:
        if k == k0:
            return _uniform_slab(n, 1, ncells)
        j = assignment(k)
        return canonical_affine(sub.cells[j - 1], slab_of_cell(j)).apply_cube(child.cube(k))

    mid = NDomain(n, domain.index_set, stage2_cube)
    stage2 = CubeSchedule(
        n,
        domain.index_set,
        stage2_path,
        source=child,
        target=mid,
        stages=(StageNote("cell-slabs", FULL_WINDOW, lead_index=k0),),
    )

    widen_scale = (ONE - split) / (ONE - sigma)
    widen = canonical_affine(
        Cube((Interval(sigma, ONE),) + (Interval(ZERO, ONE),) * (n - 1)),
        Cube((Interval(split, ONE),) + (Interval(ZERO, ONE),) * (n - 1)),
    )
    lead_final = Cube((Interval(ZERO, split),) + (Interval(ZERO, ONE),) * (n - 1))

    def final_cube(k: int) -> Cube:
        if k == k0:
            return lead_final
        return widen.apply_cube(mid.cube(k))

    final = NDomain(n, domain.index_set, final_cube)

    def stage3_path(k: int) -> CubePath:
        a, b = mid.cube(k), final.cube(k)
        if a == b:
            return constant_path(a)
        return CubePath(((ZERO, a), (ONE, b)))

    stage3 = CubeSchedule(
        n,
        domain.index_set,
        stage3_path,
        source=mid,
        target=final,
        stages=(StageNote("widen", FULL_WINDOW, lead_index=k0),),
    )

    schedule = compose(
        [shrink_schedule(refined), stage2, stage3]
    )
    schedule.stages = (
        StageNote("ntwist", FULL_WINDOW, lead_index=k0, detail=f"split={split}"),
    )

    tail_block = Cube((Interval(split, ONE),) + (Interval(ZERO, ONE),) * (n - 1))
    unsqueeze = canonical_affine(tail_block, unit_cube(n))
    residual_set = domain.index_set.without(k0)
    residual = NDomain(
        n,
        residual_set,
        lambda k: unsqueeze.apply_cube(final.cube(k)),
    )
    prov = ProvenanceStep(
        "ntwist", {"domain": domain, "split": split, "k0": k0, "phi": phi}
    )
    return ShufflePlan(schedule, (prov,)), residual


# ---------------------------------------------------------------------------
# Infinite gluing


@dataclass(frozen=True)
class GlueBlock:
    """Space-time block of the staircase gluing (time in source-at-1 sense)."""

    kind: str  # "stage" hosts the m-th twist, "park" holds the m-th slab still
    m: int
    spatial: Cube
    time: Interval


def glue_blocks(n: int, count: int) -> tuple[GlueBlock, ...]:
    """The first `count` stage/park block pairs of the staircase."""
    out = []
    for m in range(1, count + 1):
        out.append(
            GlueBlock(
                "stage",
                m,
                Cube((Interval(frac(m - 1, m), ONE),) + (Interval(ZERO, ONE),) * (n - 1)),
                Interval(frac(1, m + 1), frac(1, m)),
            )
        )
        out.append(
            GlueBlock(
                "park",
                m,
                Cube(
                    (Interval(frac(m - 1, m), frac(m, m + 1)),)
                    + (Interval(ZERO, ONE),) * (n - 1)
                ),
                Interval(ZERO, frac(1, m + 1)),
            )
        )
    return tuple(out)


def blocks_tile_exactly(n: int, count: int) -> bool:
    """Blocks 1..count tile the space-time prism minus one corner box.

    Projected to (first axis, time) the blocks are rectangles; the check
    refines by all their breakpoints and requires every little cell to be
    covered exactly once, except inside the corner (1 - 1/(count+1), 1] x
    [0, 1/(count+1)) which must stay empty (its limit is the corner line
    where every loop has already been parked).
    """
    rects = [
        (b.spatial.axes[0].lo, b.spatial.axes[0].hi, b.time.lo, b.time.hi)
        for b in glue_blocks(n, count)
    ]
    corner = frac(1, count + 1)
    xs = sorted({x for r in rects for x in (r[0], r[1])} | {ZERO, ONE})
    ts = sorted({t for r in rects for t in (r[2], r[3])} | {ZERO, ONE})
    for x0, x1 in zip(xs, xs[1:]):
        for t0, t1 in zip(ts, ts[1:]):
            cover = sum(
                1 for r in rects if r[0] <= x0 and x1 <= r[1] and r[2] <= t0 and t1 <= r[3]
            )
            in_corner = x0 >= ONE - corner and t1 <= corner
            if cover != (0 if in_corner else 1):
                return False
    return True


def infinite_to_standard(domain: NDomain) -> ShufflePlan:
    """Lazy plan carrying an infinite domain onto the standard slab family.

    After one global interior shrink, stage m twists the residual domain so
    its least index lands on [0, 1/(m+1)]; the stage is squeezed into the
    space block [1 - 1/m, 1] x I^(n-1) over its time window, after which the
    peeled index sits exactly on its standard slab and never moves again.
    Index of rank k therefore has keyframes in stages 1..k only.
    """
    if domain.is_finite:
        raise PlanError("infinite_to_standard needs an infinite domain")
    n = domain.n
    index_set = domain.index_set
    shrunk = shrink_to_interior(domain)
    base = shrunk.child

    stage_plans: list[tuple[ShufflePlan, NDomain]] = []

    def ensure_stage(m: int) -> None:
        while len(stage_plans) < m:
            i = len(stage_plans) + 1
            dom = base if i == 1 else stage_plans[-1][1]
            stage_plans.append(ntwist(dom, split=frac(1, i + 1)))

    def stage_schedule(m: int) -> CubeSchedule:
        ensure_stage(m)
        return stage_plans[m - 1][0].schedule

    target = standard_over(n, index_set)

    def staircase_path(k: int) -> CubePath:
        r = index_set.rank(k)
        frames: list[tuple[Rational, Cube]] = []
        for m in range(1, r + 1):
            w0, w1 = frac(m - 1, m), frac(m, m + 1)
            block = Cube(
                (Interval(frac(m - 1, m), ONE),) + (Interval(ZERO, ONE),) * (n - 1)
            )
            emb = canonical_affine(unit_cube(n), block)
            for tau, q in stage_schedule(m).path(k).keyframes:
                frames.append((w0 + tau * (w1 - w0), emb.apply_cube(q)))
        slab = target.cube(k)
        if frames[-1][1] != slab:
            raise PlanError(f"stage chain for index {k} missed its slab")
        frames.append((ONE, slab))
        return CubePath(simplify_keyframes(frames))

    notes = []
    for m in range(1, STAGE_NOTE_LIMIT + 1):
        notes.append(
            StageNote(
                "ntwist",
                (frac(m - 1, m), frac(m, m + 1)),
                lead_index=index_set.from_rank(m),
            )
        )
    staircase = CubeSchedule(
        n,
        index_set,
        staircase_path,
        source=base,
        target=target,
        stages=tuple(notes),
    )
    schedule = compose([shrink_schedule(shrunk), staircase])
    prov = ProvenanceStep("infinite_to_standard", {"domain": domain})
    return ShufflePlan(schedule, (prov,))


# ---------------------------------------------------------------------------
# The full dispatcher


def _require_matching(source: NDomain, target: NDomain, fixed: frozenset[int]) -> None:
    if source.n != target.n:
        raise PlanError("dimension mismatch")
    if source.index_set != target.index_set:
        raise PlanError("index sets differ")
    for k in fixed:
        if not source.index_set.contains(k):
            raise PlanError(f"fixed index {k} outside the index set")
        if source.cube(k) != target.cube(k):
            raise PlanError(f"fixed index {k} disagrees between domains")


def shuffle(
    source: NDomain,
    target: NDomain,
    fixed: frozenset[int] = frozenset(),
    *,
    search_bound: int = 64,
) -> ShufflePlan:
    """Plan moving one domain onto another, constant on the fixed indices.

    Finite inputs delegate to the finite machinery.  Infinite unrestricted
    inputs go through the standard slab family.  Infinite restricted inputs
    shrink every mover into one cell of the grid marked by the fixed cubes
    and an auxiliary pocket inside the first mover, funnel all movers into
    the pocket with a finite restricted shuffle of the grid cells, and run
    the unrestricted case inside the pocket.  `search_bound` limits the index
    search for a target cube overlapping the first mover; it should be at
    least the bound later used for verification.
    """
    fixed = frozenset(fixed)
    _require_matching(source, target, fixed)
    if source.same_family(target) or (
        source.is_finite
        and all(source.cube(k) == target.cube(k) for k in source.indices_upto())
    ):
        plan = constant_plan(source, fixed=fixed)
        return ShufflePlan(
            plan.schedule,
            (ProvenanceStep("shuffle", {"source": source, "target": target, "fixed": fixed}),),
        )
    if source.is_finite:
        inner = finite_shuffle(source, target, fixed)
        return ShufflePlan(
            inner.schedule,
            (
                ProvenanceStep("shuffle", {"source": source, "target": target, "fixed": fixed}),
                *inner.provenance,
            ),
        )
    if not fixed:
        fwd = infinite_to_standard(source)
        back = infinite_to_standard(target)
        schedule = compose([fwd.schedule, reverse(back.schedule)])
        return ShufflePlan(
            schedule,
            (
                ProvenanceStep("shuffle", {"source": source, "target": target, "fixed": fixed}),
                fwd.provenance[0],
                back.provenance[0],
            ),
        )
    return _restricted_infinite_shuffle(source, target, fixed, search_bound)


def _open_overlap(a: Cube, b: Cube) -> bool:
    return all(max(x.lo, y.lo) < min(x.hi, y.hi) for x, y in zip(a.axes, b.axes))


def _intersection_cube(a: Cube, b: Cube) -> Cube:
    return Cube(
        tuple(
            Interval(max(x.lo, y.lo), min(x.hi, y.hi)) for x, y in zip(a.axes, b.axes)
        )
    )


def _restricted_infinite_shuffle(
    source: NDomain, target: NDomain, fixed: frozenset[int], search_bound: int
) -> ShufflePlan:
    n = source.n
    index_set = source.index_set
    f_sorted = sorted(fixed)
    f_cubes = [source.cube(k) for k in f_sorted]
    if not complement_connected(n, f_cubes):
        raise RoutingError("complement disconnected")
    movers = index_set
    for k in f_sorted:
        movers = movers.without(k)
    k0 = movers.least()

    # auxiliary pocket inside the first mover, biased into a target overlap
    lead = source.cube(k0)
    k1 = None
    for k in movers.upto(search_bound):
        if _open_overlap(lead, target.cube(k)):
            k1 = k
            break
    pocket_box = _intersection_cube(lead, target.cube(k1)) if k1 is not None else lead
    pocket = middle_cube(pocket_box, frac(1, 3))

    grid = decomposition_with_marked_cubes(n, f_cubes + [pocket])
    elements = grid.elements()
    element_index = {c: j for j, c in enumerate(elements, start=1)}
    f_positions = frozenset(element_index[c] for c in f_cubes)
    pocket_position = element_index[pocket]

    def refine_into_cells(dom: NDomain) -> tuple[NDomain, Callable[[int], int]]:
        assign_cache: dict[int, int] = {}

        def assigned(k: int) -> int:
            j = assign_cache.get(k)
            if j is None:
                c = dom.cube(k)
                for jj, el in enumerate(elements, start=1):
                    if jj == pocket_position or jj in f_positions:
                        continue
                    if _open_overlap(c, el):
                        j = jj
                        break
                else:
                    raise PlanError(f"cube {k} has no room outside the marked cells")
                assign_cache[k] = j
            return j

        def child(k: int) -> Cube:
            if k in fixed:
                return dom.cube(k)
            j = assigned(k)
            return middle_cube(_intersection_cube(dom.cube(k), elements[j - 1]), HALF)

        return NDomain(n, index_set, child), assigned

    src_child, src_cell = refine_into_cells(source)
    tgt_child, tgt_cell = refine_into_cells(target)

    # finite restricted shuffle of the grid cells into the pocket
    m = len(elements)
    loose = [j for j in range(1, m + 1) if j not in f_positions]
    slot_of = {j: r for r, j in enumerate(loose, start=1)}
    into_pocket = canonical_affine(unit_cube(n), pocket)

    def pocket_slot(j: int) -> Cube:
        return into_pocket.apply_cube(_uniform_slab(n, slot_of[j], len(loose)))

    cell_source = NDomain.finite(elements)
    cell_target = NDomain.finite(
        [elements[j - 1] if j in f_positions else pocket_slot(j) for j in range(1, m + 1)]
    )
    cell_plan = finite_shuffle(cell_source, cell_target, f_positions)
    cell_sched = cell_plan.schedule

    def carried(cfg_child: NDomain, cfg_cell, forward: bool) -> CubeSchedule:
        def path(k: int) -> CubePath:
            if k in fixed:
                j = element_index[source.cube(k)]
            else:
                j = cfg_cell(k)
            p = _carried_path(cell_sched.path(j), elements[j - 1], cfg_child.cube(k))
            return p

        def end_cube(k: int) -> Cube:
            if k in fixed:
                return source.cube(k)
            j = cfg_cell(k)
            return canonical_affine(elements[j - 1], cell_target.cube(j)).apply_cube(
                cfg_child.cube(k)
            )

        nested_end = NDomain(n, index_set, end_cube)
        sched = CubeSchedule(
            n,
            index_set,
            path,
            source=cfg_child,
            target=nested_end,
            fixed=fixed,
            stages=(StageNote("funnel", FULL_WINDOW),),
        )
        return sched if forward else reverse(sched)

    stage_fwd = carried(src_child, src_cell, forward=True)
    stage_back = carried(tgt_child, tgt_cell, forward=False)

    # unrestricted infinite shuffle inside the pocket
    out_of_pocket = canonical_affine(pocket, unit_cube(n))

    def pocket_local(dom: NDomain, cfg_cell) -> NDomain:
        def rule(k: int) -> Cube:
            j = cfg_cell(k)
            nested = canonical_affine(elements[j - 1], cell_target.cube(j)).apply_cube(
                dom.cube(k)
            )
            return out_of_pocket.apply_cube(nested)

        return NDomain(n, movers, rule)

    inner_src = pocket_local(src_child, src_cell)
    inner_tgt = pocket_local(tgt_child, tgt_cell)
    fwd = infinite_to_standard(inner_src)
    back = infinite_to_standard(inner_tgt)
    inner = compose([fwd.schedule, reverse(back.schedule)])
    inner_embedded = embed(inner, BlockEmbedding(pocket, Interval(ZERO, ONE)))

    def pocket_stage_path(k: int) -> CubePath:
        if k in fixed:
            return constant_path(source.cube(k))
        return inner_embedded.path(k)

    def mixed_domain(side: CubeSchedule, use_source: bool) -> NDomain:
        dom = side.source if use_source else side.target

        def rule(k: int) -> Cube:
            if k in fixed:
                return source.cube(k)
            return dom.cube(k)

        return NDomain(n, index_set, rule)

    pocket_stage = CubeSchedule(
        n,
        index_set,
        pocket_stage_path,
        source=mixed_domain(inner_embedded, True),
        target=mixed_domain(inner_embedded, False),
        fixed=fixed,
        stages=inner_embedded.stages,
    )

    schedule = compose(
        [
            shrink_schedule(_witness(source, src_child), fixed=fixed),
            stage_fwd,
            pocket_stage,
            stage_back,
            grow_schedule(_witness(target, tgt_child), fixed=fixed),
        ]
    )
    prov = ProvenanceStep(
        "shuffle",
        {
            "source": source,
            "target": target,
            "fixed": fixed,
            "k0": k0,
            "k1": k1,
            "pocket": pocket,
            "cells": elements,
        },
    )
    return ShufflePlan(schedule, (prov, *cell_plan.provenance))


# ---------------------------------------------------------------------------
# Corollary plans


def permutation_plan(n: int, phi: Mapping[int, int]) -> ShufflePlan:
    """Plan from the standard family onto its reindexing by a permutation.

    Accepts a finitely supported permutation given as a mapping (identity off
    the mapping); arbitrary reindexings of the naturals are rejected because
    evaluation needs a computable inverse.
    """
    phi = dict(phi)
    src = standard_over(n, NaturalIndexSet(1))
    tgt = permuted_standard_domain(n, phi)
    if all(v == k for k, v in phi.items()):
        plan = constant_plan(src)
        return ShufflePlan(
            plan.schedule, (ProvenanceStep("permutation_plan", {"n": n, "phi": phi}),)
        )
    inner = shuffle(src, tgt)
    return ShufflePlan(
        inner.schedule,
        (ProvenanceStep("permutation_plan", {"n": n, "phi": phi}), *inner.provenance),
    )


def double_product_plan(n: int) -> ShufflePlan:
    """Plan from midpoint-split slabs onto the two-block layout.

    At time 0 the doubled sequence reads f1, g1, f2, g2, ... along the
    standard slabs split at their midpoints; at time 1 all f's occupy the
    left half and all g's the right half.
    """
    from .domains import block_pair_domain, interleaved_pair_domain

    inner = shuffle(interleaved_pair_domain(n), block_pair_domain(n))
    return ShufflePlan(
        inner.schedule,
        (ProvenanceStep("double_product_plan", {"n": n}), *inner.provenance),
    )


# ---------------------------------------------------------------------------
# Quantitative continuity certificate


@dataclass
class FragmentCheck:
    lead_index: int
    value_bound: Rational
    ok: bool


@dataclass
class ContinuityCertificate:
    epsilon: Rational
    threshold: int
    fragments: tuple[FragmentCheck, ...]
    ok: bool


def continuity_certificate(
    plan: ShufflePlan, sequence: KSequence, epsilon: Rational
) -> ContinuityCertificate:
    """Check that late stages only move loops with small image bounds.

    Every recorded stage fragment whose lead index is at or beyond the null
    certificate for epsilon must carry a value bound below epsilon; this is
    the quantitative face of gluing continuity at the corner.
    """
    epsilon = rat(epsilon)
    threshold = null_certificate(sequence, epsilon)
    checks = []
    for note in plan.schedule.stages:
        if note.lead_index is None or note.lead_index < threshold:
            continue
        bound = sequence.tail_bound(note.lead_index - 1)
        checks.append(FragmentCheck(note.lead_index, bound, bound < epsilon))
    return ContinuityCertificate(
        epsilon, threshold, tuple(checks), all(c.ok for c in checks)
    )
