from fractions import Fraction as F
from itertools import product

import pytest

from cubeshuffle.domains import (
    NDomain,
    NaturalIndexSet,
    adversarial_dense_domain,
    embedded_domain,
    interleaved_pair_domain,
    shrink_to_interior,
    standard_domain,
    standard_slab,
    validate,
)
from cubeshuffle.engine import (
    PlanError,
    blocks_tile_exactly,
    constant_plan,
    continuity_certificate,
    double_product_plan,
    eh_shuffle,
    finite_shuffle,
    glue_blocks,
    infinite_to_standard,
    ntwist,
    permutation_plan,
    replay,
    shrink_schedule,
    shuffle,
    two_cycle_swap,
)
from cubeshuffle.geometry import RoutingError, cube, interiors_disjoint, unit_cube
from cubeshuffle.loops import KSequence, bump_loop, harmonic_bump_sequence, tent
from cubeshuffle.schedules import eval_homotopy, reverse, verify


def pair_domain():
    return NDomain.finite([cube((0, "1/2"), (0, 1)), cube(("1/2", 1), (0, 1))])


# --- shrink schedules ----------------------------------------------------------


def test_shrink_constant_when_child_equals_parent():
    d = pair_domain()
    w = shrink_to_interior(d, F(1))  # scale 1: child == parent
    s = shrink_schedule(w)
    assert s.path(1).is_constant()
    assert verify(s).ok


def test_shrink_midpoint_cube_matches_corner_interpolation():
    parent = NDomain.finite([unit_cube(2)])
    child = NDomain.finite([cube(("1/4", "1/2"), ("1/4", "1/2"))])
    s = shrink_schedule(Witness(parent, child))
    # corner interpolation oracle at t = 1/2: (0 + 1/4)/2 = 1/8, (1 + 1/2)/2 = 3/4
    assert s.cube_at(1, F(1, 2)) == cube(("1/8", "3/4"), ("1/8", "3/4"))
    assert verify(s).ok


def Witness(parent, child):
    from cubeshuffle.domains import SubdomainWitness

    return SubdomainWitness(parent, child)


def test_shrink_stays_inside_parent_at_dyadic_times():
    parent = NDomain.finite([unit_cube(2)])
    child = NDomain.finite([cube(("1/4", "1/2"), ("1/4", "1/2"))])
    s = shrink_schedule(Witness(parent, child))
    for j in range(17):
        t = F(j, 16)
        assert parent.cube(1).contains_cube(s.cube_at(1, t))


# --- eh shuffle -----------------------------------------------------------------


def test_eh_shuffle_single_cube_grows_to_unit_cube():
    d = NDomain.finite([cube(("1/3", "2/3"), ("1/4", "3/4"))])
    plan = eh_shuffle(d, (1,))
    assert plan.schedule.target.cube(1) == unit_cube(2)
    assert verify(plan.schedule).ok


def test_eh_shuffle_swap_two_slabs():
    plan = eh_shuffle(pair_domain(), (2, 1))
    tgt = plan.schedule.target
    assert tgt.cube(1) == cube(("1/2", 1), (0, 1))
    assert tgt.cube(2) == cube((0, "1/2"), (0, 1))
    assert verify(plan.schedule).ok


def test_eh_shuffle_chosen_intervals_are_disjoint_and_inside():
    adv = adversarial_dense_domain(2)
    plan = eh_shuffle(adv, tuple(range(1, adv.size() + 1)))
    chosen = plan.provenance[0].params["intervals"]
    idx = adv.indices_upto()
    for r, iv in enumerate(chosen):
        assert adv.cube(idx[r]).axes[-1].contains_interval(iv)
    for i in range(len(chosen)):
        for j in range(i + 1, len(chosen)):
            a, b = chosen[i], chosen[j]
            assert a.hi < b.lo or b.hi < a.lo


def test_eh_shuffle_verifies_on_adversarial_domain():
    adv = adversarial_dense_domain(2)
    plan = eh_shuffle(adv, tuple(range(1, adv.size() + 1)))
    assert verify(plan.schedule).ok


def test_eh_shuffle_rejects_non_permutation():
    with pytest.raises(PlanError):
        eh_shuffle(pair_domain(), (1, 1))


# --- two-cycle swap ---------------------------------------------------------------


def test_two_cycle_constant_when_positions_agree():
    d = pair_domain()
    plan = two_cycle_swap(d, d, 1, frozenset())
    assert plan.schedule.path(1).is_constant()


def test_two_cycle_straight_move():
    R = NDomain.finite([cube((0, "1/4"), (0, "1/4"))])
    S = NDomain.finite([cube(("3/4", 1), ("3/4", 1))])
    plan = two_cycle_swap(R, S, 1, frozenset())
    assert verify(plan.schedule).ok
    assert plan.schedule.path(1).first_cube == R.cube(1)
    assert plan.schedule.path(1).last_cube == S.cube(1)


def test_two_cycle_routes_over_fixed_obstacle():
    R = NDomain.finite([cube(("1/3", "2/3"), (0, "2/3")), cube((0, "1/4"), (0, "1/4"))])
    S = NDomain.finite([cube(("1/3", "2/3"), (0, "2/3")), cube(("3/4", 1), (0, "1/4"))])
    plan = two_cycle_swap(R, S, 2, frozenset({1}))
    assert verify(plan.schedule).ok
    assert plan.schedule.path(1).is_constant()
    obstacle = R.cube(1)
    p = plan.schedule.path(2)
    for t, c in p.keyframes:
        assert interiors_disjoint(c, obstacle)
    corridor = plan.provenance[0].params["corridor"]
    for c in corridor.cells:
        assert interiors_disjoint(c, obstacle)
    back = plan.provenance[0].params["return_corridor"]
    assert back.cells == tuple(reversed(corridor.cells))


def test_two_cycle_parks_obstructing_bystander():
    # bystander wall with a gap only above; mover must pass through its column
    R = NDomain.finite(
        [
            cube((0, "1/4"), (0, "1/4")),  # mover
            cube(("3/8", "5/8"), (0, "7/8")),  # bystander wall
        ]
    )
    S = NDomain.finite([cube(("3/4", 1), (0, "1/4")), R.cube(2)])
    plan = two_cycle_swap(R, S, 1, frozenset())
    assert verify(plan.schedule).ok
    # bystander went somewhere and came back
    p2 = plan.schedule.path(2)
    assert p2.first_cube == R.cube(2) and p2.last_cube == R.cube(2)


def test_two_cycle_raises_on_disconnected_complement():
    wall = cube((0, 1), ("1/3", "2/3"))
    R = NDomain.finite([wall, cube((0, "1/4"), (0, "1/4"))])
    S = NDomain.finite([wall, cube((0, "1/4"), ("3/4", 1))])
    with pytest.raises(RoutingError):
        two_cycle_swap(R, S, 2, frozenset({1}))


# --- finite shuffle -----------------------------------------------------------------


def test_finite_shuffle_constant_when_equal():
    d = pair_domain()
    plan = finite_shuffle(d, d, frozenset({1, 2}))
    assert plan.schedule.path(1).is_constant()
    assert verify(plan.schedule).ok


def brute_concat(domain, loops, point):
    """Independent oracle: scan cubes, rescale by hand, tent product."""
    for k in domain.indices_upto():
        c = domain.cube(k)
        if all(ax.lo <= x <= ax.hi for ax, x in zip(c.axes, point)):
            local = [
                (x - ax.lo) / (ax.hi - ax.lo) for ax, x in zip(c.axes, point)
            ]
            amp = loops[k]
            v = amp
            for u in local:
                v *= min(2 * u, 2 - 2 * u)
            return (v,)
    return (F(0),)


def test_finite_shuffle_unrestricted_matches_concatenation_oracle():
    R = NDomain.finite(
        [
            cube((0, "1/3"), ("1/8", "1/2")),
            cube(("1/2", "7/8"), ("1/2", "3/4")),
            cube(("1/3", "1/2"), (0, "1/4")),
        ]
    )
    S = NDomain.finite(
        [
            cube(("2/3", 1), ("2/3", 1)),
            cube((0, "1/4"), (0, "1/4")),
            cube(("1/4", "3/8"), ("1/2", 1)),
        ]
    )
    plan = finite_shuffle(R, S, frozenset())
    assert verify(plan.schedule).ok
    amps = {1: F(1), 2: F(1, 2), 3: F(1, 3)}
    seq = KSequence.finite([bump_loop(2, amps[k]) for k in (1, 2, 3)])
    grid = [F(j, 16) for j in range(17)]
    for x, y in product(grid, grid):
        assert eval_homotopy(plan.schedule, seq, (x, y), F(0)).value == brute_concat(
            R, amps, (x, y)
        )
        assert eval_homotopy(plan.schedule, seq, (x, y), F(1)).value == brute_concat(
            S, amps, (x, y)
        )


def test_finite_shuffle_restricted_constant_on_fixed():
    fixed_cube = cube((0, 1), (0, "1/4"))
    R = NDomain.finite(
        [fixed_cube, cube((0, "1/4"), ("1/2", "3/4")), cube(("1/2", "3/4"), ("1/2", "3/4"))]
    )
    S = NDomain.finite(
        [fixed_cube, cube(("3/4", 1), ("3/4", 1)), cube((0, "1/4"), ("3/8", "1/2"))]
    )
    plan = finite_shuffle(R, S, frozenset({1}))
    rep = verify(plan.schedule)
    assert rep.ok
    assert plan.schedule.path(1).is_constant()
    # every stage cube of every mover is exactly disjoint from the fixed cube
    for k in (2, 3):
        for t, c in plan.schedule.path(k).keyframes:
            assert interiors_disjoint(c, fixed_cube)


def test_finite_shuffle_fixed_disagreement_rejected():
    R = pair_domain()
    S = NDomain.finite([cube((0, "1/4"), (0, 1)), cube(("1/2", 1), (0, 1))])
    with pytest.raises(PlanError):
        finite_shuffle(R, S, frozenset({1}))


# --- ntwist ---------------------------------------------------------------------


def twist_base():
    return shrink_to_interior(standard_domain(2)).child


def test_ntwist_cell_permutation_sends_centre_to_slot_one():
    from cubeshuffle.engine import _center_first_cycle

    phi = _center_first_cycle(9)
    assert phi[0] == 5
    assert sorted(phi) == list(range(1, 10))


def test_ntwist_lead_endpoint_chase():
    plan, residual = ntwist(twist_base())
    sched = plan.schedule
    # after the cell-slab stage (two thirds of the plan) the lead fills slot one
    assert sched.cube_at(1, F(2, 3)) == cube((0, "1/9"), (0, 1))
    # then widens to the left half
    assert sched.cube_at(1, F(1)) == cube((0, "1/2"), (0, 1))
    assert verify(sched, bound=10).ok


def test_ntwist_residual_is_valid_and_interior():
    _, residual = ntwist(twist_base())
    assert validate(residual, bound=25).ok
    for k in residual.indices_upto(25):
        assert residual.cube(k).is_strictly_interior()


def test_ntwist_respects_split_parameter():
    plan, residual = ntwist(twist_base(), split=F(1, 3))
    assert plan.schedule.cube_at(1, F(1)) == cube((0, "1/3"), (0, 1))
    assert validate(residual, bound=10).ok


def test_ntwist_rejects_boundary_lead():
    with pytest.raises(Exception):
        ntwist(standard_domain(2))  # first slab touches the boundary


# --- infinite gluing -------------------------------------------------------------


def test_glue_block_shapes():
    blocks = glue_blocks(2, 2)
    stage2 = next(b for b in blocks if b.kind == "stage" and b.m == 2)
    assert stage2.spatial == cube(("1/2", 1), (0, 1))
    assert (stage2.time.lo, stage2.time.hi) == (F(1, 3), F(1, 2))
    park2 = next(b for b in blocks if b.kind == "park" and b.m == 2)
    assert park2.spatial == cube(("1/2", "2/3"), (0, 1))
    assert (park2.time.lo, park2.time.hi) == (F(0), F(1, 3))


def test_blocks_tile_prism():
    assert blocks_tile_exactly(2, 1)
    assert blocks_tile_exactly(2, 10)
    assert blocks_tile_exactly(3, 10)


def test_infinite_to_standard_small_bound():
    plan = infinite_to_standard(standard_domain(2))
    sched = plan.schedule
    assert verify(sched, bound=12).ok
    for k in (1, 2, 7):
        p = sched.path(k)
        assert p.first_cube == standard_slab(2, k)
        assert p.last_cube == standard_slab(2, k)


def test_infinite_to_standard_index_one_keyframe_budget():
    plan = infinite_to_standard(standard_domain(2))
    p1 = plan.schedule.path(1)
    # stage one plus the global shrink and the parked tail
    stage1 = len(ntwist(twist_base(), split=F(1, 2))[0].schedule.path(1).keyframes)
    assert len(p1.keyframes) <= stage1 + 2


def test_infinite_to_standard_nonstandard_source():
    plan = infinite_to_standard(interleaved_pair_domain(2))
    assert verify(plan.schedule, bound=12).ok


# --- full dispatcher --------------------------------------------------------------


def test_shuffle_constant_for_equal_domains():
    d = standard_domain(2)
    plan = shuffle(d, standard_domain(2))
    assert plan.schedule.path(5).is_constant()
    f = pair_domain()
    plan2 = shuffle(f, pair_domain())
    assert plan2.schedule.path(1).is_constant()


def test_shuffle_finite_delegates_keyframe_for_keyframe():
    R = NDomain.finite(
        [cube((0, "1/3"), (0, "1/2")), cube(("1/2", "7/8"), ("1/2", "3/4"))]
    )
    S = NDomain.finite(
        [cube(("2/3", 1), ("1/4", 1)), cube((0, "1/4"), (0, "1/4"))]
    )
    via_shuffle = shuffle(R, S)
    direct = finite_shuffle(R, S, frozenset())
    for k in (1, 2):
        assert via_shuffle.schedule.path(k).keyframes == direct.schedule.path(k).keyframes


def test_shuffle_infinite_unrestricted():
    src = standard_domain(2)
    tgt = interleaved_pair_domain(2)
    plan = shuffle(src, tgt)
    sched = plan.schedule
    assert verify(sched, bound=10).ok
    assert sched.path(3).first_cube == src.cube(3)
    assert sched.path(3).last_cube == tgt.cube(3)


def corner_fixture():
    f1 = cube((0, "1/4"), (0, "1/4"))
    f2 = cube(("3/4", 1), ("3/4", 1))
    box_r = cube(("3/8", "5/8"), ("1/8", "7/8"))
    box_s = cube(("1/16", "5/16"), ("3/8", "7/8"))
    tail_r = embedded_domain(box_r, standard_domain(2))
    tail_s = embedded_domain(box_s, standard_domain(2))

    def make(tail):
        def rule(k):
            if k == 1:
                return f1
            if k == 2:
                return f2
            return tail.cube(k - 2)

        return NDomain.from_rule(2, NaturalIndexSet(1), rule)

    return make(tail_r), make(tail_s)


def test_shuffle_infinite_restricted_fixture():
    R, S = corner_fixture()
    plan = shuffle(R, S, frozenset({1, 2}))
    rep = verify(plan.schedule, bound=16)
    assert rep.ok
    for k in (1, 2):
        assert plan.schedule.path(k).is_constant()
    # movers stay clear of the fixed cubes at every keyframe
    for k in (3, 4, 5):
        for _, c in plan.schedule.path(k).keyframes:
            assert interiors_disjoint(c, R.cube(1))
            assert interiors_disjoint(c, R.cube(2))


def test_shuffle_rejects_disconnected_fixed_complement():
    wall = cube((0, 1), ("3/8", "5/8"))

    def rule(k):
        if k == 1:
            return wall
        return embedded_domain(cube((0, 1), (0, "1/4")), standard_domain(2)).cube(k - 1)

    R = NDomain.from_rule(2, NaturalIndexSet(1), rule)

    def rule2(k):
        if k == 1:
            return wall
        return embedded_domain(cube((0, 1), ("3/4", 1)), standard_domain(2)).cube(k - 1)

    S = NDomain.from_rule(2, NaturalIndexSet(1), rule2)
    with pytest.raises(RoutingError):
        shuffle(R, S, frozenset({1}))


# --- corollary plans ---------------------------------------------------------------


def test_permutation_plan_identity_is_constant():
    plan = permutation_plan(2, {})
    assert plan.schedule.path(1).is_constant()


def test_permutation_plan_transposition_endpoints():
    plan = permutation_plan(2, {1: 2, 2: 1})
    assert plan.schedule.source.cube(1) == cube((0, "1/2"), (0, 1))
    assert plan.schedule.target.cube(1) == cube(("1/2", "2/3"), (0, 1))
    assert verify(plan.schedule, bound=8).ok


def test_permutation_plan_rejects_general_reindexing():
    with pytest.raises(Exception):
        permutation_plan(2, {1: 2, 2: 3, 3: 1, 4: 5})  # not a bijection on support


def test_double_product_plan_identities_on_grid():
    plan = double_product_plan(2)
    sched = plan.schedule
    assert verify(sched, bound=10).ok

    # doubled sequence f1, g1, f2, g2, ... with distinct amplitudes
    def amp(j):
        k = (j + 1) // 2
        return F(1, 2 * k) if j % 2 == 1 else F(1, 2 * k + 1)

    seq = KSequence(
        NaturalIndexSet(1),
        lambda j: bump_loop(2, amp(j)),
        dominating=lambda j: F(1, j),
    )

    def tentv(u):
        return min(2 * u, 2 - 2 * u)

    def product_oracle(x, y):
        # value of the slab-wise product of f_k . g_k on the standard family
        k = 1
        while F(k, k + 1) < x:
            k += 1
        lo, hi = F(k - 1, k), F(k, k + 1)
        if x > hi or x == 1:
            return (F(0),)
        u = (x - lo) / (hi - lo)
        if u <= F(1, 2):
            return (amp(2 * k - 1) * tentv(2 * u) * tentv(y),)
        return (amp(2 * k) * tentv(2 * u - 1) * tentv(y),)

    def split_oracle(x, y):
        # left half carries all f's, right half all g's
        if x <= F(1, 2):
            xx, parity = 2 * x, 1
        else:
            xx, parity = 2 * x - 1, 0
        k = 1
        while F(k, k + 1) < xx:
            k += 1
        lo, hi = F(k - 1, k), F(k, k + 1)
        if xx > hi or xx == 1:
            return (F(0),)
        u = (xx - lo) / (hi - lo)
        j = 2 * k - 1 if parity == 1 else 2 * k
        return (amp(j) * tentv(u) * tentv(y),)

    grid = [F(j, 12) for j in range(13)]
    for x, y in product(grid, grid):
        assert eval_homotopy(sched, seq, (x, y), F(0), truncation=80).value == product_oracle(x, y)
        assert eval_homotopy(sched, seq, (x, y), F(1), truncation=80).value == split_oracle(x, y)


# --- provenance and continuity ------------------------------------------------------


def test_replay_reproduces_keyframes():
    R = NDomain.finite(
        [cube((0, "1/3"), (0, "1/2")), cube(("1/2", "7/8"), ("1/2", "3/4"))]
    )
    S = NDomain.finite(
        [cube(("2/3", 1), ("1/4", 1)), cube((0, "1/4"), (0, "1/4"))]
    )
    plan = finite_shuffle(R, S, frozenset())
    again = replay(plan)
    for k in (1, 2):
        assert plan.schedule.path(k).keyframes == again.schedule.path(k).keyframes


def test_continuity_certificate_tail_bounds():
    plan = infinite_to_standard(standard_domain(2))
    seq = harmonic_bump_sequence(2)
    cert = continuity_certificate(plan, seq, F(1, 10))
    assert cert.threshold == 11
    assert cert.ok
    assert all(c.value_bound < F(1, 10) for c in cert.fragments)
    assert len(cert.fragments) > 0
