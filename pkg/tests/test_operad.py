from fractions import Fraction as F
from itertools import product
from random import Random

import pytest

from cubeshuffle.domains import NDomain, standard_domain, validate
from cubeshuffle.geometry import cube, unit_cube
from cubeshuffle.loops import KSequence, bump_loop, harmonic_bump_sequence
from cubeshuffle.operad import (
    OperadElement,
    OperadError,
    act_on_loops,
    compose_elements,
    symmetric_action,
    unit_element,
)


def random_element(rng: Random, n=2, max_cubes=4) -> OperadElement:
    """Random small element: disjoint cells of a random grid."""
    den = rng.randrange(3, 9)
    xs = sorted(rng.sample(range(1, den), 2))
    ys = sorted(rng.sample(range(1, den), 2))
    breaks_x = [F(0), F(xs[0], den), F(xs[1], den), F(1)]
    breaks_y = [F(0), F(ys[0], den), F(ys[1], den), F(1)]
    cells = [
        cube((breaks_x[i], breaks_x[i + 1]), (breaks_y[j], breaks_y[j + 1]))
        for i in range(3)
        for j in range(3)
    ]
    m = rng.randrange(1, max_cubes + 1)
    return OperadElement(NDomain.finite(rng.sample(cells, m)))


def test_unit_element_is_identity_for_composition():
    rng = Random(5)
    x = random_element(rng)
    left = compose_elements(unit_element(2), [x])
    assert [left.cube(k) for k in range(1, x.arity + 1)] == [
        x.cube(k) for k in range(1, x.arity + 1)
    ]
    # unit in every inner slot too
    right = compose_elements(x, [unit_element(2)] * x.arity)
    assert [right.cube(k) for k in range(1, x.arity + 1)] == [
        x.cube(k) for k in range(1, x.arity + 1)
    ]


def test_compose_standard_tail_example():
    outer = OperadElement(
        NDomain.finite([cube((0, "1/2"), (0, 1)), cube(("1/2", 1), (0, 1))])
    )
    inner = [OperadElement(NDomain.finite([unit_cube(2)])), OperadElement(standard_domain(2))]
    out = compose_elements(outer, inner)
    assert out.arity is None
    assert out.cube(1) == cube((0, "1/2"), (0, 1))
    assert out.cube(2) == cube(("1/2", "3/4"), (0, 1))
    assert validate(out.domain, bound=20).ok


def test_compose_associativity_brute_force():
    rng = Random(17)
    for _ in range(60):
        a = random_element(rng, max_cubes=3)
        bs = [random_element(rng, max_cubes=3) for _ in range(a.arity)]
        cs = [
            [random_element(rng, max_cubes=2) for _ in range(b.arity)] for b in bs
        ]
        left = compose_elements(
            compose_elements(a, bs), [c for group in cs for c in group]
        )
        right = compose_elements(
            a, [compose_elements(b, group) for b, group in zip(bs, cs)]
        )
        assert left.arity == right.arity
        for k in range(1, left.arity + 1):
            assert left.cube(k) == right.cube(k)


def test_symmetric_action_identity_and_composition():
    rng = Random(23)
    for _ in range(40):
        x = random_element(rng, max_cubes=4)
        m = x.arity
        ident = tuple(range(1, m + 1))
        same = symmetric_action(x, ident)
        assert [same.cube(k) for k in ident] == [x.cube(k) for k in ident]
        phi = list(ident)
        psi = list(ident)
        rng.shuffle(phi)
        rng.shuffle(psi)
        # (phi then psi) equals acting by the composite permutation
        step = symmetric_action(symmetric_action(x, phi), psi)
        composite = [phi[psi[k - 1] - 1] for k in ident]
        direct = symmetric_action(x, composite)
        for k in ident:
            assert step.cube(k) == direct.cube(k)


def test_action_commutes_with_composition_equivariantly():
    rng = Random(29)
    for _ in range(30):
        outer = random_element(rng, max_cubes=2)
        if outer.arity != 2:
            continue
        inners = [random_element(rng, max_cubes=3) for _ in range(2)]
        swap = (2, 1)
        # permute the outer slots and the inner list together
        left = compose_elements(symmetric_action(outer, swap), [inners[1], inners[0]])
        right = compose_elements(outer, inners)
        # block permutation: the composite's cubes appear with blocks swapped
        sizes = [inners[0].arity, inners[1].arity]
        reordered = [
            right.cube(k) for k in range(sizes[0] + 1, sizes[0] + sizes[1] + 1)
        ] + [right.cube(k) for k in range(1, sizes[0] + 1)]
        for k in range(1, left.arity + 1):
            assert left.cube(k) == reordered[k - 1]


def test_compose_rejects_bad_shapes():
    x = random_element(Random(1))
    with pytest.raises(OperadError):
        compose_elements(x, [unit_element(2)] * (x.arity + 1))
    outer = OperadElement(
        NDomain.finite([cube((0, "1/2"), (0, 1)), cube(("1/2", 1), (0, 1))])
    )
    with pytest.raises(OperadError):
        compose_elements(outer, [OperadElement(standard_domain(2))] * 2)
    with pytest.raises(OperadError):
        compose_elements(
            outer, [OperadElement(standard_domain(2)), unit_element(2)]
        )


def test_act_on_loops_unit():
    f = bump_loop(2, F(2, 3))
    acted = act_on_loops(unit_element(2), KSequence.finite([f]))
    for pt in [(F(1, 2), F(1, 2)), (F(1, 8), F(3, 4)), (F(0), F(1, 2))]:
        assert acted(pt) == f(pt)


def test_compose_then_act_equals_nested_action():
    outer = OperadElement(
        NDomain.finite([cube((0, "1/2"), (0, 1)), cube(("1/2", 1), (0, 1))])
    )
    inner1 = OperadElement(
        NDomain.finite([cube((0, "1/2"), (0, "1/2")), cube(("1/2", 1), ("1/2", 1))])
    )
    inner2 = OperadElement(NDomain.finite([cube(("1/4", "3/4"), ("1/4", "3/4"))]))
    composite = compose_elements(outer, [inner1, inner2])
    amps = [F(1), F(1, 2), F(1, 3)]
    loops = [bump_loop(2, a) for a in amps]
    flat = act_on_loops(composite, KSequence.finite(loops))
    nested_inner1 = act_on_loops(inner1, KSequence.finite(loops[:2]))
    nested_inner2 = act_on_loops(inner2, KSequence.finite(loops[2:]))
    nested = act_on_loops(outer, KSequence.finite([nested_inner1, nested_inner2]))
    grid = [F(j, 12) for j in range(13)]
    for x, y in product(grid, grid):
        assert flat((x, y)) == nested((x, y))


def test_omega_action_is_the_infinite_concatenation():
    from cubeshuffle.loops import concatenate

    element = OperadElement(standard_domain(2))
    seq = harmonic_bump_sequence(2)
    acted = act_on_loops(element, seq)
    direct = concatenate(standard_domain(2), seq)
    grid = [F(j, 12) for j in range(13)]
    for x, y in product(grid, grid):
        assert acted((x, y)) == direct((x, y))
