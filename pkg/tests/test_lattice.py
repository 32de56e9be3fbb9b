import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strategies import KINDS, tube_specs
from tube.core.lattice import (
    LatticeKind, SiteClass, Symmetry, TubeSpec, circumferential_step_mean, classify, interior_sites,
    move_table, opposite, reflect, step_distribution, validate,
)
from tube.errors import (
    AxialOutOfRange, BadBias, BadDimension, BadSource, NotInterior, OddCircumference, SingularCircumference,
)


def square(**kw) -> TubeSpec:
    base = dict(kind=LatticeKind.SQUARE, m=3, n=4, eta=1.0, a=0, b=2)
    base.update(kw)
    return TubeSpec(**base)


# --- validate ---
@pytest.mark.parametrize("kw, error", [
    (dict(m=0), BadDimension),
    (dict(n=0), BadDimension),
    (dict(eta=0.0), BadBias),
    (dict(eta=-1.0), BadBias),
    (dict(eta=math.inf), BadBias),
    (dict(a=4), BadSource),
    (dict(b=0), BadSource),
    (dict(b=5), BadSource),
])
def test_validate_rejects(kw, error):
    with pytest.raises(error):
        validate(square(**kw))


def test_validate_odd_circumference_names_constraint():
    spec = TubeSpec(LatticeKind.HONEYCOMB, m=4, n=3, eta=1.0, a=0, b=1)
    with pytest.raises(OddCircumference) as info:
        validate(spec)
    assert "m+1 must be an even integer" in str(info.value)
    assert info.value.constraint == "m+1 must be an even integer"


def test_validate_triangular_singular_circumference():
    spec = TubeSpec(LatticeKind.TRIANGULAR, m=7, n=5, eta=1.0, a=0, b=2)
    with pytest.raises(SingularCircumference) as info:
        validate(spec)
    assert "singularities occur for" in str(info.value)


def test_validate_honeycomb_needs_source_type():
    spec = TubeSpec(LatticeKind.HONEYCOMB, m=3, n=3, eta=1.0, a=0, b=1, source_type=Symmetry.NONE)
    with pytest.raises(BadSource):
        validate(spec)


def test_validate_accepts_square_any_circumference():
    assert validate(square(m=4)) == square(m=4)


# --- classify ---
def test_classify_ends_and_wrap():
    spec = square()
    assert classify(spec, 1, 0).klass == SiteClass.ABSORBING_LEFT
    assert classify(spec, 1, 5).klass == SiteClass.ABSORBING_RIGHT
    wrapped = classify(spec, -1, 2)
    assert wrapped.p == 3 and wrapped.is_interior
    with pytest.raises(AxialOutOfRange):
        classify(spec, 0, 6)


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=40, deadline=None)
@given(data=st.data(), turns=st.integers(-4, 4))
def test_classify_is_idempotent_and_periodic(kind, data, turns):
    spec = data.draw(tube_specs(kind, max_m=9, max_n=6))
    p = data.draw(st.integers(-3 * spec.m, 3 * spec.m))
    q = data.draw(st.integers(0, spec.n + 1))
    site = classify(spec, p, q)
    assert classify(spec, site.p, site.q) == site
    assert classify(spec, p + turns * (spec.m + 1), q) == site
    assert 0 <= site.p <= spec.m


def test_classify_triangular_zero_mesh():
    spec = TubeSpec(LatticeKind.TRIANGULAR, m=5, n=3, eta=1.0, a=0, b=2)
    assert classify(spec, 0, 2).is_interior
    assert classify(spec, 1, 2).klass == SiteClass.ZERO_MESH
    assert classify(spec, 1, 1).is_interior
    assert classify(spec, 1, 0).klass == SiteClass.ABSORBING_LEFT


def test_classify_honeycomb_alternates():
    spec = TubeSpec(LatticeKind.HONEYCOMB, m=5, n=4, eta=1.0, a=2, b=2)
    assert classify(spec, 2, 2).symmetry == Symmetry.LEFT_T
    assert classify(spec, 3, 2).symmetry == Symmetry.RIGHT_T
    assert classify(spec, 2, 3).symmetry == Symmetry.RIGHT_T
    flipped = TubeSpec(LatticeKind.HONEYCOMB, m=5, n=4, eta=1.0, a=2, b=2, source_type=Symmetry.RIGHT_T)
    assert classify(flipped, 2, 2).symmetry == Symmetry.RIGHT_T


# --- kernels ---
def test_square_kernel_example():
    spec = TubeSpec(LatticeKind.SQUARE, m=3, n=4, eta=2.0, a=0, b=2)
    dist = step_distribution(spec, classify(spec, 0, 2))
    assert dist.probability_to(1, 2) == pytest.approx(1 / 6)
    assert dist.probability_to(3, 2) == pytest.approx(1 / 6)
    assert dist.probability_to(0, 3) == pytest.approx(1 / 3)
    assert dist.probability_to(0, 1) == pytest.approx(1 / 3)


def test_square_kernel_coincident_targets_add():
    spec = TubeSpec(LatticeKind.SQUARE, m=1, n=1, eta=1.0, a=0, b=1)
    dist = step_distribution(spec, classify(spec, 0, 1))
    assert dist.probability_to(1, 1) == pytest.approx(0.5)


def test_triangular_kernel_example():
    spec = TubeSpec(LatticeKind.TRIANGULAR, m=5, n=3, eta=1.0, a=0, b=2)
    dist = step_distribution(spec, classify(spec, 0, 2))
    assert dist.probability_to(2, 2) == pytest.approx(1 / 6)
    assert dist.probability_to(4, 2) == pytest.approx(1 / 6)
    for p, q in [(1, 3), (1, 1), (5, 3), (5, 1)]:
        assert dist.probability_to(p, q) == pytest.approx(1 / 6)


def test_honeycomb_kernel_example():
    spec = TubeSpec(LatticeKind.HONEYCOMB, m=5, n=4, eta=1.0, a=2, b=2)
    left = step_distribution(spec, classify(spec, 2, 2))
    assert left.probability_to(2, 3) == pytest.approx(1 / 3)
    assert left.probability_to(2, 1) == 0.0
    right = step_distribution(spec, classify(spec, 3, 2))
    assert right.probability_to(3, 1) == pytest.approx(1 / 3)
    assert right.probability_to(3, 3) == 0.0


def test_step_distribution_rejects_boundary():
    spec = square()
    with pytest.raises(NotInterior):
        step_distribution(spec, classify(spec, 0, 0))


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_kernel_rows_sum_to_one_and_are_symmetric(kind, data):
    spec = data.draw(tube_specs(kind, max_m=9, max_n=6))
    for site in interior_sites(spec):
        dist = step_distribution(spec, site)
        assert math.isclose(dist.total(), 1.0, abs_tol=1e-15)
        for target, prob in dist.targets:
            if target.is_interior:
                back = step_distribution(spec, target).probability_to(site.p, site.q)
                assert math.isclose(back, dist.probability_to(target.p, target.q), abs_tol=1e-15)


@settings(max_examples=40, deadline=None)
@given(spec=tube_specs(LatticeKind.HONEYCOMB, max_m=9, max_n=6))
def test_honeycomb_kernel_is_bipartite(spec):
    for site in interior_sites(spec):
        for target, prob in step_distribution(spec, site).targets:
            assert prob > 0.0
            assert target.symmetry == opposite(site.symmetry)


@settings(max_examples=40, deadline=None)
@given(spec=tube_specs(LatticeKind.TRIANGULAR, max_m=13, max_n=6))
def test_triangular_steps_stay_on_accessible_mesh(spec):
    for site in interior_sites(spec):
        for target, _ in step_distribution(spec, site).targets:
            assert target.klass != SiteClass.ZERO_MESH


def test_interior_site_counts():
    assert len(interior_sites(square(m=3, n=4))) == 16
    assert len(interior_sites(TubeSpec(LatticeKind.TRIANGULAR, m=5, n=3, eta=1.0, a=0, b=2))) == 9
    assert len(interior_sites(TubeSpec(LatticeKind.HONEYCOMB, m=5, n=3, eta=1.0, a=0, b=2))) == 18


def test_reflect_swaps_source_row_and_type():
    spec = TubeSpec(LatticeKind.HONEYCOMB, m=5, n=6, eta=1.0, a=1, b=2)
    mirrored = reflect(spec)
    assert (mirrored.b, mirrored.source_type) == (5, Symmetry.RIGHT_T)
    assert reflect(mirrored) == spec


def test_circumferential_step_mean():
    spec = TubeSpec(LatticeKind.TRIANGULAR, m=5, n=3, eta=1.0, a=0, b=2)
    # two cyclic steps of |dp|=2 and four diagonal steps of |dp|=1, each 1/6
    assert circumferential_step_mean(spec, classify(spec, 0, 2)) == pytest.approx(8 / 6)
    assert move_table(spec)[0][:2] == (2, 0)
