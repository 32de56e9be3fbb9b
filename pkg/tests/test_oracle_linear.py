import numpy as np
import pytest

from strategies import KINDS, long_tube, random_specs
from tube.closed_form import absorption, expectation_field
from tube.core.lattice import LatticeKind, SiteClass, TubeSpec
from tube.errors import TooLarge
from tube.oracle_linear import absorption_from_field, assemble, solve_field


def test_two_site_tube_by_hand():
    spec = TubeSpec(LatticeKind.SQUARE, m=1, n=1, eta=1.0, a=0, b=1)
    field = solve_field(spec)
    assert field.value(0, 1) == pytest.approx(4 / 3, abs=1e-14)
    assert field.value(1, 1) == pytest.approx(2 / 3, abs=1e-14)


@pytest.mark.parametrize("spec, expected", [
    (TubeSpec(LatticeKind.SQUARE, m=3, n=4, eta=1.0, a=0, b=2), 16),
    (TubeSpec(LatticeKind.TRIANGULAR, m=5, n=3, eta=1.0, a=0, b=2), 9),
    (TubeSpec(LatticeKind.HONEYCOMB, m=5, n=3, eta=1.0, a=0, b=2), 18),
])
def test_unknown_counts(spec, expected):
    assert assemble(spec).size == expected


def test_matrix_is_symmetric():
    spec = TubeSpec(LatticeKind.HONEYCOMB, m=7, n=5, eta=0.4, a=3, b=2)
    matrix = assemble(spec).matrix
    assert abs(matrix - matrix.T).max() <= 1e-15


def test_zero_mesh_excluded_and_exactly_zero():
    spec = TubeSpec(LatticeKind.TRIANGULAR, m=5, n=3, eta=1.0, a=0, b=2)
    field = solve_field(spec)
    assert np.all(field.values[field.classes == SiteClass.ZERO_MESH] == 0.0)


@pytest.mark.parametrize("kind", KINDS)
def test_oracle_matches_closed_form(kind):
    specs = random_specs(kind, 19, seed=21) + [long_tube(kind)]
    for spec in specs:
        exact = expectation_field(spec).values
        oracle = solve_field(spec).values
        assert np.max(np.abs(exact - oracle)) <= 1e-9, spec


def test_iterative_path_matches_dense_path():
    spec = TubeSpec(LatticeKind.SQUARE, m=9, n=30, eta=0.6, a=4, b=11)
    dense = solve_field(spec).values
    iterative = solve_field(spec, dense_crossover=1).values
    assert np.max(np.abs(dense - iterative)) <= 1e-9


def test_enumeration_order_does_not_matter():
    spec = TubeSpec(LatticeKind.HONEYCOMB, m=5, n=4, eta=2.0, a=1, b=3)
    base = assemble(spec)
    order = list(np.random.default_rng(5).permutation(base.size))
    permuted = assemble(spec, order=order)
    x_base = np.linalg.solve(base.matrix.toarray(), base.rhs)
    x_perm = np.linalg.solve(permuted.matrix.toarray(), permuted.rhs)
    by_site = {(s.p, s.q): x for s, x in zip(permuted.sites, x_perm)}
    for site, x in zip(base.sites, x_base):
        assert by_site[(site.p, site.q)] == pytest.approx(x, abs=1e-12)


def test_bad_order_rejected():
    spec = TubeSpec(LatticeKind.SQUARE, m=1, n=1, eta=1.0, a=0, b=1)
    with pytest.raises(ValueError):
        assemble(spec, order=[0, 0])


def test_too_large():
    spec = TubeSpec(LatticeKind.SQUARE, m=9, n=10, eta=1.0, a=0, b=1)
    with pytest.raises(TooLarge):
        solve_field(spec, max_unknowns=50)


@pytest.mark.parametrize("kind", KINDS)
def test_absorption_from_oracle_field(kind):
    for spec in random_specs(kind, 10, seed=22):
        oracle = absorption_from_field(spec, solve_field(spec))
        exact = absorption(spec)
        assert oracle.total_left + oracle.total_right == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(oracle.g_left, exact.g_left, atol=1e-10, rtol=0)
        assert np.allclose(oracle.g_right, exact.g_right, atol=1e-10, rtol=0)


def test_absorption_examples():
    square = TubeSpec(LatticeKind.SQUARE, m=3, n=4, eta=1.0, a=0, b=2)
    assert absorption_from_field(square, solve_field(square)).total_left == pytest.approx(3 / 5, abs=1e-12)
    honeycomb = TubeSpec(LatticeKind.HONEYCOMB, m=3, n=2, eta=1.0, a=0, b=1)
    dist = absorption_from_field(honeycomb, solve_field(honeycomb))
    assert dist.total_left == pytest.approx(5 / 8, abs=1e-12)
    assert dist.total_right == pytest.approx(3 / 8, abs=1e-12)
