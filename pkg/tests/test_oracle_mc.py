import numpy as np
import pytest

from tube.closed_form import absorption, expectation_field
from tube.core.lattice import LatticeKind, SiteClass, TubeSpec
from tube import oracle_mc
from tube.oracle_mc import VISIT_CELL_BUDGET, WALKS_PER_BLOCK, McConfig, simulate, walkers_per_chunk

CONCORDANCE_SPECS = [
    TubeSpec(LatticeKind.SQUARE, m=3, n=4, eta=1.0, a=0, b=2),
    TubeSpec(LatticeKind.TRIANGULAR, m=5, n=3, eta=1.0, a=0, b=2),
    TubeSpec(LatticeKind.HONEYCOMB, m=5, n=4, eta=1.0, a=2, b=2),
    TubeSpec(LatticeKind.SQUARE, m=3, n=3, eta=0.1, a=1, b=2),
    TubeSpec(LatticeKind.HONEYCOMB, m=3, n=3, eta=10.0, a=1, b=1),
]


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(walks=0)
    with pytest.raises(ValueError):
        McConfig(walks=1, seed=-1)
    with pytest.raises(ValueError):
        McConfig(walks=1, seed=2 ** 64)
    with pytest.raises(ValueError):
        McConfig(walks=1, max_steps=0)


def test_two_site_tube_source_mean():
    spec = TubeSpec(LatticeKind.SQUARE, m=1, n=1, eta=1.0, a=0, b=1)
    estimate = simulate(spec, McConfig(walks=1_000_000, seed=3))
    assert abs(estimate.mean_field[0, 1] - 4 / 3) <= 4 * estimate.se_field[0, 1]
    assert estimate.mean_field[0, 1] >= 1.0


@pytest.mark.parametrize("spec", CONCORDANCE_SPECS, ids=lambda s: f"{s.kind.value}-eta{s.eta}")
def test_concordance_with_closed_form(spec):
    estimate = simulate(spec, McConfig(walks=200_000, seed=42))
    field = expectation_field(spec)
    accessible = field.accessible
    deviation = np.abs(estimate.mean_field - field.values)[accessible]
    within = deviation <= 4 * estimate.se_field[accessible] + 1e-12
    assert np.mean(within) >= 0.99

    dist = absorption(spec)
    assert abs(estimate.total_left - dist.total_left) <= 4 * estimate.total_left_se
    assert abs(estimate.total_right - dist.total_right) <= 4 * estimate.total_right_se
    assert estimate.truncated == 0


def test_honeycomb_figure_split():
    spec = TubeSpec(LatticeKind.HONEYCOMB, m=17, n=29, eta=1.0, a=9, b=15)
    estimate = simulate(spec, McConfig(walks=20_000, seed=9))
    assert abs(estimate.total_left - 44 / 89) <= 4 * estimate.total_left_se


def test_deterministic_for_fixed_seed_and_worker_count():
    spec = TubeSpec(LatticeKind.HONEYCOMB, m=5, n=4, eta=1.0, a=2, b=2)
    walks = 3 * WALKS_PER_BLOCK + 17
    first = simulate(spec, McConfig(walks=walks, seed=42, workers=1))
    second = simulate(spec, McConfig(walks=walks, seed=42, workers=1))
    threaded = simulate(spec, McConfig(walks=walks, seed=42, workers=3))
    for other in (second, threaded):
        assert np.array_equal(first.mean_field, other.mean_field)
        assert np.array_equal(first.se_field, other.se_field)
        assert np.array_equal(first.absorb_left, other.absorb_left)
        assert first.total_left == other.total_left
        assert first.mean_steps == other.mean_steps


def test_different_seeds_differ():
    spec = TubeSpec(LatticeKind.SQUARE, m=3, n=4, eta=1.0, a=0, b=2)
    first = simulate(spec, McConfig(walks=5000, seed=1))
    second = simulate(spec, McConfig(walks=5000, seed=2))
    assert not np.array_equal(first.mean_field, second.mean_field)


def test_zero_mesh_never_visited():
    spec = TubeSpec(LatticeKind.TRIANGULAR, m=5, n=3, eta=1.0, a=0, b=2)
    estimate = simulate(spec, McConfig(walks=5000, seed=4))
    field = expectation_field(spec)
    assert np.all(estimate.mean_field[field.classes == SiteClass.ZERO_MESH] == 0.0)


def test_bipartite_check_passes_on_honeycomb():
    spec = TubeSpec(LatticeKind.HONEYCOMB, m=5, n=4, eta=1.0, a=2, b=3)
    estimate = simulate(spec, McConfig(walks=500, seed=5, check_bipartite=True))
    assert estimate.walks == 500


def test_truncation_is_reported():
    spec = TubeSpec(LatticeKind.SQUARE, m=3, n=6, eta=1.0, a=0, b=3)
    estimate = simulate(spec, McConfig(walks=4000, seed=6, max_steps=2))
    assert estimate.truncated > 0
    absorbed = estimate.total_left + estimate.total_right
    assert absorbed == pytest.approx(1.0 - estimate.truncated / estimate.walks, abs=1e-12)
    assert estimate.absorb_left.sum() + estimate.absorb_right.sum() + estimate.truncated == estimate.walks


def test_revolutions_and_steps_are_tracked():
    spec = TubeSpec(LatticeKind.SQUARE, m=1, n=1, eta=1.0, a=0, b=1)
    estimate = simulate(spec, McConfig(walks=100_000, seed=8))
    # exact: two steps and half a revolution per walk on average
    assert estimate.mean_steps == pytest.approx(2.0, abs=0.05)
    assert estimate.mean_revolutions == pytest.approx(0.5, abs=0.02)


def test_single_walk():
    spec = TubeSpec(LatticeKind.SQUARE, m=3, n=2, eta=1.0, a=0, b=1)
    estimate = simulate(spec, McConfig(walks=1, seed=0))
    assert estimate.mean_field[0, 1] >= 1.0
    assert np.all(estimate.se_field == 0.0)


def test_chunk_size_bounds_visit_matrix():
    small = TubeSpec(LatticeKind.SQUARE, m=3, n=4, eta=1.0, a=0, b=2)
    assert walkers_per_chunk(small) == WALKS_PER_BLOCK
    # at the linear oracle's default unknown cap
    large = TubeSpec(LatticeKind.SQUARE, m=499, n=498, eta=1.0, a=0, b=249)
    sites = (large.m + 1) * (large.n + 2)
    assert 1 <= walkers_per_chunk(large) < WALKS_PER_BLOCK
    assert walkers_per_chunk(large) * sites <= VISIT_CELL_BUDGET
    huge = TubeSpec(LatticeKind.SQUARE, m=4999, n=4999, eta=1.0, a=0, b=1)
    assert walkers_per_chunk(huge) == 1


def test_chunked_blocks_stay_accurate_and_worker_independent(monkeypatch):
    spec = TubeSpec(LatticeKind.HONEYCOMB, m=5, n=4, eta=1.0, a=2, b=2)
    monkeypatch.setattr(oracle_mc, "VISIT_CELL_BUDGET", 5 * (spec.m + 1) * (spec.n + 2))
    assert walkers_per_chunk(spec) == 5
    walks = 2 * WALKS_PER_BLOCK + 3
    serial = simulate(spec, McConfig(walks=walks, seed=11, workers=1))
    threaded = simulate(spec, McConfig(walks=walks, seed=11, workers=4))
    assert np.array_equal(serial.mean_field, threaded.mean_field)
    assert np.array_equal(serial.se_field, threaded.se_field)
    assert serial.absorb_left.sum() + serial.absorb_right.sum() == walks

    dist = absorption(spec)
    assert abs(serial.total_left - dist.total_left) <= 4 * serial.total_left_se
    field = expectation_field(spec)
    deviation = np.abs(serial.mean_field - field.values)[field.accessible]
    assert np.mean(deviation <= 4 * serial.se_field[field.accessible] + 1e-12) >= 0.95
