import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from tube import settings
from tube.core.lattice import LatticeKind, Symmetry, TubeSpec, move_table, validate

logger = logging.getLogger(__name__)

WALKS_PER_BLOCK = 2048
VISIT_CELL_BUDGET = 1 << 21  # walkers x sites held at once by one block
SEED_LIMIT = 2 ** 64


@dataclass(frozen=True)
class McConfig:
    walks: int
    seed: int = 0
    max_steps: Optional[int] = None
    workers: Optional[int] = None
    check_bipartite: bool = False

    def __post_init__(self):
        if self.walks < 1:
            raise ValueError(f"walks={self.walks} must be at least 1")
        if not 0 <= self.seed < SEED_LIMIT:
            raise ValueError(f"seed={self.seed} must be an unsigned 64-bit integer")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps={self.max_steps} must be at least 1")


@dataclass(frozen=True, eq=False)
class McEstimate:
    spec: TubeSpec
    walks: int
    mean_field: np.ndarray
    se_field: np.ndarray
    absorb_left: np.ndarray   # walks absorbed at (p, 0), per p
    absorb_right: np.ndarray  # walks absorbed at (p, n+1), per p
    total_left: float
    total_right: float
    total_left_se: float
    total_right_se: float
    truncated: int
    mean_steps: float
    mean_revolutions: float


# --- Block accumulation ---
@dataclass
class _Moments:
    """Running count, mean and M2 of a vector of per-walk observables."""
    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, samples: np.ndarray) -> "_Moments":
        """Moments over axis 0. Overwrites `samples`, which must be float64."""
        mean = samples.mean(axis=0)
        samples -= mean
        np.square(samples, out=samples)
        return cls(count=samples.shape[0], mean=mean, m2=samples.sum(axis=0))

    def merge(self, other: "_Moments") -> "_Moments":
        total = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / total)
        m2 = self.m2 + other.m2 + delta ** 2 * (self.count * other.count / total)
        return _Moments(count=total, mean=mean, m2=m2)

    def standard_error(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


@dataclass
class _BlockResult:
    visits: _Moments
    ends: _Moments            # columns: absorbed left, absorbed right
    absorb_left: np.ndarray
    absorb_right: np.ndarray
    truncated: int
    steps: int
    travel: int

    def merge(self, other: "_BlockResult") -> "_BlockResult":
        return _BlockResult(
            visits=self.visits.merge(other.visits),
            ends=self.ends.merge(other.ends),
            absorb_left=self.absorb_left + other.absorb_left,
            absorb_right=self.absorb_right + other.absorb_right,
            truncated=self.truncated + other.truncated,
            steps=self.steps + other.steps,
            travel=self.travel + other.travel,
        )


def _move_arrays(spec: TubeSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """dp/dq per (symmetry row, move) and the cumulative move probabilities."""
    if spec.kind == LatticeKind.HONEYCOMB:
        tables = [move_table(spec, Symmetry.LEFT_T), move_table(spec, Symmetry.RIGHT_T)]
    else:
        tables = [move_table(spec)]
    dp = np.array([[move[0] for move in table] for table in tables], dtype=np.int64)
    dq = np.array([[move[1] for move in table] for table in tables], dtype=np.int64)
    cumulative = np.cumsum([move[2] for move in tables[0]])
    return dp, dq, cumulative


def _symmetry_row(spec: TubeSpec, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """0 on left_t sites, 1 on right_t sites; always 0 off the honeycomb."""
    if spec.kind != LatticeKind.HONEYCOMB:
        return np.zeros_like(p)
    parity = (p + q - spec.a - spec.b) & 1
    return parity ^ (1 if spec.source_type == Symmetry.RIGHT_T else 0)


def walkers_per_chunk(spec: TubeSpec) -> int:
    """Walkers stepped together inside a block; keeps the visit-count matrix under VISIT_CELL_BUDGET."""
    sites = (spec.m + 1) * (spec.n + 2)
    return max(1, min(WALKS_PER_BLOCK, VISIT_CELL_BUDGET // sites))


def _run_walkers(spec: TubeSpec, rng: np.random.Generator, count: int, max_steps: int,
                 check_bipartite: bool) -> _BlockResult:
    dp_table, dq_table, cumulative = _move_arrays(spec)
    circumference, columns = spec.m + 1, spec.n + 2
    last_move = cumulative.size - 1

    counts = np.zeros((count, circumference * columns), dtype=np.int32)
    p = np.full(count, spec.a, dtype=np.int64)
    q = np.full(count, spec.b, dtype=np.int64)
    steps = np.zeros(count, dtype=np.int64)
    travel = np.zeros(count, dtype=np.int64)
    ends = np.zeros((count, 2))
    absorb_left = np.zeros(circumference, dtype=np.int64)
    absorb_right = np.zeros(circumference, dtype=np.int64)
    truncated = 0

    walkers = np.arange(count)
    counts[walkers, spec.a * columns + spec.b] = 1
    while walkers.size:
        rows = _symmetry_row(spec, p[walkers], q[walkers])
        choice = np.minimum(np.searchsorted(cumulative, rng.random(walkers.size), side="right"), last_move)
        step_p = dp_table[rows, choice]
        new_p = (p[walkers] + step_p) % circumference
        new_q = q[walkers] + dq_table[rows, choice]
        if check_bipartite and spec.kind == LatticeKind.HONEYCOMB:
            if np.any(_symmetry_row(spec, new_p, new_q) == rows):
                raise AssertionError("honeycomb walker stepped onto a site of its own type")
        p[walkers], q[walkers] = new_p, new_q
        steps[walkers] += 1
        travel[walkers] += np.abs(step_p)

        left = new_q == 0
        right = new_q == spec.n + 1
        np.add.at(absorb_left, new_p[left], 1)
        np.add.at(absorb_right, new_p[right], 1)
        ends[walkers[left], 0] = 1.0
        ends[walkers[right], 1] = 1.0

        inside = ~(left | right)
        counts[walkers[inside], new_p[inside] * columns + new_q[inside]] += 1
        capped = inside & (steps[walkers] >= max_steps)
        truncated += int(np.count_nonzero(capped))
        walkers = walkers[inside & ~capped]

    samples = counts.astype(np.float64)
    del counts
    return _BlockResult(
        visits=_Moments.of(samples),
        ends=_Moments.of(ends),
        absorb_left=absorb_left,
        absorb_right=absorb_right,
        truncated=truncated,
        steps=int(steps.sum()),
        travel=int(travel.sum()),
    )


def _run_block(spec: TubeSpec, block: int, count: int, seed: int, max_steps: int,
               check_bipartite: bool) -> _BlockResult:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))
    chunk = walkers_per_chunk(spec)
    result = None
    # chunks draw from the block stream in order, so the split depends on the tube only
    for start in range(0, count, chunk):
        part = _run_walkers(spec, rng, min(chunk, count - start), max_steps, check_bipartite)
        result = part if result is None else result.merge(part)
    return result


def _blocks(walks: int) -> List[Tuple[int, int]]:
    return [(block, min(WALKS_PER_BLOCK, walks - start))
            for block, start in enumerate(range(0, walks, WALKS_PER_BLOCK))]


def simulate(spec: TubeSpec, config: McConfig) -> McEstimate:
    """Monte Carlo estimate of the visit field and the absorption split.

    Walks are cut into fixed blocks; block j draws from its own Philox stream keyed by
    (seed, j), and block moments are merged in block order, so the estimate does not
    depend on the worker count.
    """
    validate(spec)
    max_steps = config.max_steps if config.max_steps is not None else settings.mc_max_steps()
    workers = config.workers if config.workers is not None else settings.mc_workers()
    blocks = _blocks(config.walks)
    logger.info(f"MC: simulate - {config.walks} walks in {len(blocks)} blocks, seed={config.seed}, workers={workers}.")

    def run(job: Tuple[int, int]) -> _BlockResult:
        block, count = job
        return _run_block(spec, block, count, config.seed, max_steps, config.check_bipartite)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(job) for job in blocks]

    visits, ends = results[0].visits, results[0].ends
    for result in results[1:]:
        visits = visits.merge(result.visits)
        ends = ends.merge(result.ends)
    absorb_left = sum(r.absorb_left for r in results)
    absorb_right = sum(r.absorb_right for r in results)
    truncated = sum(r.truncated for r in results)
    if truncated:
        logger.warning(f"MC: simulate - {truncated} of {config.walks} walks hit max_steps={max_steps}.")

    end_se = ends.standard_error()
    return McEstimate(
        spec=spec,
        walks=config.walks,
        mean_field=visits.mean.reshape(spec.shape),
        se_field=visits.standard_error().reshape(spec.shape),
        absorb_left=absorb_left,
        absorb_right=absorb_right,
        total_left=float(ends.mean[0]),
        total_right=float(ends.mean[1]),
        total_left_se=float(end_se[0]),
        total_right_se=float(end_se[1]),
        truncated=truncated,
        mean_steps=sum(r.steps for r in results) / config.walks,
        mean_revolutions=sum(r.travel for r in results) / config.walks / (spec.m + 1),
    )
