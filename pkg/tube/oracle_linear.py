import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from tube import settings
from tube.closed_form import AbsorptionDistribution, ExpectationField, make_absorption
from tube.core.lattice import SiteClass, SiteRef, TubeSpec, interior_sites, site_grid, step_distribution, validate
from tube.errors import NoConvergence, TooLarge

logger = logging.getLogger(__name__)

RESIDUAL_LIMIT = 1e-12      # relative residual accepted from the iterative path
CG_RTOL = 1e-14
REFINEMENT_SWEEPS = 8


@dataclass(frozen=True, eq=False)
class LinearSystem:
    index: Dict[Tuple[int, int], int]
    sites: List[SiteRef]
    matrix: scipy.sparse.csr_matrix
    rhs: np.ndarray

    @property
    def size(self) -> int:
        return len(self.sites)


def assemble(spec: TubeSpec, order: Optional[Sequence[int]] = None) -> LinearSystem:
    """Visit-count equations over the accessible interior: F(s) - sum_s' P(s'->s) F(s') = [s = source].

    `order` permutes the default site enumeration (q outer, p inner).
    """
    validate(spec)
    sites = interior_sites(spec)
    if order is not None:
        if sorted(order) != list(range(len(sites))):
            raise ValueError("order must be a permutation of the interior site indices")
        sites = [sites[i] for i in order]
    index = {(s.p, s.q): i for i, s in enumerate(sites)}

    rows, cols, vals = [], [], []
    for col, site in enumerate(sites):
        rows.append(col)
        cols.append(col)
        vals.append(1.0)
        # absorbing and zero-mesh targets carry no unknown
        for target, prob in step_distribution(spec, site).targets:
            row = index.get((target.p, target.q))
            if row is None:
                continue
            rows.append(row)
            cols.append(col)
            vals.append(-prob)

    size = len(sites)
    matrix = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    rhs = np.zeros(size)
    rhs[index[(spec.a, spec.b)]] = 1.0
    logger.debug(f"Linear: assemble - {size} unknowns, {matrix.nnz} non-zeros.")
    return LinearSystem(index=index, sites=sites, matrix=matrix, rhs=rhs)


def _relative_residual(matrix, x: np.ndarray, rhs: np.ndarray) -> float:
    return float(np.linalg.norm(rhs - matrix @ x) / np.linalg.norm(rhs))


def _solve_iterative(system: LinearSystem) -> np.ndarray:
    matrix, rhs = system.matrix, system.rhs
    jacobi = scipy.sparse.diags(1.0 / matrix.diagonal())
    maxiter = 20 * system.size

    x = np.zeros(system.size)
    residual = rhs.copy()
    for sweep in range(REFINEMENT_SWEEPS):
        correction, info = scipy.sparse.linalg.cg(matrix, residual, rtol=CG_RTOL, atol=0.0, maxiter=maxiter, M=jacobi)
        if info < 0:
            raise NoConvergence(f"conjugate gradients broke down (info={info})")
        x = x + correction
        residual = rhs - matrix @ x
        relative = _relative_residual(matrix, x, rhs)
        logger.debug(f"Linear: _solve_iterative - sweep {sweep}, relative residual {relative:.3e}.")
        if relative <= RESIDUAL_LIMIT:
            return x
    raise NoConvergence(
        f"relative residual {relative:.3e} above {RESIDUAL_LIMIT:.0e} after {REFINEMENT_SWEEPS} refinement sweeps")


def solve_field(spec: TubeSpec, max_unknowns: Optional[int] = None,
                dense_crossover: Optional[int] = None) -> ExpectationField:
    validate(spec)
    cap = max_unknowns if max_unknowns is not None else settings.max_unknowns()
    crossover = dense_crossover if dense_crossover is not None else settings.dense_crossover()
    bound = (spec.m + 1) * spec.n
    if bound > cap:
        raise TooLarge(f"(m+1)*n = {bound} unknowns exceeds the cap of {cap}")

    system = assemble(spec)
    try:
        if system.size < crossover:
            x = np.linalg.solve(system.matrix.toarray(), system.rhs)
        else:
            logger.info(f"Linear: solve_field - {system.size} unknowns, iterative path.")
            x = _solve_iterative(system)
    except np.linalg.LinAlgError as e:
        logger.error(f"Linear: solve_field - dense solve failed for {spec}: {e}")
        raise NoConvergence(f"dense solve failed: {e}") from e

    classes, symmetries = site_grid(spec)
    values = np.zeros(spec.shape, dtype=float)
    for site, value in zip(system.sites, x):
        values[site.p, site.q] = value
    return ExpectationField(spec=spec, values=values, classes=classes, symmetries=symmetries)


def absorption_from_field(spec: TubeSpec, field: ExpectationField) -> AbsorptionDistribution:
    """G(t) = sum over interior s of F(s) P(s -> t), for t on either absorbing end."""
    g_left = np.zeros(spec.m + 1)
    g_right = np.zeros(spec.m + 1)
    for site in interior_sites(spec):
        value = field.values[site.p, site.q]
        for target, prob in step_distribution(spec, site).targets:
            if target.klass == SiteClass.ABSORBING_LEFT:
                g_left[target.p] += value * prob
            elif target.klass == SiteClass.ABSORBING_RIGHT:
                g_right[target.p] += value * prob
    return make_absorption(spec, g_left, g_right)
