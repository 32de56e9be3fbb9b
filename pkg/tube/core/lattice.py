import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Tuple

import numpy as np

from tube.errors import (
    AxialOutOfRange, BadBias, BadDimension, BadSource, NotInterior,
    OddCircumference, SingularCircumference,
)

logger = logging.getLogger(__name__)


class LatticeKind(str, Enum):
    SQUARE = "square"
    TRIANGULAR = "triangular"
    HONEYCOMB = "honeycomb"


class SiteClass(str, Enum):
    INTERIOR = "interior"
    ABSORBING_LEFT = "absorbing_left"
    ABSORBING_RIGHT = "absorbing_right"
    ZERO_MESH = "zero_mesh"


class Symmetry(str, Enum):
    NONE = "none"
    LEFT_T = "left_t"    # axial neighbour at q+1
    RIGHT_T = "right_t"  # axial neighbour at q-1


# (dp, dq, probability); one entry per step, coincident targets kept apart
Move = Tuple[int, int, float]


@dataclass(frozen=True)
class TubeSpec:
    kind: LatticeKind
    m: int
    n: int
    eta: float
    a: int
    b: int
    source_type: Symmetry = Symmetry.LEFT_T

    @property
    def circumference(self) -> int:
        return self.m + 1

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.m + 1, self.n + 2)


@dataclass(frozen=True)
class SiteRef:
    p: int
    q: int
    klass: SiteClass
    symmetry: Symmetry = Symmetry.NONE

    @property
    def is_interior(self) -> bool:
        return self.klass == SiteClass.INTERIOR


@dataclass(frozen=True)
class StepDistribution:
    origin: SiteRef
    targets: Tuple[Tuple[SiteRef, float], ...]

    def total(self) -> float:
        return math.fsum(prob for _, prob in self.targets)

    def probability_to(self, p: int, q: int) -> float:
        return math.fsum(prob for t, prob in self.targets if t.p == p and t.q == q)


# --- Helper Functions ---
def parity_sign(x: int) -> int:
    """cos(pi * x) for integer x, without trigonometry."""
    return 1 if x % 2 == 0 else -1


def opposite(symmetry: Symmetry) -> Symmetry:
    if symmetry == Symmetry.LEFT_T: return Symmetry.RIGHT_T
    if symmetry == Symmetry.RIGHT_T: return Symmetry.LEFT_T
    return Symmetry.NONE


def same_parity_as_source(spec: TubeSpec, p: int, q: int) -> bool:
    return (p + q - spec.a - spec.b) % 2 == 0


# --- Validation ---
def validate(spec: TubeSpec) -> TubeSpec:
    if not isinstance(spec.kind, LatticeKind):
        raise BadDimension(f"unknown lattice kind {spec.kind!r}", "lattice kind")
    if spec.m < 1:
        raise BadDimension(f"m={spec.m} must be at least 1", "m >= 1")
    if spec.n < 1:
        raise BadDimension(f"n={spec.n} must be at least 1", "n >= 1")
    if not math.isfinite(spec.eta) or spec.eta <= 0:
        raise BadBias(f"eta={spec.eta} must be positive and finite", "eta > 0")
    if not 0 <= spec.a <= spec.m:
        raise BadSource(f"source a={spec.a} outside 0..{spec.m}", "0 <= a <= m")
    if not 1 <= spec.b <= spec.n:
        raise BadSource(f"source b={spec.b} outside 1..{spec.n}", "1 <= b <= n")
    if spec.kind in (LatticeKind.TRIANGULAR, LatticeKind.HONEYCOMB) and (spec.m + 1) % 2 != 0:
        raise OddCircumference(
            f"{spec.kind.value} tube needs m+1 even, got m+1={spec.m + 1}: m+1 must be an even integer")
    if spec.kind == LatticeKind.TRIANGULAR and (spec.m + 1) % 4 == 0:
        raise SingularCircumference(
            f"triangular tube with m+1={spec.m + 1}: (m+1) mod 4 = 0, "
            f"singularities occur for k=(m+1)/4 and k=3(m+1)/4")
    if spec.kind == LatticeKind.HONEYCOMB and spec.source_type == Symmetry.NONE:
        raise BadSource("honeycomb source needs a symmetry type (left_t or right_t)", "source type")
    return spec


def reflect(spec: TubeSpec) -> TubeSpec:
    """Mirror the tube axially, q -> n+1-q. Swaps the end labels and the honeycomb site types."""
    return replace(spec, b=spec.n + 1 - spec.b, source_type=opposite(spec.source_type))


# --- Classification ---
def classify(spec: TubeSpec, p: int, q: int) -> SiteRef:
    if q < 0 or q > spec.n + 1:
        raise AxialOutOfRange(f"q={q} outside 0..{spec.n + 1}")
    p = p % (spec.m + 1)
    same = same_parity_as_source(spec, p, q)

    if q == 0:
        klass = SiteClass.ABSORBING_LEFT
    elif q == spec.n + 1:
        klass = SiteClass.ABSORBING_RIGHT
    elif spec.kind == LatticeKind.TRIANGULAR and not same:
        klass = SiteClass.ZERO_MESH
    else:
        klass = SiteClass.INTERIOR

    symmetry = Symmetry.NONE
    if spec.kind == LatticeKind.HONEYCOMB:
        symmetry = spec.source_type if same else opposite(spec.source_type)
    return SiteRef(p=p, q=q, klass=klass, symmetry=symmetry)


def move_table(spec: TubeSpec, symmetry: Symmetry = Symmetry.NONE) -> Tuple[Move, ...]:
    eta = spec.eta
    if spec.kind == LatticeKind.SQUARE:
        cyc, ax = 1.0 / (2 + 2 * eta), eta / (2 + 2 * eta)
        return ((1, 0, cyc), (-1, 0, cyc), (0, 1, ax), (0, -1, ax))
    if spec.kind == LatticeKind.TRIANGULAR:
        cyc, ax = 1.0 / (2 + 4 * eta), eta / (2 + 4 * eta)
        return ((2, 0, cyc), (-2, 0, cyc), (1, 1, ax), (1, -1, ax), (-1, 1, ax), (-1, -1, ax))
    cyc, ax = 1.0 / (2 + eta), eta / (2 + eta)
    dq = 1 if symmetry == Symmetry.LEFT_T else -1
    return ((0, dq, ax), (1, 0, cyc), (-1, 0, cyc))


def step_distribution(spec: TubeSpec, site: SiteRef) -> StepDistribution:
    if not site.is_interior:
        raise NotInterior(f"site ({site.p},{site.q}) is {site.klass.value}, not interior")
    targets = tuple(
        (classify(spec, site.p + dp, site.q + dq), prob)
        for dp, dq, prob in move_table(spec, site.symmetry)
    )
    return StepDistribution(origin=site, targets=targets)


def circumferential_step_mean(spec: TubeSpec, site: SiteRef) -> float:
    """Expected |dp| of the next step from an interior site."""
    return math.fsum(abs(dp) * prob for dp, _, prob in move_table(spec, site.symmetry))


# --- Grids ---
def interior_sites(spec: TubeSpec) -> List[SiteRef]:
    sites = []
    for q in range(1, spec.n + 1):
        for p in range(spec.m + 1):
            site = classify(spec, p, q)
            if site.is_interior:
                sites.append(site)
    return sites


def site_grid(spec: TubeSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Classes and symmetries of every (p, q) on the dense (m+1) x (n+2) grid."""
    classes = np.empty(spec.shape, dtype=object)
    symmetries = np.empty(spec.shape, dtype=object)
    for p in range(spec.m + 1):
        for q in range(spec.n + 2):
            site = classify(spec, p, q)
            classes[p, q] = site.klass
            symmetries[p, q] = site.symmetry
    return classes, symmetries
