import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from tube.core.lattice import (
    LatticeKind, SiteClass, Symmetry, TubeSpec, circumferential_step_mean, classify,
    parity_sign, reflect, site_grid, step_distribution, validate,
)
from tube.core.spectral import SpectralMode, modes, phase_cos, ratio4, scaled_sinh
from tube.errors import AxialOutOfRange, BadSource, SpecError

logger = logging.getLogger(__name__)

REGIONS = ("I", "II")
HONEYCOMB_BRANCHES = ("HS1", "HS2", "HS3", "HS4")
SLOPE_SEARCH_BOUNDS = (1e-3, 1e3)
SLOPE_SEARCH_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ExpectationField:
    spec: TubeSpec
    values: np.ndarray       # (m+1) x (n+2), zero off the accessible interior
    classes: np.ndarray
    symmetries: np.ndarray

    @property
    def accessible(self) -> np.ndarray:
        return self.classes == SiteClass.INTERIOR

    def value(self, p: int, q: int) -> float:
        return float(self.values[p % (self.spec.m + 1), q])

    @property
    def source_value(self) -> float:
        return self.value(self.spec.a, self.spec.b)

    def total(self) -> float:
        return math.fsum(self.values.ravel())


@dataclass(frozen=True, eq=False)
class AbsorptionDistribution:
    spec: TubeSpec
    g_left: np.ndarray   # G(p, 0)
    g_right: np.ndarray  # G(p, n+1)
    total_left: float
    total_right: float


@dataclass(frozen=True, eq=False)
class AxialProfile:
    spec: TubeSpec
    e: np.ndarray  # e[q-1] for q = 1..n

    def value(self, q: int) -> float:
        return float(self.e[q - 1])

    @property
    def peak_q(self) -> int:
        return int(np.argmax(self.e)) + 1


@dataclass(frozen=True)
class WalkStatistics:
    expected_steps: float
    expected_cyclic_travel: float
    expected_revolutions: float


def _require_kind(spec: TubeSpec, kind: LatticeKind) -> TubeSpec:
    validate(spec)
    if spec.kind != kind:
        raise SpecError(f"expected a {kind.value} tube, got {spec.kind.value}", "lattice kind")
    return spec


def make_absorption(spec: TubeSpec, g_left: np.ndarray, g_right: np.ndarray) -> AbsorptionDistribution:
    return AbsorptionDistribution(
        spec=spec, g_left=g_left, g_right=g_right,
        total_left=math.fsum(g_left), total_right=math.fsum(g_right),
    )


# --- Square and triangular tubes ---
def _region_terms(spec: TubeSpec, q: int, region: Optional[str]) -> Tuple[float, int, int]:
    """Linear part and sinh arguments of the region I (q <= b) or region II (q >= b) form."""
    n, b = spec.n, spec.b
    if region is None:
        region = "I" if q <= b else "II"
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}")
    if region == "I":
        if q > b:
            raise AxialOutOfRange(f"region I covers q in 1..{b}, got q={q}")
        return q * (n + 1 - b) / (n + 1), n + 1 - b, q
    if q < b:
        raise AxialOutOfRange(f"region II covers q in {b}..{n}, got q={q}")
    return b * (n + 1 - q) / (n + 1), n + 1 - q, b


def _square_value(spec: TubeSpec, p: int, q: int, region: Optional[str] = None) -> float:
    eta, n = spec.eta, spec.n
    circumference = spec.m + 1
    prefactor = (2 + 2 * eta) / (eta * circumference)
    linear, r1, r2 = _region_terms(spec, q, region)
    spectral = math.fsum(
        phase_cos(mode, circumference, p - spec.a) * ratio4(mode, r1, r2, 1, n + 1)
        for mode in modes(spec)
    )
    return prefactor * (linear + spectral)


def expectation_square(spec: TubeSpec, p: int, q: int, region: Optional[str] = None) -> float:
    _require_kind(spec, LatticeKind.SQUARE)
    site = classify(spec, p, q)
    if not site.is_interior:
        return 0.0
    return _square_value(spec, site.p, site.q, region)


# --- Triangular tube ---
def _triangular_value(spec: TubeSpec, p: int, q: int, region: Optional[str] = None) -> float:
    eta, n, b = spec.eta, spec.n, spec.b
    circumference = spec.m + 1
    parity_factor = 1 + parity_sign(p - spec.a) * parity_sign(q - b)
    if parity_factor == 0:
        return 0.0
    prefactor = (1 + 2 * eta) / (eta * circumference)
    linear, r1, r2 = _region_terms(spec, q, region)
    # cos_alpha carries the sign that pairs with sigma in the sinh ratio
    spectral = math.fsum(
        phase_cos(mode, circumference, p - spec.a) / mode.cos_alpha * ratio4(mode, r1, r2, 1, n + 1)
        for mode in modes(spec)
    )
    return prefactor * (parity_factor * linear + spectral)


def expectation_triangular(spec: TubeSpec, p: int, q: int, region: Optional[str] = None) -> float:
    _require_kind(spec, LatticeKind.TRIANGULAR)
    site = classify(spec, p, q)
    if not site.is_interior:
        return 0.0
    return _triangular_value(spec, site.p, site.q, region)


# --- Honeycomb tube ---
# Per mode, with u = cos(alpha) and c = u*cosh_g(1) = (1 + eta - u^2)/eta:
#   L(x) = (eta + 4c) sinh_g(x) - 2u sinh_g(x-1),   M(x) = eta sinh_g(x-1) + 2u sinh_g(x)
#   D    = -u sinh_g(1) L(n) = -c tanh(t) L(n)
# L and M are carried as exp(t*x) times a bounded factor, so every term below is
# exp(t * (non-positive integer)) times bounded factors.
@dataclass(frozen=True)
class _HoneycombMode:
    mode: SpectralMode
    u: float
    w: float          # exp(-t)
    c: float
    den: float        # c * tanh(t) * l(n)
    l_source: float   # l(n - b)
    e_source: float   # scaled sinh_g(b)


def _scaled_l(mode: SpectralMode, eta: float, u: float, c: float, w: float, x: int) -> float:
    if x == 0:
        return 2.0 * c * math.tanh(mode.t)
    return (eta + 4.0 * c) * scaled_sinh(mode, x) - 2.0 * u * scaled_sinh(mode, x - 1) * w


def _scaled_m(mode: SpectralMode, eta: float, u: float, w: float, x: int) -> float:
    return eta * scaled_sinh(mode, x - 1) * w + 2.0 * u * scaled_sinh(mode, x)


def _honeycomb_modes(spec: TubeSpec) -> Tuple[_HoneycombMode, ...]:
    eta, n, b = spec.eta, spec.n, spec.b
    prepared = []
    for mode in modes(spec):
        u = mode.cos_alpha
        c = (1.0 + eta - u * u) / eta
        w = math.exp(-mode.t)
        den = c * math.tanh(mode.t) * _scaled_l(mode, eta, u, c, w, n)
        prepared.append(_HoneycombMode(
            mode=mode, u=u, w=w, c=c, den=den,
            l_source=_scaled_l(mode, eta, u, c, w, n - b),
            e_source=scaled_sinh(mode, b),
        ))
    return tuple(prepared)


def _honeycomb_spectral(spec: TubeSpec, branch: str, p: int, q: int) -> float:
    eta, n, b = spec.eta, spec.n, spec.b
    circumference = spec.m + 1
    terms = []
    for hm in _honeycomb_modes(spec):
        mode = hm.mode
        if branch == "HS1":
            body = math.exp(mode.t * (q - b)) * scaled_sinh(mode, q) * hm.l_source
        elif branch == "HS3":
            body = math.exp(mode.t * (q - b)) * _scaled_m(mode, eta, hm.u, hm.w, q) * hm.l_source
        elif branch == "HS2":
            body = math.exp(mode.t * (b + 1 - q)) * scaled_sinh(mode, n + 1 - q) * hm.e_source
        else:
            body = math.exp(mode.t * (b + 1 - q)) * hm.e_source * _scaled_m(mode, eta, hm.u, hm.w, n + 1 - q)
        terms.append(phase_cos(mode, circumference, p - spec.a) * body / hm.den)
    return math.fsum(terms)


def _honeycomb_value(spec: TubeSpec, branch: str, p: int, q: int) -> float:
    eta, n, b = spec.eta, spec.n, spec.b
    circumference = spec.m + 1
    cc = parity_sign(p - spec.a) * parity_sign(q - b)
    # HS1/HS4 live on left_t parity, HS2/HS3 on right_t parity
    if (branch in ("HS1", "HS4")) != (cc == 1):
        return 0.0

    left_total = 1.0 - (eta + 2) * b / ((eta + 2) * n + 2)
    base = 2.0 * eta * circumference
    if branch == "HS1":
        prefactor = (2 + eta) ** 2 / base
        linear = left_total * q * 2
    elif branch == "HS3":
        prefactor = (2 + eta) / base
        linear = left_total * ((eta + 2) * q - eta) * 2
    elif branch == "HS2":
        prefactor = (2 + eta) ** 3 / base
        linear = b * (n + 1 - q) / ((eta + 2) * n + 2) * 2
    else:
        prefactor = (2 + eta) ** 2 / base
        linear = b * ((eta + 2) * (n - q) + 2) / ((eta + 2) * n + 2) * 2
    return prefactor * (linear + _honeycomb_spectral(spec, branch, p, q))


_BRANCH_RANGES = {
    "HS1": lambda spec: (0, spec.b),
    "HS3": lambda spec: (1, spec.b),
    "HS2": lambda spec: (spec.b + 1, spec.n + 1),
    "HS4": lambda spec: (spec.b + 1, spec.n),
}


def honeycomb_branch(spec: TubeSpec, branch: str, p: int, q: int) -> float:
    """Evaluate one of the four honeycomb formulas at (p, q); zero on the wrong parity."""
    _require_kind(spec, LatticeKind.HONEYCOMB)
    if branch not in HONEYCOMB_BRANCHES:
        raise ValueError(f"unknown honeycomb branch {branch!r}")
    if spec.source_type != Symmetry.LEFT_T:
        raise BadSource("honeycomb formulas take a left_t source; reflect the spec first", "source type")
    low, high = _BRANCH_RANGES[branch](spec)
    if not low <= q <= high:
        raise AxialOutOfRange(f"{branch} covers q in {low}..{high}, got q={q}")
    return _honeycomb_value(spec, branch, p % (spec.m + 1), q)


def expectation_honeycomb(spec: TubeSpec, p: int, q: int) -> float:
    _require_kind(spec, LatticeKind.HONEYCOMB)
    if spec.source_type == Symmetry.RIGHT_T:
        return expectation_honeycomb(reflect(spec), p, spec.n + 1 - q)
    site = classify(spec, p, q)
    if not site.is_interior:
        return 0.0
    if site.symmetry == Symmetry.LEFT_T:
        branch = "HS1" if site.q <= spec.b else "HS4"
    else:
        branch = "HS3" if site.q <= spec.b else "HS2"
    return _honeycomb_value(spec, branch, site.p, site.q)


# --- Dispatch ---
_EVALUATORS = {
    LatticeKind.SQUARE: expectation_square,
    LatticeKind.TRIANGULAR: expectation_triangular,
    LatticeKind.HONEYCOMB: expectation_honeycomb,
}


def expectation(spec: TubeSpec, p: int, q: int) -> float:
    validate(spec)
    return _EVALUATORS[spec.kind](spec, p, q)


def expectation_field(spec: TubeSpec) -> ExpectationField:
    validate(spec)
    classes, symmetries = site_grid(spec)
    values = np.zeros(spec.shape, dtype=float)
    evaluate = _EVALUATORS[spec.kind]
    for p in range(spec.m + 1):
        for q in range(1, spec.n + 1):
            if classes[p, q] == SiteClass.INTERIOR:
                values[p, q] = evaluate(spec, p, q)
    logger.debug(f"ClosedForm: expectation_field - {spec.kind.value} m={spec.m} n={spec.n} eta={spec.eta} done.")
    return ExpectationField(spec=spec, values=values, classes=classes, symmetries=symmetries)


def balance_residuals(field: ExpectationField) -> np.ndarray:
    """value(s) - [s = source] - sum over the kernel of prob * value(target), per interior site."""
    spec = field.spec
    residuals = np.zeros(spec.shape, dtype=float)
    for p in range(spec.m + 1):
        for q in range(1, spec.n + 1):
            site = classify(spec, p, q)
            if not site.is_interior:
                continue
            inflow = math.fsum(prob * field.values[t.p, t.q] for t, prob in step_distribution(spec, site).targets)
            source = 1.0 if (p, q) == (spec.a, spec.b) else 0.0
            residuals[p, q] = field.values[p, q] - source - inflow
    return residuals


# --- Absorption ---
def absorption(spec: TubeSpec) -> AbsorptionDistribution:
    validate(spec)
    m, n, eta = spec.m, spec.n, spec.eta
    g_left = np.zeros(m + 1)
    g_right = np.zeros(m + 1)

    if spec.kind == LatticeKind.SQUARE:
        weight = eta / (2 + 2 * eta)
        for p in range(m + 1):
            g_left[p] = weight * expectation_square(spec, p, 1)
            g_right[p] = weight * expectation_square(spec, p, n)
    elif spec.kind == LatticeKind.TRIANGULAR:
        weight = eta / (2 + 4 * eta)
        for p in range(m + 1):
            g_left[p] = weight * (expectation_triangular(spec, p + 1, 1) + expectation_triangular(spec, p - 1, 1))
            g_right[p] = weight * (expectation_triangular(spec, p + 1, n) + expectation_triangular(spec, p - 1, n))
    else:
        if spec.source_type == Symmetry.RIGHT_T:
            mirrored = absorption(reflect(spec))
            return make_absorption(spec, mirrored.g_right.copy(), mirrored.g_left.copy())
        weight = eta / (2 + eta)
        for p in range(m + 1):
            # left end fed by right_t sites of row 1, right end by left_t sites of row n
            if classify(spec, p, 1).symmetry == Symmetry.RIGHT_T:
                g_left[p] = weight * expectation_honeycomb(spec, p, 1)
            if classify(spec, p, n).symmetry == Symmetry.LEFT_T:
                g_right[p] = weight * expectation_honeycomb(spec, p, n)
    return make_absorption(spec, g_left, g_right)


# --- Axial profile ---
def axial_profile(spec: TubeSpec) -> AxialProfile:
    field = expectation_field(spec)
    e = np.array([math.fsum(field.values[:, q]) for q in range(1, spec.n + 1)])
    return AxialProfile(spec=spec, e=e)


def _honeycomb_left_total(eta: float, n: int, b: int) -> float:
    return 1.0 - (eta + 2) * b / ((eta + 2) * n + 2)


def _honeycomb_slope(eta: float, n: int, b: int) -> float:
    return (eta + 2) ** 2 / eta * _honeycomb_left_total(eta, n, b)


def region_one_slope(spec: TubeSpec) -> float:
    validate(spec)
    eta, n, b = spec.eta, spec.n, spec.b
    if spec.kind == LatticeKind.SQUARE:
        return (2 + 2 * eta) * (n + 1 - b) / (eta * (n + 1))
    if spec.kind == LatticeKind.TRIANGULAR:
        return (1 + 2 * eta) * (n + 1 - b) / (eta * (n + 1))
    if spec.source_type == Symmetry.RIGHT_T:
        # mirrored tube: rows q <= b are the falling side of the reflected profile
        mirrored = reflect(spec)
        right_total = 1.0 - _honeycomb_left_total(eta, n, mirrored.b)
        return (eta + 2) ** 2 / eta * right_total
    return _honeycomb_slope(eta, n, b)


def honeycomb_profile_line(spec: TubeSpec, q: int) -> float:
    """Analytic row sum of the honeycomb field; linear on q <= b and on q >= b+1."""
    _require_kind(spec, LatticeKind.HONEYCOMB)
    if spec.source_type == Symmetry.RIGHT_T:
        return honeycomb_profile_line(reflect(spec), spec.n + 1 - q)
    eta, n, b = spec.eta, spec.n, spec.b
    left_total = _honeycomb_left_total(eta, n, b)
    if q <= b:
        return (eta + 2) ** 2 / eta * left_total * q - (eta + 2) / 2 * left_total
    right_total = 1.0 - left_total
    return right_total * (eta + 2) / (2 * eta) * ((eta + 2) * (2 * n + 1 - 2 * q) + 2)


def profile_slope_min(spec: TubeSpec) -> float:
    """The eta > 0 minimising the honeycomb region-I slope for the spec's n and b."""
    _require_kind(spec, LatticeKind.HONEYCOMB)
    n, b = spec.n, spec.b
    low, high = (math.log(x) for x in SLOPE_SEARCH_BOUNDS)
    result = minimize_scalar(
        lambda x: region_one_slope(replace(spec, eta=math.exp(x))),
        bounds=(low, high), method="bounded", options={"xatol": SLOPE_SEARCH_TOL},
    )
    eta_star = math.exp(result.x)
    logger.info(f"ClosedForm: profile_slope_min - n={n} b={b} minimiser eta={eta_star:.6f}.")
    return eta_star


# --- Walk statistics ---
def walk_statistics(field: ExpectationField) -> WalkStatistics:
    spec = field.spec
    steps = []
    travel = []
    for p in range(spec.m + 1):
        for q in range(1, spec.n + 1):
            site = classify(spec, p, q)
            if not site.is_interior:
                continue
            value = field.values[p, q]
            steps.append(value)
            travel.append(value * circumferential_step_mean(spec, site))
    cyclic_travel = math.fsum(travel)
    return WalkStatistics(
        expected_steps=math.fsum(steps),
        expected_cyclic_travel=cyclic_travel,
        expected_revolutions=cyclic_travel / (spec.m + 1),
    )
