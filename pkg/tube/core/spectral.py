import logging
import math
from dataclasses import dataclass
from threading import Lock
from typing import Dict, NamedTuple, Optional, Tuple

from tube.core.lattice import LatticeKind, TubeSpec, parity_sign
from tube.errors import ZeroDenominator

logger = logging.getLogger(__name__)

NAIVE_LIMIT = 30.0          # t*|r| above which sinh products go through log-magnitudes
ARCCOSH_CLAMP = 1e-14
MODE_CACHE_LIMIT = 256
_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class SpectralMode:
    k: int
    alpha: float
    cos_alpha: float
    t: float
    sigma: int  # -1 encodes the decay rate t + i*pi
    lattice: LatticeKind


class IdentityResiduals(NamedTuple):
    r1: float
    r2: float
    r3: float


# --- Decay rates ---
def _arccosh_from_excess(excess: float) -> float:
    """arccosh(1 + excess) = log(x + sqrt(x^2 - 1)) written around x = 1."""
    if excess < 0.0:
        if excess > -ARCCOSH_CLAMP:
            excess = 0.0
        else:
            raise ValueError(f"arccosh argument {1.0 + excess} below 1")
    return math.log1p(excess + math.sqrt(excess * (excess + 2.0)))


def arccosh_clamped(x: float) -> float:
    return _arccosh_from_excess(x - 1.0)


def _compute_modes(kind: LatticeKind, m: int, eta: float) -> Tuple[SpectralMode, ...]:
    circumference = m + 1
    computed = []
    for k in range(1, circumference):
        if kind != LatticeKind.SQUARE and 2 * k == circumference:
            continue
        # k and m+1-k share every real quantity; evaluate on the smaller one
        folded = min(k, circumference - k)
        angle = 2.0 * math.pi * folded / circumference
        u = math.cos(angle)
        if kind == LatticeKind.SQUARE:
            excess = 2.0 * math.sin(0.5 * angle) ** 2 / eta
            sigma = 1
        else:
            au = abs(u)
            excess = math.sin(angle) ** 2 * (1.0 + au + eta) / ((1.0 + au) * eta * au)
            sigma = 1 if u > 0 else -1
        computed.append(SpectralMode(
            k=k, alpha=2.0 * math.pi * k / circumference, cos_alpha=u,
            t=_arccosh_from_excess(excess), sigma=sigma, lattice=kind,
        ))
    return tuple(computed)


# --- Mode cache manager ---
class ModeCache:
    def __init__(self, limit: int = MODE_CACHE_LIMIT):
        self._modes: Dict[Tuple[LatticeKind, int, float], Tuple[SpectralMode, ...]] = {}
        self._limit = limit
        self._lock = Lock()

    def get(self, kind: LatticeKind, m: int, eta: float) -> Tuple[SpectralMode, ...]:
        key = (kind, m, float(eta))
        with self._lock:
            cached = self._modes.get(key)
        if cached is not None:
            return cached

        computed = _compute_modes(kind, m, eta)
        with self._lock:
            if key not in self._modes and len(self._modes) >= self._limit:
                oldest = next(iter(self._modes))
                del self._modes[oldest]
                logger.debug(f"Spectral: ModeCache - evicted {oldest}.")
            cached = self._modes.setdefault(key, computed)
        logger.debug(f"Spectral: ModeCache - cached {len(cached)} modes for {kind.value} m={m} eta={eta}.")
        return cached

    def clear(self) -> None:
        with self._lock:
            self._modes.clear()

    def __len__(self) -> int:
        with self._lock:
            return len(self._modes)


mode_cache = ModeCache()


def modes(spec: TubeSpec) -> Tuple[SpectralMode, ...]:
    return mode_cache.get(spec.kind, spec.m, spec.eta)


# --- Generalised hyperbolics ---
def _sigma_pow(mode: SpectralMode, r: int) -> int:
    return 1 if mode.sigma == 1 else parity_sign(r)


def sinh_g(mode: SpectralMode, r: int) -> float:
    """sigma^r sinh(t r). Overflows for large t*r; use ratio4 or scaled_sinh there."""
    return _sigma_pow(mode, r) * math.sinh(mode.t * r)


def cosh_g(mode: SpectralMode, r: int) -> float:
    return _sigma_pow(mode, r) * math.cosh(mode.t * r)


def scaled_sinh(mode: SpectralMode, r: int) -> float:
    """e with sinh_g(mode, r) == e * exp(t * |r|)."""
    if r == 0:
        return 0.0
    sign = 1 if r > 0 else -1
    return sign * _sigma_pow(mode, r) * 0.5 * -math.expm1(-2.0 * mode.t * abs(r))


def phase_cos(mode: SpectralMode, circumference: int, j: int) -> float:
    """cos(alpha_k * j), reduced exactly modulo the circumference first."""
    return math.cos(2.0 * math.pi * ((mode.k * j) % circumference) / circumference)


def _log_sinh(x: float) -> float:
    return x + math.log(-math.expm1(-2.0 * x)) - _LOG2


def ratio4(mode: SpectralMode, r1: int, r2: int, s1: int, s2: int) -> float:
    """sinh_g(r1) sinh_g(r2) / (sinh_g(s1) sinh_g(s2)) without overflow."""
    t = mode.t
    if s1 == 0 or s2 == 0 or t == 0.0:
        raise ZeroDenominator(f"ratio4: zero denominator for k={mode.k} (s1={s1}, s2={s2}, t={t})")
    if r1 == 0 or r2 == 0:
        return 0.0

    sign = _sigma_pow(mode, r1 + r2 - s1 - s2)
    for r in (r1, r2, s1, s2):
        if r < 0:
            sign = -sign
    x1, x2, y1, y2 = (t * abs(r) for r in (r1, r2, s1, s2))

    if max(x1, x2, y1, y2) <= NAIVE_LIMIT:
        return sign * (math.sinh(x1) * math.sinh(x2)) / (math.sinh(y1) * math.sinh(y2))
    log_magnitude = _log_sinh(x1) + _log_sinh(x2) - _log_sinh(y1) - _log_sinh(y2)
    return sign * math.exp(log_magnitude)


# --- Checks ---
def dispersion_residual(mode: SpectralMode, eta: float) -> float:
    u = mode.cos_alpha
    if mode.lattice == LatticeKind.SQUARE:
        return abs(2 + 2 * eta - 2 * eta * math.cosh(mode.t) - 2 * u)
    cos_2alpha = 2 * u * u - 1
    return abs(2 * eta * mode.sigma * math.cosh(mode.t) * u - (1 + 2 * eta - cos_2alpha))


def appendix_identity_residuals(gamma: float, b: int, n: int, relative: bool = False) -> IdentityResiduals:
    def s(r: int) -> float:
        return math.sinh(gamma * r)

    ch = math.cosh(gamma)
    a1 = (s(b - 1) * s(b - n - 1), s(b) * s(b - n), s(1) * s(n + 1), 2 * ch * s(b) * s(b - n - 1))
    a2 = (s(b + 1 - n) * s(b), s(b - 1) * s(b - n), s(1) * s(n), 2 * ch * s(b) * s(b - n))
    # second product enters with a minus; with a plus the relation fails already at b = 0
    a3 = (s(b - n) * s(b), -s(b - 1) * s(b + 1 - n),0.5 * math.cosh(gamma * (n - 2)), -0.5 * math.cosh(gamma * n))

    residuals = []
    for left0, left1, right0, right1 in (a1, a2, a3):
        residual = (left0 + left1) - (right0 + right1)
        if relative:
            scale = max(abs(left0), abs(left1), abs(right0), abs(right1))
            if scale > 0.0:
                residual /= scale
        residuals.append(residual)
    return IdentityResiduals(*residuals)


def kronecker_resolution(spec: TubeSpec, p: int, a: Optional[int] = None) -> float:
    """Mode expansion of delta_{p,a}; the primed form adds the cos(pi (p-a)) term."""
    a = spec.a if a is None else a
    diff = p - a
    circumference = spec.m + 1
    total = math.fsum(phase_cos(mode, circumference, diff) for mode in modes(spec))
    if spec.kind == LatticeKind.SQUARE:
        return (1.0 + total) / circumference
    return (1.0 + parity_sign(diff) + total) / circumference
