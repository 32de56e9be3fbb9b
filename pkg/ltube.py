import argparse
import logging
import math
import sys
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from cli import output
from tube import settings
from tube.closed_form import (
    absorption, axial_profile, expectation_field, profile_slope_min, region_one_slope,
)
from tube.core.lattice import LatticeKind, SiteClass, Symmetry, TubeSpec, validate
from tube.core.spectral import appendix_identity_residuals, kronecker_resolution
from tube.errors import NoConvergence, SpecError, TubeError
from tube.oracle_linear import solve_field
from tube.oracle_mc import McConfig, simulate

logger = logging.getLogger(__name__)

COMMANDS = ("field", "absorb", "profile", "sweep", "compare", "selftest")
OBSERVABLES = ("total_left", "peak", "slope")
LINEAR_THRESHOLD = 1e-9
MC_SE_MULTIPLE = 4.0
MC_COVERAGE = 0.99
MC_SLACK = 1e-12
DEFAULT_WALKS = 100_000
SELFTEST_POINTS = 1_000
SELFTEST_SEED = 20240
SELFTEST_TOL = 1e-12

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_INVALID = 2


@dataclass(frozen=True)
class RunConfig:
    command: str
    spec: Optional[TubeSpec]
    output_path: Optional[str] = None
    fmt: str = "csv"
    oracle: str = "linear"
    mc: Optional[McConfig] = None
    slope_analysis: bool = False
    sweep_from: Optional[float] = None
    sweep_to: Optional[float] = None
    sweep_steps: Optional[int] = None
    observable: str = "total_left"


class UsageError(ValueError):
    pass


# --- Argument parsing ---
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltube", description="Expected visits and absorption for biased random walks on lattice tubes.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--lattice", choices=[k.value for k in LatticeKind])
    parser.add_argument("-m", type=int)
    parser.add_argument("-n", type=int)
    parser.add_argument("--eta", type=float)
    parser.add_argument("--source", help="a,b")
    parser.add_argument("--source-type", choices=("auto", "left", "right"), default="auto")
    parser.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    parser.add_argument("-o", dest="output_path")
    parser.add_argument("--oracle", choices=("linear", "mc"), default="linear")
    parser.add_argument("--walks", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--slope-analysis", action="store_true")
    parser.add_argument("--param", choices=("eta",))
    parser.add_argument("--from", dest="sweep_from", type=float)
    parser.add_argument("--to", dest="sweep_to", type=float)
    parser.add_argument("--steps", type=int)
    parser.add_argument("--observable", choices=OBSERVABLES, default="total_left")
    return parser


def _parse_source(raw: str):
    try:
        a, b = (int(part) for part in raw.split(","))
    except ValueError:
        raise UsageError(f"--source expects two integers 'a,b', got {raw!r}")
    return a, b


def _resolve_source_type(kind: LatticeKind, a: int, b: int, requested: str) -> Symmetry:
    if requested == "left":
        return Symmetry.LEFT_T
    if requested == "right":
        return Symmetry.RIGHT_T
    # auto: left_t sites are those with p+q even
    if kind == LatticeKind.HONEYCOMB and (a + b) % 2 == 1:
        return Symmetry.RIGHT_T
    return Symmetry.LEFT_T


def build_config(args: argparse.Namespace) -> RunConfig:
    spec = None
    if args.command != "selftest":
        missing = [flag for flag, value in (("--lattice", args.lattice), ("-m", args.m), ("-n", args.n),
                                           ("--eta", args.eta), ("--source", args.source)) if value is None]
        if missing:
            raise UsageError(f"{args.command} needs {', '.join(missing)}")
        kind = LatticeKind(args.lattice)
        a, b = _parse_source(args.source)
        spec = validate(TubeSpec(kind=kind, m=args.m, n=args.n, eta=args.eta, a=a, b=b,
                                 source_type=_resolve_source_type(kind, a, b, args.source_type)))

    mc = None
    if args.walks is not None or args.seed is not None:
        if args.command != "compare" or args.oracle != "mc":
            raise UsageError("--walks and --seed only apply to compare --oracle mc")
    if args.command == "compare" and args.oracle == "mc":
        mc = McConfig(walks=args.walks if args.walks is not None else DEFAULT_WALKS,
                      seed=args.seed if args.seed is not None else 0)

    if args.slope_analysis and args.command != "profile":
        raise UsageError("--slope-analysis only applies to profile")

    if args.command == "sweep":
        if args.param != "eta" or args.sweep_from is None or args.sweep_to is None or args.steps is None:
            raise UsageError("sweep needs --param eta --from F --to T --steps K")
        if not (args.sweep_from > 0 and args.sweep_to > 0 and math.isfinite(args.sweep_from)
                and math.isfinite(args.sweep_to)):
            raise UsageError("sweep bounds must be positive and finite")
        if args.steps < 1:
            raise UsageError("--steps must be at least 1")

    return RunConfig(
        command=args.command, spec=spec, output_path=args.output_path, fmt=args.fmt, oracle=args.oracle,
        mc=mc, slope_analysis=args.slope_analysis, sweep_from=args.sweep_from, sweep_to=args.sweep_to,
        sweep_steps=args.steps, observable=args.observable,
    )


# --- Command Handlers ---
def cmd_field(config: RunConfig) -> int:
    field_values = expectation_field(config.spec)
    if config.fmt == "json":
        grid = [{"p": row[0], "q": row[1], "class": row[2], "symmetry": row[3], "value": row[4]}
                for row in output.field_rows(field_values)]
        output.emit(output.json_text(config.spec, {"field": grid}), config.output_path)
    else:
        output.emit(output.csv_text(("p", "q", "class", "symmetry", "value"), output.field_rows(field_values)),
                    config.output_path)
    return EXIT_OK


def cmd_absorb(config: RunConfig) -> int:
    dist = absorption(config.spec)
    if config.fmt == "json":
        payload = {
            "left": [float(v) for v in dist.g_left],
            "right": [float(v) for v in dist.g_right],
            "total_left": dist.total_left,
            "total_right": dist.total_right,
        }
        output.emit(output.json_text(config.spec, payload), config.output_path)
    else:
        text = output.csv_text(("p", "end", "value"), output.absorption_rows(dist))
        totals = output.absorption_totals_line(dist)
        # stdout stays plain CSV; a file target keeps the totals as a trailing comment
        if config.output_path not in (None, "-"):
            text += totals
        output.emit(text, config.output_path)
        sys.stderr.write(totals)
    return EXIT_OK


def cmd_profile(config: RunConfig) -> int:
    spec = config.spec
    profile = axial_profile(spec)
    analysis: Dict[str, float] = {}
    if config.slope_analysis:
        analysis["slope"] = region_one_slope(spec)
        if spec.kind == LatticeKind.HONEYCOMB:
            analysis["slope_minimizer_eta"] = profile_slope_min(spec)
    if config.fmt == "json":
        payload = {"profile": [{"q": q, "value": v} for q, v in output.profile_rows(profile)]}
        payload.update(analysis)
        output.emit(output.json_text(spec, payload), config.output_path)
    else:
        output.emit(output.csv_text(("q", "value"), output.profile_rows(profile)), config.output_path)
        for name, value in analysis.items():
            sys.stderr.write(f"# {name}={output.machine(value)}\n")
    return EXIT_OK


def _observable(spec: TubeSpec, name: str) -> float:
    if name == "total_left":
        return absorption(spec).total_left
    if name == "peak":
        return float(expectation_field(spec).values.max())
    return region_one_slope(spec)


def sweep_grid(start: float, stop: float, steps: int) -> List[float]:
    if steps == 1:
        return [start]
    return [float(x) for x in np.geomspace(start, stop, steps)]


def cmd_sweep(config: RunConfig) -> int:
    base = config.spec
    rows = []
    for eta in sweep_grid(config.sweep_from, config.sweep_to, config.sweep_steps):
        spec = validate(TubeSpec(kind=base.kind, m=base.m, n=base.n, eta=eta, a=base.a, b=base.b,
                                 source_type=base.source_type))
        rows.append([eta, _observable(spec, config.observable)])
    if config.fmt == "json":
        payload = {"observable": config.observable, "sweep": [{"eta": e, "value": v} for e, v in rows]}
        output.emit(output.json_text(base, payload), config.output_path)
    else:
        output.emit(output.csv_text(("eta", "value"), rows), config.output_path)
    return EXIT_OK


def compare_linear(spec: TubeSpec) -> Dict[str, object]:
    exact = expectation_field(spec)
    oracle = solve_field(spec)
    accessible = exact.accessible
    deviation = np.abs(exact.values - oracle.values)
    masked = np.where(accessible, deviation, 0.0)
    worst = np.unravel_index(int(np.argmax(masked)), masked.shape)
    zero_mesh = exact.classes == SiteClass.ZERO_MESH
    identical_zero = int(np.count_nonzero(zero_mesh & (exact.values == 0.0) & (oracle.values == 0.0)))
    max_abs = float(masked.max())
    return {
        "oracle": "linear",
        "sites": int(np.count_nonzero(accessible)),
        "max_abs": max_abs,
        "rms": float(math.sqrt(np.mean(deviation[accessible] ** 2))),
        "worst_site": [int(worst[0]), int(worst[1])],
        "zero_mesh_sites": int(np.count_nonzero(zero_mesh)),
        "zero_mesh_identical_zero": identical_zero,
        "threshold": LINEAR_THRESHOLD,
        "passed": max_abs <= LINEAR_THRESHOLD,
    }


def compare_mc(spec: TubeSpec, mc: McConfig) -> Dict[str, object]:
    exact = expectation_field(spec)
    estimate = simulate(spec, mc)
    accessible = exact.accessible
    deviation = np.abs(exact.values - estimate.mean_field)
    outside = accessible & (deviation > MC_SE_MULTIPLE * estimate.se_field + MC_SLACK)
    masked = np.where(accessible, deviation, 0.0)
    worst = np.unravel_index(int(np.argmax(masked)), masked.shape)
    sites = int(np.count_nonzero(accessible))
    fraction_outside = int(np.count_nonzero(outside)) / sites
    dist = absorption(spec)
    return {
        "oracle": "mc",
        "walks": mc.walks,
        "seed": mc.seed,
        "sites": sites,
        "max_abs": float(masked.max()),
        "rms": float(math.sqrt(np.mean(deviation[accessible] ** 2))),
        "worst_site": [int(worst[0]), int(worst[1])],
        "fraction_outside_4se": fraction_outside,
        "total_left": estimate.total_left,
        "total_left_se": estimate.total_left_se,
        "total_left_exact": dist.total_left,
        "truncated": estimate.truncated,
        "mean_revolutions": estimate.mean_revolutions,
        "passed": fraction_outside <= 1.0 - MC_COVERAGE,
    }


def _human_compare(report: Dict[str, object]) -> str:
    lines = [
        f"oracle: {report['oracle']}  sites: {report['sites']}",
        f"max_abs: {output.human(report['max_abs'])}  rms: {output.human(report['rms'])}",
        f"worst site: p={report['worst_site'][0]} q={report['worst_site'][1]}",
    ]
    if report["oracle"] == "linear":
        if report["zero_mesh_sites"]:
            lines.append(f"zero mesh: {report['zero_mesh_identical_zero']}/{report['zero_mesh_sites']} identical zero")
    else:
        lines.append(f"outside 4 SE: {output.human(100.0 * report['fraction_outside_4se'])}%")
        lines.append(f"total_left: {output.human(report['total_left'])} +- {output.human(report['total_left_se'])}"
                     f" (exact {output.human(report['total_left_exact'])})")
        if report["truncated"]:
            lines.append(f"truncated walks: {report['truncated']}")
    lines.append(f"result: {output.verdict(bool(report['passed']))}")
    return "\n".join(lines) + "\n"


def cmd_compare(config: RunConfig) -> int:
    if config.oracle == "mc":
        report = compare_mc(config.spec, config.mc)
    else:
        report = compare_linear(config.spec)
    if config.fmt == "json":
        output.emit(output.json_text(config.spec, {"compare": report}), config.output_path)
    else:
        output.emit(_human_compare(report), config.output_path)
    return EXIT_OK if report["passed"] else EXIT_THRESHOLD


def _selftest_specs() -> List[TubeSpec]:
    return [
        TubeSpec(LatticeKind.SQUARE, m=6, n=3, eta=0.7, a=2, b=1),
        TubeSpec(LatticeKind.TRIANGULAR, m=9, n=4, eta=1.3, a=4, b=2),
        TubeSpec(LatticeKind.HONEYCOMB, m=7, n=5, eta=2.0, a=3, b=3),
    ]


def selftest_report() -> Dict[str, object]:
    rng = np.random.default_rng(SELFTEST_SEED)
    worst_identity = 0.0
    for _ in range(SELFTEST_POINTS):
        gamma = float(rng.uniform(0.0, 5.0))
        n = int(rng.integers(1, 41))
        b = int(rng.integers(1, n + 1))
        residuals = appendix_identity_residuals(gamma, b, n, relative=True)
        worst_identity = max(worst_identity, max(abs(r) for r in residuals))

    worst_kronecker = 0.0
    for spec in _selftest_specs():
        for a in range(spec.m + 1):
            for p in range(spec.m + 1):
                delta = 1.0 if p == a else 0.0
                worst_kronecker = max(worst_kronecker, abs(kronecker_resolution(spec, p, a) - delta))

    return {
        "identity_worst_relative": worst_identity,
        "identity_passed": worst_identity <= SELFTEST_TOL,
        "kronecker_worst_abs": worst_kronecker,
        "kronecker_passed": worst_kronecker <= SELFTEST_TOL,
    }


def cmd_selftest(config: RunConfig) -> int:
    report = selftest_report()
    passed = bool(report["identity_passed"] and report["kronecker_passed"])
    if config.fmt == "json":
        output.emit(output.json_text(None, {"selftest": report, "passed": passed}), config.output_path)
    else:
        text = (f"hyperbolic identities: {output.verdict(report['identity_passed'])} "
                f"(worst {output.human(report['identity_worst_relative'])})\n"
                f"kronecker resolution: {output.verdict(report['kronecker_passed'])} "
                f"(worst {output.human(report['kronecker_worst_abs'])})\n")
        output.emit(text, config.output_path)
    return EXIT_OK if passed else EXIT_THRESHOLD


HANDLERS: Dict[str, Callable[[RunConfig], int]] = {
    "field": cmd_field,
    "absorb": cmd_absorb,
    "profile": cmd_profile,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "selftest": cmd_selftest,
}


# --- Main ---
def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=settings.log_level(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(funcName)s - %(lineno)d - %(message)s'
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID

    try:
        config = build_config(args)
    except (SpecError, UsageError, ValueError) as e:
        constraint = getattr(e, "constraint", None)
        suffix = f" [{constraint}]" if constraint else ""
        sys.stderr.write(f"ltube: error: {e}{suffix}\n")
        return EXIT_INVALID

    logger.info(f"Main: {config.command} - {config.spec}")
    try:
        return HANDLERS[config.command](config)
    except SpecError as e:
        sys.stderr.write(f"ltube: error: {e} [{e.constraint}]\n")
        return EXIT_INVALID
    except NoConvergence as e:
        # solver defect on a valid spec
        logger.critical(f"Command {config.command} hit an internal solver failure: {e}", exc_info=True)
        sys.stderr.write(f"ltube: internal error: {e}\n")
        return EXIT_INVALID
    except TubeError as e:
        logger.critical(f"Command {config.command} failed: {e}", exc_info=True)
        sys.stderr.write(f"ltube: error: {e}\n")
        return EXIT_INVALID
    except OSError as e:
        logger.error(f"Command {config.command} could not write {config.output_path}: {e}")
        sys.stderr.write(f"ltube: error: cannot write output: {e}\n")
        return EXIT_INVALID
    except Exception as e:
        logger.critical(f"Command {config.command} crashed: {e}", exc_info=True)
        sys.stderr.write(f"ltube: internal error: {e}\n")
        return EXIT_INVALID
    finally:
        logger.debug(f"Main: {config.command} finished.")


if __name__ == "__main__":
    sys.exit(main())
