import csv
import io
import json
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO, Union

from tube import settings
from tube.closed_form import AbsorptionDistribution, AxialProfile, ExpectationField
from tube.core.lattice import LatticeKind, Symmetry, TubeSpec

MACHINE_DIGITS = 17
HUMAN_DIGITS = 6
TOTAL_DIGITS = 15

_COLORS = {"green": "\033[32m", "red": "\033[31m", "bold": "\033[1m"}
_RESET = "\033[0m"


# --- Number formatting ---
def machine(x: float) -> str:
    return f"{x:.{MACHINE_DIGITS}g}"


def human(x: float) -> str:
    return f"{x:.{HUMAN_DIGITS}g}"


def colorize(text: str, color: str, stream: Optional[TextIO] = None) -> str:
    if not settings.color_enabled(stream if stream is not None else sys.stdout):
        return text
    return f"{_COLORS[color]}{text}{_RESET}"


def verdict(passed: bool, stream: Optional[TextIO] = None) -> str:
    return colorize("PASS", "green", stream) if passed else colorize("FAIL", "red", stream)


# --- CSV ---
def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([machine(v) if isinstance(v, float) else v for v in row])
    return buffer.getvalue()


def field_rows(field: ExpectationField) -> List[List[Any]]:
    spec = field.spec
    rows = []
    for p in range(spec.m + 1):
        for q in range(spec.n + 2):
            rows.append([p, q, field.classes[p, q].value, field.symmetries[p, q].value, float(field.values[p, q])])
    return rows


def absorption_rows(dist: AbsorptionDistribution) -> List[List[Any]]:
    rows = [[p, "left", float(v)] for p, v in enumerate(dist.g_left)]
    rows += [[p, "right", float(v)] for p, v in enumerate(dist.g_right)]
    return rows


def absorption_totals_line(dist: AbsorptionDistribution) -> str:
    return (f"# total_left={dist.total_left:.{TOTAL_DIGITS}g} "
            f"total_right={dist.total_right:.{TOTAL_DIGITS}g}\n")


def profile_rows(profile: AxialProfile) -> List[List[Any]]:
    return [[q, float(profile.value(q))] for q in range(1, profile.spec.n + 1)]


# --- JSON ---
def spec_echo(spec: TubeSpec) -> Dict[str, Any]:
    echo = {"lattice": spec.kind.value, "m": spec.m, "n": spec.n, "eta": spec.eta, "a": spec.a, "b": spec.b}
    if spec.kind == LatticeKind.HONEYCOMB:
        echo["source_type"] = spec.source_type.value
    return echo


def json_text(spec: Optional[TubeSpec], payload: Dict[str, Any]) -> str:
    document = {"spec": spec_echo(spec) if spec is not None else None}
    document.update(payload)
    return json.dumps(document, indent=2, sort_keys=True, allow_nan=False) + "\n"


def read_json(source: Union[str, Path]) -> Dict[str, Any]:
    """Parse JSON written by json_text, from a path or from the text itself."""
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        source = Path(source).read_text(encoding="utf-8")
    return json.loads(source)


def spec_from_json(document: Dict[str, Any]) -> TubeSpec:
    echo = document["spec"]
    return TubeSpec(
        kind=LatticeKind(echo["lattice"]), m=int(echo["m"]), n=int(echo["n"]), eta=float(echo["eta"]),
        a=int(echo["a"]), b=int(echo["b"]),
        source_type=Symmetry(echo.get("source_type", Symmetry.LEFT_T.value)),
    )


# --- Writing ---
def emit(text: str, path: Optional[str] = None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
