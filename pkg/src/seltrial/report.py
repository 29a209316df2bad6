"""Report emission and parsing.

emit_report writes four files into a directory: summary.txt (ordered
key=value aggregates, config echo, content hash), snapshots.csv (one row
per replicate/N snapshot), replicates.csv (one row per replicate), and
config.txt (key=value, reusable via --config).  Numbers are serialized
with 17 significant digits so parsing them back recovers the exact
doubles; identical runs therefore produce byte-identical files.
"""

import hashlib
import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from seltrial.engine import SimulationReport
from seltrial.errors import DataFormatError, DomainError

__all__ = [
    "format_number",
    "emit_report",
    "parse_keyvalue",
    "parse_table",
]


def format_number(value) -> str:
    """Canonical text form: 17 significant digits for floats, plain ints."""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return "None"
    return format_number(value)


def _write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _config_lines(report: SimulationReport) -> List[str]:
    lines = []
    for key, value in report.config_echo.items():
        lines.append(f"{key}={_cell(value)}")
    return lines


def _summary_lines(report: SimulationReport, config_hash: str) -> List[str]:
    lines = [
        f"study={report.study}",
        f"method={report.method}",
        f"seed={report.seed}",
        f"n_replicates={report.n_replicates}",
        f"failed_replicates={report.failed_replicates}",
        f"success_rule={report.success_rule}",
        f"config_hash={config_hash}",
    ]
    lines.extend("config." + line for line in _config_lines(report))
    for n in sorted(report.per_N_power):
        lines.append(f"power.n{n}={format_number(report.per_N_power[n])}")
    for n in sorted(report.per_N_rejections):
        lines.append(f"rejections.n{n}={format_number(report.per_N_rejections[n])}")
    for n in sorted(report.per_N_mse):
        lines.append(f"mse.n{n}={format_number(report.per_N_mse[n])}")
    lines.append(f"type1_rate={format_number(report.type1_rate)}")
    lines.append(f"validation_accuracy={format_number(report.validation_accuracy)}")
    lines.append(f"imbalance_n_significant={report.imbalance_n_significant}")
    for i, med in enumerate(report.imbalance_medians):
        lines.append(f"imbalance_median_rank{i}={format_number(med)}")
    return lines


def emit_report(report: SimulationReport, path) -> Dict[str, Path]:
    """Write summary.txt, snapshots.csv, replicates.csv, and config.txt.

    Returns the written paths keyed by logical name.
    """
    if report.n_replicates < 1:
        raise DomainError("refusing to emit a report with no replicates")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)

    config_text = "\n".join(_config_lines(report)) + "\n"
    config_hash = hashlib.sha256(config_text.encode("utf-8")).hexdigest()

    paths = {
        "summary": out / "summary.txt",
        "snapshots": out / "snapshots.csv",
        "replicates": out / "replicates.csv",
        "config": out / "config.txt",
    }
    with open(paths["config"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config_text)
    with open(paths["summary"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(_summary_lines(report, config_hash)) + "\n")
    _write_table(paths["snapshots"], report.snapshot_header, report.snapshot_rows)
    _write_table(paths["replicates"], report.replicate_header, report.replicate_rows)
    return paths


def parse_keyvalue(path) -> Dict[str, str]:
    """Parse a key=value file (summary.txt or config.txt) preserving order."""
    out: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataFormatError(f"line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def parse_table(path) -> Tuple[Tuple[str, ...], List[Tuple[str, ...]]]:
    """Parse a comma-separated table into (header, rows) of strings."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise DataFormatError(f"empty table file {path}")
    header = tuple(lines[0].split(","))
    rows = [tuple(ln.split(",")) for ln in lines[1:]]
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataFormatError(f"line {i}: expected {len(header)} fields")
    return header, rows
