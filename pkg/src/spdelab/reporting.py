"""Deterministic report files: row CSVs, key-value summaries, tidy plot data.

Numeric cells are written with 17 significant digits, '.' decimal separator,
LF line endings, and no timestamps, so rerunning an experiment with the same
config and seed reproduces the CSV byte for byte.  Wall-clock time and library
versions go only into the summary file.
"""

from __future__ import annotations

import csv
import platform
from typing import Iterable, Sequence

import numpy as np
import scipy


class ReportingError(ValueError):
    pass


PLOT_HEADER = ("experiment", "series", "x", "y", "y_err")


def format_number(value) -> str:
    if isinstance(value, bool) or isinstance(value, np.bool_):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return format_number(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    header = list(header)
    if not header:
        raise ReportingError("CSV header must name at least one column")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            cells = [format_cell(v) for v in row]
            if len(cells) != len(header):
                raise ReportingError(
                    f"row width {len(cells)} does not match header width {len(header)}"
                )
            writer.writerow(cells)


def write_summary(path, entries: Iterable[tuple[str, object]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in entries:
            fh.write(f"{key} = {format_cell(value)}\n")


def version_entries() -> list[tuple[str, str]]:
    return [
        ("version.python", platform.python_version()),
        ("version.numpy", np.__version__),
        ("version.scipy", scipy.__version__),
    ]


def plot_rows_from(result) -> list[tuple]:
    """Tidy (experiment, series, x, y, y_err) rows for one experiment result."""
    return [(result.experiment, series, x, y, y_err) for series, x, y, y_err in result.plot_rows]


def emit_plotdata(path, results) -> int:
    """Write the tidy plot CSV for one result or a list of them.

    An empty collection still produces the header line.  Returns the number of
    data rows written.
    """
    if results is None:
        raise ReportingError("emit_plotdata needs at least an empty result list")
    if not isinstance(results, (list, tuple)):
        results = [results]
    rows: list[tuple] = []
    for res in results:
        rows.extend(plot_rows_from(res))
    write_csv(path, PLOT_HEADER, rows)
    return len(rows)
